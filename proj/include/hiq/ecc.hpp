#pragma once

// GF(2^m) Reed-Solomon codec and the per-layer block partitioning used by the
// symbol codec. Blocks are independent: a failed block never poisons its
// neighbours, which is what makes cross-frame block accumulation work.

#include <algorithm>
#include <cstdint>
#include <optional>
#include <vector>

#include "hiq/common.hpp"

namespace hiq {

enum class EcLevel : std::uint8_t { L = 0, M = 1, Q = 2 };

// Fraction of codewords each level must be able to correct.
inline double ec_correction_fraction(EcLevel level) {
    switch (level) {
        case EcLevel::L: return 0.07;
        case EcLevel::M: return 0.15;
        case EcLevel::Q: return 0.25;
    }
    fail(Errc::invalid_parameter, "bad EC level");
}

inline char ec_level_char(EcLevel level) { return level == EcLevel::L ? 'L' : level == EcLevel::M ? 'M' : 'Q'; }

inline EcLevel ec_level_from_char(char c) {
    switch (c) {
        case 'L': case 'l': return EcLevel::L;
        case 'M': case 'm': return EcLevel::M;
        case 'Q': case 'q': return EcLevel::Q;
    }
    fail(Errc::invalid_parameter, std::string("bad EC level '") + c + "'");
}

// Share of a layer's codewords reserved for ECC, per level. Each share keeps
// t = ecc/2 at or above the level's correction fraction with margin, and the
// L share is pinned so that a 177-dim layer carries exactly 2953 payload
// bytes (see docs/ecc_tables.md).
inline double ec_codeword_share(EcLevel level) {
    switch (level) {
        case EcLevel::L: return 0.2073;
        case EcLevel::M: return 0.37;
        case EcLevel::Q: return 0.52;
    }
    fail(Errc::invalid_parameter, "bad EC level");
}

// ---------------------------------------------------------------------------
// Galois field arithmetic

class GaloisField {
public:
    // order must be 16 or 256; primitive polynomials fixed per field.
    explicit GaloisField(int order) : order_(order) {
        int poly = order == 256 ? 0x11d : 0x13;  // x^8+x^4+x^3+x^2+1 / x^4+x+1
        if (order != 256 && order != 16) fail(Errc::invalid_parameter, "unsupported field order");
        exp_.resize(2 * order);
        log_.resize(order);
        int x = 1;
        for (int i = 0; i < order - 1; ++i) {
            exp_[i] = x;
            log_[x] = i;
            x <<= 1;
            if (x & order) x ^= poly;
        }
        for (int i = order - 1; i < 2 * order; ++i) exp_[i] = exp_[i - (order - 1)];
    }

    int order() const { return order_; }
    int add(int a, int b) const { return a ^ b; }
    int mul(int a, int b) const { return (a == 0 || b == 0) ? 0 : exp_[log_[a] + log_[b]]; }
    int pow_alpha(int e) const { return exp_[((e % (order_ - 1)) + order_ - 1) % (order_ - 1)]; }
    int inv(int a) const {
        if (a == 0) fail(Errc::invalid_parameter, "GF inverse of zero");
        return exp_[order_ - 1 - log_[a]];
    }

    static const GaloisField& gf256() {
        static const GaloisField f(256);
        return f;
    }
    static const GaloisField& gf16() {
        static const GaloisField f(16);
        return f;
    }

private:
    int order_;
    std::vector<int> exp_, log_;
};

// ---------------------------------------------------------------------------
// Reed-Solomon primitives (systematic, generator roots alpha^0..alpha^{2t-1})

inline std::vector<int> rs_generator_poly(const GaloisField& gf, int ecc_len) {
    std::vector<int> g{1};
    for (int i = 0; i < ecc_len; ++i) {
        std::vector<int> ng(g.size() + 1, 0);
        int root = gf.pow_alpha(i);
        for (std::size_t j = 0; j < g.size(); ++j) {
            ng[j] ^= gf.mul(g[j], root);
            ng[j + 1] ^= g[j];
        }
        g = std::move(ng);
    }
    std::reverse(g.begin(), g.end());  // highest degree first
    return g;
}

// Appends ecc_len parity symbols to `data` (values < field order).
inline std::vector<int> rs_compute_ecc(const GaloisField& gf, const std::vector<int>& data, int ecc_len) {
    std::vector<int> gen = rs_generator_poly(gf, ecc_len);
    std::vector<int> rem(ecc_len, 0);
    for (int d : data) {
        int factor = d ^ rem[0];
        rem.erase(rem.begin());
        rem.push_back(0);
        if (factor != 0)
            for (int j = 0; j < ecc_len; ++j) rem[j] ^= gf.mul(gen[j + 1], factor);
    }
    return rem;
}

struct RsDecodeResult {
    std::vector<int> codeword;  // corrected, data + ecc
    int corrected = 0;
};

// Berlekamp-Massey + Chien + Forney. Returns nullopt when more than t = ecc/2
// symbols are wrong (or the error locator is inconsistent).
inline std::optional<RsDecodeResult> rs_correct(const GaloisField& gf, std::vector<int> codeword, int ecc_len) {
    const int n = int(codeword.size());
    // Syndromes.
    std::vector<int> synd(ecc_len, 0);
    bool clean = true;
    for (int j = 0; j < ecc_len; ++j) {
        int x = gf.pow_alpha(j), s = 0;
        for (int i = 0; i < n; ++i) s = gf.mul(s, x) ^ codeword[i];
        synd[j] = s;
        if (s) clean = false;
    }
    if (clean) return RsDecodeResult{std::move(codeword), 0};

    // Berlekamp-Massey error locator.
    std::vector<int> sigma{1}, prev{1};
    int L = 0, m = 1, b = 1;
    for (int i = 0; i < ecc_len; ++i) {
        int delta = synd[i];
        for (int j = 1; j <= L; ++j)
            if (j < int(sigma.size())) delta ^= gf.mul(sigma[j], synd[i - j]);
        if (delta == 0) {
            ++m;
        } else if (2 * L <= i) {
            std::vector<int> tmp = sigma;
            int coef = gf.mul(delta, gf.inv(b));
            sigma.resize(std::max(sigma.size(), prev.size() + m), 0);
            for (std::size_t j = 0; j < prev.size(); ++j) sigma[j + m] ^= gf.mul(coef, prev[j]);
            L = i + 1 - L;
            prev = tmp;
            b = delta;
            m = 1;
        } else {
            int coef = gf.mul(delta, gf.inv(b));
            sigma.resize(std::max(sigma.size(), prev.size() + m), 0);
            for (std::size_t j = 0; j < prev.size(); ++j) sigma[j + m] ^= gf.mul(coef, prev[j]);
            ++m;
        }
    }
    if (L > ecc_len / 2) return std::nullopt;

    // Chien search over valid positions.
    std::vector<int> error_pos;
    for (int pos = 0; pos < n; ++pos) {
        // Position pos corresponds to coefficient of x^{n-1-pos}.
        int x_inv = gf.pow_alpha(-(n - 1 - pos));
        int v = 0;
        for (int j = int(sigma.size()) - 1; j >= 0; --j) v = gf.mul(v, x_inv) ^ sigma[j];
        if (v == 0) error_pos.push_back(pos);
    }
    if (int(error_pos.size()) != L) return std::nullopt;

    // Forney error magnitudes. Omega = S(x) * sigma(x) mod x^{ecc_len}.
    std::vector<int> omega(ecc_len, 0);
    for (int i = 0; i < ecc_len; ++i) {
        for (std::size_t j = 0; j < sigma.size() && int(j) <= i; ++j)
            omega[i] ^= gf.mul(synd[i - j], sigma[j]);
    }
    for (int pos : error_pos) {
        int xi = gf.pow_alpha(n - 1 - pos);
        int xi_inv = gf.inv(xi);
        int num = 0;
        for (int j = int(omega.size()) - 1; j >= 0; --j) num = gf.mul(num, xi_inv) ^ omega[j];
        // sigma'(x) evaluated at xi_inv; odd-degree terms only.
        int den = 0;
        for (std::size_t j = 1; j < sigma.size(); j += 2) {
            int term = sigma[j];
            for (std::size_t k = 1; k < j; ++k) term = gf.mul(term, xi_inv);
            den ^= term;
        }
        if (den == 0) return std::nullopt;
        // Roots start at alpha^0, so the magnitude carries an extra X_k.
        int mag = gf.mul(xi, gf.mul(num, gf.inv(den)));
        codeword[pos] ^= mag;
    }

    // Re-check syndromes; miscorrection must not slip through silently.
    for (int j = 0; j < ecc_len; ++j) {
        int x = gf.pow_alpha(j), s = 0;
        for (int i = 0; i < n; ++i) s = gf.mul(s, x) ^ codeword[i];
        if (s != 0) return std::nullopt;
    }
    return RsDecodeResult{std::move(codeword), L};
}

// ---------------------------------------------------------------------------
// Layer block structure

struct RsBlock {
    std::vector<std::uint8_t> data_codewords;
    std::vector<std::uint8_t> ecc_codewords;
    int block_id = 0;
    int layer_id = 0;
};

struct BlockLayout {
    int total_codewords = 0;
    int data_codewords = 0;
    int ecc_codewords = 0;
    // Per block: (data count, ecc count). ecc counts are always even.
    std::vector<std::pair<int, int>> blocks;
};

constexpr int kMaxBlockCodewords = 255;

// Declared convention: ecc count = ceil(share * total), rounded up to even,
// split across ceil(total/255) blocks in even-sized chunks.
inline BlockLayout layout_blocks(int total_codewords, EcLevel level) {
    if (total_codewords < 2) fail(Errc::capacity_exceeded, "layer too small for any codewords");
    BlockLayout lay;
    lay.total_codewords = total_codewords;
    int ecc = int(std::ceil(ec_codeword_share(level) * total_codewords));
    if (ecc & 1) ++ecc;
    if (ecc >= total_codewords) ecc = total_codewords - 1 - ((total_codewords - 1) & 1);
    int nb = (total_codewords + kMaxBlockCodewords - 1) / kMaxBlockCodewords;
    // ecc per block: base even chunk, remainder distributed in +2 steps.
    int base = 2 * (ecc / (2 * nb));
    int extra_pairs = (ecc - base * nb) / 2;
    int data_total = total_codewords - ecc;
    int data_base = data_total / nb;
    int data_extra = data_total % nb;
    for (int i = 0; i < nb; ++i) {
        int e = base + (i < extra_pairs ? 2 : 0);
        int d = data_base + (i < data_extra ? 1 : 0);
        lay.blocks.emplace_back(d, e);
    }
    lay.ecc_codewords = ecc;
    lay.data_codewords = data_total;
    return lay;
}

// Encodes `data` (exactly layout.data_codewords bytes) into RS blocks.
inline std::vector<RsBlock> rs_encode_blocks(const std::vector<std::uint8_t>& data, const BlockLayout& lay,
                                             int layer_id = 0) {
    if (int(data.size()) != lay.data_codewords)
        fail(Errc::capacity_exceeded, "data size does not match block layout");
    const GaloisField& gf = GaloisField::gf256();
    std::vector<RsBlock> blocks;
    std::size_t off = 0;
    for (std::size_t i = 0; i < lay.blocks.size(); ++i) {
        auto [d, e] = lay.blocks[i];
        RsBlock blk;
        blk.block_id = int(i);
        blk.layer_id = layer_id;
        blk.data_codewords.assign(data.begin() + off, data.begin() + off + d);
        off += d;
        std::vector<int> dv(blk.data_codewords.begin(), blk.data_codewords.end());
        for (int v : rs_compute_ecc(gf, dv, e)) blk.ecc_codewords.push_back(std::uint8_t(v));
        blocks.push_back(std::move(blk));
    }
    return blocks;
}

struct BlockDecodeResult {
    std::vector<std::uint8_t> data;
    int corrected = 0;
};

inline std::optional<BlockDecodeResult> rs_decode_block(const RsBlock& block) {
    const GaloisField& gf = GaloisField::gf256();
    std::vector<int> cw;
    cw.reserve(block.data_codewords.size() + block.ecc_codewords.size());
    for (auto b : block.data_codewords) cw.push_back(b);
    for (auto b : block.ecc_codewords) cw.push_back(b);
    auto res = rs_correct(gf, std::move(cw), int(block.ecc_codewords.size()));
    if (!res) return std::nullopt;
    BlockDecodeResult out;
    out.corrected = res->corrected;
    out.data.assign(res->codeword.begin(), res->codeword.begin() + block.data_codewords.size());
    return out;
}

// Byte-wise interleaving across blocks: data bytes round-robin, then ecc
// bytes round-robin. Inverse of deinterleave_blocks.
inline std::vector<std::uint8_t> interleave_blocks(const std::vector<RsBlock>& blocks) {
    std::vector<std::uint8_t> out;
    std::size_t max_d = 0, max_e = 0;
    for (const auto& b : blocks) {
        max_d = std::max(max_d, b.data_codewords.size());
        max_e = std::max(max_e, b.ecc_codewords.size());
    }
    for (std::size_t i = 0; i < max_d; ++i)
        for (const auto& b : blocks)
            if (i < b.data_codewords.size()) out.push_back(b.data_codewords[i]);
    for (std::size_t i = 0; i < max_e; ++i)
        for (const auto& b : blocks)
            if (i < b.ecc_codewords.size()) out.push_back(b.ecc_codewords[i]);
    return out;
}

inline std::vector<RsBlock> deinterleave_blocks(const std::vector<std::uint8_t>& stream, const BlockLayout& lay,
                                                int layer_id = 0) {
    if (int(stream.size()) != lay.total_codewords)
        fail(Errc::invalid_parameter, "stream size does not match layout");
    std::vector<RsBlock> blocks(lay.blocks.size());
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        blocks[i].block_id = int(i);
        blocks[i].layer_id = layer_id;
        blocks[i].data_codewords.resize(lay.blocks[i].first);
        blocks[i].ecc_codewords.resize(lay.blocks[i].second);
    }
    std::size_t pos = 0;
    std::size_t max_d = 0, max_e = 0;
    for (const auto& [d, e] : lay.blocks) {
        max_d = std::max(max_d, std::size_t(d));
        max_e = std::max(max_e, std::size_t(e));
    }
    for (std::size_t i = 0; i < max_d; ++i)
        for (auto& b : blocks)
            if (i < b.data_codewords.size()) b.data_codewords[i] = stream[pos++];
    for (std::size_t i = 0; i < max_e; ++i)
        for (auto& b : blocks)
            if (i < b.ecc_codewords.size()) b.ecc_codewords[i] = stream[pos++];
    return blocks;
}

// Sequential emission (block after block), used when spatial randomization is
// disabled so that each block's bits stay contiguous in placement order.
inline std::vector<std::uint8_t> concat_blocks(const std::vector<RsBlock>& blocks) {
    std::vector<std::uint8_t> out;
    for (const auto& b : blocks) {
        out.insert(out.end(), b.data_codewords.begin(), b.data_codewords.end());
        out.insert(out.end(), b.ecc_codewords.begin(), b.ecc_codewords.end());
    }
    return out;
}

inline std::vector<RsBlock> split_blocks(const std::vector<std::uint8_t>& stream, const BlockLayout& lay,
                                         int layer_id = 0) {
    if (int(stream.size()) != lay.total_codewords)
        fail(Errc::invalid_parameter, "stream size does not match layout");
    std::vector<RsBlock> blocks;
    std::size_t off = 0;
    for (std::size_t i = 0; i < lay.blocks.size(); ++i) {
        auto [d, e] = lay.blocks[i];
        RsBlock b;
        b.block_id = int(i);
        b.layer_id = layer_id;
        b.data_codewords.assign(stream.begin() + off, stream.begin() + off + d);
        off += d;
        b.ecc_codewords.assign(stream.begin() + off, stream.begin() + off + e);
        off += e;
        blocks.push_back(std::move(b));
    }
    return blocks;
}

// ---------------------------------------------------------------------------
// Payload framing: [len16][payload][crc32] zero-padded to the data capacity.
// The CRC makes RS miscorrection detectable at the session level.

constexpr int kFrameOverhead = 6;

inline int max_payload_bytes(const BlockLayout& lay) {
    return std::max(0, lay.data_codewords - kFrameOverhead);
}

inline std::vector<std::uint8_t> frame_payload(const std::vector<std::uint8_t>& payload, const BlockLayout& lay) {
    if (int(payload.size()) > max_payload_bytes(lay))
        fail(Errc::capacity_exceeded,
             "payload of " + std::to_string(payload.size()) + " bytes exceeds capacity of " +
                 std::to_string(max_payload_bytes(lay)) + " bytes");
    std::vector<std::uint8_t> framed;
    framed.reserve(lay.data_codewords);
    framed.push_back(std::uint8_t(payload.size() >> 8));
    framed.push_back(std::uint8_t(payload.size() & 0xff));
    framed.insert(framed.end(), payload.begin(), payload.end());
    std::uint32_t crc = crc32(framed);
    for (int i = 3; i >= 0; --i) framed.push_back(std::uint8_t((crc >> (8 * i)) & 0xff));
    framed.resize(lay.data_codewords, 0);
    return framed;
}

// Returns the payload, or nullopt when the length field or CRC is
// inconsistent (e.g. after an undetected RS miscorrection).
inline std::optional<std::vector<std::uint8_t>> unframe_payload(const std::vector<std::uint8_t>& framed) {
    if (framed.size() < kFrameOverhead) return std::nullopt;
    std::size_t len = (std::size_t(framed[0]) << 8) | framed[1];
    if (len + kFrameOverhead > framed.size()) return std::nullopt;
    std::uint32_t want = 0;
    for (int i = 0; i < 4; ++i) want = (want << 8) | framed[2 + len + i];
    if (crc32(framed.data(), len + 2) != want) return std::nullopt;
    return std::vector<std::uint8_t>(framed.begin() + 2, framed.begin() + 2 + len);
}

}  // namespace hiq

#pragma once

// n-layer symbol construction: layer stacking, the color codebook, module
// roles (finder / alignment / format / data), the RS-protected format field
// and seeded spatial bit randomization.

#include <cstdint>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "hiq/common.hpp"
#include "hiq/ecc.hpp"

namespace hiq {

constexpr int kMinVersion = 1;
constexpr int kMaxVersion = 40;
constexpr int kMaxLayers = 4;
constexpr int kFormatBits = 120;   // two copies of a GF(16) RS(15,5) codeword
constexpr std::uint32_t kMaxSeed = 63;  // format field carries a 6-bit seed

inline int dim_for_version(int version) {
    if (version < kMinVersion || version > kMaxVersion) fail(Errc::invalid_parameter, "version out of range");
    return 17 + 4 * version;
}

inline int version_for_dim(int dim) {
    if (dim < 21 || (dim - 17) % 4 != 0 || dim > 177) fail(Errc::invalid_parameter, "invalid symbol dimension");
    return (dim - 17) / 4;
}

// ---------------------------------------------------------------------------
// Domain types

struct LayerMatrix {
    int dim = 0;
    std::vector<std::uint8_t> bits;  // row-major, dim*dim

    LayerMatrix() = default;
    explicit LayerMatrix(int d) : dim(d), bits(std::size_t(d) * d, 0) {}

    std::uint8_t at(int row, int col) const { return bits[std::size_t(row) * dim + col]; }
    void set(int row, int col, std::uint8_t v) { bits[std::size_t(row) * dim + col] = v; }
};

enum class ModuleRole : std::uint8_t { Finder = 0, Alignment = 1, FormatRegion = 2, Data = 3 };

// Bit tuple of one module across layers; layer 1 first.
using ModuleTuple = std::vector<std::uint8_t>;

inline int tuple_to_index(const ModuleTuple& t) {
    int k = 0;
    for (std::uint8_t b : t) k = (k << 1) | (b & 1);
    return k;
}

inline ModuleTuple index_to_tuple(int k, int n_layers) {
    ModuleTuple t(n_layers);
    for (int i = 0; i < n_layers; ++i) t[i] = std::uint8_t((k >> (n_layers - 1 - i)) & 1);
    return t;
}

// Bijection between n-bit module tuples and display colors. Subtractive
// primaries: bit i=1 removes channel i. The fourth layer squeezes the value
// range to {0.25, 0.75}; its bit is flipped on the all-dark prefix so the
// all-ones tuple still lands on true black.
struct ColorCodebook {
    int n_layers = 0;
    std::vector<Vec3> entries;  // indexed by tuple_to_index

    Vec3 map(const ModuleTuple& t) const { return entries[tuple_to_index(t)]; }

    ModuleTuple unmap(const Vec3& color) const { return index_to_tuple(nearest(color), n_layers); }

    int nearest(const Vec3& color) const {
        int best = 0;
        double best_d = dist2(color, entries[0]);
        for (std::size_t k = 1; k < entries.size(); ++k) {
            double d = dist2(color, entries[k]);
            if (d < best_d) {
                best_d = d;
                best = int(k);
            }
        }
        return best;
    }
};

inline ColorCodebook build_codebook(int n_layers) {
    if (n_layers < 1 || n_layers > kMaxLayers) fail(Errc::invalid_parameter, "n_layers must be 1..4");
    ColorCodebook cb;
    cb.n_layers = n_layers;
    cb.entries.resize(std::size_t(1) << n_layers);
    for (int k = 0; k < int(cb.entries.size()); ++k) {
        ModuleTuple t = index_to_tuple(k, n_layers);
        std::uint8_t b1 = t[0];
        std::uint8_t b2 = n_layers >= 2 ? t[1] : 0;
        std::uint8_t b3 = n_layers >= 3 ? t[2] : 0;
        Vec3 c;
        if (n_layers == 1) {
            double v = 1.0 - b1;
            c = {v, v, v};
        } else if (n_layers == 2) {
            c = {1.0 - b1, 1.0 - b2, 1.0 - double(b1 & b2)};
        } else {
            c = {1.0 - b1, 1.0 - b2, 1.0 - b3};
        }
        if (n_layers == 4) {
            std::uint8_t dark = (t[3] ^ (b1 & b2 & b3)) & 1;
            if (dark) c = {0.25 + 0.5 * c[0], 0.25 + 0.5 * c[1], 0.25 + 0.5 * c[2]};
        }
        cb.entries[k] = c;
    }
    return cb;
}

struct FormatInfo {
    int n_layers = 0;
    std::vector<EcLevel> ec_levels;
    int version = 0;
    std::uint32_t seed = 0;  // 0 disables spatial randomization
};

struct HiqSymbol {
    int version = 0;
    int n_layers = 0;
    std::vector<LayerMatrix> layers;
    ColorCodebook codebook;
    FormatInfo format;
    std::uint64_t randomization_seed = 0;

    int dim() const { return dim_for_version(version); }

    ModuleTuple tuple_at(int row, int col) const {
        ModuleTuple t(n_layers);
        for (int i = 0; i < n_layers; ++i) t[i] = layers[i].at(row, col);
        return t;
    }

    Vec3 color_at(int row, int col) const { return codebook.map(tuple_at(row, col)); }
};

// ---------------------------------------------------------------------------
// Module roles

namespace detail {

inline const std::vector<int>& alignment_coords(int version) {
    // Standard QR alignment pattern center coordinates per version.
    static const std::vector<std::vector<int>> table = {
        {},                                  // v1
        {6, 18}, {6, 22}, {6, 26}, {6, 30}, {6, 34},
        {6, 22, 38}, {6, 24, 42}, {6, 26, 46}, {6, 28, 50}, {6, 30, 54},
        {6, 32, 58}, {6, 34, 62}, {6, 26, 46, 66}, {6, 26, 48, 70}, {6, 26, 50, 74},
        {6, 30, 54, 78}, {6, 30, 56, 82}, {6, 30, 58, 86}, {6, 34, 62, 90},
        {6, 28, 50, 72, 94}, {6, 26, 50, 74, 98}, {6, 30, 54, 78, 102}, {6, 28, 54, 80, 106},
        {6, 32, 58, 84, 110}, {6, 30, 58, 86, 114}, {6, 34, 62, 90, 118},
        {6, 26, 50, 74, 98, 122}, {6, 30, 54, 78, 102, 126}, {6, 26, 52, 78, 104, 130},
        {6, 30, 56, 82, 108, 134}, {6, 34, 60, 86, 112, 138}, {6, 30, 58, 86, 114, 142},
        {6, 34, 62, 90, 118, 146}, {6, 30, 54, 78, 102, 126, 150}, {6, 24, 50, 76, 102, 128, 154},
        {6, 28, 54, 80, 106, 132, 158}, {6, 32, 58, 84, 110, 136, 162},
        {6, 26, 54, 82, 110, 138, 166}, {6, 30, 58, 86, 114, 142, 170}};
    return table[version - 1];
}

}  // namespace detail

// Deterministic role assignment for one version. Finder zones are the 8x8
// corner regions (7x7 pattern plus separator); alignment patterns are 5x5 at
// the standard coordinates; the format region is the first kFormatBits free
// cells in row-major order, which puts it beside finder #1.
struct RoleMap {
    int version = 0;
    int dim = 0;
    std::vector<ModuleRole> roles;                 // row-major
    std::vector<std::pair<int, int>> format_cells; // (row, col), in write order
    std::vector<std::pair<int, int>> data_cells;   // (row, col), row-major scan order
    std::vector<std::pair<int, int>> alignment_centers;

    ModuleRole role(int row, int col) const { return roles[std::size_t(row) * dim + col]; }
};

inline RoleMap compute_role_map(int version) {
    RoleMap rm;
    rm.version = version;
    rm.dim = dim_for_version(version);
    const int dim = rm.dim;
    rm.roles.assign(std::size_t(dim) * dim, ModuleRole::Data);
    auto mark = [&](int r, int c, ModuleRole role) { rm.roles[std::size_t(r) * dim + c] = role; };

    for (int r = 0; r < 8; ++r)
        for (int c = 0; c < 8; ++c) {
            mark(r, c, ModuleRole::Finder);                  // top-left
            mark(r, dim - 1 - c, ModuleRole::Finder);        // top-right
            mark(dim - 1 - r, c, ModuleRole::Finder);        // bottom-left
        }

    for (int ar : detail::alignment_coords(version))
        for (int ac : detail::alignment_coords(version)) {
            // Skip the three centers that sit inside finder zones.
            if ((ar <= 8 && ac <= 8) || (ar <= 8 && ac >= dim - 9) || (ar >= dim - 9 && ac <= 8)) continue;
            rm.alignment_centers.emplace_back(ar, ac);
            for (int r = ar - 2; r <= ar + 2; ++r)
                for (int c = ac - 2; c <= ac + 2; ++c) mark(r, c, ModuleRole::Alignment);
        }

    int fmt_needed = kFormatBits;
    for (int r = 0; r < dim && fmt_needed > 0; ++r)
        for (int c = 0; c < dim && fmt_needed > 0; ++c)
            if (rm.role(r, c) == ModuleRole::Data) {
                mark(r, c, ModuleRole::FormatRegion);
                rm.format_cells.emplace_back(r, c);
                --fmt_needed;
            }
    if (fmt_needed > 0) fail(Errc::invalid_parameter, "symbol too small for format region");

    for (int r = 0; r < dim; ++r)
        for (int c = 0; c < dim; ++c)
            if (rm.role(r, c) == ModuleRole::Data) rm.data_cells.emplace_back(r, c);
    return rm;
}

inline const RoleMap& role_map(int version) {
    static std::map<int, RoleMap> cache;
    auto it = cache.find(version);
    if (it == cache.end()) it = cache.emplace(version, compute_role_map(version)).first;
    return it->second;
}

inline int data_module_count(int version) { return int(role_map(version).data_cells.size()); }

inline BlockLayout layer_layout(int version, EcLevel level) {
    return layout_blocks(data_module_count(version) / 8, level);
}

inline int layer_payload_capacity(int version, EcLevel level) {
    return max_payload_bytes(layer_layout(version, level));
}

// ---------------------------------------------------------------------------
// Pattern colors
//
// Finder cores are distinct non-white codebook colors per finder, so a
// detected pattern can be both validated and identified by color. The outer
// dark ring of every finder carries the layer count; ring colors are globally
// distinct across n so the decoder can read n before it knows the codebook.

inline ModuleTuple finder_core_tuple(int n_layers, int finder_id) {
    switch (n_layers) {
        case 1: return {1};
        case 2: {
            static const ModuleTuple t[3] = {{1, 0}, {0, 1}, {1, 1}};
            return t[finder_id];
        }
        case 3: {
            static const ModuleTuple t[3] = {{0, 1, 1}, {1, 0, 1}, {1, 1, 0}};  // red, green, blue
            return t[finder_id];
        }
        case 4: {
            static const ModuleTuple t[3] = {{0, 1, 1, 0}, {1, 0, 1, 0}, {1, 1, 0, 0}};
            return t[finder_id];
        }
    }
    fail(Errc::invalid_parameter, "bad layer count");
}

inline ModuleTuple finder_ring_tuple(int n_layers) {
    switch (n_layers) {
        case 1: return {1};                 // black
        case 2: return {1, 0};              // cyan
        case 3: return {1, 1, 0};           // blue
        case 4: return {1, 1, 0, 1};        // dimmed blue
    }
    fail(Errc::invalid_parameter, "bad layer count");
}

inline ModuleTuple alignment_core_tuple(int n_layers) {
    switch (n_layers) {
        case 1: return {1};
        case 2: return {1, 1};
        case 3: return {0, 1, 0};           // magenta
        case 4: return {0, 1, 0, 0};
    }
    fail(Errc::invalid_parameter, "bad layer count");
}

// Ring color of each supported layer count, for reading n from an image.
inline const std::vector<Vec3>& ring_color_table() {
    static const std::vector<Vec3> table = [] {
        std::vector<Vec3> t;
        for (int n = 1; n <= kMaxLayers; ++n) t.push_back(build_codebook(n).map(finder_ring_tuple(n)));
        return t;
    }();
    return table;
}

// ---------------------------------------------------------------------------
// Format field codec: 16 bits in a GF(16) RS(15,5) codeword, written twice.
// Layout: [15:14] n_layers-1, [13:6] per-layer EC level, [5:0] seed.

inline std::uint16_t pack_format_field(const FormatInfo& fi) {
    if (fi.n_layers < 1 || fi.n_layers > kMaxLayers) fail(Errc::invalid_parameter, "bad layer count");
    if (fi.seed > kMaxSeed) fail(Errc::invalid_parameter, "format seed must be 0..63");
    std::uint16_t field = std::uint16_t((fi.n_layers - 1) << 14);
    for (int i = 0; i < kMaxLayers; ++i) {
        int lv = i < int(fi.ec_levels.size()) ? int(fi.ec_levels[i]) : 0;
        field |= std::uint16_t(lv << (12 - 2 * i));
    }
    field |= std::uint16_t(fi.seed & kMaxSeed);
    return field;
}

inline FormatInfo unpack_format_field(std::uint16_t field, int version) {
    FormatInfo fi;
    fi.version = version;
    fi.n_layers = ((field >> 14) & 3) + 1;
    for (int i = 0; i < fi.n_layers; ++i) {
        int lv = (field >> (12 - 2 * i)) & 3;
        if (lv > 2) fail(Errc::format_unreadable, "bad EC level code in format field");
        fi.ec_levels.push_back(EcLevel(lv));
    }
    fi.seed = field & kMaxSeed;
    return fi;
}

inline std::vector<std::uint8_t> encode_format_bits(const FormatInfo& fi) {
    std::uint16_t field = pack_format_field(fi);
    std::vector<int> nibbles(5, 0);
    for (int i = 0; i < 4; ++i) nibbles[i] = (field >> (12 - 4 * i)) & 0xf;
    auto ecc = rs_compute_ecc(GaloisField::gf16(), nibbles, 10);
    nibbles.insert(nibbles.end(), ecc.begin(), ecc.end());
    std::vector<std::uint8_t> bits;
    bits.reserve(kFormatBits);
    for (int copy = 0; copy < 2; ++copy)
        for (int nib : nibbles)
            for (int b = 3; b >= 0; --b) bits.push_back(std::uint8_t((nib >> b) & 1));
    return bits;
}

// Decodes either redundant copy; throws format_unreadable when both fail.
inline FormatInfo decode_format_bits(const std::vector<std::uint8_t>& bits, int version) {
    if (int(bits.size()) != kFormatBits) fail(Errc::invalid_parameter, "format bit count mismatch");
    for (int copy = 0; copy < 2; ++copy) {
        std::vector<int> nibbles(15, 0);
        for (int i = 0; i < 15; ++i)
            for (int b = 0; b < 4; ++b)
                nibbles[i] = (nibbles[i] << 1) | bits[copy * 60 + i * 4 + b];
        auto res = rs_correct(GaloisField::gf16(), nibbles, 10);
        if (!res) continue;
        std::uint16_t field = 0;
        for (int i = 0; i < 4; ++i) field = std::uint16_t((field << 4) | res->codeword[i]);
        return unpack_format_field(field, version);
    }
    fail(Errc::format_unreadable, "format region unreadable");
}

// ---------------------------------------------------------------------------
// Spatial randomization

namespace detail {

inline int window_of(const std::pair<int, int>& cell) { return (cell.first / 8) * 64 + cell.second / 8; }

}  // namespace detail

// Permutation sending bitstream index -> data cell index. Seed 0 is the
// identity (randomization off). Non-zero seeds shuffle uniformly, then a
// repair pass breaks up consecutive stream bits that landed in the same
// 8x8-module window, when spare positions allow.
inline std::vector<std::uint32_t> placement_permutation(std::size_t nbits, int version, std::uint64_t seed) {
    const auto& cells = role_map(version).data_cells;
    if (nbits != cells.size()) fail(Errc::capacity_exceeded, "bit count does not match data capacity");
    std::vector<std::uint32_t> perm(nbits);
    for (std::size_t i = 0; i < nbits; ++i) perm[i] = std::uint32_t(i);
    if (seed == 0) return perm;

    SplitMix64 rng(seed ^ (std::uint64_t(version) * 0x9e3779b97f4a7c15ULL));
    for (std::size_t i = nbits - 1; i > 0; --i)
        std::swap(perm[i], perm[rng.next_below(i + 1)]);

    for (std::size_t i = 0; i + 1 < nbits; ++i) {
        if (detail::window_of(cells[perm[i]]) != detail::window_of(cells[perm[i + 1]])) continue;
        for (int attempt = 0; attempt < 16; ++attempt) {
            std::size_t j = i + 2 + rng.next_below(nbits - i - 2);
            if (j >= nbits) break;
            if (detail::window_of(cells[perm[j]]) != detail::window_of(cells[perm[i]])) {
                std::swap(perm[i + 1], perm[j]);
                break;
            }
        }
    }
    return perm;
}

inline std::vector<std::uint32_t> invert_permutation(const std::vector<std::uint32_t>& perm) {
    std::vector<std::uint32_t> inv(perm.size());
    for (std::size_t i = 0; i < perm.size(); ++i) inv[perm[i]] = std::uint32_t(i);
    return inv;
}

// ---------------------------------------------------------------------------
// Symbol assembly

inline void paint_patterns(HiqSymbol& symbol) {
    const RoleMap& rm = role_map(symbol.version);
    const int dim = rm.dim;
    auto set_tuple = [&](int r, int c, const ModuleTuple& t) {
        for (int i = 0; i < symbol.n_layers; ++i) symbol.layers[i].set(r, c, t[i]);
    };
    const ModuleTuple white(symbol.n_layers, 0);
    const ModuleTuple black(symbol.n_layers, 1);
    const ModuleTuple ring = finder_ring_tuple(symbol.n_layers);

    // Finder patterns: 7x7 with 1:1:3:1:1 ring structure plus white separator.
    const int origins[3][2] = {{0, 0}, {0, dim - 7}, {dim - 7, 0}};
    for (int f = 0; f < 3; ++f) {
        int r0 = origins[f][0], c0 = origins[f][1];
        ModuleTuple core = finder_core_tuple(symbol.n_layers, f);
        for (int r = 0; r < 8; ++r)
            for (int c = 0; c < 8; ++c) {
                int rr = r0 == 0 ? r0 + r : dim - 1 - r;
                int cc = c0 == 0 ? c0 + c : dim - 1 - c;
                if (r == 7 || c == 7) {
                    set_tuple(rr, cc, white);  // separator
                } else if (r == 0 || r == 6 || c == 0 || c == 6) {
                    set_tuple(rr, cc, ring);
                } else if (r >= 2 && r <= 4 && c >= 2 && c <= 4) {
                    set_tuple(rr, cc, core);
                } else {
                    set_tuple(rr, cc, white);
                }
            }
    }

    const ModuleTuple align_core = alignment_core_tuple(symbol.n_layers);
    for (auto [ar, ac] : rm.alignment_centers)
        for (int r = -2; r <= 2; ++r)
            for (int c = -2; c <= 2; ++c) {
                if (r == 0 && c == 0)
                    set_tuple(ar, ac, align_core);
                else if (std::abs(r) == 2 || std::abs(c) == 2)
                    set_tuple(ar + r, ac + c, black);
                else
                    set_tuple(ar + r, ac + c, white);
            }

    auto fmt_bits = encode_format_bits(symbol.format);
    for (std::size_t i = 0; i < rm.format_cells.size(); ++i) {
        auto [r, c] = rm.format_cells[i];
        symbol.layers[0].set(r, c, fmt_bits[i]);
        for (int l = 1; l < symbol.n_layers; ++l) symbol.layers[l].set(r, c, 0);
    }
}

inline HiqSymbol assemble_symbol(std::vector<LayerMatrix> layers, const std::vector<EcLevel>& ec_levels,
                                 std::uint32_t seed) {
    if (layers.empty() || layers.size() > kMaxLayers) fail(Errc::invalid_parameter, "layer count must be 1..4");
    if (layers.size() != ec_levels.size()) fail(Errc::layer_mismatch, "one EC level per layer required");
    if (seed > kMaxSeed) fail(Errc::invalid_parameter, "randomization seed must be 0..63");
    const int dim = layers[0].dim;
    for (const auto& l : layers)
        if (l.dim != dim) fail(Errc::layer_mismatch, "all layers must share the same dimension");

    HiqSymbol s;
    s.version = version_for_dim(dim);
    s.n_layers = int(layers.size());
    s.layers = std::move(layers);
    s.codebook = build_codebook(s.n_layers);
    s.format.n_layers = s.n_layers;
    s.format.ec_levels = ec_levels;
    s.format.version = s.version;
    s.format.seed = seed;
    s.randomization_seed = seed;
    paint_patterns(s);
    return s;
}

// Reads FormatInfo back out of an assembled symbol: layer count by majority
// vote over the three finder rings, the rest from the format region.
inline FormatInfo read_format(const HiqSymbol& symbol) {
    const RoleMap& rm = role_map(symbol.version);
    const int dim = rm.dim;
    const auto& ring_colors = ring_color_table();
    // One ring sample per finder (outer ring corner module).
    const int ring_cells[3][2] = {{0, 0}, {0, dim - 1}, {dim - 1, 0}};
    int votes[3];
    for (int f = 0; f < 3; ++f) {
        Vec3 c = symbol.color_at(ring_cells[f][0], ring_cells[f][1]);
        int best = 0;
        double best_d = dist2(c, ring_colors[0]);
        for (int n = 1; n < int(ring_colors.size()); ++n) {
            double d = dist2(c, ring_colors[n]);
            if (d < best_d) {
                best_d = d;
                best = n;
            }
        }
        votes[f] = best + 1;
    }
    int n_layers = -1;
    if (votes[0] == votes[1] || votes[0] == votes[2])
        n_layers = votes[0];
    else if (votes[1] == votes[2])
        n_layers = votes[1];
    else
        fail(Errc::format_unreadable, "finder ring colors disagree pairwise");
    (void)n_layers;

    std::vector<std::uint8_t> bits;
    bits.reserve(kFormatBits);
    for (auto [r, c] : rm.format_cells) bits.push_back(symbol.layers[0].at(r, c));
    FormatInfo fi = decode_format_bits(bits, symbol.version);
    if (fi.n_layers != n_layers) fail(Errc::format_unreadable, "ring vote and format field disagree");
    return fi;
}

// ---------------------------------------------------------------------------
// Layer bit codec: payload -> framed -> RS blocks -> emitted bitstream laid
// out through the placement permutation. Randomization off (seed 0) also
// switches to sequential block emission so each block stays spatially local.

inline std::vector<std::uint8_t> encode_layer_bits(const std::vector<std::uint8_t>& payload, int version,
                                                   EcLevel level, std::uint64_t seed, int layer_id = 0) {
    BlockLayout lay = layer_layout(version, level);
    auto framed = frame_payload(payload, lay);
    auto blocks = rs_encode_blocks(framed, lay, layer_id);
    auto stream = seed == 0 ? concat_blocks(blocks) : interleave_blocks(blocks);
    const int nbits = data_module_count(version);
    std::vector<std::uint8_t> bits(nbits, 0);
    auto perm = placement_permutation(std::size_t(nbits), version, seed);
    for (std::size_t i = 0; i < stream.size() * 8; ++i) {
        std::uint8_t bit = (stream[i / 8] >> (7 - i % 8)) & 1;
        bits[perm[i]] = bit;
    }
    return bits;  // indexed by data-cell scan order
}

struct LayerDecodeOutcome {
    std::vector<std::optional<std::vector<std::uint8_t>>> block_data;  // per block
    std::vector<int> corrected;                                        // per block, -1 on failure
    bool all_blocks_ok = false;
    std::optional<std::vector<std::uint8_t>> payload;  // set when all blocks + CRC pass
};

inline LayerDecodeOutcome decode_layer_bits(const std::vector<std::uint8_t>& cell_bits, int version,
                                            EcLevel level, std::uint64_t seed) {
    BlockLayout lay = layer_layout(version, level);
    const int nbits = data_module_count(version);
    if (int(cell_bits.size()) != nbits) fail(Errc::invalid_parameter, "cell bit count mismatch");
    auto perm = placement_permutation(std::size_t(nbits), version, seed);
    std::vector<std::uint8_t> stream(std::size_t(lay.total_codewords), 0);
    for (std::size_t i = 0; i < stream.size() * 8; ++i)
        if (cell_bits[perm[i]]) stream[i / 8] |= std::uint8_t(1 << (7 - i % 8));
    auto blocks = seed == 0 ? split_blocks(stream, lay) : deinterleave_blocks(stream, lay);

    LayerDecodeOutcome out;
    out.all_blocks_ok = true;
    for (const auto& blk : blocks) {
        auto res = rs_decode_block(blk);
        if (res) {
            out.block_data.emplace_back(std::move(res->data));
            out.corrected.push_back(res->corrected);
        } else {
            out.block_data.emplace_back(std::nullopt);
            out.corrected.push_back(-1);
            out.all_blocks_ok = false;
        }
    }
    if (out.all_blocks_ok) {
        std::vector<std::uint8_t> framed;
        for (const auto& d : out.block_data) framed.insert(framed.end(), d->begin(), d->end());
        out.payload = unframe_payload(framed);
        if (!out.payload) out.all_blocks_ok = false;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Whole-symbol encode / extract

inline int symbol_payload_capacity(int version, const std::vector<EcLevel>& ec_levels) {
    int cap = 0;
    for (EcLevel l : ec_levels) cap += layer_payload_capacity(version, l);
    return cap;
}

// Splits payload across layers in order (each layer filled to capacity) and
// assembles the symbol. version 0 selects the smallest version that fits.
inline HiqSymbol encode_symbol(const std::vector<std::uint8_t>& payload, int n_layers,
                               std::vector<EcLevel> ec_levels, int version, std::uint32_t seed) {
    if (n_layers < 1 || n_layers > kMaxLayers) fail(Errc::invalid_parameter, "n_layers must be 1..4");
    if (ec_levels.empty()) ec_levels.assign(std::size_t(n_layers), EcLevel::L);
    if (int(ec_levels.size()) != n_layers) fail(Errc::layer_mismatch, "one EC level per layer required");
    if (version == 0) {
        for (int v = kMinVersion; v <= kMaxVersion; ++v)
            if (symbol_payload_capacity(v, ec_levels) >= int(payload.size())) {
                version = v;
                break;
            }
        if (version == 0)
            fail(Errc::capacity_exceeded, "payload exceeds the maximum symbol capacity of " +
                                              std::to_string(symbol_payload_capacity(kMaxVersion, ec_levels)) +
                                              " bytes");
    }
    if (symbol_payload_capacity(version, ec_levels) < int(payload.size()))
        fail(Errc::capacity_exceeded, "payload of " + std::to_string(payload.size()) +
                                          " bytes exceeds the capacity of " +
                                          std::to_string(symbol_payload_capacity(version, ec_levels)) +
                                          " bytes at version " + std::to_string(version));

    const RoleMap& rm = role_map(version);
    std::vector<LayerMatrix> layers;
    std::size_t off = 0;
    for (int i = 0; i < n_layers; ++i) {
        int cap = layer_payload_capacity(version, ec_levels[i]);
        std::size_t take = std::min(std::size_t(cap), payload.size() - off);
        std::vector<std::uint8_t> part(payload.begin() + off, payload.begin() + off + take);
        off += take;
        auto bits = encode_layer_bits(part, version, ec_levels[i], seed, i);
        LayerMatrix lm(rm.dim);
        for (std::size_t j = 0; j < rm.data_cells.size(); ++j) {
            auto [r, c] = rm.data_cells[j];
            lm.set(r, c, bits[j]);
        }
        layers.push_back(std::move(lm));
    }
    return assemble_symbol(std::move(layers), ec_levels, seed);
}

// Ground-truth data bits of one layer in data-cell scan order.
inline std::vector<std::uint8_t> layer_data_bits(const HiqSymbol& symbol, int layer) {
    const RoleMap& rm = role_map(symbol.version);
    std::vector<std::uint8_t> bits;
    bits.reserve(rm.data_cells.size());
    for (auto [r, c] : rm.data_cells) bits.push_back(symbol.layers[layer].at(r, c));
    return bits;
}

inline std::vector<std::uint8_t> decode_symbol_payload(const HiqSymbol& symbol) {
    std::vector<std::uint8_t> payload;
    for (int i = 0; i < symbol.n_layers; ++i) {
        auto out = decode_layer_bits(layer_data_bits(symbol, i), symbol.version, symbol.format.ec_levels[i],
                                     symbol.format.seed);
        if (!out.payload) fail(Errc::block_decode_failure, "layer " + std::to_string(i + 1) + " failed to decode");
        payload.insert(payload.end(), out.payload->begin(), out.payload->end());
    }
    return payload;
}

// ---------------------------------------------------------------------------
// Text container (bit-exact across platforms)

inline void save_symbol(const HiqSymbol& symbol, std::ostream& os) {
    os << "HIQSYM 1\n";
    os << "version " << symbol.version << "\n";
    os << "layers " << symbol.n_layers << "\n";
    os << "ec";
    for (EcLevel l : symbol.format.ec_levels) os << ' ' << ec_level_char(l);
    os << "\n";
    os << "seed " << symbol.format.seed << "\n";
    for (int i = 0; i < symbol.n_layers; ++i) {
        os << "layer " << (i + 1) << "\n";
        for (int r = 0; r < symbol.dim(); ++r) {
            for (int c = 0; c < symbol.dim(); ++c) os << char('0' + symbol.layers[i].at(r, c));
            os << "\n";
        }
    }
}

inline HiqSymbol load_symbol(std::istream& is) {
    std::string magic;
    int container_version = 0;
    if (!(is >> magic >> container_version) || magic != "HIQSYM" || container_version != 1)
        fail(Errc::io_error, "not a HIQSYM container");
    std::string key;
    int version = 0, n_layers = 0;
    std::uint32_t seed = 0;
    std::vector<EcLevel> ec;
    is >> key >> version;
    if (key != "version") fail(Errc::io_error, "bad symbol container header");
    is >> key >> n_layers;
    if (key != "layers") fail(Errc::io_error, "bad symbol container header");
    is >> key;
    if (key != "ec") fail(Errc::io_error, "bad symbol container header");
    for (int i = 0; i < n_layers; ++i) {
        char c;
        is >> c;
        ec.push_back(ec_level_from_char(c));
    }
    is >> key >> seed;
    if (key != "seed") fail(Errc::io_error, "bad symbol container header");

    const int dim = dim_for_version(version);
    std::vector<LayerMatrix> layers;
    for (int i = 0; i < n_layers; ++i) {
        int idx = 0;
        is >> key >> idx;
        if (key != "layer" || idx != i + 1) fail(Errc::io_error, "bad layer header");
        LayerMatrix lm(dim);
        for (int r = 0; r < dim; ++r) {
            std::string row;
            is >> row;
            if (int(row.size()) != dim) fail(Errc::io_error, "bad layer row length");
            for (int c = 0; c < dim; ++c) lm.set(r, c, std::uint8_t(row[c] - '0'));
        }
        layers.push_back(std::move(lm));
    }
    // Re-assembling repaints patterns and the format region; data cells are
    // taken verbatim, so the container round-trips bit-exactly.
    return assemble_symbol(std::move(layers), ec, seed);
}

}  // namespace hiq

#pragma once

// End-to-end decoding: binarize -> locate patterns -> fit the grid homography
// -> estimate white -> classify every module -> undo spatial randomization ->
// per-block RS decode. Sessions accumulate decoded blocks across frames, and
// the benchmark harness aggregates BER/DFR over corpora.

#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "hiq/colorrec.hpp"
#include "hiq/common.hpp"
#include "hiq/detect.hpp"
#include "hiq/geometry.hpp"
#include "hiq/raster.hpp"
#include "hiq/symbology.hpp"

namespace hiq {

enum class FrameStatus { decoded, partial, localization_failed };

struct DecodeOptions {
    bool use_rgt = true;  // false: plain 4-point estimation (ablation)
};

struct FrameResult {
    FrameStatus status = FrameStatus::localization_failed;
    std::string error;  // set for localization failures

    int version = 0;
    int n_layers = 0;
    std::uint32_t seed = 0;
    std::vector<EcLevel> ec_levels;

    // Pre-correction bits per layer in data-cell scan order; empty for layers
    // skipped because the session already completed them.
    std::vector<std::vector<std::uint8_t>> layer_bits;
    std::vector<LayerDecodeOutcome> layers;
    std::vector<bool> layer_skipped;

    long long predictions = 0;
    long long wrong_bits = 0, total_bits = 0;  // vs ground truth when supplied
    std::vector<long long> layer_wrong, layer_total;

    double ber() const { return total_bits ? double(wrong_bits) / double(total_bits) : 0.0; }
};

struct ScanSession {
    bool initialized = false;
    int version = 0;
    int n_layers = 0;
    std::uint32_t seed = 0;
    std::vector<EcLevel> ec_levels;

    // Per layer, per block: recovered data codewords.
    std::vector<std::vector<std::optional<std::vector<std::uint8_t>>>> blocks;
    std::vector<bool> layer_complete;
    std::vector<std::optional<std::vector<std::uint8_t>>> layer_payload;
    int frames = 0;
    int conflicts = 0;

    bool complete() const {
        if (!initialized) return false;
        for (bool c : layer_complete)
            if (!c) return false;
        return true;
    }

    std::vector<std::uint8_t> payload() const {
        if (!complete()) fail(Errc::insufficient_data, "session not complete");
        std::vector<std::uint8_t> out;
        for (const auto& p : layer_payload) out.insert(out.end(), p->begin(), p->end());
        return out;
    }
};

// ---------------------------------------------------------------------------
// Frame decoding

inline FrameResult decode_frame(const RasterImage& img, const ColorModel& model,
                                const ScanSession* session = nullptr, const HiqSymbol* truth = nullptr,
                                const DecodeOptions& opts = {}) {
    FrameResult fr;
    try {
        BitImage bits = binarize(img);
        PatternSet ps = find_patterns(bits, img);
        if (model.n_layers() != ps.n_layers)
            fail(Errc::layer_mismatch, "model expects " + std::to_string(model.n_layers()) + " layers, symbol has " +
                                           std::to_string(ps.n_layers));
        const int dim = dim_for_version(ps.version);

        std::vector<Correspondence> corrs;
        for (const Pattern& f : ps.finders) corrs.push_back({f.center, f.grid, kFinderWeight});
        for (const Pattern& a : ps.alignments) corrs.push_back({a.center, a.grid, kAlignmentWeight});
        if (corrs.size() < 4) {
            // No alignment patterns (version 1): synthesize the fourth corner
            // by parallelogram completion at reduced weight.
            Vec2 p3{ps.finders[1].center[0] + ps.finders[2].center[0] - ps.finders[0].center[0],
                    ps.finders[1].center[1] + ps.finders[2].center[1] - ps.finders[0].center[1]};
            corrs.push_back({p3, {dim - 3.5, dim - 3.5}, 0.2});
        }
        Homography h;
        if (opts.use_rgt) {
            h = estimate_rgt(corrs);
        } else {
            std::vector<Correspondence> four(corrs.begin(), corrs.begin() + 3);
            four.push_back(corrs.size() > 4 ? corrs[corrs.size() - 1] : corrs[3]);
            h = homography_4pt(four);
        }

        Vec3 white = estimate_white(img, h, dim);

        // Format region: layer-1 bits read by nearest-codebook classification.
        const RoleMap& rm = role_map(ps.version);
        ColorCodebook cb = build_codebook(ps.n_layers);
        std::vector<std::uint8_t> fmt_bits;
        fmt_bits.reserve(rm.format_cells.size());
        for (auto [r, c] : rm.format_cells) {
            Vec2 p = h.project(c + 0.5, r + 0.5);
            if (!img.contains(p[0], p[1])) fail(Errc::frame_rejected, "format cell projects outside the image");
            Vec3 v = normalize_white(bilinear_sample(img, p[0], p[1]), white);
            fmt_bits.push_back(index_to_tuple(cb.nearest(v), ps.n_layers)[0]);
        }
        FormatInfo fi = decode_format_bits(fmt_bits, ps.version);
        if (fi.n_layers != ps.n_layers) fail(Errc::format_unreadable, "format field disagrees with ring colors");

        fr.version = ps.version;
        fr.n_layers = ps.n_layers;
        fr.seed = fi.seed;
        fr.ec_levels = fi.ec_levels;

        auto features = sample_modules(img, h, dim, white);

        std::vector<bool> skip(std::size_t(ps.n_layers), false);
        if (session && session->initialized)
            for (int j = 0; j < ps.n_layers; ++j) skip[std::size_t(j)] = session->layer_complete[std::size_t(j)];

        PredictionCounter counter;
        std::vector<std::vector<std::uint8_t>> layer_cells(std::size_t(ps.n_layers));
        for (auto& lc : layer_cells) lc.assign(std::size_t(dim) * dim, 0);
        for (const FeatureBlock& fb : features) {
            auto bits_pred = model.predict(fb.rows, &counter, &skip);
            for (int j = 0; j < ps.n_layers; ++j)
                layer_cells[std::size_t(j)][std::size_t(fb.row) * dim + fb.col] = bits_pred[std::size_t(j)];
        }
        fr.predictions = counter.evals;

        fr.layer_bits.resize(std::size_t(ps.n_layers));
        fr.layers.resize(std::size_t(ps.n_layers));
        fr.layer_skipped.assign(std::size_t(ps.n_layers), false);
        fr.layer_wrong.assign(std::size_t(ps.n_layers), 0);
        fr.layer_total.assign(std::size_t(ps.n_layers), 0);
        bool all_ok = true;
        for (int j = 0; j < ps.n_layers; ++j) {
            if (skip[std::size_t(j)]) {
                fr.layer_skipped[std::size_t(j)] = true;
                continue;
            }
            auto& bits_j = fr.layer_bits[std::size_t(j)];
            bits_j.reserve(rm.data_cells.size());
            for (auto [r, c] : rm.data_cells) bits_j.push_back(layer_cells[std::size_t(j)][std::size_t(r) * dim + c]);
            fr.layers[std::size_t(j)] =
                decode_layer_bits(bits_j, ps.version, fi.ec_levels[std::size_t(j)], fi.seed);
            if (!fr.layers[std::size_t(j)].payload) all_ok = false;
            if (truth) {
                auto gt = layer_data_bits(*truth, j);
                for (std::size_t i = 0; i < gt.size(); ++i) {
                    ++fr.total_bits;
                    ++fr.layer_total[std::size_t(j)];
                    if (gt[i] != bits_j[i]) {
                        ++fr.wrong_bits;
                        ++fr.layer_wrong[std::size_t(j)];
                    }
                }
            }
        }
        fr.status = all_ok ? FrameStatus::decoded : FrameStatus::partial;
    } catch (const Error& e) {
        switch (e.code()) {
            case Errc::pattern_not_found:
            case Errc::format_unreadable:
            case Errc::frame_rejected:
            case Errc::white_estimation_failure:
            case Errc::degenerate_configuration:
                fr.status = FrameStatus::localization_failed;
                fr.error = e.what();
                return fr;
            default:
                throw;
        }
    }
    return fr;
}

// Payload of a fully decoded single frame.
inline std::vector<std::uint8_t> frame_payload_bytes(const FrameResult& fr) {
    if (fr.status != FrameStatus::decoded) fail(Errc::block_decode_failure, "frame not fully decoded");
    std::vector<std::uint8_t> out;
    for (const auto& l : fr.layers)
        if (l.payload) out.insert(out.end(), l.payload->begin(), l.payload->end());
    return out;
}

// ---------------------------------------------------------------------------
// Cross-frame block accumulation

inline void accumulate(ScanSession& session, const FrameResult& fr) {
    ++session.frames;
    if (fr.status == FrameStatus::localization_failed) return;
    if (!session.initialized) {
        session.initialized = true;
        session.version = fr.version;
        session.n_layers = fr.n_layers;
        session.seed = fr.seed;
        session.ec_levels = fr.ec_levels;
        session.blocks.resize(std::size_t(fr.n_layers));
        session.layer_complete.assign(std::size_t(fr.n_layers), false);
        session.layer_payload.resize(std::size_t(fr.n_layers));
        for (int j = 0; j < fr.n_layers; ++j) {
            BlockLayout lay = layer_layout(fr.version, fr.ec_levels[std::size_t(j)]);
            session.blocks[std::size_t(j)].assign(lay.blocks.size(), std::nullopt);
        }
    } else if (session.version != fr.version || session.n_layers != fr.n_layers || session.seed != fr.seed) {
        fail(Errc::frame_rejected, "frame belongs to a different symbol");
    }
    for (int j = 0; j < fr.n_layers; ++j) {
        if (session.layer_complete[std::size_t(j)] || fr.layer_skipped[std::size_t(j)]) continue;
        auto& have = session.blocks[std::size_t(j)];
        const auto& got = fr.layers[std::size_t(j)].block_data;
        for (std::size_t b = 0; b < got.size() && b < have.size(); ++b) {
            if (!got[b]) continue;
            if (have[b]) {
                if (*have[b] != *got[b]) ++session.conflicts;  // first-wins
            } else {
                have[b] = got[b];
            }
        }
        bool full = true;
        for (const auto& b : have)
            if (!b) full = false;
        if (full) {
            std::vector<std::uint8_t> framed;
            for (const auto& b : have) framed.insert(framed.end(), b->begin(), b->end());
            auto payload = unframe_payload(framed);
            if (payload) {
                session.layer_payload[std::size_t(j)] = std::move(payload);
                session.layer_complete[std::size_t(j)] = true;
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Metrics

struct Metrics {
    double ber = 0;                   // pre-correction wrong bits / total bits
    std::vector<double> layer_ber;
    double dfr = 0;                   // failed decodes / localized frames
    long long frames = 0, localized = 0, decoded = 0;
    double ppf = 0;                   // mean predictions per localized frame
};

inline Metrics compute_metrics(const std::vector<FrameResult>& results) {
    if (results.empty()) fail(Errc::insufficient_data, "no frames to compute metrics over");
    Metrics m;
    long long wrong = 0, total = 0, preds = 0;
    int max_layers = 0;
    for (const auto& fr : results) max_layers = std::max(max_layers, fr.n_layers);
    std::vector<long long> lw(std::size_t(max_layers), 0), lt(std::size_t(max_layers), 0);
    for (const auto& fr : results) {
        ++m.frames;
        if (fr.status == FrameStatus::localization_failed) continue;
        ++m.localized;
        preds += fr.predictions;
        if (fr.status == FrameStatus::decoded) ++m.decoded;
        wrong += fr.wrong_bits;
        total += fr.total_bits;
        for (int j = 0; j < fr.n_layers && j < int(fr.layer_total.size()); ++j) {
            lw[std::size_t(j)] += fr.layer_wrong[std::size_t(j)];
            lt[std::size_t(j)] += fr.layer_total[std::size_t(j)];
        }
    }
    m.layer_ber.resize(std::size_t(max_layers), 0.0);
    for (int j = 0; j < max_layers; ++j)
        if (lt[std::size_t(j)]) m.layer_ber[std::size_t(j)] = double(lw[std::size_t(j)]) / double(lt[std::size_t(j)]);
    m.ber = total ? double(wrong) / double(total) : 0.0;
    m.dfr = m.localized ? double(m.localized - m.decoded) / double(m.localized) : 0.0;
    m.ppf = m.localized ? double(preds) / double(m.localized) : 0.0;
    return m;
}

// ---------------------------------------------------------------------------
// Benchmark harness

struct BenchRow {
    std::string classifier;
    std::string preset;
    double ber = 0;
    double dfr = 0;
    double frames_mean = 0;
    double ppf = 0;
};

inline BenchRow bench_model(const std::vector<CorpusItem>& items, const ColorModel& model,
                            const std::string& preset_name, const DecodeOptions& opts = {}) {
    std::vector<FrameResult> results;
    results.reserve(items.size());
    for (const auto& item : items) results.push_back(decode_frame(item.image, model, nullptr, &item.symbol, opts));
    Metrics m = compute_metrics(results);
    BenchRow row;
    row.classifier = ColorModel::kind_name(model.kind);
    row.preset = preset_name;
    row.ber = m.ber;
    row.dfr = m.dfr;
    row.frames_mean = 1.0;
    row.ppf = m.ppf;
    return row;
}

inline void write_report_csv(const std::vector<BenchRow>& rows, std::ostream& os) {
    os << "classifier,preset,ber,dfr,frames_mean,ppf\n";
    for (const auto& r : rows)
        os << r.classifier << ',' << r.preset << ',' << r.ber << ',' << r.dfr << ',' << r.frames_mean << ','
           << r.ppf << "\n";
}

}  // namespace hiq

#pragma once

// Symbol localization: adaptive per-channel binarization over an 8x8 block
// grid, scan-line finder detection with color validation, and alignment
// pattern search near grid-predicted positions.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "hiq/common.hpp"
#include "hiq/raster.hpp"
#include "hiq/symbology.hpp"

namespace hiq {

struct BitImage {
    int width = 0, height = 0;
    std::vector<std::uint8_t> bits;  // 1 = black

    BitImage() = default;
    BitImage(int w, int h) : width(w), height(h), bits(std::size_t(w) * h, 0) {}
    std::uint8_t at(int x, int y) const { return bits[std::size_t(y) * width + x]; }
    void set(int x, int y, std::uint8_t v) { bits[std::size_t(y) * width + x] = v; }
};

// A channel whose block range is narrower than this never classifies black;
// this is what keeps noisy quiet-zone blocks white.
constexpr double kFlatBlockRange = 0.12;
constexpr int kBinarizeGrid = 8;

// Per-channel adaptive thresholding: the image is divided into an 8x8 grid of
// blocks; per block and channel the threshold is (max+min)/2, and a pixel is
// black iff any channel falls below its threshold. Near-flat channels (range
// < kFlatBlockRange) classify nothing as black.
inline BitImage binarize(const RasterImage& img) {
    if (img.width < kBinarizeGrid || img.height < kBinarizeGrid)
        fail(Errc::invalid_parameter, "image too small to binarize");
    const int g = kBinarizeGrid;
    std::vector<Vec3> lo(std::size_t(g) * g, Vec3{2, 2, 2}), hi(std::size_t(g) * g, Vec3{-1, -1, -1});
    auto block_of = [&](int x, int y) { return std::size_t(y * g / img.height) * g + std::size_t(x * g / img.width); };
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            std::size_t b = block_of(x, y);
            const Vec3& p = img.at(x, y);
            for (int c = 0; c < 3; ++c) {
                lo[b][c] = std::min(lo[b][c], p[c]);
                hi[b][c] = std::max(hi[b][c], p[c]);
            }
        }
    std::vector<Vec3> thresh(lo.size());
    for (std::size_t b = 0; b < lo.size(); ++b)
        for (int c = 0; c < 3; ++c)
            thresh[b][c] = (hi[b][c] - lo[b][c] < kFlatBlockRange) ? 0.0 : 0.5 * (hi[b][c] + lo[b][c]);
    BitImage out(img.width, img.height);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            const Vec3& p = img.at(x, y);
            const Vec3& t = thresh[block_of(x, y)];
            out.set(x, y, (p[0] < t[0] || p[1] < t[1] || p[2] < t[2]) ? 1 : 0);
        }
    return out;
}

inline void save_pbm(const BitImage& bits, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) fail(Errc::io_error, "cannot write " + path);
    os << "P1\n" << bits.width << " " << bits.height << "\n";
    for (int y = 0; y < bits.height; ++y) {
        for (int x = 0; x < bits.width; ++x) os << (bits.at(x, y) ? '1' : '0');
        os << "\n";
    }
}

struct Pattern {
    Vec2 center{};        // subpixel image coordinates
    Vec2 grid{};          // module-grid coordinates of the pattern center
    double module_size = 0;
    Vec3 color{};         // sampled interior color (raw)
};

struct PatternSet {
    int n_layers = 0;
    int version = 0;
    double module_size = 0;
    Vec3 rough_white{1, 1, 1};
    std::vector<Pattern> finders;     // ordered: top-left, top-right, bottom-left
    std::vector<Pattern> alignments;  // with grid positions filled in
};

namespace detail {

constexpr double kRatioTolerance = 0.5;

inline bool check_ratios(const double runs[5], double& module) {
    static const double expect[5] = {1, 1, 3, 1, 1};
    double total = runs[0] + runs[1] + runs[2] + runs[3] + runs[4];
    double m = total / 7.0;
    if (m < 1.5) return false;
    for (int i = 0; i < 5; ++i)
        if (std::abs(runs[i] - expect[i] * m) > kRatioTolerance * expect[i] * m) return false;
    module = m;
    return true;
}

// Mean color over a small neighbourhood.
inline Vec3 sample_color(const RasterImage& img, double x, double y) {
    Vec3 acc{};
    int n = 0;
    for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
            double sx = x + dx, sy = y + dy;
            if (!img.contains(sx, sy)) continue;
            acc += bilinear_sample(img, sx, sy);
            ++n;
        }
    if (n == 0) return {0, 0, 0};
    return (1.0 / n) * acc;
}

// Extracts the 5-run window centered on the bit-image run containing `along`
// when scanning the given axis; returns false when no such window exists.
inline bool runs_at(const BitImage& bits, int fixed, int along, bool vertical, double runs[5], double& center) {
    const int len = vertical ? bits.height : bits.width;
    auto bit = [&](int i) { return vertical ? bits.at(fixed, i) : bits.at(i, fixed); };
    if (bit(along) != 1) return false;
    // Walk out from `along` collecting two runs on each side of its run.
    int edges[6];  // start of each of the 5 runs + end
    int i = along;
    while (i > 0 && bit(i - 1) == 1) --i;
    int s2 = i;
    i = along;
    while (i + 1 < len && bit(i + 1) == 1) ++i;
    int e2 = i + 1;
    // Left: white run then black run.
    i = s2;
    while (i > 0 && bit(i - 1) == 0) --i;
    int s1 = i;
    if (s1 == s2) return false;
    i = s1;
    while (i > 0 && bit(i - 1) == 1) --i;
    int s0 = i;
    if (s0 == s1) return false;
    // Right: white run then black run.
    i = e2;
    while (i < len && bit(i) == 0) ++i;
    int e3 = i;
    if (e3 == e2) return false;
    i = e3;
    while (i < len && bit(i) == 1) ++i;
    int e4 = i;
    if (e4 == e3) return false;
    edges[0] = s0; edges[1] = s1; edges[2] = s2; edges[3] = e2; edges[4] = e3; edges[5] = e4;
    for (int k = 0; k < 5; ++k) runs[k] = double(edges[k + 1] - edges[k]);
    center = 0.5 * (edges[2] + edges[3]);
    return true;
}

struct Candidate {
    Vec2 center{};
    double module = 0;
    int hits = 0;
};

}  // namespace detail

// Scan-line detection of the three finder patterns plus alignment search.
// Throws pattern_not_found when fewer than three color-validated finders
// survive.
inline PatternSet find_patterns(const BitImage& bits, const RasterImage& img) {
    using detail::kRatioTolerance;
    std::vector<detail::Candidate> cands;
    for (int y = 0; y < bits.height; ++y) {
        int x = 0;
        while (x < bits.width) {
            if (bits.at(x, y) != 1) {
                ++x;
                continue;
            }
            double hruns[5], cx;
            if (!detail::runs_at(bits, y, x, false, hruns, cx)) {
                while (x < bits.width && bits.at(x, y) == 1) ++x;
                continue;
            }
            double m;
            if (detail::check_ratios(hruns, m)) {
                double vruns[5], cy;
                int ix = int(cx);
                if (ix >= 0 && ix < bits.width && bits.at(ix, y) == 1 &&
                    detail::runs_at(bits, ix, y, true, vruns, cy)) {
                    double mv;
                    if (detail::check_ratios(vruns, mv) && std::abs(mv - m) < 0.7 * std::max(m, mv)) {
                        Vec2 c{cx, cy};
                        bool merged = false;
                        for (auto& cand : cands)
                            if (std::hypot(cand.center[0] - c[0], cand.center[1] - c[1]) < 3 * cand.module) {
                                double n = double(cand.hits);
                                cand.center = {(cand.center[0] * n + c[0]) / (n + 1),
                                               (cand.center[1] * n + c[1]) / (n + 1)};
                                cand.module = (cand.module * n + 0.5 * (m + mv)) / (n + 1);
                                ++cand.hits;
                                merged = true;
                                break;
                            }
                        if (!merged) cands.push_back({c, 0.5 * (m + mv), 1});
                    }
                }
            }
            // Skip past the first black run of the window.
            while (x < bits.width && bits.at(x, y) == 1) ++x;
        }
    }
    std::vector<detail::Candidate> kept;
    for (const auto& c : cands)
        if (c.hits >= 2) kept.push_back(c);
    if (kept.size() < 3) fail(Errc::pattern_not_found, "fewer than 3 finder candidates");

    // Rough white for color checks: per-channel maximum (the quiet zone).
    Vec3 white{1e-6, 1e-6, 1e-6};
    for (const Vec3& p : img.pixels)
        for (int c = 0; c < 3; ++c) white[c] = std::max(white[c], p[c]);

    // Layer count from the outer-ring color, majority over candidates.
    const auto& ring_colors = ring_color_table();
    auto ring_vote = [&](const detail::Candidate& c, double& quality) {
        Vec3 acc{};
        const double r = 3.0 * c.module;
        const double offs[4][2] = {{-r, 0}, {r, 0}, {0, -r}, {0, r}};
        for (auto& o : offs) acc += detail::sample_color(img, c.center[0] + o[0], c.center[1] + o[1]);
        acc = 0.25 * acc;
        Vec3 norm{acc[0] / white[0], acc[1] / white[1], acc[2] / white[2]};
        int best = 0;
        double bd = dist2(norm, ring_colors[0]);
        for (int n = 1; n < int(ring_colors.size()); ++n)
            if (double d = dist2(norm, ring_colors[std::size_t(n)]); d < bd) {
                bd = d;
                best = n;
            }
        // A true finder ring sits close to one of the table colors; incidental
        // data-area candidates rarely do.
        quality = double(c.hits) / (0.05 + bd);
        return best + 1;
    };
    // Votes are weighted by scan-line support and ring-color fit so the real
    // finders dominate incidental data-area candidates; weakly supported
    // candidates (large symbols produce many) do not get a say at all.
    int max_hits = 0;
    for (const auto& c : kept) max_hits = std::max(max_hits, c.hits);
    double votes[kMaxLayers + 1] = {};
    std::vector<double> ring_quality(kept.size());
    for (std::size_t i = 0; i < kept.size(); ++i) {
        int vote = ring_vote(kept[i], ring_quality[i]);
        if (2 * kept[i].hits >= max_hits) votes[std::size_t(vote)] += ring_quality[i];
    }
    int n_layers = 1;
    for (int n = 2; n <= kMaxLayers; ++n)
        if (votes[n] > votes[n_layers]) n_layers = n;

    ColorCodebook cb = build_codebook(n_layers);
    // Color validation: the interior must classify as one of the expected
    // finder core colors (or black for n=1).
    Vec3 core_colors[3];
    for (int f = 0; f < 3; ++f) core_colors[f] = cb.map(finder_core_tuple(n_layers, f));

    struct Scored {
        detail::Candidate cand;
        Vec3 color;
        int finder_id;  // -1 when cores are not distinctive (n=1)
        double d;
        double q;  // hits / ring-color mismatch
    };
    std::vector<Scored> valid;
    for (std::size_t ci = 0; ci < kept.size(); ++ci) {
        const auto& c = kept[ci];
        Vec3 raw = detail::sample_color(img, c.center[0], c.center[1]);
        Vec3 norm{raw[0] / white[0], raw[1] / white[1], raw[2] / white[2]};
        int nearest = cb.nearest(norm);
        int id = -1;
        double best = 1e9;
        for (int f = 0; f < 3; ++f) {
            double d = dist2(norm, core_colors[f]);
            if (d < best) {
                best = d;
                id = f;
            }
        }
        // Reject candidates whose interior classifies as some other codebook
        // color (e.g. a white-cored decoy).
        bool matches = false;
        for (int f = 0; f < 3; ++f)
            if (dist2(cb.entries[std::size_t(cb.nearest(core_colors[f]))], cb.entries[std::size_t(nearest)]) < 1e-12)
                matches = true;
        if (!matches) continue;
        valid.push_back({c, raw, id, best, ring_quality[ci]});
    }
    if (valid.size() < 3) fail(Errc::pattern_not_found, "color validation left fewer than 3 finders");

    // Pick one candidate per finder id when the cores are distinctive,
    // otherwise (n=1: all cores black) fall back to right-angle geometry.
    Scored* chosen[3] = {nullptr, nullptr, nullptr};
    bool distinctive = dist2(core_colors[0], core_colors[1]) > 1e-6;
    if (distinctive) {
        for (auto& s : valid) {
            int id = s.finder_id;
            // Closest core color wins; near-ties go to the candidate with the
            // better ring support.
            bool better = !chosen[id] || s.d < chosen[id]->d - 0.05 ||
                          (s.d < chosen[id]->d + 0.05 && s.q > chosen[id]->q);
            if (better) chosen[id] = &s;
        }
        if (!chosen[0] || !chosen[1] || !chosen[2]) distinctive = false;
    }
    if (!distinctive) {
        // Pick the triple of candidates that looks like a right isosceles
        // corner layout with consistent module sizes, preferring scan-line
        // and ring support; the corner finder is the vertex with the smallest
        // summed distance to the other two.
        std::sort(valid.begin(), valid.end(), [](const Scored& a, const Scored& b) { return a.q > b.q; });
        if (valid.size() < 3) fail(Errc::pattern_not_found, "insufficient finder candidates");
        std::size_t pool = std::min<std::size_t>(valid.size(), 12);
        Scored* tri[3] = {&valid[0], &valid[1], &valid[2]};
        double best_score = -1;
        for (std::size_t i = 0; i + 2 < pool; ++i)
            for (std::size_t j = i + 1; j + 1 < pool; ++j)
                for (std::size_t k = j + 1; k < pool; ++k) {
                    Scored* t[3] = {&valid[i], &valid[j], &valid[k]};
                    double mods[3];
                    for (int q = 0; q < 3; ++q) mods[q] = t[q]->cand.module;
                    double mmin = std::min({mods[0], mods[1], mods[2]});
                    double mmax = std::max({mods[0], mods[1], mods[2]});
                    if (mmax > 1.4 * mmin) continue;
                    // Corner vertex = smallest summed distance to the others.
                    auto dd = [&](int a2, int b2) {
                        return std::hypot(t[a2]->cand.center[0] - t[b2]->cand.center[0],
                                          t[a2]->cand.center[1] - t[b2]->cand.center[1]);
                    };
                    int corner = 0;
                    double bsum = 1e300;
                    for (int q = 0; q < 3; ++q) {
                        double s = dd(q, (q + 1) % 3) + dd(q, (q + 2) % 3);
                        if (s < bsum) {
                            bsum = s;
                            corner = q;
                        }
                    }
                    double la = dd(corner, (corner + 1) % 3), lb = dd(corner, (corner + 2) % 3);
                    if (la < 7 * mmin || lb < 7 * mmin) continue;
                    if (std::max(la, lb) > 1.3 * std::min(la, lb)) continue;
                    Vec2 ua{(t[(corner + 1) % 3]->cand.center[0] - t[corner]->cand.center[0]) / la,
                            (t[(corner + 1) % 3]->cand.center[1] - t[corner]->cand.center[1]) / la};
                    Vec2 ub{(t[(corner + 2) % 3]->cand.center[0] - t[corner]->cand.center[0]) / lb,
                            (t[(corner + 2) % 3]->cand.center[1] - t[corner]->cand.center[1]) / lb};
                    if (std::abs(ua[0] * ub[0] + ua[1] * ub[1]) > 0.35) continue;
                    double score = t[0]->q + t[1]->q + t[2]->q;
                    if (score > best_score) {
                        best_score = score;
                        tri[0] = t[0];
                        tri[1] = t[1];
                        tri[2] = t[2];
                    }
                }
        auto d = [&](int i, int j) {
            return std::hypot(tri[i]->cand.center[0] - tri[j]->cand.center[0],
                              tri[i]->cand.center[1] - tri[j]->cand.center[1]);
        };
        int corner = 0;
        double best = 1e300;
        for (int i = 0; i < 3; ++i) {
            double s = d(i, (i + 1) % 3) + d(i, (i + 2) % 3);
            if (s < best) {
                best = s;
                corner = i;
            }
        }
        int a = (corner + 1) % 3, b = (corner + 2) % 3;
        // Orient so the cross product matches the standard layout.
        Vec2 va{tri[a]->cand.center[0] - tri[corner]->cand.center[0],
                tri[a]->cand.center[1] - tri[corner]->cand.center[1]};
        Vec2 vb{tri[b]->cand.center[0] - tri[corner]->cand.center[0],
                tri[b]->cand.center[1] - tri[corner]->cand.center[1]};
        if (va[0] * vb[1] - va[1] * vb[0] < 0) std::swap(a, b);
        chosen[0] = tri[corner];
        chosen[1] = tri[a];
        chosen[2] = tri[b];
    }

    PatternSet ps;
    ps.n_layers = n_layers;
    ps.rough_white = white;
    double msum = 0;
    for (int f = 0; f < 3; ++f) {
        Pattern p;
        p.center = chosen[f]->cand.center;
        p.module_size = chosen[f]->cand.module;
        p.color = chosen[f]->color;
        ps.finders.push_back(p);
        msum += p.module_size;
    }
    ps.module_size = msum / 3.0;

    // Version from the finder spacing (centers are dim-7 modules apart).
    double span = 0.5 * (std::hypot(ps.finders[1].center[0] - ps.finders[0].center[0],
                                    ps.finders[1].center[1] - ps.finders[0].center[1]) +
                         std::hypot(ps.finders[2].center[0] - ps.finders[0].center[0],
                                    ps.finders[2].center[1] - ps.finders[0].center[1]));
    double dim_est = span / ps.module_size + 7.0;
    int version = int(std::lround((dim_est - 17.0) / 4.0));
    version = std::clamp(version, kMinVersion, kMaxVersion);
    ps.version = version;
    const int dim = dim_for_version(version);
    ps.finders[0].grid = {3.5, 3.5};
    ps.finders[1].grid = {dim - 3.5, 3.5};
    ps.finders[2].grid = {3.5, dim - 3.5};

    // Provisional affine frame from the three finders (fourth corner
    // synthesized by parallelogram) to predict alignment positions.
    Vec2 p0 = ps.finders[0].center, p1 = ps.finders[1].center, p2 = ps.finders[2].center;
    Vec2 p3{p1[0] + p2[0] - p0[0], p1[1] + p2[1] - p0[1]};
    auto predict = [&](double gx, double gy) -> Vec2 {
        double u = (gx - 3.5) / (dim - 7.0), v = (gy - 3.5) / (dim - 7.0);
        return {p0[0] * (1 - u) * (1 - v) + p1[0] * u * (1 - v) + p2[0] * (1 - u) * v + p3[0] * u * v,
                p0[1] * (1 - u) * (1 - v) + p1[1] * u * (1 - v) + p2[1] * (1 - u) * v + p3[1] * u * v};
    };

    Vec3 align_color = cb.map(alignment_core_tuple(n_layers));
    const double m = ps.module_size;
    for (auto [ar, ac] : role_map(version).alignment_centers) {
        Vec2 pred = predict(ac + 0.5, ar + 0.5);
        // Centroid of pixels classifying as the core color within a
        // +-2 module window around the prediction.
        double cx = 0, cy = 0;
        int count = 0;
        int r = int(std::ceil(2.0 * m));
        for (int dy = -r; dy <= r; ++dy)
            for (int dx = -r; dx <= r; ++dx) {
                double x = pred[0] + dx, y = pred[1] + dy;
                if (!img.contains(x, y)) continue;
                Vec3 p = img.at(int(x), int(y));
                Vec3 norm{p[0] / white[0], p[1] / white[1], p[2] / white[2]};
                if (cb.nearest(norm) == tuple_to_index(alignment_core_tuple(n_layers))) {
                    cx += x;
                    cy += y;
                    ++count;
                }
            }
        if (count < int(0.25 * m * m)) continue;
        Vec2 center{cx / count, cy / count};
        // Verify the dark outer ring of the pattern in the bit image.
        bool ring_ok = true;
        const double offs[4][2] = {{-2 * m, 0}, {2 * m, 0}, {0, -2 * m}, {0, 2 * m}};
        for (auto& o : offs) {
            int x = int(std::lround(center[0] + o[0])), y = int(std::lround(center[1] + o[1]));
            if (x < 0 || y < 0 || x >= bits.width || y >= bits.height || bits.at(x, y) != 1) ring_ok = false;
        }
        if (!ring_ok) continue;
        Pattern p;
        p.center = center;
        p.grid = {ac + 0.5, ar + 0.5};
        p.module_size = m;
        p.color = align_color;
        ps.alignments.push_back(p);
    }
    return ps;
}

}  // namespace hiq

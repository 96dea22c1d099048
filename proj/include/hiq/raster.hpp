#pragma once

// Rasterization and synthetic distortion: renders symbols to RGB images and
// applies the chromatic (cross-module mixing, cross-channel mixing,
// illumination) and geometric (warp, blur, noise) corruptions used to build
// labeled benchmark corpora.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "hiq/common.hpp"
#include "hiq/symbology.hpp"

namespace hiq {

struct RasterImage {
    int width = 0, height = 0;
    std::vector<Vec3> pixels;  // row-major, values in [0,1]

    // Ground truth carried by the synthesizer: homography mapping module-grid
    // coordinates (x=col, y=row, in modules, origin at symbol corner) to
    // pixel coordinates, plus the render geometry.
    bool has_gt = false;
    Mat3 gt_h = Mat3::identity();
    int gt_module_px = 0;
    int gt_quiet = 0;
    int gt_dim = 0;

    RasterImage() = default;
    RasterImage(int w, int h, Vec3 fill = {1, 1, 1}) : width(w), height(h), pixels(std::size_t(w) * h, fill) {}

    const Vec3& at(int x, int y) const { return pixels[std::size_t(y) * width + x]; }
    Vec3& at(int x, int y) { return pixels[std::size_t(y) * width + x]; }
    bool contains(double x, double y) const { return x >= 0 && y >= 0 && x <= width - 1 && y <= height - 1; }
};

inline Vec3 bilinear_sample(const RasterImage& img, double x, double y) {
    x = std::min(std::max(x, 0.0), double(img.width - 1));
    y = std::min(std::max(y, 0.0), double(img.height - 1));
    int x0 = int(x), y0 = int(y);
    int x1 = std::min(x0 + 1, img.width - 1), y1 = std::min(y0 + 1, img.height - 1);
    double fx = x - x0, fy = y - y0;
    Vec3 a = (1 - fx) * img.at(x0, y0) + fx * img.at(x1, y0);
    Vec3 b = (1 - fx) * img.at(x0, y1) + fx * img.at(x1, y1);
    return (1 - fy) * a + fy * b;
}

// ---------------------------------------------------------------------------
// PPM (P6) I/O

inline void save_ppm(const RasterImage& img, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) fail(Errc::io_error, "cannot write " + path);
    os << "P6\n" << img.width << " " << img.height << "\n255\n";
    for (const Vec3& p : img.pixels)
        for (int c = 0; c < 3; ++c) os.put(char(int(std::lround(clamp01(p[c]) * 255.0))));
}

inline RasterImage load_ppm(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) fail(Errc::io_error, "cannot read " + path);
    std::string magic;
    int w = 0, h = 0, maxval = 0;
    is >> magic;
    if (magic != "P6") fail(Errc::io_error, path + ": not a P6 PPM");
    auto next_int = [&](int& v) {
        // Skip whitespace and '#' comments.
        int c;
        while ((c = is.get()) != EOF && (std::isspace(c) || c == '#'))
            if (c == '#') while ((c = is.get()) != EOF && c != '\n') {}
        is.unget();
        is >> v;
    };
    next_int(w);
    next_int(h);
    next_int(maxval);
    is.get();  // single whitespace before raster
    if (w <= 0 || h <= 0 || maxval != 255) fail(Errc::io_error, path + ": unsupported PPM header");
    RasterImage img(w, h);
    std::vector<char> buf(std::size_t(w) * h * 3);
    is.read(buf.data(), std::streamsize(buf.size()));
    if (!is) fail(Errc::io_error, path + ": truncated PPM");
    for (std::size_t i = 0; i < img.pixels.size(); ++i)
        img.pixels[i] = {std::uint8_t(buf[3 * i]) / 255.0, std::uint8_t(buf[3 * i + 1]) / 255.0,
                         std::uint8_t(buf[3 * i + 2]) / 255.0};
    return img;
}

// ---------------------------------------------------------------------------
// Rendering

inline std::vector<Vec3> module_grid(const HiqSymbol& symbol) {
    const int dim = symbol.dim();
    std::vector<Vec3> grid(std::size_t(dim) * dim);
    for (int r = 0; r < dim; ++r)
        for (int c = 0; c < dim; ++c) grid[std::size_t(r) * dim + c] = symbol.color_at(r, c);
    return grid;
}

inline RasterImage render_grid(const std::vector<Vec3>& grid, int dim, int module_px, int quiet_modules) {
    if (module_px < 2) fail(Errc::invalid_parameter, "module_px must be >= 2");
    const int side = (dim + 2 * quiet_modules) * module_px;
    RasterImage img(side, side, {1, 1, 1});
    for (int r = 0; r < dim; ++r)
        for (int c = 0; c < dim; ++c) {
            const Vec3& col = grid[std::size_t(r) * dim + c];
            int y0 = (r + quiet_modules) * module_px, x0 = (c + quiet_modules) * module_px;
            for (int y = y0; y < y0 + module_px; ++y)
                for (int x = x0; x < x0 + module_px; ++x) img.at(x, y) = col;
        }
    img.has_gt = true;
    img.gt_module_px = module_px;
    img.gt_quiet = quiet_modules;
    img.gt_dim = dim;
    img.gt_h = Mat3::identity();
    img.gt_h(0, 0) = img.gt_h(1, 1) = module_px;
    img.gt_h(0, 2) = img.gt_h(1, 2) = quiet_modules * module_px;
    return img;
}

inline RasterImage render(const HiqSymbol& symbol, int module_px, int quiet_modules) {
    return render_grid(module_grid(symbol), symbol.dim(), module_px, quiet_modules);
}

// ---------------------------------------------------------------------------
// Distortions

using CmiWeights = std::array<double, 5>;  // center, top, bottom, left, right

inline void check_cmi_weights(const CmiWeights& alpha) {
    double sum = 0;
    for (double a : alpha) {
        if (a < 0) fail(Errc::invalid_parameter, "CMI weights must be nonnegative");
        sum += a;
    }
    if (std::abs(sum - 1.0) > 1e-9) fail(Errc::invalid_parameter, "CMI weights must sum to 1");
}

// Convex mix of each module's color with its four neighbours on the module
// grid; missing neighbours fall back to the module's own color.
inline std::vector<Vec3> mix_grid(const std::vector<Vec3>& grid, int dim, const CmiWeights& alpha) {
    check_cmi_weights(alpha);
    std::vector<Vec3> out(grid.size());
    auto pick = [&](int r, int c, int r0, int c0) -> const Vec3& {
        if (r < 0 || r >= dim || c < 0 || c >= dim) return grid[std::size_t(r0) * dim + c0];
        return grid[std::size_t(r) * dim + c];
    };
    for (int r = 0; r < dim; ++r)
        for (int c = 0; c < dim; ++c) {
            Vec3 v = alpha[0] * grid[std::size_t(r) * dim + c];
            v += alpha[1] * pick(r - 1, c, r, c);
            v += alpha[2] * pick(r + 1, c, r, c);
            v += alpha[3] * pick(r, c - 1, r, c);
            v += alpha[4] * pick(r, c + 1, r, c);
            out[std::size_t(r) * dim + c] = v;
        }
    return out;
}

// Re-renders with neighbour-mixed module colors at the image's own geometry.
inline RasterImage apply_cmi(const RasterImage& img, const HiqSymbol& symbol, const CmiWeights& alpha) {
    if (!img.has_gt) fail(Errc::invalid_parameter, "apply_cmi needs a synthesizer-produced image");
    auto mixed = mix_grid(module_grid(symbol), symbol.dim(), alpha);
    RasterImage out = render_grid(mixed, symbol.dim(), img.gt_module_px, img.gt_quiet);
    out.gt_h = img.gt_h;
    return out;
}

inline RasterImage apply_cci(const RasterImage& img, const Mat3& m, const Vec3& offset) {
    if (std::abs(m.det()) < 1e-12) fail(Errc::invalid_parameter, "CCI matrix must be invertible");
    RasterImage out = img;
    for (Vec3& p : out.pixels) {
        Vec3 q = m * p + offset;
        p = {clamp01(q[0]), clamp01(q[1]), clamp01(q[2])};
    }
    return out;
}

// gains per channel; gradient applied over normalized centered coordinates.
inline RasterImage apply_illumination(const RasterImage& img, const Vec3& gains, const Vec2& gradient) {
    for (double g : gains)
        if (g <= 0) fail(Errc::invalid_parameter, "illumination gains must be positive");
    RasterImage out = img;
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            double s = 1.0 + gradient[0] * (double(x) / img.width - 0.5) + gradient[1] * (double(y) / img.height - 0.5);
            if (s < 0) s = 0;
            Vec3& p = out.at(x, y);
            for (int c = 0; c < 3; ++c) p[c] = clamp01(gains[c] * s * p[c]);
        }
    return out;
}

// H maps source pixels to destination pixels; destination is filled by
// inverse-mapped bilinear lookup, out-of-source areas become white.
inline RasterImage apply_warp(const RasterImage& img, const Mat3& h) {
    if (std::abs(h.det()) < 1e-12) fail(Errc::invalid_parameter, "warp homography must be invertible");
    Mat3 hinv = h.inverse();
    RasterImage out(img.width, img.height, {1, 1, 1});
    for (int y = 0; y < out.height; ++y)
        for (int x = 0; x < out.width; ++x) {
            Vec2 s = hinv.project(x, y);
            if (img.contains(s[0], s[1])) out.at(x, y) = bilinear_sample(img, s[0], s[1]);
        }
    out.has_gt = img.has_gt;
    out.gt_module_px = img.gt_module_px;
    out.gt_quiet = img.gt_quiet;
    out.gt_dim = img.gt_dim;
    out.gt_h = h * img.gt_h;
    return out;
}

inline RasterImage add_noise(const RasterImage& img, double sigma, SplitMix64& rng) {
    if (sigma < 0) fail(Errc::invalid_parameter, "noise sigma must be >= 0");
    RasterImage out = img;
    if (sigma == 0) return out;
    for (Vec3& p : out.pixels)
        for (int c = 0; c < 3; ++c) p[c] = clamp01(p[c] + sigma * rng.next_gaussian());
    return out;
}

inline RasterImage add_blur(const RasterImage& img, double sigma) {
    if (sigma < 0) fail(Errc::invalid_parameter, "blur sigma must be >= 0");
    if (sigma == 0) return img;
    int radius = std::max(1, int(std::ceil(3 * sigma)));
    std::vector<double> k(std::size_t(2 * radius + 1));
    double sum = 0;
    for (int i = -radius; i <= radius; ++i) sum += k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    for (double& v : k) v /= sum;

    RasterImage tmp = img, out = img;
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            Vec3 acc{};
            for (int i = -radius; i <= radius; ++i)
                acc += k[i + radius] * img.at(std::clamp(x + i, 0, img.width - 1), y);
            tmp.at(x, y) = acc;
        }
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            Vec3 acc{};
            for (int i = -radius; i <= radius; ++i)
                acc += k[i + radius] * tmp.at(x, std::clamp(y + i, 0, img.height - 1));
            out.at(x, y) = acc;
        }
    return out;
}

// ---------------------------------------------------------------------------
// Distortion profiles

struct DistortionProfile {
    CmiWeights alpha{1, 0, 0, 0, 0};
    Mat3 cci = Mat3::identity();
    Vec3 cci_offset{0, 0, 0};
    Vec3 gains{1, 1, 1};
    Vec2 gradient{0, 0};
    Mat3 warp = Mat3::identity();
    double noise_sigma = 0;
    double blur_sigma = 0;
};

inline Vec3 illumination_gains(const std::string& preset) {
    if (preset == "neutral") return {1, 1, 1};
    if (preset == "incandescent") return {1.0, 0.85, 0.6};
    if (preset == "fluorescent") return {0.85, 1.0, 0.92};
    if (preset == "outdoor") return {0.95, 0.97, 1.0};
    if (preset == "shadowed") return {0.55, 0.55, 0.6};
    fail(Errc::invalid_parameter, "unknown illumination preset '" + preset + "'");
}

inline RasterImage apply_profile(const HiqSymbol& symbol, int module_px, int quiet, const DistortionProfile& p,
                                 SplitMix64& rng) {
    auto mixed = mix_grid(module_grid(symbol), symbol.dim(), p.alpha);
    RasterImage img = render_grid(mixed, symbol.dim(), module_px, quiet);
    img = apply_cci(img, p.cci, p.cci_offset);
    img = apply_illumination(img, p.gains, p.gradient);
    img = apply_warp(img, p.warp);
    img = add_blur(img, p.blur_sigma);
    img = add_noise(img, p.noise_sigma, rng);
    return img;
}

// ---------------------------------------------------------------------------
// Corpus synthesis

struct CorpusSpec {
    int version = 5;
    int n_layers = 3;
    std::vector<EcLevel> ec_levels;  // defaults to all-M
    int module_px = 4;
    int quiet = 4;
    int count = 16;
    // Distortion ranges; each item draws uniformly from them.
    double alpha_center_min = 0.6, alpha_center_max = 1.0;
    double cci_strength = 0.0;     // off-diagonal leakage scale
    std::vector<std::string> illumination = {"neutral"};
    double gradient_max = 0.0;
    double warp_jitter_px = 0.0;   // corner displacement
    double noise_sigma = 0.0;
    double blur_sigma = 0.0;
    std::uint32_t symbol_seed = 1;  // spatial randomization seed id
};

struct CorpusItem {
    HiqSymbol symbol;
    RasterImage image;
    DistortionProfile profile;
    std::vector<std::uint8_t> payload;
};

inline DistortionProfile draw_profile(const CorpusSpec& spec, SplitMix64& rng) {
    DistortionProfile p;
    double ac = spec.alpha_center_min + (spec.alpha_center_max - spec.alpha_center_min) * rng.next_double();
    double rest = (1.0 - ac) / 4.0;
    p.alpha = {ac, rest, rest, rest, rest};
    if (spec.cci_strength > 0) {
        for (int r = 0; r < 3; ++r) {
            double leak[3];
            double total = 0;
            for (int c = 0; c < 3; ++c) total += leak[c] = (r == c ? 0.0 : spec.cci_strength * rng.next_double());
            for (int c = 0; c < 3; ++c) p.cci(r, c) = r == c ? 1.0 - total : leak[c];
        }
    }
    const std::string& preset = spec.illumination[rng.next_below(spec.illumination.size())];
    p.gains = illumination_gains(preset);
    p.gradient = {spec.gradient_max * (2 * rng.next_double() - 1), spec.gradient_max * (2 * rng.next_double() - 1)};
    if (spec.warp_jitter_px > 0) {
        // Random homography moving each image corner by up to the jitter.
        int dim = dim_for_version(spec.version);
        double side = double((dim + 2 * spec.quiet) * spec.module_px);
        Vec2 src[4] = {{0, 0}, {side, 0}, {side, side}, {0, side}};
        Vec2 dst[4];
        for (int i = 0; i < 4; ++i)
            dst[i] = {src[i][0] + spec.warp_jitter_px * (2 * rng.next_double() - 1),
                      src[i][1] + spec.warp_jitter_px * (2 * rng.next_double() - 1)};
        // 8x8 DLT with h9 = 1.
        std::vector<double> a(64, 0.0), b(8, 0.0);
        for (int i = 0; i < 4; ++i) {
            double x = src[i][0], y = src[i][1], u = dst[i][0], v = dst[i][1];
            double* r0 = &a[std::size_t(2 * i) * 8];
            double* r1 = &a[std::size_t(2 * i + 1) * 8];
            r0[0] = x; r0[1] = y; r0[2] = 1; r0[6] = -u * x; r0[7] = -u * y;
            r1[3] = x; r1[4] = y; r1[5] = 1; r1[6] = -v * x; r1[7] = -v * y;
            b[2 * i] = u;
            b[2 * i + 1] = v;
        }
        if (solve_dense(a, b, 8)) {
            for (int i = 0; i < 8; ++i) p.warp.m[i] = b[i];
            p.warp.m[8] = 1.0;
        }
    }
    p.noise_sigma = spec.noise_sigma;
    p.blur_sigma = spec.blur_sigma;
    return p;
}

inline std::vector<CorpusItem> synth_corpus(const CorpusSpec& spec, std::uint64_t seed) {
    std::vector<EcLevel> ec = spec.ec_levels;
    if (ec.empty()) ec.assign(std::size_t(spec.n_layers), EcLevel::M);
    SplitMix64 root(seed);
    std::vector<CorpusItem> items;
    items.reserve(std::size_t(spec.count));
    for (int i = 0; i < spec.count; ++i) {
        SplitMix64 rng = root.derive(std::uint64_t(i) + 1);
        CorpusItem item;
        int cap = symbol_payload_capacity(spec.version, ec);
        item.payload.resize(std::size_t(cap));
        for (auto& b : item.payload) b = std::uint8_t(rng.next() & 0xff);
        item.symbol = encode_symbol(item.payload, spec.n_layers, ec, spec.version, spec.symbol_seed);
        item.profile = draw_profile(spec, rng);
        item.image = apply_profile(item.symbol, spec.module_px, spec.quiet, item.profile, rng);
        items.push_back(std::move(item));
    }
    return items;
}

// Per-module class labels (codebook indices) of an item, row-major.
inline std::vector<int> item_labels(const CorpusItem& item) {
    const int dim = item.symbol.dim();
    std::vector<int> labels(std::size_t(dim) * dim);
    for (int r = 0; r < dim; ++r)
        for (int c = 0; c < dim; ++c) labels[std::size_t(r) * dim + c] = tuple_to_index(item.symbol.tuple_at(r, c));
    return labels;
}

}  // namespace hiq

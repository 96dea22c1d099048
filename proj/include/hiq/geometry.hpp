#pragma once

// Geometric transformation estimation: direct linear transform for the exact
// 4-point case and a weighted over-determined fit over all detected patterns,
// solved by the right singular vector of the smallest singular value of the
// stacked 2Nx9 system. Also samples the per-module 5x3 feature blocks.

#include <array>
#include <cmath>
#include <vector>

#include "hiq/common.hpp"
#include "hiq/raster.hpp"

namespace hiq {

struct Correspondence {
    Vec2 image;   // pixel coordinates
    Vec2 grid;    // module-grid coordinates
    double weight = 1.0;
};

constexpr double kFinderWeight = 0.6;
constexpr double kAlignmentWeight = 0.4;

struct Homography {
    Mat3 h = Mat3::identity();

    Vec2 project(double gx, double gy) const { return h.project(gx, gy); }
};

namespace detail {

// Two DLT rows of one correspondence, scaled by its weight.
inline void dlt_rows(const Correspondence& c, double* r0, double* r1) {
    double x = c.grid[0], y = c.grid[1];  // grid -> image convention
    double u = c.image[0], v = c.image[1];
    double w = c.weight;
    r0[0] = w * x; r0[1] = w * y; r0[2] = w; r0[3] = 0; r0[4] = 0; r0[5] = 0;
    r0[6] = -w * u * x; r0[7] = -w * u * y; r0[8] = -w * u;
    r1[0] = 0; r1[1] = 0; r1[2] = 0; r1[3] = w * x; r1[4] = w * y; r1[5] = w;
    r1[6] = -w * v * x; r1[7] = -w * v * y; r1[8] = -w * v;
}

// Fixes the overall sign so serialized homographies are reproducible.
inline void normalize_sign(Mat3& h) {
    double s = 0;
    if (h.m[8] != 0)
        s = h.m[8];
    else if (h.m[7] != 0)
        s = h.m[7];
    else
        for (int i = 8; i >= 0 && s == 0; --i) s = h.m[i];
    if (s < 0)
        for (double& v : h.m) v = -v;
}

}  // namespace detail

// One-sided Jacobi SVD of an m x 9 matrix (row-major). Returns the right
// singular vector of the smallest singular value, unit norm.
inline std::array<double, 9> smallest_right_singular_vector(std::vector<double> a, int m,
                                                            double* smallest_sigma = nullptr) {
    const int n = 9;
    std::array<double, 81> v{};
    for (int i = 0; i < n; ++i) v[std::size_t(i) * n + i] = 1.0;

    auto col_dot = [&](int p, int q) {
        double s = 0;
        for (int r = 0; r < m; ++r) s += a[std::size_t(r) * n + p] * a[std::size_t(r) * n + q];
        return s;
    };
    for (int sweep = 0; sweep < 60; ++sweep) {
        double off = 0;
        for (int p = 0; p < n - 1; ++p)
            for (int q = p + 1; q < n; ++q) {
                double app = col_dot(p, p), aqq = col_dot(q, q), apq = col_dot(p, q);
                if (std::abs(apq) < 1e-15 * std::sqrt(app * aqq) + 1e-300) continue;
                off += std::abs(apq);
                double tau = (aqq - app) / (2 * apq);
                double t = (tau >= 0 ? 1.0 : -1.0) / (std::abs(tau) + std::sqrt(1 + tau * tau));
                double c = 1.0 / std::sqrt(1 + t * t), s = t * c;
                for (int r = 0; r < m; ++r) {
                    double& xp = a[std::size_t(r) * n + p];
                    double& xq = a[std::size_t(r) * n + q];
                    double tp = c * xp - s * xq;
                    xq = s * xp + c * xq;
                    xp = tp;
                }
                for (int r = 0; r < n; ++r) {
                    double& xp = v[std::size_t(r) * n + p];
                    double& xq = v[std::size_t(r) * n + q];
                    double tp = c * xp - s * xq;
                    xq = s * xp + c * xq;
                    xp = tp;
                }
            }
        if (off < 1e-28) break;
    }
    int best = 0;
    double best_sigma = -1;
    double sigmas[9];
    for (int j = 0; j < n; ++j) {
        sigmas[j] = std::sqrt(std::max(0.0, col_dot(j, j)));
        if (best_sigma < 0 || sigmas[j] < best_sigma) {
            best_sigma = sigmas[j];
            best = j;
        }
    }
    if (smallest_sigma) *smallest_sigma = best_sigma;
    std::array<double, 9> out;
    double nrm = 0;
    for (int r = 0; r < n; ++r) nrm += v[std::size_t(r) * n + best] * v[std::size_t(r) * n + best];
    nrm = std::sqrt(nrm);
    for (int r = 0; r < n; ++r) out[std::size_t(r)] = v[std::size_t(r) * n + best] / nrm;
    return out;
}

// Exact homography from four correspondences (weights ignored).
inline Homography homography_4pt(const std::vector<Correspondence>& corrs) {
    if (corrs.size() != 4) fail(Errc::invalid_parameter, "homography_4pt needs exactly 4 correspondences");
    // Solve the 8x8 system with h9 = 1; fall back to the SVD path when the
    // plane at infinity makes h9 = 0 (never the case for symbol views).
    std::vector<double> a(64, 0.0), b(8, 0.0);
    for (int i = 0; i < 4; ++i) {
        Correspondence c = corrs[std::size_t(i)];
        c.weight = 1.0;
        double row0[9], row1[9];
        detail::dlt_rows(c, row0, row1);
        for (int j = 0; j < 8; ++j) {
            a[std::size_t(2 * i) * 8 + j] = row0[j];
            a[std::size_t(2 * i + 1) * 8 + j] = row1[j];
        }
        b[2 * i] = -row0[8];
        b[2 * i + 1] = -row1[8];
    }
    if (!solve_dense(a, b, 8)) fail(Errc::degenerate_configuration, "collinear or coincident points");
    Homography h;
    for (int i = 0; i < 8; ++i) h.h.m[i] = b[i];
    h.h.m[8] = 1.0;
    // Normalize to unit Frobenius norm like the over-determined path.
    double nrm = 0;
    for (double vv : h.h.m) nrm += vv * vv;
    nrm = std::sqrt(nrm);
    for (double& vv : h.h.m) vv /= nrm;
    detail::normalize_sign(h.h);
    if (std::abs(h.h.det()) < 1e-12) fail(Errc::degenerate_configuration, "degenerate homography");
    return h;
}

// Weighted least-squares homography over N >= 4 correspondences: minimizes
// sum_i w_i^2 |A_i h|^2 subject to |h| = 1 via the smallest singular value of
// the weighted stacked matrix.
inline Homography estimate_rgt(const std::vector<Correspondence>& corrs, double* residual = nullptr) {
    if (corrs.size() < 4) fail(Errc::invalid_parameter, "estimate_rgt needs at least 4 correspondences");
    // Hartley normalization: similarity transforms bring both point sets to
    // centroid zero and mean radius sqrt(2), which conditions the algebraic
    // error so it tracks the geometric one.
    auto similarity = [&](bool image_side) {
        Vec2 c{0, 0};
        for (const auto& cr : corrs) {
            const Vec2& p = image_side ? cr.image : cr.grid;
            c[0] += p[0];
            c[1] += p[1];
        }
        c[0] /= double(corrs.size());
        c[1] /= double(corrs.size());
        double mean_r = 0;
        for (const auto& cr : corrs) {
            const Vec2& p = image_side ? cr.image : cr.grid;
            mean_r += std::hypot(p[0] - c[0], p[1] - c[1]);
        }
        mean_r /= double(corrs.size());
        double s = mean_r > 1e-12 ? std::sqrt(2.0) / mean_r : 1.0;
        Mat3 t = Mat3::identity();
        t.m = {s, 0, -s * c[0], 0, s, -s * c[1], 0, 0, 1};
        return t;
    };
    Mat3 tg = similarity(false), ti = similarity(true);
    const int m = int(corrs.size()) * 2;
    std::vector<double> a(std::size_t(m) * 9);
    for (std::size_t i = 0; i < corrs.size(); ++i) {
        if (corrs[i].weight <= 0) fail(Errc::invalid_parameter, "correspondence weights must be positive");
        Correspondence c = corrs[i];
        c.grid = tg.project(c.grid[0], c.grid[1]);
        c.image = ti.project(c.image[0], c.image[1]);
        detail::dlt_rows(c, &a[(2 * i) * 9], &a[(2 * i + 1) * 9]);
    }
    double sigma = 0;
    auto h9 = smallest_right_singular_vector(std::move(a), m, &sigma);
    if (residual) *residual = sigma;
    Homography h;
    for (int i = 0; i < 9; ++i) h.h.m[i] = h9[std::size_t(i)];
    h.h = ti.inverse() * h.h * tg;
    double nrm = 0;
    for (double vv : h.h.m) nrm += vv * vv;
    nrm = std::sqrt(nrm);
    for (double& vv : h.h.m) vv /= nrm;
    detail::normalize_sign(h.h);
    if (std::abs(h.h.det()) < 1e-12) fail(Errc::degenerate_configuration, "rank-deficient correspondence set");
    return h;
}

// ---------------------------------------------------------------------------
// Module sampling

struct FeatureBlock {
    // Rows: center, top, bottom, left, right; each a white-normalized RGB.
    std::array<Vec3, 5> rows{};
    int row = 0, col = 0;
};

// Samples one pixel per module center through H (grid -> image), normalizes
// by the white estimate and assembles the 5-row neighbourhood blocks.
// Out-of-grid neighbours replicate the center row.
inline std::vector<FeatureBlock> sample_modules(const RasterImage& img, const Homography& h, int dim,
                                                const Vec3& white) {
    for (int c = 0; c < 3; ++c)
        if (white[c] <= 1e-6) fail(Errc::invalid_white, "white estimate has a non-positive channel");
    // Raw normalized samples of every module center first.
    std::vector<Vec3> centers(std::size_t(dim) * dim);
    for (int r = 0; r < dim; ++r)
        for (int c = 0; c < dim; ++c) {
            Vec2 p = h.project(c + 0.5, r + 0.5);
            if (!img.contains(p[0], p[1]))
                fail(Errc::frame_rejected, "module projects outside the image");
            Vec3 raw = bilinear_sample(img, p[0], p[1]);
            Vec3 v;
            for (int ch = 0; ch < 3; ++ch) v[ch] = std::min(raw[ch] / white[ch], 2.0);
            centers[std::size_t(r) * dim + c] = v;
        }
    std::vector<FeatureBlock> blocks(centers.size());
    auto pick = [&](int r, int c, const Vec3& self) -> const Vec3& {
        if (r < 0 || r >= dim || c < 0 || c >= dim) return self;
        return centers[std::size_t(r) * dim + c];
    };
    for (int r = 0; r < dim; ++r)
        for (int c = 0; c < dim; ++c) {
            FeatureBlock& b = blocks[std::size_t(r) * dim + c];
            b.row = r;
            b.col = c;
            const Vec3& self = centers[std::size_t(r) * dim + c];
            b.rows[0] = self;
            b.rows[1] = pick(r - 1, c, self);
            b.rows[2] = pick(r + 1, c, self);
            b.rows[3] = pick(r, c - 1, self);
            b.rows[4] = pick(r, c + 1, self);
        }
    return blocks;
}

// X^T theta: the theta-weighted combination of the five observation rows.
inline Vec3 mix_rows(const std::array<Vec3, 5>& rows, const std::array<double, 5>& theta) {
    Vec3 v{};
    for (int r = 0; r < 5; ++r) v += theta[std::size_t(r)] * rows[std::size_t(r)];
    return v;
}

}  // namespace hiq

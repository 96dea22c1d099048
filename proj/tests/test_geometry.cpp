#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "hiq/geometry.hpp"
#include "helpers.hpp"

using namespace hiq;

namespace {

// Relative distance between two homographies after scale/sign alignment.
double h_distance(const Mat3& a, const Mat3& b) {
    double na = 0, nb = 0, d = 0;
    for (int i = 0; i < 9; ++i) {
        na += a.m[i] * a.m[i];
        nb += b.m[i] * b.m[i];
    }
    na = std::sqrt(na);
    nb = std::sqrt(nb);
    double sign = 0;
    for (int i = 0; i < 9; ++i) sign += (a.m[i] / na) * (b.m[i] / nb);
    double s = sign >= 0 ? 1.0 : -1.0;
    for (int i = 0; i < 9; ++i) {
        double e = a.m[i] / na - s * b.m[i] / nb;
        d += e * e;
    }
    return std::sqrt(d);
}

Mat3 random_projective(SplitMix64& rng) {
    Mat3 h = Mat3::identity();
    h(0, 0) = 3.0 + rng.next_double();
    h(1, 1) = 3.0 + rng.next_double();
    h(0, 1) = 0.2 * (rng.next_double() - 0.5);
    h(1, 0) = 0.2 * (rng.next_double() - 0.5);
    h(0, 2) = 20 * rng.next_double();
    h(1, 2) = 20 * rng.next_double();
    h(2, 0) = 2e-3 * (rng.next_double() - 0.5);
    h(2, 1) = 2e-3 * (rng.next_double() - 0.5);
    return h;
}

}  // namespace

TEST_CASE("four point homography", "[geometry]") {
    // Unit square onto itself: the identity up to scale.
    std::vector<Correspondence> id = {
        {{0, 0}, {0, 0}, 1}, {{1, 0}, {1, 0}, 1}, {{1, 1}, {1, 1}, 1}, {{0, 1}, {0, 1}, 1}};
    Homography h = homography_4pt(id);
    for (double gx : {0.0, 0.3, 0.7, 1.0})
        for (double gy : {0.0, 0.5, 1.0}) {
            Vec2 p = h.project(gx, gy);
            REQUIRE(p[0] == Catch::Approx(gx).margin(1e-12));
            REQUIRE(p[1] == Catch::Approx(gy).margin(1e-12));
        }

    // Recovery of a known projective map from its corner images.
    SplitMix64 rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        Mat3 gt = random_projective(rng);
        std::vector<Correspondence> corrs;
        Vec2 grid[4] = {{0, 0}, {10, 0}, {10, 10}, {0, 10}};
        for (auto& g : grid) corrs.push_back({gt.project(g[0], g[1]), g, 1.0});
        Homography est = homography_4pt(corrs);
        REQUIRE(h_distance(est.h, gt) < 1e-9);
    }

    // Collinear grid points are degenerate.
    std::vector<Correspondence> bad = {
        {{0, 0}, {0, 0}, 1}, {{1, 1}, {1, 1}, 1}, {{2, 2}, {2, 2}, 1}, {{3, 0}, {3, 0}, 1}};
    REQUIRE_THROWS_AS(homography_4pt(bad), Error);
    REQUIRE_THROWS_AS(homography_4pt({id[0], id[1], id[2]}), Error);
}

TEST_CASE("weighted redundant fit", "[geometry]") {
    SplitMix64 rng(23);

    // With exactly 4 points the weighted fit agrees with the direct solve.
    for (int trial = 0; trial < 10; ++trial) {
        Mat3 gt = random_projective(rng);
        std::vector<Correspondence> corrs;
        Vec2 grid[4] = {{0, 0}, {17, 0}, {17, 17}, {0, 17}};
        for (auto& g : grid) corrs.push_back({gt.project(g[0], g[1]), g, 0.6});
        Homography a = homography_4pt(corrs);
        Homography b = estimate_rgt(corrs);
        REQUIRE(h_distance(a.h, b.h) < 1e-8);
    }

    // Noiseless over-determined recovery with mixed weights.
    for (int trial = 0; trial < 10; ++trial) {
        Mat3 gt = random_projective(rng);
        std::vector<Correspondence> corrs;
        for (int i = 0; i < 10; ++i) {
            Vec2 g{rng.next_double() * 30, rng.next_double() * 30};
            corrs.push_back({gt.project(g[0], g[1]), g, i < 3 ? 0.6 : 0.4});
        }
        double residual = 1;
        Homography est = estimate_rgt(corrs, &residual);
        REQUIRE(h_distance(est.h, gt) < 1e-7);
        REQUIRE(residual < 1e-7);
        // Reprojection of every correspondence is exact.
        for (const auto& c : corrs) {
            Vec2 p = est.project(c.grid[0], c.grid[1]);
            REQUIRE(std::hypot(p[0] - c.image[0], p[1] - c.image[1]) < 1e-6);
        }
    }

    // Scaling all weights by a common factor changes nothing.
    Mat3 gt = random_projective(rng);
    std::vector<Correspondence> corrs, scaled;
    for (int i = 0; i < 8; ++i) {
        Vec2 g{rng.next_double() * 20, rng.next_double() * 20};
        Vec2 im = gt.project(g[0], g[1]);
        im[0] += 0.3 * rng.next_gaussian();
        im[1] += 0.3 * rng.next_gaussian();
        corrs.push_back({im, g, i < 3 ? 0.6 : 0.2});
        scaled.push_back({im, g, 5.0 * (i < 3 ? 0.6 : 0.2)});
    }
    REQUIRE(h_distance(estimate_rgt(corrs).h, estimate_rgt(scaled).h) < 1e-9);

    // Down-weighting a corrupted correspondence moves the fit toward truth.
    std::vector<Correspondence> clean;
    for (int i = 0; i < 8; ++i) {
        Vec2 g{5.0 * (i % 4), 7.0 * (i / 4)};
        clean.push_back({gt.project(g[0], g[1]), g, 0.5});
    }
    auto corrupted = clean;
    corrupted[5].image[0] += 8.0;
    auto low = corrupted;
    low[5].weight = 0.05;
    REQUIRE(h_distance(estimate_rgt(low).h, gt) < h_distance(estimate_rgt(corrupted).h, gt));

    REQUIRE_THROWS_AS(estimate_rgt({clean[0], clean[1], {clean[2].image, clean[2].grid, -1.0}, clean[3]}), Error);
}

TEST_CASE("weighted fit beats unweighted under noise", "[geometry]") {
    // Directional check on the redundancy benefit: with noisy anchor points,
    // the 8-point weighted fit usually localizes better than a 4-corner solve.
    SplitMix64 rng(31);
    int wins = 0;
    const int trials = 60;
    for (int t = 0; t < trials; ++t) {
        Mat3 gt = random_projective(rng);
        std::vector<Vec2> grid = {{3.5, 3.5}, {30.5, 3.5}, {3.5, 30.5}, {30.5, 30.5},
                                  {10, 10}, {24, 10}, {10, 24}, {24, 24}};
        std::vector<Correspondence> noisy;
        for (std::size_t i = 0; i < grid.size(); ++i) {
            Vec2 im = gt.project(grid[i][0], grid[i][1]);
            im[0] += 0.8 * rng.next_gaussian();
            im[1] += 0.8 * rng.next_gaussian();
            noisy.push_back({im, grid[i], i < 4 ? kFinderWeight : kAlignmentWeight});
        }
        Homography all = estimate_rgt(noisy);
        Homography four = homography_4pt({noisy[0], noisy[1], noisy[3], noisy[2]});
        double err_all = 0, err_four = 0;
        for (double gx : {5.0, 17.0, 29.0})
            for (double gy : {5.0, 17.0, 29.0}) {
                Vec2 truth = gt.project(gx, gy);
                Vec2 pa = all.project(gx, gy);
                Vec2 pf = four.project(gx, gy);
                err_all += std::hypot(pa[0] - truth[0], pa[1] - truth[1]);
                err_four += std::hypot(pf[0] - truth[0], pf[1] - truth[1]);
            }
        if (err_all < err_four) ++wins;
    }
    REQUIRE(wins >= trials * 7 / 10);
}

TEST_CASE("module sampling", "[geometry]") {
    std::vector<EcLevel> ec(3, EcLevel::M);
    std::vector<std::uint8_t> payload(std::size_t(symbol_payload_capacity(2, ec)), 0xA7);
    HiqSymbol sym = encode_symbol(payload, 3, ec, 2, 0);
    RasterImage img = render(sym, 4, 4);
    Homography h{img.gt_h};

    auto blocks = sample_modules(img, h, sym.dim(), {1, 1, 1});
    REQUIRE(int(blocks.size()) == sym.dim() * sym.dim());
    const int dim = sym.dim();
    for (int r = 0; r < dim; ++r)
        for (int c = 0; c < dim; ++c) {
            const FeatureBlock& b = blocks[std::size_t(r) * dim + c];
            REQUIRE(b.row == r);
            REQUIRE(b.col == c);
            Vec3 expect = sym.color_at(r, c);
            for (int ch = 0; ch < 3; ++ch) REQUIRE(b.rows[0][ch] == Catch::Approx(expect[ch]).margin(1e-9));
        }

    // Border modules replicate the center row for off-grid neighbours.
    const FeatureBlock& tl = blocks[0];
    REQUIRE(tl.rows[1] == tl.rows[0]);  // top
    REQUIRE(tl.rows[3] == tl.rows[0]);  // left
    const FeatureBlock& interior = blocks[std::size_t(dim) + 1];
    Vec3 above = sym.color_at(0, 1);
    for (int ch = 0; ch < 3; ++ch) REQUIRE(interior.rows[1][ch] == Catch::Approx(above[ch]).margin(1e-9));

    // White normalization divides per channel (and clips at 2).
    auto dimmed = sample_modules(img, h, sym.dim(), {0.5, 1.0, 1.0});
    REQUIRE(dimmed[0].rows[0][0] == Catch::Approx(std::min(2.0, 2.0 * blocks[0].rows[0][0])).margin(1e-9));

    // A projection landing outside the frame is rejected.
    Homography off{img.gt_h};
    off.h(0, 2) += 10000;
    REQUIRE_THROWS_AS(sample_modules(img, off, sym.dim(), {1, 1, 1}), Error);
    REQUIRE_THROWS_AS(sample_modules(img, h, sym.dim(), {0, 1, 1}), Error);

    // mix_rows with the canonical unit vector returns the center row.
    Vec3 mixed = mix_rows(blocks[5].rows, {1, 0, 0, 0, 0});
    REQUIRE(mixed == blocks[5].rows[0]);
    Vec3 avg = mix_rows(blocks[5].rows, {0.2, 0.2, 0.2, 0.2, 0.2});
    for (int ch = 0; ch < 3; ++ch) {
        double expect = 0;
        for (int rrow = 0; rrow < 5; ++rrow) expect += 0.2 * blocks[5].rows[std::size_t(rrow)][ch];
        REQUIRE(avg[ch] == Catch::Approx(expect).margin(1e-12));
    }
}

#pragma once

// Shared test utilities: synthetic sample generators and reference models.

#include <vector>

#include "hiq/colorrec.hpp"
#include "hiq/pipeline.hpp"

namespace testutil {

using namespace hiq;

// Reference QDA model built straight from the codebook: class means at the
// palette colors, isotropic covariance, center-row mixing.
inline ColorModel ideal_qda(int n_layers, double sigma = 0.05) {
    ColorModel m;
    m.kind = ColorModel::Kind::qda;
    QdaModel& q = m.qda;
    q.n_layers = n_layers;
    q.K = 1 << n_layers;
    q.theta = {1, 0, 0, 0, 0};
    ColorCodebook cb = build_codebook(n_layers);
    q.mu = cb.entries;
    q.sigma.assign(std::size_t(q.K), {sigma * sigma, 0, 0, 0, sigma * sigma, 0, 0, 0, sigma * sigma});
    q.prepare();
    return m;
}

// Reference layered linear model: bit j of the subtractive palette is 1 iff
// channel j is dark (valid for 1..3 layers).
inline ColorModel ideal_lsvm(int n_layers) {
    ColorModel m;
    m.kind = ColorModel::Kind::lsvm;
    LsvmModel& l = m.lsvm;
    l.n_layers = n_layers;
    for (int j = 0; j < n_layers; ++j) {
        LsvmLayer layer;
        layer.degree = 1;
        if (n_layers == 1) {
            layer.w = {-2, -2, -2};
            layer.b = 3.0;
        } else {
            layer.w = {0, 0, 0};
            layer.w[std::size_t(j)] = -4.0;
            layer.b = 2.0;
        }
        l.layers.push_back(std::move(layer));
    }
    return m;
}

// Synthetic neighbourhood samples: the alpha-weighted combination of the
// observation rows equals the true palette color of the center (plus noise),
// so alpha is the ground-truth mixing vector a trainer should recover.
inline std::vector<ColorSample> cmi_samples(int n_layers, const Theta& alpha, int count, double noise,
                                            SplitMix64& rng) {
    ColorCodebook cb = build_codebook(n_layers);
    const int K = 1 << n_layers;
    std::vector<ColorSample> out;
    out.reserve(std::size_t(count));
    for (int i = 0; i < count; ++i) {
        ColorSample s;
        s.label = int(rng.next_below(std::uint64_t(K)));
        Vec3 c = cb.entries[std::size_t(s.label)];
        Vec3 mix{};
        for (int r = 1; r < 5; ++r) {
            s.X[std::size_t(r)] = cb.entries[std::size_t(rng.next_below(std::uint64_t(K)))];
            mix += alpha[std::size_t(r)] * s.X[std::size_t(r)];
        }
        if (alpha[0] <= 0) throw std::runtime_error("alpha[0] must be positive");
        s.X[0] = (1.0 / alpha[0]) * (c - mix);
        for (auto& row : s.X)
            for (int ch = 0; ch < 3; ++ch) row[ch] += noise * rng.next_gaussian();
        out.push_back(s);
    }
    return out;
}

// Per-layer bit error rate of a model on held-out samples.
inline double sample_ber(const ColorModel& model, const std::vector<ColorSample>& samples) {
    long long wrong = 0, total = 0;
    const int n = model.n_layers();
    for (const auto& s : samples) {
        auto bits = model.predict(s.X);
        for (int j = 0; j < n; ++j) {
            ++total;
            if (bits[std::size_t(j)] != layer_bit(s.label, j, n)) ++wrong;
        }
    }
    return double(wrong) / double(total);
}

}  // namespace testutil

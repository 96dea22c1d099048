#pragma once

// Color recovery: white estimation/normalization with noisy-white
// augmentation, and the four classifiers — QDA, layered SVM, and their
// interference-cancelling variants which learn a 5-weight mixing vector theta
// turning the 5x3 neighbourhood observation into an estimate of the module's
// true color.

#include <algorithm>
#include <array>
#include <cmath>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "hiq/common.hpp"
#include "hiq/geometry.hpp"
#include "hiq/symbology.hpp"

namespace hiq {

using Theta = std::array<double, 5>;

struct ColorSample {
    std::array<Vec3, 5> X{};  // rows: center, top, bottom, left, right
    int label = 0;            // codebook tuple index
};

struct PredictionCounter {
    long long evals = 0;
};

// ---------------------------------------------------------------------------
// White normalization

constexpr double kWhiteEps = 1e-6;

inline Vec3 normalize_white(const Vec3& I, const Vec3& W) {
    for (int c = 0; c < 3; ++c)
        if (W[c] <= kWhiteEps) fail(Errc::invalid_white, "white estimate has a non-positive channel");
    Vec3 out;
    for (int c = 0; c < 3; ++c) out[c] = std::min(I[c] / W[c], 2.0);
    return out;
}

// Estimates the white point from the quiet-zone ring and the white rings
// inside the three finder patterns.
inline Vec3 estimate_white(const RasterImage& img, const Homography& h, int dim) {
    std::vector<Vec2> points;
    // Quiet-zone ring, two modules outside the symbol.
    for (double t = 0.5; t < dim; t += 2.0) {
        points.push_back({t, -2.0});
        points.push_back({t, dim + 2.0});
        points.push_back({-2.0, t});
        points.push_back({double(dim) + 2.0, t});
    }
    // White ring cells of each finder (between outer ring and core).
    const int origins[3][2] = {{0, 0}, {0, dim - 7}, {dim - 7, 0}};
    for (auto& o : origins)
        for (int r = 0; r < 7; ++r)
            for (int c = 0; c < 7; ++c) {
                bool ring1 = (r == 1 || r == 5 || c == 1 || c == 5) && r >= 1 && r <= 5 && c >= 1 && c <= 5;
                if (!ring1) continue;
                points.push_back({o[1] + c + 0.5, o[0] + r + 0.5});
            }
    Vec3 acc{};
    int valid = 0;
    for (const Vec2& g : points) {
        Vec2 p = h.project(g[0], g[1]);
        if (!img.contains(p[0], p[1])) continue;
        Vec3 v = bilinear_sample(img, p[0], p[1]);
        double mx = std::max({v[0], v[1], v[2]}), mn = std::min({v[0], v[1], v[2]});
        // Plausibly-white filter: bright enough and not strongly chromatic.
        if (mx < 0.2 || mn < 0.3 * mx) continue;
        acc += v;
        ++valid;
    }
    if (valid < 8) fail(Errc::white_estimation_failure, "fewer than 8 plausible white samples");
    return (1.0 / valid) * acc;
}

// Original sample plus `count` copies renormalized by a noise-perturbed white
// estimate, nu ~ N(0, sigma_w^2 diag(W^2)).
inline std::vector<ColorSample> augment_noisy_white(const ColorSample& sample, const Vec3& W, int count,
                                                    double sigma_w, SplitMix64& rng) {
    if (sigma_w <= 0) fail(Errc::invalid_parameter, "sigma_w must be positive");
    std::vector<ColorSample> out;
    out.push_back(sample);
    for (int i = 0; i < count; ++i) {
        Vec3 wn;
        for (int c = 0; c < 3; ++c) wn[c] = std::max(0.05, W[c] + sigma_w * W[c] * rng.next_gaussian());
        ColorSample s = sample;
        for (auto& row : s.X)
            for (int c = 0; c < 3; ++c) row[c] = std::min(row[c] * W[c] / wn[c], 2.0);
        out.push_back(s);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Shared training plumbing

struct TrainConfig {
    double C = 1.0;
    double tol = 1e-6;
    int max_iters = 50;
    double eta0 = 0.1;      // projected-gradient step eta0 / sqrt(t)
    int pgd_steps = 200;
    double eps = 1e-6;      // covariance ridge
    int augment_count = 5;
    double sigma_w = 0.03;
    std::array<int, 4> kernel_degree{1, 1, 3, 1};  // per layer
    int svm_max_epochs = 1000;
};

namespace detail {

inline std::array<double, 9> mat3_inverse(const std::array<double, 9>& s, double& logdet) {
    Mat3 m;
    m.m = s;
    double d = m.det();
    if (d <= 0) fail(Errc::insufficient_data, "covariance not positive definite");
    logdet = std::log(d);
    return m.inverse().m;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// QDA family

struct QdaModel {
    int n_layers = 0;
    int K = 0;
    Theta theta{1, 0, 0, 0, 0};
    std::vector<Vec3> mu;
    std::vector<std::array<double, 9>> sigma;
    double eps = 1e-6;
    std::vector<double> trace;  // log-likelihood per training iteration

    // Cached for prediction.
    std::vector<std::array<double, 9>> sigma_inv;
    std::vector<double> logdet;

    void prepare() {
        sigma_inv.resize(sigma.size());
        logdet.resize(sigma.size());
        for (std::size_t k = 0; k < sigma.size(); ++k) {
            std::array<double, 9> s = sigma[k];
            s[0] += eps;
            s[4] += eps;
            s[8] += eps;
            sigma_inv[k] = detail::mat3_inverse(s, logdet[k]);
        }
    }
};

inline double qda_discriminant(const QdaModel& m, int k, const Vec3& z) {
    Vec3 d = z - m.mu[std::size_t(k)];
    const auto& si = m.sigma_inv[std::size_t(k)];
    double q = d[0] * (si[0] * d[0] + si[1] * d[1] + si[2] * d[2]) +
               d[1] * (si[3] * d[0] + si[4] * d[1] + si[5] * d[2]) +
               d[2] * (si[6] * d[0] + si[7] * d[1] + si[8] * d[2]);
    return -0.5 * m.logdet[std::size_t(k)] - 0.5 * q;
}

// Argmax over the K class discriminants with uniform priors; evaluates
// exactly K discriminants (accounted in `counter`).
inline int predict_qda(const QdaModel& m, const std::array<Vec3, 5>& X, PredictionCounter* counter = nullptr) {
    Vec3 z = mix_rows(X, m.theta);
    int best = 0;
    double bd = qda_discriminant(m, 0, z);
    for (int k = 1; k < m.K; ++k) {
        double d = qda_discriminant(m, k, z);
        if (d > bd) {
            bd = d;
            best = k;
        }
    }
    if (counter) counter->evals += m.K;
    return best;
}

namespace detail {

// Class-conditional MLE of mu_k, Sigma_k over z_i = X_i^T theta.
inline void qda_mle(const std::vector<ColorSample>& samples, const Theta& theta, int K, QdaModel& m) {
    std::vector<int> count(std::size_t(K), 0);
    m.mu.assign(std::size_t(K), Vec3{});
    m.sigma.assign(std::size_t(K), std::array<double, 9>{});
    for (const auto& s : samples) {
        if (s.label < 0 || s.label >= K) fail(Errc::invalid_parameter, "sample label out of range");
        m.mu[std::size_t(s.label)] += mix_rows(s.X, theta);
        ++count[std::size_t(s.label)];
    }
    for (int k = 0; k < K; ++k) {
        if (count[std::size_t(k)] < 2)
            fail(Errc::insufficient_data, "class " + std::to_string(k) + " has fewer than 2 samples");
        m.mu[std::size_t(k)] = (1.0 / count[std::size_t(k)]) * m.mu[std::size_t(k)];
    }
    for (const auto& s : samples) {
        Vec3 d = mix_rows(s.X, theta) - m.mu[std::size_t(s.label)];
        auto& sg = m.sigma[std::size_t(s.label)];
        for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b) sg[std::size_t(a) * 3 + b] += d[a] * d[b];
    }
    for (int k = 0; k < K; ++k)
        for (double& v : m.sigma[std::size_t(k)]) v /= count[std::size_t(k)];
    m.prepare();
}

inline double qda_loglik(const std::vector<ColorSample>& samples, const QdaModel& m) {
    double ll = 0;
    for (const auto& s : samples) {
        Vec3 z = mix_rows(s.X, m.theta);
        ll += qda_discriminant(m, s.label, z);
    }
    return ll - 1.5 * std::log(2 * M_PI) * double(samples.size());
}

}  // namespace detail

// Plain QDA on the center row (theta fixed at e1).
inline QdaModel train_qda(const std::vector<ColorSample>& samples, int n_layers, double eps = 1e-6) {
    QdaModel m;
    m.n_layers = n_layers;
    m.K = 1 << n_layers;
    m.eps = eps;
    m.theta = {1, 0, 0, 0, 0};
    detail::qda_mle(samples, m.theta, m.K, m);
    m.trace.push_back(detail::qda_loglik(samples, m));
    return m;
}

// Alternating maximum-likelihood fit of (mu, Sigma) and the mixing vector
// theta. Both half-steps maximize the same likelihood, so the recorded
// objective is non-decreasing.
inline QdaModel train_qda_cmi(const std::vector<ColorSample>& samples, int n_layers, const TrainConfig& cfg = {}) {
    QdaModel m;
    m.n_layers = n_layers;
    m.K = 1 << n_layers;
    m.eps = cfg.eps;
    m.theta = {1, 0, 0, 0, 0};
    double prev = -1e300;
    for (int it = 0; it < cfg.max_iters; ++it) {
        detail::qda_mle(samples, m.theta, m.K, m);
        double ll = detail::qda_loglik(samples, m);
        m.trace.push_back(ll);
        if (ll - prev < cfg.tol * (1.0 + std::abs(prev)) && it > 0) break;
        prev = ll;

        // Closed-form theta given (mu, Sigma):
        //   (sum_i X_i S_k^-1 X_i^T) theta = sum_i X_i S_k^-1 mu_k
        std::vector<double> A(25, 0.0), b(5, 0.0);
        for (const auto& s : samples) {
            const auto& si = m.sigma_inv[std::size_t(s.label)];
            const Vec3& mu = m.mu[std::size_t(s.label)];
            // y_r = S^-1 applied to row r of X (rows are colors).
            std::array<Vec3, 5> y;
            for (int r = 0; r < 5; ++r) {
                const Vec3& x = s.X[std::size_t(r)];
                y[std::size_t(r)] = {si[0] * x[0] + si[1] * x[1] + si[2] * x[2],
                                     si[3] * x[0] + si[4] * x[1] + si[5] * x[2],
                                     si[6] * x[0] + si[7] * x[1] + si[8] * x[2]};
            }
            for (int r = 0; r < 5; ++r) {
                for (int c = 0; c < 5; ++c) A[std::size_t(r) * 5 + c] += dot(s.X[std::size_t(r)], y[std::size_t(c)]);
                b[std::size_t(r)] += dot(y[std::size_t(r)], mu);
            }
        }
        if (!solve_dense(A, b, 5)) break;  // keep previous theta
        for (int r = 0; r < 5; ++r) m.theta[std::size_t(r)] = b[std::size_t(r)];
    }
    // The likelihood is invariant to a joint rescale of (theta, mu, Sigma);
    // pin the scale for reproducible serialization.
    double s = 0;
    for (double v : m.theta) s += v * v;
    s = std::sqrt(s);
    if (s > 1e-12) {
        for (double& v : m.theta) v /= s;
        for (auto& mu : m.mu) mu = (1.0 / s) * mu;
        for (auto& sg : m.sigma)
            for (double& v : sg) v /= s * s;
        m.prepare();
    }
    return m;
}

// ---------------------------------------------------------------------------
// Layered SVM family

// Explicit feature map of the degree-3 polynomial kernel (1 + u.v)^3 over
// R^3; 20 monomials with square-root multinomial coefficients so that
// phi(u).phi(v) reproduces the kernel exactly. Degree 1 maps to u itself.
inline int feature_dim(int degree) { return degree == 3 ? 20 : 3; }

namespace detail {

struct Monomial {
    int k[3];
    double coef;  // sqrt(3! / (k0! k1! k2! k3!))
};

inline const std::vector<Monomial>& poly3_monomials() {
    static const std::vector<Monomial> ms = [] {
        auto factorial = [](int n) { return n <= 1 ? 1 : n == 2 ? 2 : 6; };
        std::vector<Monomial> out;
        for (int k1 = 0; k1 <= 3; ++k1)
            for (int k2 = 0; k2 + k1 <= 3; ++k2)
                for (int k3 = 0; k3 + k2 + k1 <= 3; ++k3) {
                    int k0 = 3 - k1 - k2 - k3;
                    Monomial mo;
                    mo.k[0] = k1;
                    mo.k[1] = k2;
                    mo.k[2] = k3;
                    mo.coef = std::sqrt(6.0 / (factorial(k0) * factorial(k1) * factorial(k2) * factorial(k3)));
                    out.push_back(mo);
                }
        return out;
    }();
    return ms;
}

}  // namespace detail

inline void feature_map(const Vec3& z, int degree, double* out) {
    if (degree == 1) {
        out[0] = z[0];
        out[1] = z[1];
        out[2] = z[2];
        return;
    }
    const auto& ms = detail::poly3_monomials();
    for (std::size_t i = 0; i < ms.size(); ++i) {
        double v = ms[i].coef;
        for (int c = 0; c < 3; ++c)
            for (int p = 0; p < ms[i].k[c]; ++p) v *= z[c];
        out[i] = v;
    }
}

// g = J_phi(z)^T w, the pullback of a feature-space direction to R^3.
inline Vec3 feature_map_pullback(const Vec3& z, int degree, const double* w) {
    if (degree == 1) return {w[0], w[1], w[2]};
    const auto& ms = detail::poly3_monomials();
    Vec3 g{};
    for (std::size_t i = 0; i < ms.size(); ++i) {
        for (int c = 0; c < 3; ++c) {
            if (ms[i].k[c] == 0) continue;
            double d = ms[i].coef * ms[i].k[c];
            for (int cc = 0; cc < 3; ++cc) {
                int pw = ms[i].k[cc] - (cc == c ? 1 : 0);
                for (int p = 0; p < pw; ++p) d *= z[cc];
            }
            g[c] += d * w[i];
        }
    }
    return g;
}

struct LsvmLayer {
    Theta theta{1, 0, 0, 0, 0};
    int degree = 1;
    std::vector<double> w;  // feature_dim(degree) weights
    double b = 0;
};

struct LsvmModel {
    int n_layers = 0;
    double C = 1.0;
    std::vector<LsvmLayer> layers;
    std::vector<std::vector<double>> trace;  // per-layer objective per outer iteration
};

namespace detail {

// L1-loss SVM via dual coordinate descent (bias handled by an augmented
// constant feature). Deterministic sample order; stops on small projected
// gradient violations.
inline void svm_dual_solve(const std::vector<double>& feats, const std::vector<int>& labels, int d, double C,
                           double tol, int max_epochs, std::vector<double>& w_out, double& b_out) {
    const std::size_t n = labels.size();
    const int da = d + 1;
    std::vector<double> w(std::size_t(da), 0.0), alpha(n, 0.0), qii(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double q = 1.0;  // bias feature
        for (int j = 0; j < d; ++j) q += feats[i * std::size_t(d) + j] * feats[i * std::size_t(d) + j];
        qii[i] = q;
    }
    for (int epoch = 0; epoch < max_epochs; ++epoch) {
        double max_viol = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const double* x = &feats[i * std::size_t(d)];
            double y = labels[i];
            double score = w[std::size_t(d)];
            for (int j = 0; j < d; ++j) score += w[std::size_t(j)] * x[j];
            double G = y * score - 1.0;
            double PG = G;
            if (alpha[i] <= 0)
                PG = std::min(G, 0.0);
            else if (alpha[i] >= C)
                PG = std::max(G, 0.0);
            if (std::abs(PG) > max_viol) max_viol = std::abs(PG);
            if (std::abs(PG) > 1e-14) {
                double old = alpha[i];
                alpha[i] = std::min(std::max(old - G / qii[i], 0.0), C);
                double delta = (alpha[i] - old) * y;
                for (int j = 0; j < d; ++j) w[std::size_t(j)] += delta * x[j];
                w[std::size_t(d)] += delta;
            }
        }
        if (max_viol < tol) break;
    }
    w_out.assign(w.begin(), w.begin() + d);
    b_out = w[std::size_t(d)];
}

}  // namespace detail

// Bit of layer j (0-based, layer 1 first) inside a codebook tuple index.
inline int layer_bit(int label, int layer, int n_layers) { return (label >> (n_layers - 1 - layer)) & 1; }

inline double lsvm_layer_score(const LsvmLayer& layer, const std::array<Vec3, 5>& X) {
    Vec3 z = mix_rows(X, layer.theta);
    double phi[20];
    feature_map(z, layer.degree, phi);
    double score = layer.b;
    for (int j = 0; j < feature_dim(layer.degree); ++j) score += layer.w[std::size_t(j)] * phi[j];
    return score;
}

// Predicted bit tuple; layers flagged in `skip` are left at 0 and cost no
// evaluations (a decoded layer need not be processed again).
inline std::vector<std::uint8_t> predict_lsvm(const LsvmModel& m, const std::array<Vec3, 5>& X,
                                              PredictionCounter* counter = nullptr,
                                              const std::vector<bool>* skip = nullptr) {
    std::vector<std::uint8_t> bits(std::size_t(m.n_layers), 0);
    for (int j = 0; j < m.n_layers; ++j) {
        if (skip && (*skip)[std::size_t(j)]) continue;
        bits[std::size_t(j)] = lsvm_layer_score(m.layers[std::size_t(j)], X) > 0 ? 1 : 0;
        if (counter) ++counter->evals;
    }
    return bits;
}

namespace detail {

inline void build_features(const std::vector<ColorSample>& samples, const Theta& theta, int degree,
                           std::vector<double>& feats) {
    const int d = feature_dim(degree);
    feats.resize(samples.size() * std::size_t(d));
    for (std::size_t i = 0; i < samples.size(); ++i) {
        Vec3 z = mix_rows(samples[i].X, theta);
        feature_map(z, degree, &feats[i * std::size_t(d)]);
    }
}

inline double full_objective(const std::vector<ColorSample>& samples, const std::vector<int>& labels,
                             const LsvmLayer& layer, double C) {
    double reg = 0.5 * layer.b * layer.b;
    for (double v : layer.w) reg += 0.5 * v * v;
    double hinge = 0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        double score = layer.b;
        double phi[20];
        Vec3 z = mix_rows(samples[i].X, layer.theta);
        feature_map(z, layer.degree, phi);
        for (int j = 0; j < feature_dim(layer.degree); ++j) score += layer.w[std::size_t(j)] * phi[j];
        hinge += std::max(0.0, 1.0 - labels[i] * score);
    }
    return reg + C * hinge;
}

}  // namespace detail

// One soft-margin SVM per layer on the theta-mixed features (theta = e1
// fixed): the plain layered strategy.
inline LsvmModel train_lsvm(const std::vector<ColorSample>& samples, int n_layers, const TrainConfig& cfg = {}) {
    LsvmModel m;
    m.n_layers = n_layers;
    m.C = cfg.C;
    for (int j = 0; j < n_layers; ++j) {
        LsvmLayer layer;
        layer.degree = cfg.kernel_degree[std::size_t(j)];
        std::vector<int> labels(samples.size());
        int pos = 0;
        for (std::size_t i = 0; i < samples.size(); ++i) {
            labels[i] = layer_bit(samples[i].label, j, n_layers) ? 1 : -1;
            if (labels[i] > 0) ++pos;
        }
        if (pos == 0 || pos == int(samples.size()))
            fail(Errc::insufficient_data, "layer " + std::to_string(j + 1) + " has a single class");
        std::vector<double> feats;
        detail::build_features(samples, layer.theta, layer.degree, feats);
        detail::svm_dual_solve(feats, labels, feature_dim(layer.degree), cfg.C, cfg.tol, cfg.svm_max_epochs,
                               layer.w, layer.b);
        m.trace.push_back({detail::full_objective(samples, labels, layer, cfg.C)});
        m.layers.push_back(std::move(layer));
    }
    return m;
}

// Alternating scheme per layer: exact SVM solve for (w, b) given theta, then
// projected subgradient descent on the hinge term over the unit ball for
// theta given (w, b). Keep-best iterates make the recorded objective
// non-increasing.
inline LsvmModel train_lsvm_cmi(const std::vector<ColorSample>& samples, int n_layers, const TrainConfig& cfg = {}) {
    LsvmModel m;
    m.n_layers = n_layers;
    m.C = cfg.C;
    for (int j = 0; j < n_layers; ++j) {
        LsvmLayer layer;
        layer.degree = cfg.kernel_degree[std::size_t(j)];
        layer.theta = {1, 0, 0, 0, 0};
        std::vector<int> labels(samples.size());
        int pos = 0;
        for (std::size_t i = 0; i < samples.size(); ++i) {
            labels[i] = layer_bit(samples[i].label, j, n_layers) ? 1 : -1;
            if (labels[i] > 0) ++pos;
        }
        if (pos == 0 || pos == int(samples.size()))
            fail(Errc::insufficient_data, "layer " + std::to_string(j + 1) + " has a single class");

        std::vector<double> trace;
        LsvmLayer best = layer;
        double best_obj = 1e300;
        const int d = feature_dim(layer.degree);
        std::vector<double> feats;
        for (int it = 0; it < cfg.max_iters; ++it) {
            // (w, b) step.
            detail::build_features(samples, layer.theta, layer.degree, feats);
            LsvmLayer cand = layer;
            detail::svm_dual_solve(feats, labels, d, cfg.C, cfg.tol, cfg.svm_max_epochs, cand.w, cand.b);
            double obj = detail::full_objective(samples, labels, cand, cfg.C);
            // Guard against an approximate dual solve losing ground.
            if (!layer.w.empty()) {
                double old_obj = detail::full_objective(samples, labels, layer, cfg.C);
                if (old_obj < obj) {
                    cand = layer;
                    obj = old_obj;
                }
            }
            layer = cand;
            trace.push_back(obj);
            if (obj < best_obj) {
                best_obj = obj;
                best = layer;
            }
            if (it > 0 && trace[std::size_t(it - 1)] - obj < cfg.tol * (1.0 + std::abs(obj))) break;

            // theta step: projected subgradient descent on the hinge term,
            // keeping the best theta seen (the incumbent included).
            auto hinge_at = [&](const Theta& th) {
                LsvmLayer probe = layer;
                probe.theta = th;
                std::vector<int> dummy;
                double h = 0;
                double phi[20];
                for (std::size_t i = 0; i < samples.size(); ++i) {
                    Vec3 z = mix_rows(samples[i].X, th);
                    feature_map(z, layer.degree, phi);
                    double score = layer.b;
                    for (int q = 0; q < d; ++q) score += layer.w[std::size_t(q)] * phi[q];
                    h += std::max(0.0, 1.0 - labels[i] * score);
                }
                (void)dummy;
                return cfg.C * h;
            };
            Theta th = layer.theta, best_th = th;
            double best_h = hinge_at(th);
            for (int t = 1; t <= cfg.pgd_steps; ++t) {
                // Subgradient of C * sum hinge wrt theta.
                Theta grad{};
                double phi[20];
                for (std::size_t i = 0; i < samples.size(); ++i) {
                    Vec3 z = mix_rows(samples[i].X, th);
                    feature_map(z, layer.degree, phi);
                    double score = layer.b;
                    for (int q = 0; q < d; ++q) score += layer.w[std::size_t(q)] * phi[q];
                    if (labels[i] * score >= 1.0) continue;
                    Vec3 g = feature_map_pullback(z, layer.degree, layer.w.data());
                    for (int r = 0; r < 5; ++r)
                        grad[std::size_t(r)] -= cfg.C * labels[i] * dot(samples[i].X[std::size_t(r)], g);
                }
                // Normalized subgradient step: the raw subgradient scales
                // with the sample count, which would make the step size
                // meaningless across corpus sizes.
                double gnorm = 0;
                for (double v : grad) gnorm += v * v;
                gnorm = std::sqrt(gnorm);
                if (gnorm < 1e-12) break;
                double eta = cfg.eta0 / std::sqrt(double(t));
                for (int r = 0; r < 5; ++r) th[std::size_t(r)] -= eta * grad[std::size_t(r)] / gnorm;
                double nrm = 0;
                for (double v : th) nrm += v * v;
                nrm = std::sqrt(nrm);
                if (nrm > 1.0)
                    for (double& v : th) v /= nrm;
                double h = hinge_at(th);
                if (h < best_h) {
                    best_h = h;
                    best_th = th;
                }
            }
            layer.theta = best_th;
        }
        m.trace.push_back(std::move(trace));
        m.layers.push_back(best);
    }
    return m;
}

// ---------------------------------------------------------------------------
// Unified model handle

struct ColorModel {
    enum class Kind { qda, qda_cmi, lsvm, lsvm_cmi };
    Kind kind = Kind::qda;
    QdaModel qda;
    LsvmModel lsvm;

    bool is_qda() const { return kind == Kind::qda || kind == Kind::qda_cmi; }
    int n_layers() const { return is_qda() ? qda.n_layers : lsvm.n_layers; }

    // Predicted bit tuple for one module.
    std::vector<std::uint8_t> predict(const std::array<Vec3, 5>& X, PredictionCounter* counter = nullptr,
                                      const std::vector<bool>* skip = nullptr) const {
        if (is_qda()) {
            int k = predict_qda(qda, X, counter);
            std::vector<std::uint8_t> bits(std::size_t(qda.n_layers));
            for (int j = 0; j < qda.n_layers; ++j) bits[std::size_t(j)] = std::uint8_t(layer_bit(k, j, qda.n_layers));
            return bits;
        }
        return predict_lsvm(lsvm, X, counter, skip);
    }

    static std::string kind_name(Kind k) {
        switch (k) {
            case Kind::qda: return "qda";
            case Kind::qda_cmi: return "qda-cmi";
            case Kind::lsvm: return "lsvm";
            case Kind::lsvm_cmi: return "lsvm-cmi";
        }
        return "?";
    }

    static Kind kind_from_name(const std::string& s) {
        if (s == "qda") return Kind::qda;
        if (s == "qda-cmi") return Kind::qda_cmi;
        if (s == "lsvm") return Kind::lsvm;
        if (s == "lsvm-cmi") return Kind::lsvm_cmi;
        fail(Errc::invalid_parameter, "unknown classifier '" + s + "'");
    }
};

// ---------------------------------------------------------------------------
// Model serialization (value-exact text format)

namespace detail {

inline void put_num(std::ostream& os, double v) { os << ' ' << std::setprecision(17) << v; }

}  // namespace detail

inline void save_model(const ColorModel& m, std::ostream& os) {
    os << "HIQMODEL 1\n";
    os << "kind " << ColorModel::kind_name(m.kind) << "\n";
    os << std::setprecision(17);
    if (m.is_qda()) {
        const QdaModel& q = m.qda;
        os << "layers " << q.n_layers << "\nclasses " << q.K << "\neps " << q.eps << "\n";
        os << "theta";
        for (double v : q.theta) detail::put_num(os, v);
        os << "\n";
        for (int k = 0; k < q.K; ++k) {
            os << "mu " << k;
            for (double v : q.mu[std::size_t(k)]) detail::put_num(os, v);
            os << "\nsigma " << k;
            for (double v : q.sigma[std::size_t(k)]) detail::put_num(os, v);
            os << "\n";
        }
    } else {
        const LsvmModel& l = m.lsvm;
        os << "layers " << l.n_layers << "\ncost " << l.C << "\n";
        for (int j = 0; j < l.n_layers; ++j) {
            const LsvmLayer& ly = l.layers[std::size_t(j)];
            os << "layer " << (j + 1) << " degree " << ly.degree << "\ntheta";
            for (double v : ly.theta) detail::put_num(os, v);
            os << "\nbias " << ly.b << "\nweights";
            for (double v : ly.w) detail::put_num(os, v);
            os << "\n";
        }
    }
}

inline ColorModel load_model(std::istream& is) {
    std::string magic, key;
    int fmt = 0;
    if (!(is >> magic >> fmt) || magic != "HIQMODEL" || fmt != 1) fail(Errc::io_error, "not a HIQMODEL file");
    std::string kind_name;
    is >> key >> kind_name;
    if (key != "kind") fail(Errc::io_error, "bad model header");
    ColorModel m;
    m.kind = ColorModel::kind_from_name(kind_name);
    if (m.is_qda()) {
        QdaModel& q = m.qda;
        is >> key >> q.n_layers;
        is >> key >> q.K;
        is >> key >> q.eps;
        is >> key;
        for (double& v : q.theta) is >> v;
        q.mu.resize(std::size_t(q.K));
        q.sigma.resize(std::size_t(q.K));
        for (int k = 0; k < q.K; ++k) {
            int idx;
            is >> key >> idx;
            for (double& v : q.mu[std::size_t(idx)]) is >> v;
            is >> key >> idx;
            for (double& v : q.sigma[std::size_t(idx)]) is >> v;
        }
        if (!is) fail(Errc::io_error, "truncated model file");
        q.prepare();
    } else {
        LsvmModel& l = m.lsvm;
        is >> key >> l.n_layers;
        is >> key >> l.C;
        l.layers.resize(std::size_t(l.n_layers));
        for (int j = 0; j < l.n_layers; ++j) {
            LsvmLayer& ly = l.layers[std::size_t(j)];
            int idx;
            is >> key >> idx >> key >> ly.degree;
            is >> key;
            for (double& v : ly.theta) is >> v;
            is >> key >> ly.b;
            is >> key;
            ly.w.resize(std::size_t(feature_dim(ly.degree)));
            for (double& v : ly.w) is >> v;
        }
        if (!is) fail(Errc::io_error, "truncated model file");
    }
    return m;
}

}  // namespace hiq

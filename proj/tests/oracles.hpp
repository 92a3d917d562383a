// Copyright (C) 2026 The hrvda-desk Authors
// SPDX-License-Identifier: Apache-2.0

// Independent reference implementations and seeded generators for tests.
// Oracles use plain loops and std math only, never the library kernels.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <vector>

#include "hrvda/hrvda.hpp"

namespace hrvda::testing {

// ---------------------------------------------------------------- generators

inline Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Matrix m(rows, cols);
    for (double& v : m.values()) {
        v = rng.uniform(lo, hi);
    }
    return m;
}

inline std::vector<double> random_vector(std::size_t n, Rng& rng, double lo = -1.0, double hi = 1.0) {
    std::vector<double> v(n);
    for (double& x : v) {
        x = rng.uniform(lo, hi);
    }
    return v;
}

/// Mixed probability map: exact zeros, exact ones, values on common
/// thresholds and uniform draws, with blank rectangles so some windows are
/// fully inactive.
inline ProbabilityMap mixed_probs(std::size_t rows, std::size_t cols, Rng& rng) {
    ProbabilityMap p;
    p.values.resize(rows * cols);
    for (double& v : p.values) {
        switch (rng.below(5)) {
        case 0:
            v = 0.0;
            break;
        case 1:
            v = 1.0;
            break;
        case 2:
            v = rng.below(2) == 0 ? 0.25 : 0.5;
            break;
        default:
            v = rng.uniform();
        }
    }
    const std::size_t blanks = 1 + rng.below(3);
    for (std::size_t b = 0; b < blanks; ++b) {
        const std::size_t h = 1 + rng.below(rows);
        const std::size_t w = 1 + rng.below(cols);
        const std::size_t y0 = rng.below(rows - h + 1);
        const std::size_t x0 = rng.below(cols - w + 1);
        for (std::size_t y = y0; y < y0 + h; ++y) {
            for (std::size_t x = x0; x < x0 + w; ++x) {
                p.values[y * cols + x] = 0.0;
            }
        }
    }
    return p;
}

inline ProbabilityMap binary_probs(std::size_t rows, std::size_t cols, Rng& rng) {
    ProbabilityMap p = mixed_probs(rows, cols, rng);
    for (double& v : p.values) {
        v = v >= 0.5 ? 1.0 : 0.0;
    }
    p.binarized = true;
    return p;
}

inline TokenGrid random_grid(std::size_t rows, std::size_t cols, std::size_t dim, Rng& rng) {
    TokenGrid g;
    g.rows = rows;
    g.cols = cols;
    g.tokens = random_matrix(rows * cols, dim, rng);
    g.probs = ProbabilityMap::ones(rows * cols);
    return g;
}

/// Small encoder for fast property tests: 32x32 token grid, dim 8.
inline EncoderConfig small_encoder_config() {
    EncoderConfig c;
    c.base_dim = 8;
    c.stages = {{2, 8, true}, {2, 8, true}, {2, 4, true}, {2, 4, false}};
    c.mlp_ratio = 2;
    return c;
}

// ------------------------------------------------------------ dense oracles

inline Matrix naive_matmul(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < b.cols(); ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < a.cols(); ++k) {
                s += a(i, k) * b(k, j);
            }
            out(i, j) = s;
        }
    }
    return out;
}

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        m = std::max(m, std::abs(a.values()[i] - b.values()[i]));
    }
    return m;
}

/// Largest |a - b| / max(1, |b|).
inline double max_rel_diff(const Matrix& a, const Matrix& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double ref = b.values()[i];
        m = std::max(m, std::abs(a.values()[i] - ref) / std::max(1.0, std::abs(ref)));
    }
    return m;
}

inline std::vector<double> ref_layernorm_row(const std::vector<double>& x, const NormParams& n) {
    double mean = 0.0;
    for (double v : x) {
        mean += v;
    }
    mean /= static_cast<double>(x.size());
    double var = 0.0;
    for (double v : x) {
        var += (v - mean) * (v - mean);
    }
    var /= static_cast<double>(x.size());
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        out[i] = (x[i] - mean) / std::sqrt(var + 1e-5) * n.gamma[i] + n.beta[i];
    }
    return out;
}

inline std::vector<double> ref_linear_row(const std::vector<double>& x, const Linear& l) {
    std::vector<double> out(l.weight.cols(), 0.0);
    for (std::size_t j = 0; j < out.size(); ++j) {
        double s = l.bias.empty() ? 0.0 : l.bias[j];
        for (std::size_t k = 0; k < x.size(); ++k) {
            s += x[k] * l.weight(k, j);
        }
        out[j] = s;
    }
    return out;
}

inline double ref_gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

/// Two-layer MLP on one row: GELU hidden layer, linear output.
inline std::vector<double> ref_mlp2_row(const std::vector<double>& x, const Mlp2& m) {
    std::vector<double> h(m.w1.cols());
    for (std::size_t j = 0; j < h.size(); ++j) {
        double s = m.b1[j];
        for (std::size_t k = 0; k < x.size(); ++k) {
            s += x[k] * m.w1(k, j);
        }
        h[j] = ref_gelu(s);
    }
    std::vector<double> out(m.w2.cols());
    for (std::size_t j = 0; j < out.size(); ++j) {
        double s = m.b2[j];
        for (std::size_t k = 0; k < h.size(); ++k) {
            s += h[k] * m.w2(k, j);
        }
        out[j] = s;
    }
    return out;
}

/// Ungated transformer block on one window of token rows.
inline std::vector<std::vector<double>> ref_block_window(const std::vector<std::vector<double>>& x,
                                                         const BlockWeights& b) {
    const std::size_t n = x.size();
    std::vector<std::vector<double>> q(n), k(n), v(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto xn = ref_layernorm_row(x[i], b.norm1);
        q[i] = ref_linear_row(xn, b.q);
        k[i] = ref_linear_row(xn, b.k);
        v[i] = ref_linear_row(xn, b.v);
    }
    const double scale = 1.0 / std::sqrt(static_cast<double>(q[0].size()));
    std::vector<std::vector<double>> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> s(n);
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < n; ++j) {
            double dot = 0.0;
            for (std::size_t c = 0; c < q[i].size(); ++c) {
                dot += q[i][c] * k[j][c];
            }
            s[j] = dot * scale;
            mx = std::max(mx, s[j]);
        }
        double z = 0.0;
        for (double& e : s) {
            e = std::exp(e - mx);
            z += e;
        }
        std::vector<double> mix(v[0].size(), 0.0);
        for (std::size_t j = 0; j < n; ++j) {
            for (std::size_t c = 0; c < mix.size(); ++c) {
                mix[c] += s[j] / z * v[j][c];
            }
        }
        std::vector<double> y = ref_linear_row(mix, b.o);
        for (std::size_t c = 0; c < y.size(); ++c) {
            y[c] += x[i][c];
        }
        std::vector<double> h = ref_linear_row(ref_layernorm_row(y, b.norm2), b.fc1);
        for (double& e : h) {
            e = ref_gelu(e);
        }
        std::vector<double> f = ref_linear_row(h, b.fc2);
        for (std::size_t c = 0; c < f.size(); ++c) {
            f[c] += y[c];
        }
        out[i] = f;
    }
    return out;
}

using RowGrid = std::vector<std::vector<double>>;  // row-major tokens

inline RowGrid to_rows(const Matrix& m) {
    RowGrid g(m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        g[i].assign(m.row(i).begin(), m.row(i).end());
    }
    return g;
}

inline Matrix from_rows(const RowGrid& g) {
    Matrix m(g.size(), g.empty() ? 0 : g[0].size());
    for (std::size_t i = 0; i < g.size(); ++i) {
        std::copy(g[i].begin(), g[i].end(), m.row(i).begin());
    }
    return m;
}

/// Never-gated windowed block over a side x side grid. Shifted passes roll
/// the grid up-left by half a window, partition, then roll back. Requires the
/// window to divide the side.
inline RowGrid ref_window_block(const RowGrid& x, std::size_t side, std::size_t window, bool shifted,
                                const BlockWeights& b) {
    const std::size_t w = std::min(window, side);
    const std::size_t s = shifted && side > window ? w / 2 : 0;
    if (side % w != 0) {
        throw std::invalid_argument("ref_window_block: window must divide the grid");
    }
    RowGrid out(x.size());
    for (std::size_t wy = 0; wy < side / w; ++wy) {
        for (std::size_t wx = 0; wx < side / w; ++wx) {
            std::vector<std::size_t> idx;
            for (std::size_t i = 0; i < w; ++i) {
                for (std::size_t j = 0; j < w; ++j) {
                    const std::size_t y = (wy * w + i + s) % side;
                    const std::size_t xx = (wx * w + j + s) % side;
                    idx.push_back(y * side + xx);
                }
            }
            RowGrid win;
            for (auto t : idx) {
                win.push_back(x[t]);
            }
            const RowGrid res = ref_block_window(win, b);
            for (std::size_t t = 0; t < idx.size(); ++t) {
                out[idx[t]] = res[t];
            }
        }
    }
    return out;
}

inline RowGrid ref_merge(const RowGrid& x, std::size_t side, const MergeWeights& m) {
    const std::size_t half = side / 2;
    RowGrid out(half * half);
    for (std::size_t r = 0; r < half; ++r) {
        for (std::size_t c = 0; c < half; ++c) {
            std::vector<double> cat;
            for (auto [dr, dc] : {std::pair{0, 0}, std::pair{1, 0}, std::pair{0, 1}, std::pair{1, 1}}) {
                const auto& child = x[(2 * r + dr) * side + 2 * c + dc];
                cat.insert(cat.end(), child.begin(), child.end());
            }
            const auto n = ref_layernorm_row(cat, m.norm);
            std::vector<double> red(m.reduction.cols(), 0.0);
            for (std::size_t j = 0; j < red.size(); ++j) {
                for (std::size_t k = 0; k < n.size(); ++k) {
                    red[j] += n[k] * m.reduction(k, j);
                }
            }
            out[r * half + c] = red;
        }
    }
    return out;
}

/// Plain hierarchical encoder with no gating, bypass or dropping.
inline Matrix ref_encode(const EncoderModel& model, const Matrix& tokens, std::size_t side) {
    RowGrid x = to_rows(tokens);
    for (const auto& stage : model.stages) {
        for (std::size_t b = 0; b < stage.blocks.size(); ++b) {
            x = ref_window_block(x, side, static_cast<std::size_t>(stage.config.window), b % 2 == 1, stage.blocks[b]);
        }
        if (stage.merge) {
            x = ref_merge(x, side, *stage.merge);
            side /= 2;
        }
    }
    return from_rows(x);
}

/// k-fold brute-force 2x2 max pooling.
inline std::vector<double> ref_max_pool(const std::vector<double>& p, std::size_t side, int folds) {
    std::vector<double> cur = p;
    for (int f = 0; f < folds; ++f) {
        const std::size_t half = side / 2;
        std::vector<double> next(half * half, 0.0);
        for (std::size_t r = 0; r < half; ++r) {
            for (std::size_t c = 0; c < half; ++c) {
                double m = cur[(2 * r) * side + 2 * c];
                m = std::max(m, cur[(2 * r + 1) * side + 2 * c]);
                m = std::max(m, cur[(2 * r) * side + 2 * c + 1]);
                m = std::max(m, cur[(2 * r + 1) * side + 2 * c + 1]);
                next[r * half + c] = m;
            }
        }
        cur = std::move(next);
        side = half;
    }
    return cur;
}

// ---------------------------------------------------------- gradient oracle

/// Weighted BCE-with-logits of a single-output MLP, direct loop evaluation.
inline double ref_bce(const Matrix& x, const Mlp2& m, const std::vector<double>& y, const std::vector<double>& w) {
    double loss = 0.0;
    double total = 0.0;
    for (std::size_t i = 0; i < x.rows(); ++i) {
        std::vector<double> h(m.w1.cols());
        for (std::size_t j = 0; j < h.size(); ++j) {
            double s = m.b1[j];
            for (std::size_t k = 0; k < x.cols(); ++k) {
                s += x(i, k) * m.w1(k, j);
            }
            h[j] = ref_gelu(s);
        }
        double z = m.b2[0];
        for (std::size_t j = 0; j < h.size(); ++j) {
            z += h[j] * m.w2(j, 0);
        }
        const double p = 1.0 / (1.0 + std::exp(-z));
        const double wi = w.empty() ? 1.0 : w[i];
        loss += -wi * (y[i] * std::log(p) + (1.0 - y[i]) * std::log(1.0 - p));
        total += wi;
    }
    return loss / total;
}

struct GradCheck {
    double max_rel_error = 0.0;
    std::size_t checked = 0;
};

inline double rel_error(double analytic, double numeric) {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
    return std::abs(analytic - numeric) / denom;
}

/// Central differences (step h) of every parameter and input entry.
inline GradCheck check_mlp_gradients(const Matrix& x, const Mlp2& m, const std::vector<double>& y,
                                     const std::vector<double>& w, double h = 1e-5) {
    const Mlp2Gradients g = mlp2_backward(x, m, y, w);
    GradCheck out;
    auto probe = [&](double& param, double analytic, auto&& loss_fn) {
        const double saved = param;
        param = saved + h;
        const double up = loss_fn();
        param = saved - h;
        const double down = loss_fn();
        param = saved;
        out.max_rel_error = std::max(out.max_rel_error, rel_error(analytic, (up - down) / (2.0 * h)));
        ++out.checked;
    };
    Mlp2 mm = m;
    Matrix xx = x;
    auto loss = [&] { return ref_bce(xx, mm, y, w); };
    for (std::size_t i = 0; i < mm.w1.size(); ++i) {
        probe(mm.w1.values()[i], g.w1.values()[i], loss);
    }
    for (std::size_t i = 0; i < mm.b1.size(); ++i) {
        probe(mm.b1[i], g.b1[i], loss);
    }
    for (std::size_t i = 0; i < mm.w2.size(); ++i) {
        probe(mm.w2.values()[i], g.w2.values()[i], loss);
    }
    probe(mm.b2[0], g.b2[0], loss);
    for (std::size_t i = 0; i < xx.size(); ++i) {
        probe(xx.values()[i], g.input.values()[i], loss);
    }
    return out;
}

}  // namespace hrvda::testing

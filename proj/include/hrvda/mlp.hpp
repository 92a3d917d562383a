// Copyright (C) 2026 The hrvda-desk Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "hrvda/tensor.hpp"

namespace hrvda {

/// Two-layer perceptron: GELU(x W1 + b1) W2 + b2.
struct Mlp2 {
    Matrix w1;
    std::vector<double> b1;
    Matrix w2;
    std::vector<double> b2;

    std::size_t in_dim() const { return w1.rows(); }
    std::size_t hidden_dim() const { return w1.cols(); }
    std::size_t out_dim() const { return w2.cols(); }

    static Mlp2 init(std::size_t in, std::size_t hidden, std::size_t out, Rng& rng) {
        Mlp2 m;
        m.w1 = uniform_init(in, hidden, in, rng);
        m.b1 = uniform_init(hidden, in, rng);
        m.w2 = uniform_init(hidden, out, hidden, rng);
        m.b2 = uniform_init(out, hidden, rng);
        return m;
    }

    static Mlp2 zeros(std::size_t in, std::size_t hidden, std::size_t out) {
        return {Matrix(in, hidden), std::vector<double>(hidden, 0.0), Matrix(hidden, out), std::vector<double>(out, 0.0)};
    }
};

inline void check_mlp_shapes(const Mlp2& m) {
    if (m.b1.size() != m.w1.cols() || m.w2.rows() != m.w1.cols() || m.b2.size() != m.w2.cols()) {
        throw ShapeError("mlp2: inconsistent weights w1 " + m.w1.shape_str() + " w2 " + m.w2.shape_str());
    }
}

struct Mlp2Activations {
    Matrix pre_hidden;  // x W1 + b1
    Matrix hidden;      // GELU(pre_hidden)
    Matrix output;      // hidden W2 + b2
};

inline Mlp2Activations mlp2_forward_cached(const Matrix& x, const Mlp2& m, FlopCounter* flops = nullptr) {
    check_mlp_shapes(m);
    if (x.cols() != m.in_dim()) {
        throw ShapeError("mlp2: input " + x.shape_str() + " does not match w1 " + m.w1.shape_str());
    }
    Mlp2Activations act;
    act.pre_hidden = matmul(x, m.w1, flops);
    add_row_bias(act.pre_hidden, m.b1, flops);
    act.hidden = gelu(act.pre_hidden, flops);
    act.output = matmul(act.hidden, m.w2, flops);
    add_row_bias(act.output, m.b2, flops);
    return act;
}

/// Raw (pre-sigmoid) outputs.
inline Matrix mlp2_forward(const Matrix& x, const Mlp2& m, FlopCounter* flops = nullptr) {
    return mlp2_forward_cached(x, m, flops).output;
}

/// Sigmoid scores of a single-output classifier, one per input row.
inline std::vector<double> mlp2_scores(const Matrix& x, const Mlp2& m, FlopCounter* flops = nullptr) {
    if (m.out_dim() != 1) {
        throw ShapeError("mlp2_scores: classifier must have one output, has " + std::to_string(m.out_dim()));
    }
    const Matrix z = mlp2_forward(x, m, flops);
    std::vector<double> s(z.rows());
    for (std::size_t i = 0; i < s.size(); ++i) {
        s[i] = sigmoid(z(i, 0));
    }
    charge(flops, kActivationFlopsPerElement * s.size());
    return s;
}

struct Mlp2Gradients {
    Matrix w1;
    std::vector<double> b1;
    Matrix w2;
    std::vector<double> b2;
    Matrix input;
    double loss = 0.0;
};

/// Weighted binary cross-entropy on the sigmoid of a single-output MLP,
/// normalized by the total sample weight:
///   L = sum_i w_i * (softplus(z_i) - y_i z_i) / sum_i w_i
/// Returns the loss and its analytic gradients w.r.t. every weight and input.
/// Empty `sample_weights` means uniform weights.
inline Mlp2Gradients mlp2_backward(const Matrix& x, const Mlp2& m, std::span<const double> labels,
                                   std::span<const double> sample_weights = {}) {
    if (m.out_dim() != 1) {
        throw ShapeError("mlp2_backward: classifier must have one output");
    }
    if (labels.size() != x.rows()) {
        throw ShapeError("mlp2_backward: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(x.rows()) + " rows");
    }
    if (!sample_weights.empty() && sample_weights.size() != x.rows()) {
        throw ShapeError("mlp2_backward: sample weight count mismatch");
    }
    const Mlp2Activations act = mlp2_forward_cached(x, m);
    const std::size_t n = x.rows();
    const std::size_t hidden = m.hidden_dim();

    double total_weight = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        total_weight += sample_weights.empty() ? 1.0 : sample_weights[i];
    }

    Mlp2Gradients g;
    Matrix dz(n, 1);
    for (std::size_t i = 0; i < n; ++i) {
        const double w = (sample_weights.empty() ? 1.0 : sample_weights[i]) / total_weight;
        const double z = act.output(i, 0);
        const double softplus = z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
        g.loss += w * (softplus - labels[i] * z);
        dz(i, 0) = w * (sigmoid(z) - labels[i]);
    }

    g.w2 = matmul(transpose(act.hidden), dz);
    g.b2 = {0.0};
    for (std::size_t i = 0; i < n; ++i) {
        g.b2[0] += dz(i, 0);
    }

    Matrix dpre(n, hidden);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t h = 0; h < hidden; ++h) {
            dpre(i, h) = dz(i, 0) * m.w2(h, 0) * gelu_grad(act.pre_hidden(i, h));
        }
    }
    g.w1 = matmul(transpose(x), dpre);
    g.b1.assign(hidden, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t h = 0; h < hidden; ++h) {
            g.b1[h] += dpre(i, h);
        }
    }
    g.input = matmul(dpre, transpose(m.w1));
    return g;
}

/// Adam state for an Mlp2.
class Mlp2Adam {
public:
    explicit Mlp2Adam(const Mlp2& shape, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : m_lr(lr), m_beta1(beta1), m_beta2(beta2), m_eps(eps),
          m_m(Mlp2::zeros(shape.in_dim(), shape.hidden_dim(), shape.out_dim())), m_v(m_m) {}

    void step(Mlp2& model, const Mlp2Gradients& g) {
        ++m_t;
        const double c1 = 1.0 - std::pow(m_beta1, static_cast<double>(m_t));
        const double c2 = 1.0 - std::pow(m_beta2, static_cast<double>(m_t));
        update(model.w1.values(), g.w1.values(), m_m.w1.values(), m_v.w1.values(), c1, c2);
        update(model.b1, g.b1, m_m.b1, m_v.b1, c1, c2);
        update(model.w2.values(), g.w2.values(), m_m.w2.values(), m_v.w2.values(), c1, c2);
        update(model.b2, g.b2, m_m.b2, m_v.b2, c1, c2);
    }

private:
    void update(std::vector<double>& p, const std::vector<double>& g, std::vector<double>& m, std::vector<double>& v,
                double c1, double c2) const {
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = m_beta1 * m[i] + (1.0 - m_beta1) * g[i];
            v[i] = m_beta2 * v[i] + (1.0 - m_beta2) * g[i] * g[i];
            p[i] -= m_lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + m_eps);
        }
    }

    double m_lr;
    double m_beta1;
    double m_beta2;
    double m_eps;
    std::size_t m_t = 0;
    Mlp2 m_m;
    Mlp2 m_v;
};

}  // namespace hrvda

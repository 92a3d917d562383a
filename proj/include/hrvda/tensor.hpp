// Copyright (C) 2026 The hrvda-desk Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "hrvda/rng.hpp"

namespace hrvda {

class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// FLOP cost model. A multiply-accumulate is two FLOPs; softmax, layer norm and
// pointwise nonlinearities are charged a flat per-element cost.
inline constexpr std::uint64_t kMacFlops = 2;
inline constexpr std::uint64_t kSoftmaxFlopsPerElement = 5;
inline constexpr std::uint64_t kNormFlopsPerElement = 5;
inline constexpr std::uint64_t kActivationFlopsPerElement = 5;
inline constexpr std::uint64_t kElementwiseFlops = 1;

/// Per-run FLOP accumulator. Never global: each run or phase owns its own.
struct FlopCounter {
    std::uint64_t flops = 0;

    void add(std::uint64_t n) { flops += n; }
};

inline void charge(FlopCounter* counter, std::uint64_t n) {
    if (counter != nullptr) {
        counter->add(n);
    }
}

/// Dense row-major matrix of doubles.
class Matrix {
public:
    Matrix() = default;

    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0) : m_rows(rows), m_cols(cols), m_data(rows * cols, fill) {}

    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
        : m_rows(rows), m_cols(cols), m_data(std::move(data)) {
        if (m_data.size() != rows * cols) {
            throw ShapeError("Matrix: data length " + std::to_string(m_data.size()) + " != " + std::to_string(rows) +
                             "x" + std::to_string(cols));
        }
    }

    Matrix(std::initializer_list<std::initializer_list<double>> rows) : m_rows(rows.size()) {
        m_cols = m_rows == 0 ? 0 : rows.begin()->size();
        m_data.reserve(m_rows * m_cols);
        for (const auto& row : rows) {
            if (row.size() != m_cols) {
                throw ShapeError("Matrix: ragged initializer");
            }
            m_data.insert(m_data.end(), row.begin(), row.end());
        }
    }

    std::size_t rows() const { return m_rows; }
    std::size_t cols() const { return m_cols; }
    std::size_t size() const { return m_data.size(); }
    bool empty() const { return m_data.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return m_data[r * m_cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return m_data[r * m_cols + c]; }

    std::span<double> row(std::size_t r) { return {m_data.data() + r * m_cols, m_cols}; }
    std::span<const double> row(std::size_t r) const { return {m_data.data() + r * m_cols, m_cols}; }

    double* data() { return m_data.data(); }
    const double* data() const { return m_data.data(); }
    const std::vector<double>& values() const { return m_data; }
    std::vector<double>& values() { return m_data; }

    std::string shape_str() const { return std::to_string(m_rows) + "x" + std::to_string(m_cols); }

    bool operator==(const Matrix&) const = default;

private:
    std::size_t m_rows = 0;
    std::size_t m_cols = 0;
    std::vector<double> m_data;
};

inline bool all_finite(const Matrix& m) {
    return std::all_of(m.values().begin(), m.values().end(), [](double v) { return std::isfinite(v); });
}

/// Uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)].
inline Matrix uniform_init(std::size_t rows, std::size_t cols, std::size_t fan_in, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    Matrix m(rows, cols);
    for (double& v : m.values()) {
        v = rng.uniform(-bound, bound);
    }
    return m;
}

inline std::vector<double> uniform_init(std::size_t n, std::size_t fan_in, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::vector<double> v(n);
    for (double& x : v) {
        x = rng.uniform(-bound, bound);
    }
    return v;
}

inline Matrix matmul(const Matrix& a, const Matrix& b, FlopCounter* flops = nullptr) {
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul: shape mismatch " + a.shape_str() + " x " + b.shape_str());
    }
    Matrix out(a.rows(), b.cols());
    const std::size_t n = a.cols();
    const std::size_t m = b.cols();
    for (std::size_t i = 0; i < a.rows(); ++i) {
        double* dst = out.data() + i * m;
        const double* arow = a.data() + i * n;
        for (std::size_t k = 0; k < n; ++k) {
            const double aik = arow[k];
            const double* brow = b.data() + k * m;
            for (std::size_t j = 0; j < m; ++j) {
                dst[j] += aik * brow[j];
            }
        }
    }
    charge(flops, kMacFlops * a.rows() * a.cols() * b.cols());
    return out;
}

inline Matrix transpose(const Matrix& a) {
    Matrix t(a.cols(), a.rows());
    for (std::size_t r = 0; r < a.rows(); ++r) {
        for (std::size_t c = 0; c < a.cols(); ++c) {
            t(c, r) = a(r, c);
        }
    }
    return t;
}

/// a * b^T without materializing the transpose.
inline Matrix matmul_nt(const Matrix& a, const Matrix& b, FlopCounter* flops = nullptr) {
    if (a.cols() != b.cols()) {
        throw ShapeError("matmul_nt: shape mismatch " + a.shape_str() + " x " + b.shape_str() + "^T");
    }
    Matrix out(a.rows(), b.rows());
    const std::size_t d = a.cols();
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const double* arow = a.data() + i * d;
        for (std::size_t j = 0; j < b.rows(); ++j) {
            const double* brow = b.data() + j * d;
            double acc = 0.0;
            for (std::size_t k = 0; k < d; ++k) {
                acc += arow[k] * brow[k];
            }
            out(i, j) = acc;
        }
    }
    charge(flops, kMacFlops * a.rows() * b.rows() * d);
    return out;
}

inline void add_inplace(Matrix& a, const Matrix& b, FlopCounter* flops = nullptr) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw ShapeError("add: shape mismatch " + a.shape_str() + " + " + b.shape_str());
    }
    for (std::size_t i = 0; i < a.size(); ++i) {
        a.data()[i] += b.data()[i];
    }
    charge(flops, kElementwiseFlops * a.size());
}

inline void add_row_bias(Matrix& a, std::span<const double> bias, FlopCounter* flops = nullptr) {
    if (bias.size() != a.cols()) {
        throw ShapeError("bias length " + std::to_string(bias.size()) + " != cols " + std::to_string(a.cols()));
    }
    for (std::size_t r = 0; r < a.rows(); ++r) {
        auto row = a.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) {
            row[c] += bias[c];
        }
    }
    charge(flops, kElementwiseFlops * a.size());
}

inline Matrix scaled(const Matrix& a, double s) {
    Matrix out = a;
    for (double& v : out.values()) {
        v *= s;
    }
    return out;
}

/// Copies the listed rows of `a` into a new matrix, in order.
inline Matrix gather_rows(const Matrix& a, std::span<const std::size_t> rows) {
    Matrix out(rows.size(), a.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        std::copy_n(a.data() + rows[i] * a.cols(), a.cols(), out.data() + i * a.cols());
    }
    return out;
}

/// Stacks `a` over `b`.
inline Matrix vconcat(const Matrix& a, const Matrix& b) {
    if (!a.empty() && !b.empty() && a.cols() != b.cols()) {
        throw ShapeError("vconcat: column mismatch " + a.shape_str() + " / " + b.shape_str());
    }
    const std::size_t cols = a.empty() ? b.cols() : a.cols();
    Matrix out(a.rows() + b.rows(), cols);
    std::copy(a.values().begin(), a.values().end(), out.values().begin());
    std::copy(b.values().begin(), b.values().end(), out.values().begin() + static_cast<std::ptrdiff_t>(a.size()));
    return out;
}

/// Stacks all parts in order.
inline Matrix vconcat_all(const std::vector<Matrix>& parts) {
    std::size_t rows = 0;
    std::size_t cols = 0;
    for (const auto& m : parts) {
        if (m.empty()) {
            continue;
        }
        if (rows > 0 && m.cols() != cols) {
            throw ShapeError("vconcat: column mismatch " + m.shape_str());
        }
        cols = m.cols();
        rows += m.rows();
    }
    Matrix out(rows, cols);
    std::size_t offset = 0;
    for (const auto& m : parts) {
        std::copy(m.values().begin(), m.values().end(), out.values().begin() + static_cast<std::ptrdiff_t>(offset));
        offset += m.size();
    }
    return out;
}

inline Matrix slice_rows(const Matrix& a, std::size_t begin, std::size_t end) {
    Matrix out(end - begin, a.cols());
    std::copy_n(a.data() + begin * a.cols(), out.size(), out.data());
    return out;
}

/// Row-wise softmax with max subtraction.
inline Matrix softmax_rows(const Matrix& a, FlopCounter* flops = nullptr) {
    Matrix out(a.rows(), a.cols());
    for (std::size_t r = 0; r < a.rows(); ++r) {
        auto in = a.row(r);
        auto dst = out.row(r);
        if (in.empty()) {
            continue;
        }
        const double mx = *std::max_element(in.begin(), in.end());
        double sum = 0.0;
        for (std::size_t c = 0; c < in.size(); ++c) {
            dst[c] = std::exp(in[c] - mx);
            sum += dst[c];
        }
        for (double& v : dst) {
            v /= sum;
        }
    }
    charge(flops, kSoftmaxFlopsPerElement * a.size());
    return out;
}

inline Matrix layernorm(const Matrix& a, std::span<const double> gamma, std::span<const double> beta, double eps,
                        FlopCounter* flops = nullptr) {
    if (gamma.size() != a.cols() || beta.size() != a.cols()) {
        throw ShapeError("layernorm: affine length mismatch for " + a.shape_str());
    }
    Matrix out(a.rows(), a.cols());
    const double n = static_cast<double>(a.cols());
    for (std::size_t r = 0; r < a.rows(); ++r) {
        auto in = a.row(r);
        auto dst = out.row(r);
        double mean = 0.0;
        for (double v : in) {
            mean += v;
        }
        mean /= n;
        double var = 0.0;
        for (double v : in) {
            var += (v - mean) * (v - mean);
        }
        var /= n;
        const double inv = 1.0 / std::sqrt(var + eps);
        for (std::size_t c = 0; c < in.size(); ++c) {
            dst[c] = (in[c] - mean) * inv * gamma[c] + beta[c];
        }
    }
    charge(flops, kNormFlopsPerElement * a.size());
    return out;
}

/// softmax(q k^T / sqrt(d)) v. Charges 2*nq*nk*d for the scores and 2*nq*nk*dv
/// for the value mix; softmax is charged per score element.
inline Matrix attention(const Matrix& q, const Matrix& k, const Matrix& v, FlopCounter* flops = nullptr) {
    if (q.cols() != k.cols()) {
        throw ShapeError("attention: q " + q.shape_str() + " and k " + k.shape_str() + " disagree on width");
    }
    if (k.rows() != v.rows()) {
        throw ShapeError("attention: k " + k.shape_str() + " and v " + v.shape_str() + " disagree on length");
    }
    Matrix scores = matmul_nt(q, k, flops);
    const double scale = 1.0 / std::sqrt(static_cast<double>(q.cols()));
    for (double& s : scores.values()) {
        s *= scale;
    }
    return matmul(softmax_rows(scores, flops), v, flops);
}

inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0)); }

inline double gelu_grad(double x) {
    const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
    const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
    return cdf + x * pdf;
}

inline double sigmoid(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

inline Matrix gelu(const Matrix& a, FlopCounter* flops = nullptr) {
    Matrix out = a;
    for (double& v : out.values()) {
        v = gelu(v);
    }
    charge(flops, kActivationFlopsPerElement * a.size());
    return out;
}

/// x W + b with W stored as (in x out).
struct Linear {
    Matrix weight;
    std::vector<double> bias;

    std::size_t in_dim() const { return weight.rows(); }
    std::size_t out_dim() const { return weight.cols(); }

    static Linear init(std::size_t in, std::size_t out, Rng& rng, bool with_bias = true) {
        Linear l{uniform_init(in, out, in, rng), {}};
        l.bias = with_bias ? uniform_init(out, in, rng) : std::vector<double>(out, 0.0);
        return l;
    }

    Matrix forward(const Matrix& x, FlopCounter* flops = nullptr) const {
        Matrix y = matmul(x, weight, flops);
        add_row_bias(y, bias, flops);
        return y;
    }
};

/// Layer norm affine parameters; identity at construction.
struct NormParams {
    std::vector<double> gamma;
    std::vector<double> beta;

    static NormParams identity(std::size_t dim) { return {std::vector<double>(dim, 1.0), std::vector<double>(dim, 0.0)}; }

    Matrix apply(const Matrix& x, FlopCounter* flops = nullptr) const { return layernorm(x, gamma, beta, 1e-5, flops); }
};

}  // namespace hrvda

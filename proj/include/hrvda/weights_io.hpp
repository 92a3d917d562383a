// Copyright (C) 2026 The hrvda-desk Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <stdexcept>
#include <string>
#include <vector>

#include "hrvda/content_filter.hpp"
#include "hrvda/instruction_filter.hpp"

namespace hrvda {

// Weight file layout (all integers u32 little-endian, all weights f64 little-endian):
//
//   "HRVD" | version | kind | n_dims | dims[n_dims] | n_tensors |
//   (rows, cols)[n_tensors] | weights of every tensor, row-major, in order
//
// kind 1 (detector): dims = patch, channels, embed_dim, hidden
//   tensors = embed.W, embed.b, w1, b1, w2, b2
// kind 2 (IFM):      dims = dim, hidden, mlp_ratio, position_encoding
//   tensors = embedding, norm1.gamma, norm1.beta, q.W, q.b, k.W, k.b, v.W, v.b,
//             o.W, o.b, norm2.gamma, norm2.beta, fc1.W, fc1.b, fc2.W, fc2.b,
//             w1 (2*dim x hidden), b1, w2, b2
// Vectors are stored as 1 x n tensors.

inline constexpr std::uint32_t kWeightFileVersion = 1;
inline constexpr std::uint32_t kDetectorKind = 1;
inline constexpr std::uint32_t kIfmKind = 2;

class WeightFileError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace detail {

class WeightWriter {
public:
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) {
            m_bytes.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
        }
    }

    void f64(double v) {
        const auto bits = std::bit_cast<std::uint64_t>(v);
        for (int i = 0; i < 8; ++i) {
            m_bytes.push_back(static_cast<char>((bits >> (8 * i)) & 0xFFu));
        }
    }

    void tensor(const Matrix& m) { m_tensors.push_back(m); }
    void tensor(const std::vector<double>& v) { m_tensors.emplace_back(1, v.size(), v); }

    void save(const std::string& path, std::uint32_t kind, const std::vector<std::uint32_t>& dims) {
        m_bytes.insert(m_bytes.end(), {'H', 'R', 'V', 'D'});
        u32(kWeightFileVersion);
        u32(kind);
        u32(static_cast<std::uint32_t>(dims.size()));
        for (auto d : dims) {
            u32(d);
        }
        u32(static_cast<std::uint32_t>(m_tensors.size()));
        for (const auto& t : m_tensors) {
            u32(static_cast<std::uint32_t>(t.rows()));
            u32(static_cast<std::uint32_t>(t.cols()));
        }
        for (const auto& t : m_tensors) {
            for (double v : t.values()) {
                f64(v);
            }
        }
        std::ofstream out(path, std::ios::binary);
        if (!out) {
            throw WeightFileError("cannot open '" + path + "' for writing");
        }
        out.write(m_bytes.data(), static_cast<std::streamsize>(m_bytes.size()));
        if (!out) {
            throw WeightFileError("write failed for '" + path + "'");
        }
    }

private:
    std::vector<char> m_bytes;
    std::vector<Matrix> m_tensors;
};

class WeightReader {
public:
    WeightReader(const std::string& path, std::uint32_t expected_kind) : m_path(path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) {
            throw WeightFileError("cannot open weight file '" + path + "'");
        }
        m_bytes.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
        if (m_bytes.size() < 4 || std::memcmp(m_bytes.data(), "HRVD", 4) != 0) {
            throw WeightFileError("'" + path + "' is not an HRVD weight file");
        }
        m_pos = 4;
        if (const auto version = u32(); version != kWeightFileVersion) {
            throw WeightFileError("'" + path + "': unsupported version " + std::to_string(version));
        }
        if (const auto kind = u32(); kind != expected_kind) {
            throw WeightFileError("'" + path + "': holds model kind " + std::to_string(kind) + ", expected " +
                                  std::to_string(expected_kind));
        }
        const auto n_dims = u32();
        for (std::uint32_t i = 0; i < n_dims; ++i) {
            m_dims.push_back(u32());
        }
        const auto n_tensors = u32();
        std::vector<std::pair<std::uint32_t, std::uint32_t>> shapes;
        for (std::uint32_t i = 0; i < n_tensors; ++i) {
            const auto r = u32();
            const auto c = u32();
            shapes.emplace_back(r, c);
        }
        for (const auto& [r, c] : shapes) {
            need(static_cast<std::size_t>(r) * c * 8);
            std::vector<double> data(static_cast<std::size_t>(r) * c);
            for (double& v : data) {
                v = f64();
            }
            m_tensors.emplace_back(r, c, std::move(data));
        }
        if (m_pos != m_bytes.size()) {
            throw WeightFileError("'" + path + "': trailing bytes after weights");
        }
    }

    const std::vector<std::uint32_t>& dims() const { return m_dims; }

    Matrix matrix(std::size_t rows, std::size_t cols) {
        if (m_next >= m_tensors.size()) {
            throw WeightFileError("'" + m_path + "': too few tensors");
        }
        Matrix m = std::move(m_tensors[m_next++]);
        if (m.rows() != rows || m.cols() != cols) {
            throw WeightFileError("'" + m_path + "': tensor " + std::to_string(m_next - 1) + " is " + m.shape_str() +
                                  ", expected " + std::to_string(rows) + "x" + std::to_string(cols));
        }
        return m;
    }

    std::vector<double> vector(std::size_t n) { return matrix(1, n).values(); }

    void finish() const {
        if (m_next != m_tensors.size()) {
            throw WeightFileError("'" + m_path + "': unexpected extra tensors");
        }
    }

private:
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            v |= static_cast<std::uint32_t>(static_cast<unsigned char>(m_bytes[m_pos++])) << (8 * i);
        }
        return v;
    }

    double f64() {
        need(8);
        std::uint64_t bits = 0;
        for (int i = 0; i < 8; ++i) {
            bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(m_bytes[m_pos++])) << (8 * i);
        }
        return std::bit_cast<double>(bits);
    }

    void need(std::size_t n) const {
        if (m_pos + n > m_bytes.size()) {
            throw WeightFileError("'" + m_path + "': truncated");
        }
    }

    std::string m_path;
    std::vector<char> m_bytes;
    std::size_t m_pos = 0;
    std::vector<std::uint32_t> m_dims;
    std::vector<Matrix> m_tensors;
    std::size_t m_next = 0;
};

inline void write_linear(WeightWriter& w, const Linear& l) {
    w.tensor(l.weight);
    w.tensor(l.bias);
}

inline Linear read_linear(WeightReader& r, std::size_t in, std::size_t out) {
    Linear l;
    l.weight = r.matrix(in, out);
    l.bias = r.vector(out);
    return l;
}

inline void write_mlp(WeightWriter& w, const Mlp2& m) {
    w.tensor(m.w1);
    w.tensor(m.b1);
    w.tensor(m.w2);
    w.tensor(m.b2);
}

inline Mlp2 read_mlp(WeightReader& r, std::size_t in, std::size_t hidden, std::size_t out) {
    Mlp2 m;
    m.w1 = r.matrix(in, hidden);
    m.b1 = r.vector(hidden);
    m.w2 = r.matrix(hidden, out);
    m.b2 = r.vector(out);
    return m;
}

}  // namespace detail

inline void save_detector(const DetectorModel& model, const std::string& path) {
    if (model.variant != DetectorVariant::mlp) {
        throw std::invalid_argument("only the mlp detector has weights to save");
    }
    detail::WeightWriter w;
    detail::write_linear(w, model.embed.proj);
    detail::write_mlp(w, model.mlp);
    w.save(path, kDetectorKind,
           {static_cast<std::uint32_t>(model.embed.patch), static_cast<std::uint32_t>(model.embed.channels),
            static_cast<std::uint32_t>(model.embed.dim()), static_cast<std::uint32_t>(model.mlp.hidden_dim())});
}

inline DetectorModel load_detector(const std::string& path) {
    detail::WeightReader r(path, kDetectorKind);
    if (r.dims().size() != 4) {
        throw WeightFileError("'" + path + "': detector header needs 4 dims");
    }
    const auto patch = r.dims()[0];
    const auto channels = r.dims()[1];
    const auto embed_dim = r.dims()[2];
    const auto hidden = r.dims()[3];
    DetectorModel m;
    m.variant = DetectorVariant::mlp;
    m.embed.patch = static_cast<int>(patch);
    m.embed.channels = static_cast<int>(channels);
    m.embed.proj = detail::read_linear(r, static_cast<std::size_t>(patch) * patch * channels, embed_dim);
    m.mlp = detail::read_mlp(r, embed_dim, hidden, 1);
    r.finish();
    return m;
}

inline void save_ifm(const IfmModel& model, const std::string& path) {
    detail::WeightWriter w;
    const BlockWeights& f = model.fusion;
    w.tensor(model.embedding);
    w.tensor(f.norm1.gamma);
    w.tensor(f.norm1.beta);
    for (const Linear* l : {&f.q, &f.k, &f.v, &f.o}) {
        detail::write_linear(w, *l);
    }
    w.tensor(f.norm2.gamma);
    w.tensor(f.norm2.beta);
    detail::write_linear(w, f.fc1);
    detail::write_linear(w, f.fc2);
    detail::write_mlp(w, model.classifier);
    w.save(path, kIfmKind,
           {static_cast<std::uint32_t>(model.dim()), static_cast<std::uint32_t>(model.classifier.hidden_dim()),
            static_cast<std::uint32_t>(f.fc1.out_dim() / model.dim()), model.position_encoding ? 1u : 0u});
}

inline IfmModel load_ifm(const std::string& path) {
    detail::WeightReader r(path, kIfmKind);
    if (r.dims().size() != 4) {
        throw WeightFileError("'" + path + "': IFM header needs 4 dims");
    }
    const std::size_t dim = r.dims()[0];
    const std::size_t hidden = r.dims()[1];
    const std::size_t ratio = r.dims()[2];
    IfmModel m;
    m.position_encoding = r.dims()[3] != 0;
    m.embedding = r.matrix(kInstructionVocab, dim);
    BlockWeights& f = m.fusion;
    f.norm1.gamma = r.vector(dim);
    f.norm1.beta = r.vector(dim);
    f.q = detail::read_linear(r, dim, dim);
    f.k = detail::read_linear(r, dim, dim);
    f.v = detail::read_linear(r, dim, dim);
    f.o = detail::read_linear(r, dim, dim);
    f.norm2.gamma = r.vector(dim);
    f.norm2.beta = r.vector(dim);
    f.fc1 = detail::read_linear(r, dim, dim * ratio);
    f.fc2 = detail::read_linear(r, dim * ratio, dim);
    m.classifier = detail::read_mlp(r, 2 * dim, hidden, 1);
    r.finish();
    return m;
}

}  // namespace hrvda

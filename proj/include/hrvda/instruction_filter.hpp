// Copyright (C) 2026 The hrvda-desk Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "hrvda/content_filter.hpp"
#include "hrvda/encoder.hpp"
#include "hrvda/mlp.hpp"
#include "hrvda/synthdoc.hpp"
#include "hrvda/tensor.hpp"

namespace hrvda {

/// Instruction filtering module: one fusion transformer layer over the
/// concatenated visual and instruction tokens, then a 2-layer MLP that scores
/// each fused visual token for instruction relevance. The classifier reads the
/// fused visual token next to the mean of the fused instruction tokens, since
/// the frozen fusion layer alone mixes too little instruction signal into V'.
struct IfmModel {
    Matrix embedding;  // kInstructionVocab x dim lookup table
    BlockWeights fusion;
    Mlp2 classifier;
    double eps_i = 0.5;
    bool position_encoding = true;

    std::size_t dim() const { return embedding.cols(); }

    static IfmModel init(std::size_t dim, std::uint64_t seed, std::size_t hidden = 64, std::size_t mlp_ratio = 4) {
        if (dim == 0 || dim % 4 != 0) {
            throw std::invalid_argument("IFM dim must be a positive multiple of 4");
        }
        Rng rng(seed);
        IfmModel m;
        m.embedding = Matrix(kInstructionVocab, dim);
        for (double& v : m.embedding.values()) {
            v = rng.uniform(-1.0, 1.0);
        }
        m.fusion = BlockWeights::init(dim, mlp_ratio, rng);
        m.classifier = Mlp2::init(2 * dim, hidden, 1, rng);
        return m;
    }
};

/// Sinusoidal code of one coordinate into `out` (even length).
inline void sinusoid(double pos, std::span<double> out) {
    const std::size_t n = out.size();
    for (std::size_t i = 0; i + 1 < n; i += 2) {
        const double freq = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(n));
        out[i] = std::sin(pos * freq);
        out[i + 1] = std::cos(pos * freq);
    }
}

/// Adds a 2-D sinusoidal code of each token's grid position (row code in the
/// first half of the channels, column code in the second). No-op when the
/// model has position encodings disabled.
inline Matrix add_visual_positions(const IfmModel& model, const Matrix& visual, std::span<const std::size_t> positions,
                                   std::size_t grid_cols) {
    if (positions.size() != visual.rows()) {
        throw ShapeError("add_visual_positions: " + std::to_string(positions.size()) + " positions for " +
                         std::to_string(visual.rows()) + " tokens");
    }
    Matrix out = visual;
    if (!model.position_encoding) {
        return out;
    }
    const std::size_t half = visual.cols() / 2;
    std::vector<double> code(half);
    for (std::size_t i = 0; i < positions.size(); ++i) {
        auto row = out.row(i);
        sinusoid(static_cast<double>(positions[i] / grid_cols), code);
        for (std::size_t c = 0; c < half; ++c) {
            row[c] += code[c];
        }
        sinusoid(static_cast<double>(positions[i] % grid_cols), code);
        for (std::size_t c = 0; c < half; ++c) {
            row[half + c] += code[c];
        }
    }
    return out;
}

/// Looks up instruction token embeddings, plus a 1-D sinusoidal code of the
/// token index when position encodings are enabled.
inline Matrix embed_instruction(const IfmModel& model, const InstructionSpec& instr) {
    if (instr.token_ids.empty() || instr.token_ids.size() > static_cast<std::size_t>(kMaxInstructionLength)) {
        throw std::invalid_argument("instruction must hold between 1 and " + std::to_string(kMaxInstructionLength) +
                                    " tokens");
    }
    Matrix out(instr.token_ids.size(), model.dim());
    std::vector<double> code(model.dim());
    for (std::size_t i = 0; i < instr.token_ids.size(); ++i) {
        const int id = instr.token_ids[i];
        if (id < 0 || id >= kInstructionVocab) {
            throw std::invalid_argument("instruction token id " + std::to_string(id) + " outside vocabulary");
        }
        auto row = out.row(i);
        auto src = model.embedding.row(static_cast<std::size_t>(id));
        std::copy(src.begin(), src.end(), row.begin());
        if (model.position_encoding) {
            sinusoid(static_cast<double>(i), code);
            for (std::size_t c = 0; c < row.size(); ++c) {
                row[c] += code[c];
            }
        }
    }
    return out;
}

struct FuseResult {
    Matrix visual;       // V'
    Matrix instruction;  // I'
};

/// [V', I'] = FFN(SA([V, I])) with pre-norm residual connections.
inline FuseResult fuse(const IfmModel& model, const Matrix& visual, const Matrix& instruction,
                       FlopCounter* flops = nullptr) {
    if (instruction.rows() == 0) {
        throw std::invalid_argument("fuse: instruction sequence must be non-empty");
    }
    if (instruction.cols() != model.dim() || (visual.rows() > 0 && visual.cols() != model.dim())) {
        throw ShapeError("fuse: visual " + visual.shape_str() + " / instruction " + instruction.shape_str() +
                         " do not match IFM dim " + std::to_string(model.dim()));
    }
    const BlockWeights& f = model.fusion;
    const Matrix x = vconcat(visual, instruction);
    const Matrix xn = f.norm1.apply(x, flops);
    Matrix y = f.o.forward(attention(f.q.forward(xn, flops), f.k.forward(xn, flops), f.v.forward(xn, flops), flops), flops);
    add_inplace(y, x, flops);
    Matrix z = f.fc2.forward(gelu(f.fc1.forward(f.norm2.apply(y, flops), flops), flops), flops);
    add_inplace(z, y, flops);
    return {slice_rows(z, 0, visual.rows()), slice_rows(z, visual.rows(), z.rows())};
}

struct FilterResult {
    std::vector<std::size_t> kept_indices;  // original positions, ascending
    std::vector<double> relevance_scores;   // one per input visual token
    Matrix kept_tokens;
};

/// Classifier input: row i is [V'_i, mean(I')].
inline Matrix classifier_features(const FuseResult& fused, FlopCounter* flops = nullptr) {
    const std::size_t n = fused.visual.rows();
    const std::size_t d = fused.instruction.cols();
    std::vector<double> pooled(d, 0.0);
    for (std::size_t t = 0; t < fused.instruction.rows(); ++t) {
        for (std::size_t c = 0; c < d; ++c) {
            pooled[c] += fused.instruction(t, c);
        }
    }
    for (double& v : pooled) {
        v /= static_cast<double>(fused.instruction.rows());
    }
    charge(flops, static_cast<std::uint64_t>(fused.instruction.rows() + 1) * d * kElementwiseFlops);
    Matrix out(n, 2 * d);
    for (std::size_t i = 0; i < n; ++i) {
        auto src = fused.visual.row(i);
        auto dst = out.row(i);
        std::copy(src.begin(), src.end(), dst.begin());
        std::copy(pooled.begin(), pooled.end(), dst.begin() + static_cast<std::ptrdiff_t>(d));
    }
    return out;
}

/// Scores every fused visual token and keeps those with score >= eps.
/// `positions` maps rows to original grid positions; empty means row index.
inline FilterResult filter(const IfmModel& model, const FuseResult& fused, double eps,
                           std::span<const std::size_t> positions = {}, FlopCounter* flops = nullptr) {
    const Matrix& visual = fused.visual;
    if (!positions.empty() && positions.size() != visual.rows()) {
        throw ShapeError("filter: position list does not match token count");
    }
    FilterResult r;
    if (visual.rows() == 0) {
        r.kept_tokens = Matrix(0, model.dim());
        return r;
    }
    r.relevance_scores = mlp2_scores(classifier_features(fused, flops), model.classifier, flops);
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < r.relevance_scores.size(); ++i) {
        if (r.relevance_scores[i] >= eps) {
            rows.push_back(i);
            r.kept_indices.push_back(positions.empty() ? i : positions[i]);
        }
    }
    r.kept_tokens = gather_rows(visual, rows);
    return r;
}

inline FilterResult filter(const IfmModel& model, const FuseResult& fused) { return filter(model, fused, model.eps_i); }

/// One training example for the classifier: visual tokens as they enter the
/// IFM (projected, position-coded), the instruction, and per-token relevance.
struct IfmSample {
    Matrix visual;
    InstructionSpec instruction;
    std::vector<double> labels;
};

struct IfmTrainResult {
    IfmModel model;
    double initial_loss = 0.0;
    std::vector<double> loss_curve;
};

/// Classifier features of every sample, stacked, with matching labels.
inline std::pair<Matrix, std::vector<double>> fused_training_set(const IfmModel& model,
                                                                 const std::vector<IfmSample>& samples) {
    std::vector<Matrix> parts;
    std::vector<double> labels;
    for (const auto& s : samples) {
        if (s.labels.size() != s.visual.rows()) {
            throw ShapeError("IFM sample: label count does not match visual tokens");
        }
        if (s.visual.rows() == 0) {
            continue;
        }
        parts.push_back(classifier_features(fuse(model, s.visual, embed_instruction(model, s.instruction))));
        labels.insert(labels.end(), s.labels.begin(), s.labels.end());
    }
    return {vconcat_all(parts), std::move(labels)};
}

/// Fits the relevance classifier. The fusion layer stays frozen at its seeded
/// init, so features are computed once and only the classifier MLP is fitted.
inline IfmTrainResult train_ifm(const IfmModel& model, const std::vector<IfmSample>& samples, const TrainOptions& opt) {
    auto [features, labels] = fused_training_set(model, samples);
    if (labels.empty()) {
        throw std::invalid_argument("train_ifm: no visual tokens in the training samples");
    }
    TrainResult r = train_classifier(model.classifier, features, labels, opt);
    IfmTrainResult out{model, r.initial_loss, std::move(r.loss_curve)};
    out.model.classifier = std::move(r.model);
    return out;
}

}  // namespace hrvda

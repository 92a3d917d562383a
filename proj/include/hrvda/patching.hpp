// Copyright (C) 2026 The hrvda-desk Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "hrvda/synthdoc.hpp"
#include "hrvda/tensor.hpp"

namespace hrvda {

/// Per-token content probabilities, aligned to a TokenGrid.
struct ProbabilityMap {
    std::vector<double> values;
    bool binarized = false;

    std::size_t size() const { return values.size(); }
    bool operator==(const ProbabilityMap&) const = default;

    static ProbabilityMap ones(std::size_t n) { return {std::vector<double>(n, 1.0), true}; }
};

/// Spatially indexed token sequence. Token (r, c) lives at row r * cols + c.
struct TokenGrid {
    std::size_t rows = 0;
    std::size_t cols = 0;
    Matrix tokens;
    ProbabilityMap probs;
    int stage = 1;

    std::size_t size() const { return rows * cols; }
    std::size_t dim() const { return tokens.cols(); }
    std::size_t index(std::size_t r, std::size_t c) const { return r * cols + c; }
    std::pair<std::size_t, std::size_t> position(std::size_t i) const { return {i / cols, i % cols}; }

    void validate() const {
        if (tokens.rows() != rows * cols) {
            throw ShapeError("TokenGrid: " + std::to_string(tokens.rows()) + " tokens for a " + std::to_string(rows) +
                             "x" + std::to_string(cols) + " grid");
        }
        if (probs.size() != rows * cols) {
            throw ShapeError("TokenGrid: probability map length " + std::to_string(probs.size()) + " != " +
                             std::to_string(rows * cols));
        }
    }
};

/// Linear patch embedding: each flattened patch (patch * patch * channels
/// values, row-major, channels innermost) maps to one d-dimensional token.
struct PatchEmbed {
    int patch = 4;
    int channels = 1;
    Linear proj;

    std::size_t dim() const { return proj.out_dim(); }

    static PatchEmbed init(int patch, int channels, std::size_t dim, Rng& rng) {
        const auto in = static_cast<std::size_t>(patch * patch * channels);
        return {patch, channels, Linear::init(in, dim, rng)};
    }
};

inline void check_patch_divides(const ImageTensor& img, int patch) {
    if (patch <= 0 || img.height % patch != 0 || img.width % patch != 0) {
        throw std::invalid_argument("image " + std::to_string(img.height) + "x" + std::to_string(img.width) +
                                    " is not divisible by patch size " + std::to_string(patch));
    }
}

/// One row per patch, row-major over the patch grid.
inline Matrix flatten_patches(const ImageTensor& img, int patch) {
    check_patch_divides(img, patch);
    const int gh = img.height / patch;
    const int gw = img.width / patch;
    const auto width = static_cast<std::size_t>(patch * patch * img.channels);
    Matrix out(static_cast<std::size_t>(gh) * gw, width);
    for (int pr = 0; pr < gh; ++pr) {
        for (int pc = 0; pc < gw; ++pc) {
            double* dst = out.data() + (static_cast<std::size_t>(pr) * gw + pc) * width;
            for (int y = 0; y < patch; ++y) {
                for (int x = 0; x < patch; ++x) {
                    for (int c = 0; c < img.channels; ++c) {
                        *dst++ = img.at(pr * patch + y, pc * patch + x, c);
                    }
                }
            }
        }
    }
    return out;
}

inline TokenGrid partition(const ImageTensor& img, const PatchEmbed& embed, FlopCounter* flops = nullptr) {
    if (img.channels != embed.channels) {
        throw ShapeError("partition: image has " + std::to_string(img.channels) + " channels, embedding expects " +
                         std::to_string(embed.channels));
    }
    TokenGrid grid;
    grid.rows = static_cast<std::size_t>(img.height / embed.patch);
    grid.cols = static_cast<std::size_t>(img.width / embed.patch);
    grid.tokens = embed.proj.forward(flatten_patches(img, embed.patch), flops);
    grid.probs = ProbabilityMap::ones(grid.size());
    grid.stage = 1;
    return grid;
}

/// Ground-truth probabilities: 1 for labeled patches, 0 elsewhere.
inline ProbabilityMap labels_to_probs(const LabeledImage& img, int patch) {
    const auto labels = img.patch_labels(patch);
    ProbabilityMap p;
    p.values.reserve(labels.size());
    for (auto l : labels) {
        p.values.push_back(l != 0 ? 1.0 : 0.0);
    }
    p.binarized = true;
    return p;
}

}  // namespace hrvda

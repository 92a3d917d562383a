// Copyright (C) 2026 The hrvda-desk Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "hrvda/content_filter.hpp"
#include "hrvda/patching.hpp"
#include "hrvda/tensor.hpp"

namespace hrvda {

// Content-gated hierarchical window-attention encoder.
//
// Each block computes h' = p * F(h) + (1 - p) * h per token, where F is a
// pre-norm window attention + FFN block. With binarized p (the default) the
// block selects between F(h) and identity, which makes two optimizations
// exact:
//   * windows whose tokens are all p = 0 skip attention entirely;
//   * inside a computed window, queries, projections and the FFN run only for
//     p = 1 rows. Inactive tokens still serve as keys and values.
// Inactive tokens keep their grid slots through every merge and are dropped
// only after the final stage.

enum class GateMode { hard, soft };

struct StageConfig {
    int depth = 2;
    int window = 8;
    bool merge_after = true;
};

struct EncoderConfig {
    int patch = 4;
    int channels = 1;
    std::size_t base_dim = 32;
    std::vector<StageConfig> stages{{2, 8, true}, {2, 8, true}, {6, 8, true}, {2, 8, false}};
    std::size_t mlp_ratio = 4;

    void validate() const {
        if (stages.empty()) {
            throw std::invalid_argument("encoder needs at least one stage");
        }
        for (std::size_t i = 0; i < stages.size(); ++i) {
            if (stages[i].depth < 1 || stages[i].window < 1) {
                throw std::invalid_argument("stage " + std::to_string(i + 1) + ": depth and window must be >= 1");
            }
            const bool last = i + 1 == stages.size();
            if (stages[i].merge_after == last) {
                throw std::invalid_argument("every stage but the last merges patches");
            }
        }
        if (patch < 1 || channels < 1 || base_dim < 1 || mlp_ratio < 1) {
            throw std::invalid_argument("encoder dimensions must be positive");
        }
    }

    std::size_t stage_dim(std::size_t stage) const { return base_dim << stage; }
};

struct BlockWeights {
    NormParams norm1;
    Linear q;
    Linear k;
    Linear v;
    Linear o;
    NormParams norm2;
    Linear fc1;
    Linear fc2;

    std::size_t dim() const { return q.in_dim(); }

    static BlockWeights init(std::size_t dim, std::size_t mlp_ratio, Rng& rng) {
        BlockWeights b;
        b.norm1 = NormParams::identity(dim);
        b.q = Linear::init(dim, dim, rng);
        b.k = Linear::init(dim, dim, rng);
        b.v = Linear::init(dim, dim, rng);
        b.o = Linear::init(dim, dim, rng);
        b.norm2 = NormParams::identity(dim);
        b.fc1 = Linear::init(dim, dim * mlp_ratio, rng);
        b.fc2 = Linear::init(dim * mlp_ratio, dim, rng);
        return b;
    }
};

/// 2x2 merge: layer norm over the four concatenated children, then a
/// bias-free reduction 4d -> 2d.
struct MergeWeights {
    NormParams norm;
    Matrix reduction;

    static MergeWeights init(std::size_t dim, Rng& rng) {
        return {NormParams::identity(4 * dim), uniform_init(4 * dim, 2 * dim, 4 * dim, rng)};
    }
};

struct EncoderStage {
    StageConfig config;
    std::vector<BlockWeights> blocks;
    std::optional<MergeWeights> merge;
};

struct EncoderModel {
    EncoderConfig config;
    PatchEmbed embed;
    std::vector<EncoderStage> stages;

    std::size_t output_dim() const { return config.stage_dim(stages.size() - 1); }

    static EncoderModel init(const EncoderConfig& config, std::uint64_t seed) {
        config.validate();
        Rng rng(seed);
        EncoderModel m;
        m.config = config;
        m.embed = PatchEmbed::init(config.patch, config.channels, config.base_dim, rng);
        for (std::size_t s = 0; s < config.stages.size(); ++s) {
            EncoderStage stage;
            stage.config = config.stages[s];
            const std::size_t dim = config.stage_dim(s);
            for (int b = 0; b < stage.config.depth; ++b) {
                stage.blocks.push_back(BlockWeights::init(dim, config.mlp_ratio, rng));
            }
            if (stage.config.merge_after) {
                stage.merge = MergeWeights::init(dim, rng);
            }
            m.stages.push_back(std::move(stage));
        }
        return m;
    }
};

/// Gated skip for one token: p * f + (1 - p) * h, computed in place into f.
/// p == 1 leaves f untouched and p == 0 copies h, so hard gating is exact.
inline void gate_blend(double p, std::span<const double> h, std::span<double> f) {
    if (p == 1.0) {
        return;
    }
    for (std::size_t i = 0; i < f.size(); ++i) {
        f[i] = p * f[i] + (1.0 - p) * h[i];
    }
}

struct WindowStats {
    std::size_t total = 0;
    std::size_t computed = 0;
    std::size_t bypassed = 0;
    std::uint64_t flops = 0;

    WindowStats& operator+=(const WindowStats& o) {
        total += o.total;
        computed += o.computed;
        bypassed += o.bypassed;
        flops += o.flops;
        return *this;
    }
};

struct PassOptions {
    GateMode gate = GateMode::hard;
    bool bypass = true;
    // Window execution order; empty means row-major.
    std::span<const std::size_t> order = {};
};

/// Window geometry for one pass over a rows x cols grid.
struct WindowLayout {
    std::size_t win_r = 0;
    std::size_t win_c = 0;
    std::size_t padded_r = 0;
    std::size_t padded_c = 0;
    std::size_t shift_r = 0;
    std::size_t shift_c = 0;

    std::size_t windows_r() const { return padded_r / win_r; }
    std::size_t windows_c() const { return padded_c / win_c; }
    std::size_t count() const { return windows_r() * windows_c(); }

    static constexpr std::size_t kPad = static_cast<std::size_t>(-1);

    /// Grid indices of window w's members (kPad for padding slots), after the
    /// cyclic shift.
    std::vector<std::size_t> members(std::size_t w, std::size_t rows, std::size_t cols) const {
        const std::size_t wy = w / windows_c();
        const std::size_t wx = w % windows_c();
        std::vector<std::size_t> out;
        out.reserve(win_r * win_c);
        for (std::size_t i = 0; i < win_r; ++i) {
            const std::size_t y = (wy * win_r + i + shift_r) % padded_r;
            for (std::size_t j = 0; j < win_c; ++j) {
                const std::size_t x = (wx * win_c + j + shift_c) % padded_c;
                out.push_back(y < rows && x < cols ? y * cols + x : kPad);
            }
        }
        return out;
    }
};

/// A window larger than the grid shrinks to the grid and is never shifted.
/// Otherwise the grid is zero-padded up to a window multiple and shifted
/// passes roll by half a window.
inline WindowLayout window_layout(std::size_t rows, std::size_t cols, std::size_t window, bool shifted) {
    if (window == 0) {
        throw std::invalid_argument("window size must be positive");
    }
    WindowLayout l;
    l.win_r = std::min(window, rows);
    l.win_c = std::min(window, cols);
    l.padded_r = (rows + l.win_r - 1) / l.win_r * l.win_r;
    l.padded_c = (cols + l.win_c - 1) / l.win_c * l.win_c;
    l.shift_r = shifted && rows > window ? l.win_r / 2 : 0;
    l.shift_c = shifted && cols > window ? l.win_c / 2 : 0;
    return l;
}

inline void check_gate(const TokenGrid& h, const ProbabilityMap& p, GateMode mode) {
    if (p.size() != h.size()) {
        throw ShapeError("gate: probability map has " + std::to_string(p.size()) + " entries for " +
                         std::to_string(h.size()) + " tokens");
    }
    if (mode == GateMode::hard) {
        for (double v : p.values) {
            if (v != 0.0 && v != 1.0) {
                throw std::invalid_argument("hard gating requires a binarized probability map");
            }
        }
    }
}

struct WindowPassResult {
    TokenGrid grid;
    WindowStats stats;
};

/// One gated block applied window by window. `gate` holds the per-token gate
/// values (binarized in hard mode).
inline WindowPassResult window_pass(const TokenGrid& h, const ProbabilityMap& gate, const BlockWeights& block,
                                    std::size_t window, bool shifted, const PassOptions& opts = {}) {
    h.validate();
    check_gate(h, gate, opts.gate);
    if (h.dim() != block.dim()) {
        throw ShapeError("window_pass: token dim " + std::to_string(h.dim()) + " != block dim " +
                         std::to_string(block.dim()));
    }
    const WindowLayout layout = window_layout(h.rows, h.cols, window, shifted);
    const std::size_t d = h.dim();

    WindowPassResult result{h, {}};
    result.stats.total = layout.count();

    std::vector<std::size_t> order(layout.count());
    if (opts.order.empty()) {
        std::iota(order.begin(), order.end(), std::size_t{0});
    } else {
        if (opts.order.size() != layout.count()) {
            throw std::invalid_argument("window order must list every window exactly once");
        }
        order.assign(opts.order.begin(), opts.order.end());
    }

    FlopCounter flops;
    for (std::size_t w : order) {
        const std::vector<std::size_t> members = layout.members(w, h.rows, h.cols);
        std::vector<std::size_t> active;  // positions within the window
        for (std::size_t i = 0; i < members.size(); ++i) {
            if (members[i] != WindowLayout::kPad && gate.values[members[i]] > 0.0) {
                active.push_back(i);
            }
        }
        if (active.empty() && opts.bypass) {
            ++result.stats.bypassed;
            continue;
        }
        ++result.stats.computed;

        Matrix x(members.size(), d);
        for (std::size_t i = 0; i < members.size(); ++i) {
            if (members[i] != WindowLayout::kPad) {
                std::copy_n(h.tokens.data() + members[i] * d, d, x.data() + i * d);
            }
        }
        const Matrix xn = block.norm1.apply(x, &flops);
        const Matrix keys = block.k.forward(xn, &flops);
        const Matrix values = block.v.forward(xn, &flops);
        if (active.empty()) {
            continue;
        }
        const Matrix queries = block.q.forward(gather_rows(xn, active), &flops);
        Matrix y = block.o.forward(attention(queries, keys, values, &flops), &flops);
        add_inplace(y, gather_rows(x, active), &flops);
        Matrix z = block.fc2.forward(gelu(block.fc1.forward(block.norm2.apply(y, &flops), &flops), &flops), &flops);
        add_inplace(z, y, &flops);

        for (std::size_t a = 0; a < active.size(); ++a) {
            const std::size_t token = members[active[a]];
            gate_blend(gate.values[token], x.row(active[a]), z.row(a));
            std::copy_n(z.data() + a * d, d, result.grid.tokens.data() + token * d);
        }
    }
    result.stats.flops = flops.flops;
    return result;
}

/// One gated block: tokens with gate 0 come back bit-identical.
inline TokenGrid gated_block(const TokenGrid& h, const ProbabilityMap& gate, const BlockWeights& block,
                             std::size_t window, bool shifted, const PassOptions& opts = {}) {
    return window_pass(h, gate, block, window, shifted, opts).grid;
}

struct MergeResult {
    TokenGrid grid;
    ProbabilityMap probs;
    std::uint64_t flops = 0;
};

/// Merged probability of each 2x2 block: the max of its four children.
inline ProbabilityMap max_merge(const ProbabilityMap& p, std::size_t rows, std::size_t cols) {
    if (rows % 2 != 0 || cols % 2 != 0) {
        throw std::invalid_argument("patch merge needs an even grid, got " + std::to_string(rows) + "x" +
                                    std::to_string(cols));
    }
    if (p.size() != rows * cols) {
        throw ShapeError("max_merge: map length does not match grid");
    }
    ProbabilityMap out;
    out.binarized = p.binarized;
    out.values.reserve(rows * cols / 4);
    for (std::size_t r = 0; r < rows; r += 2) {
        for (std::size_t c = 0; c < cols; c += 2) {
            out.values.push_back(std::max({p.values[r * cols + c], p.values[(r + 1) * cols + c],
                                           p.values[r * cols + c + 1], p.values[(r + 1) * cols + c + 1]}));
        }
    }
    return out;
}

/// Consolidates 2x2 neighbourhoods. Children are concatenated in the order
/// (0,0), (1,0), (0,1), (1,1); the merged probability is their max.
inline MergeResult merge_patches(const TokenGrid& h, const ProbabilityMap& p, const MergeWeights& weights) {
    h.validate();
    const std::size_t d = h.dim();
    if (weights.reduction.rows() != 4 * d) {
        throw ShapeError("merge_patches: reduction " + weights.reduction.shape_str() + " does not fit dim " +
                         std::to_string(d));
    }
    MergeResult out;
    out.probs = max_merge(p, h.rows, h.cols);

    const std::size_t rows = h.rows / 2;
    const std::size_t cols = h.cols / 2;
    Matrix cat(rows * cols, 4 * d);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            const std::size_t children[4] = {h.index(2 * r, 2 * c), h.index(2 * r + 1, 2 * c),
                                             h.index(2 * r, 2 * c + 1), h.index(2 * r + 1, 2 * c + 1)};
            double* dst = cat.data() + (r * cols + c) * 4 * d;
            for (std::size_t k = 0; k < 4; ++k) {
                std::copy_n(h.tokens.data() + children[k] * d, d, dst + k * d);
            }
        }
    }
    FlopCounter flops;
    out.grid.rows = rows;
    out.grid.cols = cols;
    out.grid.tokens = matmul(weights.norm.apply(cat, &flops), weights.reduction, &flops);
    out.grid.probs = out.probs;
    out.grid.stage = h.stage + 1;
    out.flops = flops.flops;
    return out;
}

struct StageStats {
    std::size_t rows = 0;
    std::size_t cols = 0;
    double eps_c = 0.0;
    std::size_t active = 0;
    WindowStats windows;
    std::uint64_t merge_flops = 0;
    std::vector<double> entry_probs;      // raw probabilities at stage entry
    std::vector<std::uint8_t> active_mask;  // binarized gate, row-major

    std::size_t positions() const { return rows * cols; }
};

struct EncodeOptions {
    GateMode gate = GateMode::hard;
    bool bypass = true;
};

struct EncodeResult {
    TokenGrid grid;                // final-stage grid, every position
    std::vector<std::size_t> kept;  // final-stage positions with gate 1, ascending
    Matrix sequence;               // kept tokens in order
    std::vector<StageStats> stages;

    std::uint64_t flops() const {
        std::uint64_t f = 0;
        for (const auto& s : stages) {
            f += s.windows.flops + s.merge_flops;
        }
        return f;
    }
};

/// Runs every stage: binarize the raw stage-entry probabilities against that
/// stage's threshold, apply `depth` gated blocks alternating regular and
/// shifted windows, then merge tokens and max-merge the raw probabilities.
/// After the last stage, positions whose gate is 0 are dropped.
inline EncodeResult encode(const EncoderModel& model, const TokenGrid& tokens, const ProbabilityMap& p0,
                           const ThresholdSchedule& sched, const EncodeOptions& opts = {}) {
    tokens.validate();
    sched.validate();
    if (sched.eps_c.size() != model.stages.size()) {
        throw std::invalid_argument("schedule has " + std::to_string(sched.eps_c.size()) + " thresholds for " +
                                    std::to_string(model.stages.size()) + " stages");
    }
    if (p0.size() != tokens.size()) {
        throw ShapeError("encode: probability map length " + std::to_string(p0.size()) + " != " +
                         std::to_string(tokens.size()) + " tokens");
    }
    EncodeResult result;
    TokenGrid grid = tokens;
    ProbabilityMap raw = p0;
    ProbabilityMap gate;

    for (std::size_t s = 0; s < model.stages.size(); ++s) {
        const EncoderStage& stage = model.stages[s];
        const ProbabilityMap binary = binarize(raw, sched.eps_c[s]);
        if (opts.gate == GateMode::hard) {
            gate = binary;
        } else {
            gate.binarized = false;
            gate.values.resize(raw.size());
            for (std::size_t i = 0; i < raw.size(); ++i) {
                gate.values[i] = binary.values[i] * raw.values[i];
            }
        }

        StageStats stats;
        stats.rows = grid.rows;
        stats.cols = grid.cols;
        stats.eps_c = sched.eps_c[s];
        stats.active = count_active(binary);
        stats.entry_probs = raw.values;
        stats.active_mask.reserve(binary.size());
        for (double v : binary.values) {
            stats.active_mask.push_back(v != 0.0 ? 1 : 0);
        }

        grid.probs = binary;
        const PassOptions pass{opts.gate, opts.bypass, {}};
        for (int b = 0; b < stage.config.depth; ++b) {
            WindowPassResult r = window_pass(grid, gate, stage.blocks[static_cast<std::size_t>(b)],
                                             static_cast<std::size_t>(stage.config.window), b % 2 == 1, pass);
            grid = std::move(r.grid);
            stats.windows += r.stats;
        }
        if (stage.merge) {
            MergeResult m = merge_patches(grid, raw, *stage.merge);
            grid = std::move(m.grid);
            raw = std::move(m.probs);
            stats.merge_flops = m.flops;
        }
        result.stages.push_back(std::move(stats));
    }

    const auto& last = result.stages.back().active_mask;
    for (std::size_t i = 0; i < last.size(); ++i) {
        if (last[i] != 0) {
            result.kept.push_back(i);
        }
    }
    grid.probs = binarize(raw, sched.eps_c.back());
    result.sequence = gather_rows(grid.tokens, result.kept);
    result.grid = std::move(grid);
    return result;
}

/// Per-stage grid sides for an input grid of `side` tokens.
inline std::vector<std::size_t> stage_sides(std::size_t side, std::size_t stages) {
    std::vector<std::size_t> out;
    for (std::size_t s = 0; s < stages; ++s) {
        out.push_back(side);
        side /= 2;
    }
    return out;
}

}  // namespace hrvda

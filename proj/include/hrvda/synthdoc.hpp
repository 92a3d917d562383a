// Copyright (C) 2026 The hrvda-desk Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "hrvda/rng.hpp"

namespace hrvda {

/// H x W x C raster with values in [0, 1], row-major, channels innermost.
struct ImageTensor {
    int height = 0;
    int width = 0;
    int channels = 1;
    std::vector<double> data;

    ImageTensor() = default;
    ImageTensor(int h, int w, int c, double fill = 0.0)
        : height(h), width(w), channels(c), data(static_cast<std::size_t>(h) * w * c, fill) {}

    double& at(int y, int x, int c = 0) { return data[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
    double at(int y, int x, int c = 0) const { return data[(static_cast<std::size_t>(y) * width + x) * channels + c]; }

    bool operator==(const ImageTensor&) const = default;
};

enum class RegionKind : int { text_line = 0, table = 1, chart_block = 2 };

inline const char* to_string(RegionKind k) {
    switch (k) {
    case RegionKind::text_line:
        return "text_line";
    case RegionKind::table:
        return "table";
    case RegionKind::chart_block:
        return "chart_block";
    }
    return "unknown";
}

inline RegionKind region_kind_from_string(const std::string& s) {
    if (s == "text_line") {
        return RegionKind::text_line;
    }
    if (s == "table") {
        return RegionKind::table;
    }
    if (s == "chart_block") {
        return RegionKind::chart_block;
    }
    throw std::invalid_argument("unknown region kind '" + s + "'");
}

struct BBox {
    int x = 0;
    int y = 0;
    int w = 0;
    int h = 0;

    long area() const { return static_cast<long>(w) * h; }
    bool intersects(const BBox& o) const { return x < o.x + o.w && o.x < x + w && y < o.y + o.h && o.y < y + h; }
    bool operator==(const BBox&) const = default;
};

struct ContentRegion {
    RegionKind kind = RegionKind::text_line;
    BBox bbox;
    std::uint64_t texture_seed = 0;

    bool operator==(const ContentRegion&) const = default;
};

struct LayoutSpec {
    int image_size = 256;
    std::vector<ContentRegion> regions;
    double background_value = 0.95;
    double target_content_fraction = 0.0;
    std::uint64_t seed = 0;

    bool operator==(const LayoutSpec&) const = default;
};

/// Thrown when a layout cannot realize its target content fraction.
class InfeasibleLayout : public std::runtime_error {
public:
    InfeasibleLayout(double target, double achieved)
        : std::runtime_error("layout cannot reach content fraction " + std::to_string(target) + " (achieved " +
                             std::to_string(achieved) + ")"),
          m_target(target), m_achieved(achieved) {}

    double target() const { return m_target; }
    double achieved() const { return m_achieved; }

private:
    double m_target;
    double m_achieved;
};

inline constexpr double kBackgroundNoiseAmplitude = 0.02;
inline constexpr double kContentFractionTolerance = 0.05;
inline constexpr int kRelevanceMarginPx = 8;

/// Rendered page with a per-pixel ground-truth content mask.
struct LabeledImage {
    ImageTensor image;
    std::vector<std::uint8_t> content_mask;  // height * width, 1 on region pixels
    LayoutSpec layout;

    int size() const { return image.width; }

    double content_fraction() const {
        const auto n = std::count(content_mask.begin(), content_mask.end(), std::uint8_t{1});
        return static_cast<double>(n) / static_cast<double>(content_mask.size());
    }

    /// Per-patch label: true iff any content pixel falls in the patch. Row-major over the patch grid.
    std::vector<std::uint8_t> patch_labels(int patch) const {
        if (patch <= 0 || image.width % patch != 0 || image.height % patch != 0) {
            throw std::invalid_argument("patch size " + std::to_string(patch) + " does not divide image " +
                                        std::to_string(image.height) + "x" + std::to_string(image.width));
        }
        const int gh = image.height / patch;
        const int gw = image.width / patch;
        std::vector<std::uint8_t> labels(static_cast<std::size_t>(gh) * gw, 0);
        for (int y = 0; y < image.height; ++y) {
            const std::uint8_t* row = content_mask.data() + static_cast<std::size_t>(y) * image.width;
            for (int x = 0; x < image.width; ++x) {
                if (row[x] != 0) {
                    labels[static_cast<std::size_t>(y / patch) * gw + x / patch] = 1;
                }
            }
        }
        return labels;
    }
};

namespace detail {

inline void validate_regions(const LayoutSpec& spec) {
    if (spec.image_size <= 0) {
        throw std::invalid_argument("image_size must be positive");
    }
    if (spec.target_content_fraction < 0.0 || spec.target_content_fraction > 1.0) {
        throw std::invalid_argument("target_content_fraction must lie in [0, 1]");
    }
    if (spec.background_value < 0.0 || spec.background_value > 1.0) {
        throw std::invalid_argument("background_value must lie in [0, 1]");
    }
    for (const auto& r : spec.regions) {
        const BBox& b = r.bbox;
        if (b.w < 4 || b.h < 4) {
            throw std::invalid_argument("region smaller than 4x4 pixels");
        }
        if (b.x < 0 || b.y < 0 || b.x + b.w > spec.image_size || b.y + b.h > spec.image_size) {
            throw std::invalid_argument("region outside image bounds");
        }
        if (r.kind == RegionKind::text_line && b.w < 2 * b.h) {
            throw std::invalid_argument("text_line region must be horizontally elongated (w >= 2h)");
        }
    }
}

inline double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

// Glyph strokes: 2-3 ink columns separated by 1 px, words by 3 px. No run of
// blank columns exceeds 3 px, so every 4-px patch inside the line holds ink.
inline void render_text_line(ImageTensor& img, const BBox& b, Rng& rng) {
    int x = b.x;
    int glyphs_left_in_word = rng.range(2, 7);
    while (x < b.x + b.w) {
        const int glyph_w = rng.range(2, 3);
        const int top = rng.range(0, 2);
        const int bottom = rng.range(0, 2);
        const double ink = rng.uniform(0.05, 0.25);
        for (int gx = x; gx < std::min(x + glyph_w, b.x + b.w); ++gx) {
            for (int y = b.y; y < b.y + b.h; ++y) {
                const bool stroke = y >= b.y + top && y < b.y + b.h - bottom;
                img.at(y, gx) = clamp01(stroke ? ink + rng.uniform(-0.02, 0.02) : 0.9 + rng.uniform(-0.02, 0.02));
            }
        }
        x += glyph_w;
        const int gap = --glyphs_left_in_word > 0 ? 1 : 3;
        if (glyphs_left_in_word <= 0) {
            glyphs_left_in_word = rng.range(2, 7);
        }
        for (int gx = x; gx < std::min(x + gap, b.x + b.w); ++gx) {
            for (int y = b.y; y < b.y + b.h; ++y) {
                img.at(y, gx) = clamp01(0.9 + rng.uniform(-0.02, 0.02));
            }
        }
        x += gap;
    }
}

inline void render_table(ImageTensor& img, const BBox& b, Rng& rng) {
    const int pitch = 8;
    for (int y = b.y; y < b.y + b.h; ++y) {
        for (int x = b.x; x < b.x + b.w; ++x) {
            const bool rule = (y - b.y) % pitch == 0 || (x - b.x) % pitch == 0 || y == b.y + b.h - 1 ||
                              x == b.x + b.w - 1;
            img.at(y, x) = clamp01((rule ? 0.25 : 0.78) + rng.uniform(-0.02, 0.02));
        }
    }
}

inline void render_chart(ImageTensor& img, const BBox& b, Rng& rng) {
    for (int y = b.y; y < b.y + b.h; ++y) {
        for (int x = b.x; x < b.x + b.w; ++x) {
            img.at(y, x) = clamp01(0.72 + rng.uniform(-0.02, 0.02));
        }
    }
    for (int bar = b.x + 2; bar + 6 <= b.x + b.w; bar += 8) {
        const int height = std::max(1, static_cast<int>(rng.uniform(0.2, 0.95) * (b.h - 1)));
        for (int y = b.y + b.h - 1 - height; y < b.y + b.h - 1; ++y) {
            for (int x = bar; x < bar + 6; ++x) {
                img.at(y, x) = clamp01(0.3 + rng.uniform(-0.02, 0.02));
            }
        }
    }
    for (int y = b.y; y < b.y + b.h; ++y) {
        img.at(y, b.x) = 0.1;
    }
    for (int x = b.x; x < b.x + b.w; ++x) {
        img.at(b.y + b.h - 1, x) = 0.1;
    }
}

}  // namespace detail

/// Renders a layout. Pure function of the spec.
/// Throws InfeasibleLayout when the realized content fraction misses the
/// target by more than five percentage points.
inline LabeledImage generate(const LayoutSpec& spec) {
    detail::validate_regions(spec);
    const int n = spec.image_size;
    LabeledImage out;
    out.layout = spec;
    out.image = ImageTensor(n, n, 1);
    out.content_mask.assign(static_cast<std::size_t>(n) * n, 0);

    Rng noise(derive_seed(spec.seed, 0x6e6f697365));
    for (double& v : out.image.data) {
        v = detail::clamp01(spec.background_value + noise.uniform(-kBackgroundNoiseAmplitude, kBackgroundNoiseAmplitude));
    }
    for (const auto& region : spec.regions) {
        Rng rng(region.texture_seed);
        switch (region.kind) {
        case RegionKind::text_line:
            detail::render_text_line(out.image, region.bbox, rng);
            break;
        case RegionKind::table:
            detail::render_table(out.image, region.bbox, rng);
            break;
        case RegionKind::chart_block:
            detail::render_chart(out.image, region.bbox, rng);
            break;
        }
        const BBox& b = region.bbox;
        for (int y = b.y; y < b.y + b.h; ++y) {
            std::fill_n(out.content_mask.begin() + static_cast<std::ptrdiff_t>(y) * n + b.x, b.w, std::uint8_t{1});
        }
    }
    const double achieved = out.content_fraction();
    if (std::abs(achieved - spec.target_content_fraction) > kContentFractionTolerance + 1e-12) {
        throw InfeasibleLayout(spec.target_content_fraction, achieved);
    }
    return out;
}

/// Plans a Manhattan page layout on an 8x8 module grid: paragraphs of text
/// lines, tables and charts placed as non-overlapping module-aligned blocks,
/// each with a one-unit gutter (unit = module / 8). Blocks are added until the
/// content fraction is within two points of the target.
/// Throws InfeasibleLayout if the target cannot be reached.
inline LayoutSpec plan_layout(int size, double target_fraction, std::uint64_t seed) {
    if (size < 128 || size % 32 != 0) {
        throw std::invalid_argument("plan_layout: size must be a multiple of 32 and >= 128, got " + std::to_string(size));
    }
    if (target_fraction < 0.0 || target_fraction > 1.0) {
        throw std::invalid_argument("plan_layout: target fraction must lie in [0, 1]");
    }
    LayoutSpec spec;
    spec.image_size = size;
    spec.target_content_fraction = target_fraction;
    spec.seed = seed;

    constexpr int kGrid = 8;
    const int module = size / kGrid;
    const int unit = module / 8;
    const double total = static_cast<double>(size) * size;
    bool occupied[kGrid][kGrid] = {};
    long covered = 0;

    Rng rng(derive_seed(seed, 0x6c61796f7574));
    for (int attempt = 0; attempt < 4000 && covered / total < target_fraction - 0.02; ++attempt) {
        const int roll = rng.range(0, 9);
        const RegionKind kind = roll < 5 ? RegionKind::text_line : roll < 8 ? RegionKind::table : RegionKind::chart_block;
        int wm = 0;
        int hm = 0;
        switch (kind) {
        case RegionKind::text_line:
            wm = rng.range(2, 8);
            hm = rng.range(1, 3);
            break;
        case RegionKind::table:
            wm = rng.range(2, 5);
            hm = rng.range(1, 3);
            break;
        case RegionKind::chart_block:
            wm = rng.range(2, 4);
            hm = rng.range(2, 3);
            break;
        }

        std::vector<std::pair<int, int>> free_slots;
        for (int my = 0; my + hm <= kGrid; ++my) {
            for (int mx = 0; mx + wm <= kGrid; ++mx) {
                bool fits = true;
                for (int yy = my; yy < my + hm && fits; ++yy) {
                    for (int xx = mx; xx < mx + wm && fits; ++xx) {
                        fits = !occupied[yy][xx];
                    }
                }
                if (fits) {
                    free_slots.emplace_back(mx, my);
                }
            }
        }
        if (free_slots.empty()) {
            continue;
        }
        const auto [mx, my] = free_slots[rng.below(free_slots.size())];
        const BBox block{mx * module, my * module, wm * module - unit, hm * module - unit};

        std::vector<ContentRegion> regions;
        if (kind == RegionKind::text_line) {
            const int line_h = 3 * unit;
            const int pitch = 4 * unit;
            for (int y = block.y; y + line_h <= block.y + block.h; y += pitch) {
                int w = block.w;
                if (y + pitch + line_h > block.y + block.h) {
                    // ragged last line
                    w = std::max(2 * line_h, static_cast<int>(rng.uniform(0.4, 1.0) * block.w) / unit * unit);
                }
                regions.push_back({kind, {block.x, y, w, line_h}, rng.next()});
            }
        } else {
            regions.push_back({kind, block, rng.next()});
        }
        long content = 0;
        for (const auto& r : regions) {
            content += r.bbox.area();
        }
        if ((covered + content) / total > target_fraction + 0.03) {
            continue;
        }
        for (int yy = my; yy < my + hm; ++yy) {
            for (int xx = mx; xx < mx + wm; ++xx) {
                occupied[yy][xx] = true;
            }
        }
        covered += content;
        spec.regions.insert(spec.regions.end(), regions.begin(), regions.end());
    }
    const double achieved = covered / total;
    if (std::abs(achieved - target_fraction) > kContentFractionTolerance) {
        throw InfeasibleLayout(target_fraction, achieved);
    }
    return spec;
}

/// n independent documents; document i uses derive_seed(seed, i).
inline std::vector<LabeledImage> make_corpus(int n, double fraction, int size, std::uint64_t seed) {
    if (n < 1) {
        throw std::invalid_argument("make_corpus: n must be >= 1");
    }
    std::vector<LabeledImage> corpus;
    corpus.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        corpus.push_back(generate(plan_layout(size, fraction, derive_seed(seed, static_cast<std::uint64_t>(i)))));
    }
    return corpus;
}

inline double mean_patch_fraction(const std::vector<LabeledImage>& corpus, int patch) {
    double sum = 0.0;
    for (const auto& doc : corpus) {
        const auto labels = doc.patch_labels(patch);
        sum += static_cast<double>(std::count(labels.begin(), labels.end(), std::uint8_t{1})) /
               static_cast<double>(labels.size());
    }
    return corpus.empty() ? 0.0 : sum / static_cast<double>(corpus.size());
}

inline constexpr int kInstructionVocab = 256;
inline constexpr int kMaxInstructionLength = 32;

struct InstructionSpec {
    std::vector<int> token_ids;

    bool operator==(const InstructionSpec&) const = default;
};

struct InstructionTarget {
    InstructionSpec instruction;
    std::vector<std::uint8_t> relevance;  // per patch, row-major
    std::size_t region_index = 0;
    int patch = 4;
};

/// Token ids for an instruction about `region`: a task token, the region kind
/// and the bbox corners quantized to a 16x16 grid, each in its own id range.
inline InstructionSpec encode_instruction(const ContentRegion& region, int image_size) {
    auto q = [image_size](int v) { return std::clamp(v * 16 / image_size, 0, 15); };
    const BBox& b = region.bbox;
    return {{1, 8 + static_cast<int>(region.kind), 16 + q(b.x), 32 + q(b.y), 48 + q(b.x + b.w - 1),
             64 + q(b.y + b.h - 1)}};
}

/// Picks one region as the referent of an instruction. Patches touching the
/// region dilated by an 8 px margin are marked relevant.
inline InstructionTarget instruction_target(const LabeledImage& img, std::uint64_t seed, int patch = 4) {
    const auto& regions = img.layout.regions;
    if (regions.empty()) {
        throw std::invalid_argument("instruction_target: document has no content regions");
    }
    const int size = img.size();
    if (patch <= 0 || size % patch != 0) {
        throw std::invalid_argument("instruction_target: patch does not divide image");
    }
    Rng rng(derive_seed(seed, 0x696e737472));
    InstructionTarget t;
    t.region_index = rng.below(regions.size());
    t.patch = patch;
    const ContentRegion& region = regions[t.region_index];
    t.instruction = encode_instruction(region, size);

    const int x0 = std::max(0, region.bbox.x - kRelevanceMarginPx);
    const int y0 = std::max(0, region.bbox.y - kRelevanceMarginPx);
    const int x1 = std::min(size, region.bbox.x + region.bbox.w + kRelevanceMarginPx);  // exclusive
    const int y1 = std::min(size, region.bbox.y + region.bbox.h + kRelevanceMarginPx);
    const int grid = size / patch;
    t.relevance.assign(static_cast<std::size_t>(grid) * grid, 0);
    for (int py = y0 / patch; py <= (y1 - 1) / patch; ++py) {
        for (int px = x0 / patch; px <= (x1 - 1) / patch; ++px) {
            t.relevance[static_cast<std::size_t>(py) * grid + px] = 1;
        }
    }
    return t;
}

}  // namespace hrvda

// Copyright (C) 2026 The hrvda-desk Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <set>

#include "oracles.hpp"

using namespace hrvda;
using namespace hrvda::testing;

namespace {

double label_fraction(const std::vector<std::uint8_t>& labels) {
    return static_cast<double>(std::count(labels.begin(), labels.end(), std::uint8_t{1})) /
           static_cast<double>(labels.size());
}

/// Brute-force patch labels straight from the region list.
std::vector<std::uint8_t> scan_labels(const LayoutSpec& spec, int patch) {
    const int grid = spec.image_size / patch;
    std::vector<std::uint8_t> out(static_cast<std::size_t>(grid) * grid, 0);
    for (int py = 0; py < grid; ++py) {
        for (int px = 0; px < grid; ++px) {
            for (const auto& r : spec.regions) {
                const BBox& b = r.bbox;
                const bool hit =
                    b.x < (px + 1) * patch && px * patch < b.x + b.w && b.y < (py + 1) * patch && py * patch < b.y + b.h;
                if (hit) {
                    out[static_cast<std::size_t>(py) * grid + px] = 1;
                }
            }
        }
    }
    return out;
}

LayoutSpec ten_region_spec() {
    LayoutSpec spec;
    spec.image_size = 256;
    spec.seed = 3;
    for (int i = 0; i < 10; ++i) {
        spec.regions.push_back({RegionKind::text_line, {8, 8 + 24 * i, 120, 12}, static_cast<std::uint64_t>(i)});
    }
    long area = 0;
    for (const auto& r : spec.regions) {
        area += r.bbox.area();
    }
    spec.target_content_fraction = static_cast<double>(area) / (256.0 * 256.0);
    return spec;
}

}  // namespace

TEST(Generate, EmptyDocument) {
    LayoutSpec spec;
    spec.image_size = 64;
    const LabeledImage img = generate(spec);
    EXPECT_TRUE(std::all_of(img.content_mask.begin(), img.content_mask.end(), [](auto v) { return v == 0; }));
    const auto labels = img.patch_labels(4);
    EXPECT_TRUE(std::all_of(labels.begin(), labels.end(), [](auto v) { return v == 0; }));
}

TEST(Generate, SaturatedDocument) {
    LayoutSpec spec;
    spec.image_size = 64;
    spec.target_content_fraction = 1.0;
    spec.regions.push_back({RegionKind::table, {0, 0, 64, 64}, 1});
    const auto labels = generate(spec).patch_labels(4);
    EXPECT_TRUE(std::all_of(labels.begin(), labels.end(), [](auto v) { return v == 1; }));
}

TEST(Generate, BackgroundNoiseAmplitude) {
    const LabeledImage img = generate(plan_layout(256, 0.5, 11));
    for (std::size_t i = 0; i < img.content_mask.size(); ++i) {
        const double v = img.image.data[i];
        ASSERT_GE(v, 0.0);
        ASSERT_LE(v, 1.0);
        if (img.content_mask[i] == 0) {
            ASSERT_NEAR(v, img.layout.background_value, kBackgroundNoiseAmplitude + 1e-12);
        }
    }
}

TEST(Generate, HalfContentPatchFraction) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const LabeledImage img = generate(plan_layout(256, 0.5, seed));
        const double f = label_fraction(img.patch_labels(4));
        EXPECT_GE(f, 0.45) << "seed " << seed;
        EXPECT_LE(f, 0.60) << "seed " << seed;
    }
}

TEST(Generate, InfeasibleTargetReportsAchieved) {
    LayoutSpec spec;
    spec.image_size = 64;
    spec.target_content_fraction = 0.5;
    spec.regions.push_back({RegionKind::chart_block, {0, 0, 16, 16}, 1});
    try {
        generate(spec);
        FAIL() << "expected InfeasibleLayout";
    } catch (const InfeasibleLayout& e) {
        EXPECT_NEAR(e.achieved(), 256.0 / 4096.0, 1e-12);
    }
}

TEST(Generate, RejectsInvalidRegions) {
    LayoutSpec spec;
    spec.image_size = 64;
    spec.regions.push_back({RegionKind::text_line, {0, 0, 10, 8}, 1});  // not elongated
    EXPECT_THROW(generate(spec), std::invalid_argument);
    spec.regions = {{RegionKind::table, {60, 0, 8, 8}, 1}};  // out of bounds
    EXPECT_THROW(generate(spec), std::invalid_argument);
    spec.regions = {{RegionKind::table, {0, 0, 3, 8}, 1}};  // too small
    EXPECT_THROW(generate(spec), std::invalid_argument);
}

TEST(Generate, PureFunctionOfSpec) {
    const LayoutSpec spec = plan_layout(256, 0.5, 5);
    const LabeledImage a = generate(spec);
    const LabeledImage b = generate(spec);
    EXPECT_EQ(a.image.data, b.image.data);
    EXPECT_EQ(a.content_mask, b.content_mask);
}

TEST(Generate, PlannedRegionsAreValidAndDisjoint) {
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        const LayoutSpec spec = plan_layout(256, 0.5, seed);
        for (std::size_t i = 0; i < spec.regions.size(); ++i) {
            const auto& r = spec.regions[i];
            EXPECT_GE(r.bbox.w, 4);
            EXPECT_GE(r.bbox.h, 4);
            if (r.kind == RegionKind::text_line) {
                EXPECT_GE(r.bbox.w, 2 * r.bbox.h);
            }
            for (std::size_t j = i + 1; j < spec.regions.size(); ++j) {
                EXPECT_FALSE(r.bbox.intersects(spec.regions[j].bbox));
            }
        }
    }
}

TEST(Generate, EveryRegionPatchHoldsInk) {
    // Patches fully inside a region must differ visibly from the background.
    const LabeledImage img = generate(plan_layout(256, 0.5, 21));
    const int grid = 64;
    for (int py = 0; py < grid; ++py) {
        for (int px = 0; px < grid; ++px) {
            bool all_content = true;
            double darkest = 1.0;
            for (int y = py * 4; y < py * 4 + 4; ++y) {
                for (int x = px * 4; x < px * 4 + 4; ++x) {
                    all_content = all_content && img.content_mask[static_cast<std::size_t>(y) * 256 + x] != 0;
                    darkest = std::min(darkest, img.image.at(y, x));
                }
            }
            if (all_content) {
                EXPECT_LT(darkest, 0.8) << "patch " << py << "," << px;
            }
        }
    }
}

TEST(PatchLabels, MatchPixelScan) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const LabeledImage img = generate(plan_layout(256, 0.4, 50 + seed));
        for (int patch : {4, 8, 16}) {
            EXPECT_EQ(img.patch_labels(patch), scan_labels(img.layout, patch));
        }
    }
}

TEST(MakeCorpus, SingletonMatchesGenerate) {
    const auto corpus = make_corpus(1, 0.5, 256, 77);
    const LabeledImage direct = generate(plan_layout(256, 0.5, derive_seed(77, 0)));
    EXPECT_EQ(corpus[0].image.data, direct.image.data);
    EXPECT_EQ(corpus[0].layout, direct.layout);
}

TEST(MakeCorpus, Deterministic) {
    const auto a = make_corpus(4, 0.5, 128, 9);
    const auto b = make_corpus(4, 0.5, 128, 9);
    for (std::size_t i = 0; i < 4; ++i) {
        EXPECT_EQ(a[i].image.data, b[i].image.data);
        EXPECT_EQ(a[i].layout, b[i].layout);
    }
    EXPECT_NE(a[0].image.data, a[1].image.data);
}

TEST(MakeCorpus, HalfBlankCorpusStatistics) {
    const auto corpus = make_corpus(32, 0.5, 256, 2024);
    const double f = mean_patch_fraction(corpus, 4);
    EXPECT_GE(f, 0.45);
    EXPECT_LE(f, 0.60);
}

TEST(MakeCorpus, RejectsEmpty) { EXPECT_THROW(make_corpus(0, 0.5, 256, 1), std::invalid_argument); }

TEST(Instruction, SingleRegionRelevanceIsDilatedLabels) {
    LayoutSpec spec;
    spec.image_size = 256;
    spec.regions.push_back({RegionKind::table, {64, 96, 40, 24}, 5});
    spec.target_content_fraction = 960.0 / 65536.0;
    const LabeledImage img = generate(spec);
    const InstructionTarget t = instruction_target(img, 1);
    EXPECT_EQ(t.region_index, 0u);
    LayoutSpec dilated = spec;
    dilated.regions[0].bbox = {64 - 8, 96 - 8, 40 + 16, 24 + 16};
    EXPECT_EQ(t.relevance, scan_labels(dilated, 4));
}

TEST(Instruction, RelevanceWithinGridAndNearContent) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const LabeledImage img = generate(plan_layout(256, 0.5, seed));
        const InstructionTarget t = instruction_target(img, seed);
        ASSERT_EQ(t.relevance.size(), 64u * 64u);
        // Relevant patches lie within one 8-px margin (two patches) of content.
        const auto labels = img.patch_labels(4);
        for (int py = 0; py < 64; ++py) {
            for (int px = 0; px < 64; ++px) {
                if (t.relevance[static_cast<std::size_t>(py) * 64 + px] == 0) {
                    continue;
                }
                bool near = false;
                for (int dy = -2; dy <= 2 && !near; ++dy) {
                    for (int dx = -2; dx <= 2 && !near; ++dx) {
                        const int y = py + dy;
                        const int x = px + dx;
                        near = y >= 0 && y < 64 && x >= 0 && x < 64 && labels[static_cast<std::size_t>(y) * 64 + x];
                    }
                }
                EXPECT_TRUE(near);
            }
        }
    }
}

TEST(Instruction, EveryRegionEventuallySelected) {
    const LabeledImage img = generate(ten_region_spec());
    std::set<std::size_t> seen;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        seen.insert(instruction_target(img, seed).region_index);
    }
    EXPECT_EQ(seen.size(), 10u);
}

TEST(Instruction, TokensDeterministicAndInVocabulary) {
    const LabeledImage img = generate(plan_layout(256, 0.5, 4));
    const auto a = instruction_target(img, 8);
    const auto b = instruction_target(img, 8);
    EXPECT_EQ(a.instruction, b.instruction);
    EXPECT_FALSE(a.instruction.token_ids.empty());
    EXPECT_LE(a.instruction.token_ids.size(), static_cast<std::size_t>(kMaxInstructionLength));
    for (int id : a.instruction.token_ids) {
        EXPECT_GE(id, 0);
        EXPECT_LT(id, kInstructionVocab);
    }
}

TEST(Instruction, EmptyDocumentRejected) {
    LayoutSpec spec;
    spec.image_size = 64;
    EXPECT_THROW(instruction_target(generate(spec), 1), std::invalid_argument);
}

TEST(Pnm, PbmRoundTrip) {
    const auto path = std::filesystem::temp_directory_path() / "hrvda_test_roundtrip.pbm";
    std::vector<std::uint8_t> ink(13 * 5);
    for (std::size_t i = 0; i < ink.size(); ++i) {
        ink[i] = (i * 7 % 3 == 0) ? 1 : 0;
    }
    write_pbm(path.string(), 13, 5, ink);
    const Bitmap b = read_pbm(path.string());
    EXPECT_EQ(b.width, 13);
    EXPECT_EQ(b.height, 5);
    EXPECT_EQ(b.ink, ink);
    std::filesystem::remove(path);
}

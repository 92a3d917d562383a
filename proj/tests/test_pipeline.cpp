// Copyright (C) 2026 The hrvda-desk Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "oracles.hpp"

using namespace hrvda;
using namespace hrvda::testing;

namespace fs = std::filesystem;

namespace {

PipelineConfig small_desk(int docs = 2) {
    PipelineConfig c = PipelineConfig::desk();
    c.corpus_size = docs;
    return c;
}

PipelineConfig zero_thresholds(PipelineConfig c) {
    c.thresholds = ThresholdSchedule::zero();
    return c;
}

RunReport run_config(const PipelineConfig& c) { return run(c, build_models(c), make_config_corpus(c)); }

std::vector<std::uint8_t> bits_of(const Json& mask) { return mask_from_json(mask).bits; }

bool subset(const std::vector<std::uint8_t>& a, const std::vector<std::uint8_t>& b) {
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i] != 0 && b[i] == 0) {
            return false;
        }
    }
    return true;
}

fs::path scratch_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("hrvda_pipeline_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

}  // namespace

TEST(Geometry, DeskArithmetic) {
    const Geometry g = plan_geometry(PipelineConfig::desk());
    EXPECT_EQ(g.initial_tokens, 4096u);
    EXPECT_EQ(g.stage_sides, (std::vector<std::size_t>{64, 32, 16, 8}));
    EXPECT_EQ(g.final_positions, 64u);
}

TEST(Geometry, HighResolutionArithmetic) {
    PipelineConfig c = PipelineConfig::paper_scale();
    EXPECT_EQ(plan_geometry(c).initial_tokens, 147456u);
    EXPECT_EQ(plan_geometry(c).final_positions, 2304u);
    c.encoder.patch = 16;
    EXPECT_EQ(plan_geometry(c).initial_tokens, 9216u);
}

TEST(Geometry, RejectsInconsistentConfigs) {
    PipelineConfig c = PipelineConfig::desk();
    c.image_size = 258;
    EXPECT_THROW(plan_geometry(c), ConfigError);
    c = PipelineConfig::desk();
    c.thresholds.eps_c = {0.5, 0.25, 0.5, 0.5};
    EXPECT_THROW(c.validate(), ConfigError);
    c = PipelineConfig::desk();
    c.thresholds.eps_c = {0.25, 0.5};
    EXPECT_THROW(c.validate(), ConfigError);
    c = PipelineConfig::desk();
    c.context_budget = 0;
    EXPECT_THROW(c.validate(), ConfigError);
    c = PipelineConfig::desk();
    c.image_size = 96;  // grid 24 cannot be merged three times
    EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Run, ZeroThresholdsKeepFullFinalGrid) {
    const RunReport r = run_config(zero_thresholds(small_desk()));
    ASSERT_EQ(r.per_document.size(), 2u);
    for (const auto& d : r.per_document) {
        EXPECT_EQ(d.post_encoder, 64u);
        EXPECT_EQ(d.kept_final, 64u);
    }
    EXPECT_EQ(r.agnostic_dropped, 0u);
}

TEST(Run, ReportArithmeticCloses) {
    const PipelineConfig c = small_desk(3);
    const RunReport r = run_config(c);
    ASSERT_EQ(r.stages.size(), 4u);
    EXPECT_EQ(r.stages[0].positions, 3u * 4096);
    for (std::size_t k = 1; k < 4; ++k) {
        EXPECT_EQ(r.stages[k].positions * 4, r.stages[k - 1].positions);
    }
    EXPECT_LE(r.kept_final, r.post_encoder);
    EXPECT_LE(r.post_encoder, r.stages[3].positions);
    EXPECT_EQ(r.initial_tokens, 3u * 4096);
    EXPECT_EQ(r.ifm_input, r.post_encoder);

    std::uint64_t encoder = 0;
    for (const auto& s : r.stages) {
        encoder += s.attention_flops + s.merge_flops;
        EXPECT_EQ(s.windows_computed + s.windows_bypassed, s.windows_total);
        EXPECT_LE(s.active, s.positions);
    }
    EXPECT_EQ(encoder, r.flops.encoder);
    EXPECT_EQ(r.flops.total(), r.flops.patch_embed + r.flops.detector + r.flops.encoder + r.flops.projector +
                                   r.flops.ifm + r.flops.decoder);
    std::uint64_t per_doc = 0;
    std::size_t kept = 0;
    for (const auto& d : r.per_document) {
        per_doc += d.total_flops;
        kept += d.kept_final;
        EXPECT_LE(d.kept_final, d.post_encoder);
    }
    EXPECT_EQ(per_doc, r.flops.total());
    EXPECT_EQ(kept, r.kept_final);
}

TEST(Run, DecoderStubIsQuadratic) {
    const PipelineConfig c = small_desk(2);
    const RunReport r = run_config(c);
    std::uint64_t expected = 0;
    for (const auto& d : r.per_document) {
        expected += static_cast<std::uint64_t>(d.sequence_length) * d.sequence_length * c.decoder_pair_flops;
    }
    EXPECT_EQ(r.flops.decoder, expected);
}

TEST(Run, ContextFitRecomputes) {
    PipelineConfig c = small_desk(2);
    for (std::size_t budget : {std::size_t{4096}, std::size_t{1}}) {
        c.context_budget = budget;
        const RunReport r = run_config(c);
        bool all = true;
        for (const auto& d : r.per_document) {
            EXPECT_EQ(d.sequence_length, d.kept_final + d.instruction_tokens);
            EXPECT_EQ(d.context_fit, d.sequence_length <= budget);
            all = all && d.context_fit;
        }
        EXPECT_EQ(r.context_fit, all);
        EXPECT_EQ(r.context_fit, budget == 4096);
    }
}

TEST(Run, SerializationDeterministic) {
    const PipelineConfig c = small_desk(2);
    const std::string a = serialize_report(run_config(c));
    const std::string b = serialize_report(run_config(c));
    EXPECT_EQ(a, b);
    EXPECT_EQ(a.find("wall_ms"), std::string::npos);
    PipelineConfig other = c;
    other.seed = 8;
    EXPECT_NE(serialize_report(run_config(other)), a);
}

TEST(Run, SchemaKeysPresent) {
    const Json j = report_to_json(run_config(small_desk(1)));
    for (const char* key :
         {"schema_version", "config", "models", "corpus", "stages", "tokens", "context_fit", "content_agnostic", "flops",
          "documents"}) {
        EXPECT_TRUE(j.contains(key)) << key;
    }
    EXPECT_EQ(j["schema_version"], kReportSchemaVersion);
}

TEST(Run, RejectsMissingDetectorAndWrongImages) {
    PipelineConfig c = small_desk(1);
    c.detector = DetectorVariant::mlp;
    EXPECT_THROW(build_models(c), ConfigError);
    const PipelineConfig d = small_desk(1);
    EXPECT_THROW(run(d, build_models(d), make_corpus(1, 0.5, 128, 1)), ConfigError);
    EXPECT_THROW(build_models(d, std::nullopt, IfmModel::init(64, 1)), ConfigError);
}

TEST(Run, AgnosticAccountingMatchesLabels) {
    const PipelineConfig c = small_desk(2);
    const auto corpus = make_config_corpus(c);
    const RunReport r = run(c, build_models(c), corpus);
    std::size_t blank = 0;
    for (const auto& doc : corpus) {
        const auto labels = doc.patch_labels(4);
        blank += static_cast<std::size_t>(std::count(labels.begin(), labels.end(), std::uint8_t{0}));
    }
    EXPECT_EQ(r.agnostic_positions, blank);
    // The oracle marks every blank patch inactive at stage 1.
    EXPECT_EQ(r.agnostic_inactive_stage1, blank);
    EXPECT_LE(r.agnostic_dropped, r.agnostic_inactive_stage1);
}

TEST(Sweep, ScaledScheduleShape) {
    const ThresholdSchedule base{};
    EXPECT_EQ(scaled_schedule(base, 0.25, 0.5), base);
    const ThresholdSchedule s = scaled_schedule(base, 0.5, 0.25);
    EXPECT_EQ(s.eps_c, (std::vector<double>{0.5, 0.5, 1.0, 1.0}));
    EXPECT_EQ(s.eps_i, 0.25);
    EXPECT_EQ(scaled_schedule(base, 0.0, 0.0), ThresholdSchedule::zero());
}

TEST(Sweep, SinglePointEqualsRun) {
    const PipelineConfig c = small_desk(2);
    const PipelineModels m = build_models(c);
    const auto corpus = make_config_corpus(c);
    const SweepResult s = sweep(c, m, corpus, {{0.25, 0.5}});
    ASSERT_EQ(s.reports.size(), 1u);
    EXPECT_EQ(serialize_report(s.reports[0]), serialize_report(run(c, m, corpus)));
}

TEST(Sweep, CsvHasOneRowPerSetting) {
    const PipelineConfig c = small_desk(1);
    const SweepResult s = sweep(c, build_models(c), make_config_corpus(c), table_settings());
    const std::string csv = sweep_csv(s);
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
    EXPECT_EQ(csv.substr(0, csv.find('\n')), kSweepCsvHeader);
}

TEST(Sweep, MonotoneAlongEachAxis) {
    const PipelineConfig c = small_desk(2);
    const std::vector<SweepPoint> grid{{0.0, 0.0}, {0.0, 0.5}, {0.25, 0.0}, {0.25, 0.25}, {0.25, 0.5},
                                       {0.5, 0.25}, {0.5, 0.5}, {0.75, 0.5}, {0.5, 0.75}};
    const SweepResult s = sweep(c, build_models(c), make_config_corpus(c), grid);
    EXPECT_FALSE(s.error.has_value());
    EXPECT_TRUE(s.monotone()) << (s.violations.empty() ? "" : s.violations.front());
    EXPECT_TRUE(s.kept_violations.empty()) << (s.kept_violations.empty() ? "" : s.kept_violations.front());
}

TEST(Sweep, HalfThresholdsHalveCompute) {
    const PipelineConfig c = small_desk(4);
    const SweepResult s = sweep(c, build_models(c), make_config_corpus(c), {{0.0, 0.0}, {0.5, 0.5}});
    ASSERT_EQ(s.reports.size(), 2u);
    EXPECT_LE(static_cast<double>(s.reports[1].flops.total()), 0.55 * static_cast<double>(s.reports[0].flops.total()));
}

TEST(Sweep, DetectsViolations) {
    std::vector<RunReport> reports(2);
    reports[0].flops.decoder = 10;
    reports[1].flops.decoder = 20;
    const auto v = check_sweep_monotone({{0.25, 0.5}, {0.5, 0.5}}, reports);
    ASSERT_EQ(v.size(), 1u);
    EXPECT_TRUE(check_sweep_kept({{0.25, 0.5}, {0.5, 0.5}}, reports).empty());
}

TEST(Sweep, DetectsKeptRises) {
    std::vector<RunReport> reports(3);
    reports[0].kept_final = 5;
    reports[1].kept_final = 7;
    reports[2].kept_final = 9;
    // Only pairs differing in one coordinate are compared.
    const auto v = check_sweep_kept({{0.25, 0.25}, {0.25, 0.5}, {0.5, 0.5}}, reports);
    ASSERT_EQ(v.size(), 2u);
    EXPECT_TRUE(check_sweep_monotone({{0.25, 0.25}, {0.25, 0.5}, {0.5, 0.5}}, reports).empty());
}

TEST(Sweep, PreservesPartialResults) {
    PipelineConfig c = small_desk(1);
    const SweepResult s = sweep(c, build_models(c), make_config_corpus(c), {{0.25, 0.5}, {0.25, 2.0}});
    EXPECT_EQ(s.reports.size(), 1u);
    EXPECT_TRUE(s.error.has_value());
}

TEST(Render, ZeroThresholdMasksAreWhite) {
    const RunReport r = run_config(zero_thresholds(small_desk(1)));
    const fs::path dir = scratch_dir("white");
    const RenderOutcome out = render_masks(report_to_json(r), 0, dir);
    ASSERT_TRUE(out.errors.empty());
    ASSERT_EQ(out.written.size(), 3u);
    const std::pair<int, int> dims[3] = {{32, 32}, {8, 8}, {8, 8}};
    for (std::size_t k = 0; k < 3; ++k) {
        const Bitmap b = read_pbm(out.written[k].string());
        EXPECT_EQ(b.width, dims[k].first);
        EXPECT_EQ(b.height, dims[k].second);
        EXPECT_TRUE(std::all_of(b.ink.begin(), b.ink.end(), [](auto v) { return v == 0; }));
    }
}

TEST(Render, MaskDimensionsFollowStageGrids) {
    const Json j = report_to_json(run_config(small_desk(1)));
    const auto& masks = j["documents"][0]["masks"];
    EXPECT_EQ(masks["pruning1"]["rows"], 32);
    EXPECT_EQ(masks["pruning2"]["rows"], 8);
    EXPECT_EQ(masks["pruning3"]["cols"], 8);
}

TEST(Render, SingleRegionMasksNest) {
    LayoutSpec spec;
    spec.image_size = 256;
    spec.regions.push_back({RegionKind::table, {72, 40, 64, 48}, 9});
    spec.target_content_fraction = 64.0 * 48.0 / 65536.0;
    const std::vector<LabeledImage> corpus{generate(spec)};
    const PipelineConfig c = small_desk(1);
    const Json j = report_to_json(run(c, build_models(c), corpus));
    const auto& masks = j["documents"][0]["masks"];
    const auto p2 = bits_of(masks["pruning2"]);
    const auto p3 = bits_of(masks["pruning3"]);
    const auto dilation = pool_mask(corpus[0].patch_labels(4), 64, 8);
    EXPECT_TRUE(subset(p3, p2));
    EXPECT_TRUE(subset(p2, dilation));
    EXPECT_EQ(p2, dilation);
}

TEST(Render, UnwritableDirectoryReportedPerFile) {
    const Json j = report_to_json(run_config(zero_thresholds(small_desk(1))));
    const RenderOutcome out = render_masks(j, 0, "/nonexistent/hrvda/dir");
    EXPECT_TRUE(out.written.empty());
    EXPECT_EQ(out.errors.size(), 3u);
    EXPECT_THROW(render_masks(j, 5, scratch_dir("oob")), std::out_of_range);
}

TEST(ReportFormat, FixedDecimals) {
    EXPECT_EQ(fixed9(0.1), "0.100000000");
    EXPECT_EQ(fixed9(-0.0), "0.000000000");
    EXPECT_EQ(fixed9(-1e-12), "0.000000000");
    EXPECT_EQ(json_fixed(0.25).dump(), "0.25");
    EXPECT_THROW(fixed9(std::nan("")), std::invalid_argument);
}

TEST(ReportFormat, MaskRoundTrip) {
    Rng rng(1);
    Mask m{3, 5, {}};
    for (int i = 0; i < 15; ++i) {
        m.bits.push_back(static_cast<std::uint8_t>(rng.below(2)));
    }
    EXPECT_EQ(mask_from_json(mask_to_json(m)), m);
    Json bad = mask_to_json(m);
    bad["bits"][0] = "01x10";
    EXPECT_THROW(mask_from_json(bad), std::invalid_argument);
}

TEST(ReportFormat, CorpusManifestRegeneratesImages) {
    const auto corpus = make_corpus(3, 0.5, 256, 4);
    const auto back = corpus_from_json(Json::parse(corpus_to_json(corpus).dump()));
    ASSERT_EQ(back.size(), 3u);
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_EQ(back[i].image.data, corpus[i].image.data);
        EXPECT_EQ(back[i].layout, corpus[i].layout);
    }
}

TEST(Config, ParsesKeysOverProfile) {
    const PipelineConfig c = parse_config(
        "# desk run\n"
        "seed = 11\n"
        "eps_c = 0.1, 0.2, 0.3, 0.4   # per stage\n"
        "eps_i = 0.3\n"
        "context_budget = 100\n"
        "gate = soft\n"
        "bypass = false\n");
    EXPECT_EQ(c.seed, 11u);
    EXPECT_EQ(c.thresholds.eps_c, (std::vector<double>{0.1, 0.2, 0.3, 0.4}));
    EXPECT_EQ(c.thresholds.eps_i, 0.3);
    EXPECT_EQ(c.context_budget, 100u);
    EXPECT_EQ(c.gate, GateMode::soft);
    EXPECT_FALSE(c.bypass);
    EXPECT_EQ(c.image_size, 256);
}

TEST(Config, ProfileSelectsBaseAndOverrideWins) {
    EXPECT_EQ(parse_config("profile = paper-scale\n").image_size, 1536);
    EXPECT_EQ(parse_config("profile = paper-scale\n", Profile::desk).image_size, 256);
    const PipelineConfig c = parse_config("image_size = 512\nprofile = desk\n");
    EXPECT_EQ(c.image_size, 512);
}

TEST(Config, RejectsMalformedInput) {
    EXPECT_THROW(parse_config("colour = blue\n"), ConfigError);
    EXPECT_THROW(parse_config("seed 7\n"), ConfigError);
    EXPECT_THROW(parse_config("seed = seven\n"), ConfigError);
    EXPECT_THROW(parse_config("seed = -3\n"), ConfigError);
    EXPECT_THROW(parse_config("context_budget = 12abc\n"), ConfigError);
    EXPECT_THROW(parse_config("bypass = maybe\n"), ConfigError);
    EXPECT_THROW(parse_config("profile = huge\n"), ConfigError);
    EXPECT_THROW(load_config("/nonexistent/hrvda.conf"), ConfigError);
}

TEST(Config, SeedPrecedence) {
    ::unsetenv("HRVDA_SEED");
    EXPECT_EQ(resolve_seed(std::nullopt, 7), 7u);
    ::setenv("HRVDA_SEED", "42", 1);
    EXPECT_EQ(resolve_seed(std::nullopt, 7), 42u);
    EXPECT_EQ(resolve_seed(3, 7), 3u);
    ::setenv("HRVDA_SEED", "x", 1);
    EXPECT_THROW(resolve_seed(std::nullopt, 7), ConfigError);
    ::unsetenv("HRVDA_SEED");
}

TEST(WeightsIo, DetectorRoundTrip) {
    const fs::path dir = scratch_dir("weights");
    const DetectorModel m = DetectorModel::init_mlp(4, 1, 21);
    save_detector(m, (dir / "d.hrvd").string());
    const DetectorModel back = load_detector((dir / "d.hrvd").string());
    EXPECT_EQ(back.embed.proj.weight, m.embed.proj.weight);
    EXPECT_EQ(back.embed.proj.bias, m.embed.proj.bias);
    EXPECT_EQ(back.mlp.w1, m.mlp.w1);
    EXPECT_EQ(back.mlp.w2, m.mlp.w2);
    EXPECT_EQ(back.mlp.b2, m.mlp.b2);
}

TEST(WeightsIo, IfmRoundTrip) {
    const fs::path dir = scratch_dir("weights_ifm");
    const IfmModel m = IfmModel::init(16, 22, 8);
    save_ifm(m, (dir / "i.hrvd").string());
    const IfmModel back = load_ifm((dir / "i.hrvd").string());
    EXPECT_EQ(back.embedding, m.embedding);
    EXPECT_EQ(back.fusion.fc2.weight, m.fusion.fc2.weight);
    EXPECT_EQ(back.classifier.w1, m.classifier.w1);
    EXPECT_EQ(back.classifier.b1, m.classifier.b1);
    EXPECT_THROW(load_detector((dir / "i.hrvd").string()), WeightFileError);
}

TEST(WeightsIo, RejectsCorruptFiles) {
    const fs::path dir = scratch_dir("weights_bad");
    save_detector(DetectorModel::init_mlp(4, 1, 23), (dir / "d.hrvd").string());
    std::ifstream in(dir / "d.hrvd", std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    std::string bad_magic = bytes;
    bad_magic[0] = 'X';
    std::ofstream(dir / "magic.hrvd", std::ios::binary) << bad_magic;
    EXPECT_THROW(load_detector((dir / "magic.hrvd").string()), WeightFileError);

    std::ofstream(dir / "short.hrvd", std::ios::binary) << bytes.substr(0, bytes.size() - 5);
    EXPECT_THROW(load_detector((dir / "short.hrvd").string()), WeightFileError);

    std::ofstream(dir / "long.hrvd", std::ios::binary) << bytes << "xx";
    EXPECT_THROW(load_detector((dir / "long.hrvd").string()), WeightFileError);

    EXPECT_THROW(load_detector((dir / "missing.hrvd").string()), WeightFileError);
    EXPECT_THROW(save_detector(DetectorModel::oracle(), (dir / "o.hrvd").string()), std::invalid_argument);
}

// Copyright (C) 2026 The hrvda-desk Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <chrono>
#include <functional>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "hrvda/content_filter.hpp"
#include "hrvda/encoder.hpp"
#include "hrvda/instruction_filter.hpp"
#include "hrvda/mlp.hpp"
#include "hrvda/patching.hpp"
#include "hrvda/synthdoc.hpp"

namespace hrvda {

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

enum class Profile { desk, paper_scale };

inline const char* to_string(Profile p) { return p == Profile::desk ? "desk" : "paper-scale"; }

// Decoder stand-in: prefill attention cost of a 4096-wide, 32-layer decoder,
// 4 * d_model * n_layers FLOPs per ordered token pair (scores + value mix).
inline constexpr std::uint64_t kDecoderPairFlops = 4ULL * 4096ULL * 32ULL;

inline constexpr std::uint64_t kDefaultModelSeed = 0x485256444131ULL;

struct PipelineConfig {
    Profile profile = Profile::desk;
    int image_size = 256;
    EncoderConfig encoder;
    ThresholdSchedule thresholds;
    DetectorVariant detector = DetectorVariant::oracle;
    std::uint64_t seed = 7;
    std::uint64_t model_seed = kDefaultModelSeed;
    std::size_t context_budget = 4096;
    int corpus_size = 8;
    double content_fraction = 0.5;
    std::size_t llm_dim = 128;
    std::size_t ifm_hidden = 64;
    std::uint64_t decoder_pair_flops = kDecoderPairFlops;
    GateMode gate = GateMode::hard;
    bool bypass = true;
    bool position_encoding = true;
    int instructions_per_doc = 16;

    int patch() const { return encoder.patch; }
    std::size_t grid_side() const { return static_cast<std::size_t>(image_size / encoder.patch); }

    static PipelineConfig desk() { return {}; }

    /// Large geometry at 1536 x 1536: patch 4, dim 192, depths 2/2/18/2, window 10.
    static PipelineConfig paper_scale() {
        PipelineConfig c;
        c.profile = Profile::paper_scale;
        c.image_size = 1536;
        c.encoder.base_dim = 192;
        c.encoder.stages = {{2, 10, true}, {2, 10, true}, {18, 10, true}, {2, 10, false}};
        c.llm_dim = 4096;
        return c;
    }

    void validate() const {
        try {
            encoder.validate();
            thresholds.validate();
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
        }
        if (image_size <= 0 || image_size % encoder.patch != 0) {
            throw ConfigError("image_size " + std::to_string(image_size) + " is not divisible by patch " +
                              std::to_string(encoder.patch));
        }
        if (image_size < 128 || image_size % 32 != 0) {
            throw ConfigError("image_size must be a multiple of 32 and >= 128 for synthetic layouts, got " +
                              std::to_string(image_size));
        }
        if (thresholds.eps_c.size() != encoder.stages.size()) {
            throw ConfigError("eps_c lists " + std::to_string(thresholds.eps_c.size()) + " thresholds for " +
                              std::to_string(encoder.stages.size()) + " stages");
        }
        std::size_t side = grid_side();
        for (std::size_t s = 0; s + 1 < encoder.stages.size(); ++s) {
            if (side % 2 != 0) {
                throw ConfigError("stage " + std::to_string(s + 1) + " grid side " + std::to_string(side) +
                                  " cannot be merged");
            }
            side /= 2;
        }
        if (context_budget < 1) {
            throw ConfigError("context_budget must be >= 1");
        }
        if (corpus_size < 1) {
            throw ConfigError("corpus_size must be >= 1");
        }
        if (content_fraction < 0.0 || content_fraction > 1.0) {
            throw ConfigError("content_fraction must lie in [0, 1]");
        }
        if (llm_dim == 0 || llm_dim % 4 != 0 || ifm_hidden == 0) {
            throw ConfigError("llm_dim must be a positive multiple of 4 and ifm_hidden positive");
        }
        if (instructions_per_doc < 1) {
            throw ConfigError("instructions_per_doc must be >= 1");
        }
    }
};

/// Closed-form token geometry of a configuration.
struct Geometry {
    std::size_t initial_tokens = 0;
    std::vector<std::size_t> stage_sides;
    std::size_t final_positions = 0;
};

inline Geometry plan_geometry(const PipelineConfig& config) {
    config.validate();
    Geometry g;
    const std::size_t side = config.grid_side();
    g.initial_tokens = side * side;
    g.stage_sides = stage_sides(side, config.encoder.stages.size());
    g.final_positions = g.stage_sides.back() * g.stage_sides.back();
    return g;
}

/// Everything a run needs besides the documents.
struct PipelineModels {
    EncoderModel encoder;
    Mlp2 projector;
    DetectorModel detector;
    IfmModel ifm;
    bool ifm_trained = false;
};

inline PipelineModels build_models(const PipelineConfig& config, std::optional<DetectorModel> detector = std::nullopt,
                                   std::optional<IfmModel> ifm = std::nullopt) {
    config.validate();
    PipelineModels m;
    m.encoder = EncoderModel::init(config.encoder, derive_seed(config.model_seed, 0x656e63));
    Rng proj_rng(derive_seed(config.model_seed, 0x70726f6a));
    m.projector = Mlp2::init(m.encoder.output_dim(), config.llm_dim, config.llm_dim, proj_rng);
    if (config.detector == DetectorVariant::mlp) {
        if (!detector || detector->variant != DetectorVariant::mlp) {
            throw ConfigError("mlp detector configured but no trained detector weights supplied");
        }
        if (detector->patch() != config.patch()) {
            throw ConfigError("detector patch size " + std::to_string(detector->patch()) + " != encoder patch " +
                              std::to_string(config.patch()));
        }
        m.detector = *detector;
    } else {
        m.detector = DetectorModel::oracle(config.patch());
    }
    if (ifm) {
        if (ifm->dim() != config.llm_dim) {
            throw ConfigError("IFM dim " + std::to_string(ifm->dim()) + " != llm_dim " + std::to_string(config.llm_dim));
        }
        m.ifm = *ifm;
        m.ifm_trained = true;
    } else {
        m.ifm = IfmModel::init(config.llm_dim, derive_seed(config.model_seed, 0x69666d), config.ifm_hidden);
    }
    m.ifm.position_encoding = config.position_encoding;
    m.ifm.eps_i = config.thresholds.eps_i;
    return m;
}

inline std::vector<LabeledImage> make_config_corpus(const PipelineConfig& config) {
    return make_corpus(config.corpus_size, config.content_fraction, config.image_size, config.seed);
}

/// Seed of the instruction asked about document `index` in a run.
inline std::uint64_t run_instruction_seed(std::uint64_t seed, std::size_t index) {
    return derive_seed(seed, 0x717565727900ULL + index);
}

/// Max-pools a square row-major mask by `factor` in each dimension.
inline std::vector<std::uint8_t> pool_mask(const std::vector<std::uint8_t>& mask, std::size_t side,
                                           std::size_t factor) {
    if (factor == 0 || side % factor != 0 || mask.size() != side * side) {
        throw std::invalid_argument("pool_mask: factor must divide the mask side");
    }
    const std::size_t out_side = side / factor;
    std::vector<std::uint8_t> out(out_side * out_side, 0);
    for (std::size_t r = 0; r < side; ++r) {
        for (std::size_t c = 0; c < side; ++c) {
            if (mask[r * side + c] != 0) {
                out[(r / factor) * out_side + c / factor] = 1;
            }
        }
    }
    return out;
}

struct PhaseFlops {
    std::uint64_t patch_embed = 0;
    std::uint64_t detector = 0;
    std::uint64_t encoder = 0;
    std::uint64_t projector = 0;
    std::uint64_t ifm = 0;
    std::uint64_t decoder = 0;

    std::uint64_t total() const { return patch_embed + detector + encoder + projector + ifm + decoder; }

    PhaseFlops& operator+=(const PhaseFlops& o) {
        patch_embed += o.patch_embed;
        detector += o.detector;
        encoder += o.encoder;
        projector += o.projector;
        ifm += o.ifm;
        decoder += o.decoder;
        return *this;
    }
};

struct PhaseTimes {
    double detect_ms = 0.0;
    double encode_ms = 0.0;
    double project_ms = 0.0;
    double ifm_ms = 0.0;

    PhaseTimes& operator+=(const PhaseTimes& o) {
        detect_ms += o.detect_ms;
        encode_ms += o.encode_ms;
        project_ms += o.project_ms;
        ifm_ms += o.ifm_ms;
        return *this;
    }
};

struct Mask {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::uint8_t> bits;  // 1 = kept

    bool operator==(const Mask&) const = default;
};

/// Full outcome of one document through the pipeline.
struct DocumentRun {
    std::size_t index = 0;
    std::uint64_t layout_seed = 0;
    double content_fraction = 0.0;
    std::size_t initial_tokens = 0;
    EncodeResult encoded;
    Matrix projected;
    InstructionSpec instruction;
    FuseResult fused;
    FilterResult filtered;
    std::size_t sequence_length = 0;
    bool context_fit = true;
    PhaseFlops flops;
    PhaseTimes times;

    // Ground-truth accounting over content-agnostic stage-1 positions.
    std::size_t agnostic_positions = 0;
    std::size_t agnostic_inactive_stage1 = 0;
    std::size_t agnostic_dropped = 0;

    Mask pruning1;  // post stage 2
    Mask pruning2;  // post stage 4, after the drop
    Mask pruning3;  // post IFM
};

inline Mask mask_from_bits(std::size_t rows, std::size_t cols, std::vector<std::uint8_t> bits) {
    return {rows, cols, std::move(bits)};
}

inline Mask mask_from_positions(std::size_t rows, std::size_t cols, const std::vector<std::size_t>& positions) {
    Mask m{rows, cols, std::vector<std::uint8_t>(rows * cols, 0)};
    for (auto p : positions) {
        m.bits[p] = 1;
    }
    return m;
}

/// detect -> per-stage binarize -> gated encoder -> projector -> IFM fuse and
/// filter -> decoder budget stub.
inline DocumentRun run_document(const PipelineConfig& config, const PipelineModels& models, const LabeledImage& doc,
                                std::size_t index) {
    using clock = std::chrono::steady_clock;
    auto ms_since = [](clock::time_point t0) {
        return std::chrono::duration<double, std::milli>(clock::now() - t0).count();
    };
    DocumentRun run;
    run.index = index;
    run.layout_seed = doc.layout.seed;
    run.content_fraction = doc.content_fraction();

    auto t0 = clock::now();
    FlopCounter det_flops;
    const ProbabilityMap p0 = detect(models.detector, doc, &det_flops);
    run.flops.detector = det_flops.flops;
    run.times.detect_ms = ms_since(t0);

    t0 = clock::now();
    FlopCounter embed_flops;
    const TokenGrid tokens = partition(doc.image, models.encoder.embed, &embed_flops);
    run.flops.patch_embed = embed_flops.flops;
    run.initial_tokens = tokens.size();
    run.encoded = encode(models.encoder, tokens, p0, config.thresholds, {config.gate, config.bypass});
    run.flops.encoder = run.encoded.flops();
    run.times.encode_ms = ms_since(t0);

    t0 = clock::now();
    FlopCounter proj_flops;
    run.projected = run.encoded.sequence.rows() > 0 ? mlp2_forward(run.encoded.sequence, models.projector, &proj_flops)
                                                    : Matrix(0, config.llm_dim);
    run.flops.projector = proj_flops.flops;
    run.times.project_ms = ms_since(t0);

    t0 = clock::now();
    const StageStats& last = run.encoded.stages.back();
    FlopCounter ifm_flops;
    const InstructionSpec instr = doc.layout.regions.empty()
                                      ? InstructionSpec{{1}}
                                      : instruction_target(doc, run_instruction_seed(config.seed, index),
                                                           config.patch())
                                            .instruction;
    run.instruction = instr;
    const Matrix visual = add_visual_positions(models.ifm, run.projected, run.encoded.kept, last.cols);
    run.fused = fuse(models.ifm, visual, embed_instruction(models.ifm, instr), &ifm_flops);
    run.filtered = filter(models.ifm, run.fused, config.thresholds.eps_i, run.encoded.kept, &ifm_flops);
    run.flops.ifm = ifm_flops.flops;
    run.times.ifm_ms = ms_since(t0);

    run.sequence_length = run.filtered.kept_indices.size() + instr.token_ids.size();
    run.flops.decoder = static_cast<std::uint64_t>(run.sequence_length) * run.sequence_length * config.decoder_pair_flops;
    run.context_fit = run.sequence_length <= config.context_budget;

    const std::size_t side = config.grid_side();
    const std::size_t factor = side / last.rows;
    const auto labels = doc.patch_labels(config.patch());
    std::vector<std::uint8_t> final_kept(last.positions(), 0);
    for (auto k : run.encoded.kept) {
        final_kept[k] = 1;
    }
    const auto& stage1 = run.encoded.stages.front().active_mask;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] != 0) {
            continue;
        }
        ++run.agnostic_positions;
        run.agnostic_inactive_stage1 += stage1[i] == 0 ? 1 : 0;
        const std::size_t r = i / side / factor;
        const std::size_t c = i % side / factor;
        run.agnostic_dropped += final_kept[r * last.cols + c] == 0 ? 1 : 0;
    }

    const StageStats& p1 = run.encoded.stages[std::min<std::size_t>(1, run.encoded.stages.size() - 1)];
    run.pruning1 = mask_from_bits(p1.rows, p1.cols, p1.active_mask);
    run.pruning2 = mask_from_positions(last.rows, last.cols, run.encoded.kept);
    run.pruning3 = mask_from_positions(last.rows, last.cols, run.filtered.kept_indices);
    return run;
}

struct StageSummary {
    std::size_t rows = 0;
    std::size_t cols = 0;
    double eps_c = 0.0;
    std::size_t positions = 0;
    std::size_t active = 0;
    std::size_t windows_total = 0;
    std::size_t windows_computed = 0;
    std::size_t windows_bypassed = 0;
    std::uint64_t attention_flops = 0;
    std::uint64_t merge_flops = 0;
};

struct DocumentSummary {
    std::size_t index = 0;
    std::uint64_t layout_seed = 0;
    double content_fraction = 0.0;
    std::vector<std::size_t> stage_active;
    std::size_t post_encoder = 0;
    std::size_t kept_final = 0;
    std::size_t instruction_tokens = 0;
    std::size_t sequence_length = 0;
    bool context_fit = true;
    std::uint64_t total_flops = 0;
    Mask pruning1;
    Mask pruning2;
    Mask pruning3;
};

inline constexpr int kReportSchemaVersion = 1;

/// Corpus-level run summary; every count is a sum over documents.
struct RunReport {
    int schema_version = kReportSchemaVersion;
    PipelineConfig config;
    bool detector_trained = false;
    bool ifm_trained = false;

    std::size_t documents = 0;
    double mean_content_fraction = 0.0;
    double mean_patch_label_fraction = 0.0;

    std::vector<StageSummary> stages;
    std::size_t initial_tokens = 0;
    std::size_t post_encoder = 0;
    std::size_t ifm_input = 0;
    std::size_t kept_final = 0;
    std::size_t instruction_tokens = 0;
    std::size_t max_sequence_length = 0;
    bool context_fit = true;

    std::size_t agnostic_positions = 0;
    std::size_t agnostic_inactive_stage1 = 0;
    std::size_t agnostic_dropped = 0;

    PhaseFlops flops;
    std::optional<PhaseTimes> times;
    std::vector<DocumentSummary> per_document;

    double agnostic_dropped_fraction() const {
        return agnostic_positions == 0 ? 0.0
                                       : static_cast<double>(agnostic_dropped) / static_cast<double>(agnostic_positions);
    }
};

inline void accumulate(RunReport& report, const DocumentRun& run, const PipelineConfig& config,
                       const LabeledImage& doc) {
    if (report.stages.empty()) {
        for (const auto& s : run.encoded.stages) {
            StageSummary ss;
            ss.rows = s.rows;
            ss.cols = s.cols;
            ss.eps_c = s.eps_c;
            report.stages.push_back(ss);
        }
    }
    DocumentSummary ds;
    ds.index = run.index;
    ds.layout_seed = run.layout_seed;
    ds.content_fraction = run.content_fraction;
    for (std::size_t k = 0; k < run.encoded.stages.size(); ++k) {
        const StageStats& s = run.encoded.stages[k];
        StageSummary& ss = report.stages[k];
        ss.positions += s.positions();
        ss.active += s.active;
        ss.windows_total += s.windows.total;
        ss.windows_computed += s.windows.computed;
        ss.windows_bypassed += s.windows.bypassed;
        ss.attention_flops += s.windows.flops;
        ss.merge_flops += s.merge_flops;
        ds.stage_active.push_back(s.active);
    }
    ds.post_encoder = run.encoded.kept.size();
    ds.kept_final = run.filtered.kept_indices.size();
    ds.instruction_tokens = run.instruction.token_ids.size();
    ds.sequence_length = run.sequence_length;
    ds.context_fit = run.context_fit;
    ds.total_flops = run.flops.total();
    ds.pruning1 = run.pruning1;
    ds.pruning2 = run.pruning2;
    ds.pruning3 = run.pruning3;

    report.documents += 1;
    report.initial_tokens += run.initial_tokens;
    report.post_encoder += ds.post_encoder;
    report.ifm_input += run.fused.visual.rows();
    report.kept_final += ds.kept_final;
    report.instruction_tokens += ds.instruction_tokens;
    report.max_sequence_length = std::max(report.max_sequence_length, run.sequence_length);
    report.context_fit = report.context_fit && run.context_fit;
    report.agnostic_positions += run.agnostic_positions;
    report.agnostic_inactive_stage1 += run.agnostic_inactive_stage1;
    report.agnostic_dropped += run.agnostic_dropped;
    report.flops += run.flops;
    if (report.times) {
        *report.times += run.times;
    }
    const auto labels = doc.patch_labels(config.patch());
    report.mean_patch_label_fraction +=
        static_cast<double>(std::count(labels.begin(), labels.end(), std::uint8_t{1})) / static_cast<double>(labels.size());
    report.mean_content_fraction += run.content_fraction;
    report.per_document.push_back(std::move(ds));
}

struct RunOptions {
    bool record_timings = false;
    // Receives every DocumentRun before it is folded into the report.
    std::function<void(const DocumentRun&)> on_document;
};

inline RunReport run(const PipelineConfig& config, const PipelineModels& models, const std::vector<LabeledImage>& corpus,
                     const RunOptions& opts = {}) {
    config.validate();
    if (corpus.empty()) {
        throw std::invalid_argument("run: empty corpus");
    }
    RunReport report;
    report.config = config;
    report.detector_trained = models.detector.variant == DetectorVariant::mlp;
    report.ifm_trained = models.ifm_trained;
    if (opts.record_timings) {
        report.times = PhaseTimes{};
    }
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        if (corpus[i].image.width != config.image_size || corpus[i].image.height != config.image_size) {
            throw ConfigError("document " + std::to_string(i) + " is not " + std::to_string(config.image_size) + " px square");
        }
        const DocumentRun doc_run = run_document(config, models, corpus[i], i);
        if (opts.on_document) {
            opts.on_document(doc_run);
        }
        accumulate(report, doc_run, config, corpus[i]);
    }
    report.mean_patch_label_fraction /= static_cast<double>(report.documents);
    report.mean_content_fraction /= static_cast<double>(report.documents);
    return report;
}

/// Threshold schedule for a sweep point: the base schedule rescaled so that
/// its first stage equals `content`, each stage capped at 1.
inline ThresholdSchedule scaled_schedule(const ThresholdSchedule& base, double content, double eps_i) {
    ThresholdSchedule s = base;
    s.eps_i = eps_i;
    const double first = base.eps_c.empty() ? 0.0 : base.eps_c.front();
    for (std::size_t k = 0; k < s.eps_c.size(); ++k) {
        const double shape = first > 0.0 ? base.eps_c[k] / first : 1.0;
        s.eps_c[k] = std::min(1.0, content * shape);
    }
    return s;
}

struct SweepPoint {
    double content = 0.0;
    double eps_i = 0.0;
};

struct SweepResult {
    std::vector<SweepPoint> points;
    std::vector<RunReport> reports;
    std::vector<std::string> violations;       // coordinate-wise compute rises
    std::vector<std::string> kept_violations;  // coordinate-wise kept-count rises
    std::optional<std::string> error;      // set if a run failed; earlier reports are kept

    bool monotone() const { return violations.empty(); }
};

inline std::vector<SweepPoint> table_settings() { return {{0.25, 0.25}, {0.25, 0.5}, {0.5, 0.25}, {0.5, 0.5}}; }

namespace detail {

template <class Measure>
std::vector<std::string> sweep_rises(const std::vector<SweepPoint>& points, const std::vector<RunReport>& reports,
                                     const std::string& what, Measure measure) {
    std::vector<std::string> out;
    for (std::size_t a = 0; a < reports.size(); ++a) {
        for (std::size_t b = 0; b < reports.size(); ++b) {
            const bool same_i = points[a].eps_i == points[b].eps_i && points[a].content < points[b].content;
            const bool same_c = points[a].content == points[b].content && points[a].eps_i < points[b].eps_i;
            if (!same_i && !same_c) {
                continue;
            }
            auto label = [&](std::size_t k) {
                return "(" + std::to_string(points[k].content) + ", " + std::to_string(points[k].eps_i) + ")";
            };
            if (measure(reports[b]) > measure(reports[a])) {
                out.push_back(what + " rise from " + label(a) + " to " + label(b));
            }
        }
    }
    return out;
}

}  // namespace detail

/// Coordinate-wise check: raising either threshold must not raise total FLOPs.
inline std::vector<std::string> check_sweep_monotone(const std::vector<SweepPoint>& points,
                                                     const std::vector<RunReport>& reports) {
    return detail::sweep_rises(points, reports, "FLOPs", [](const RunReport& r) { return r.flops.total(); });
}

/// Same check on the final kept count. Guaranteed along eps_i only: a higher
/// content threshold changes the surviving tokens' features and so the IFM
/// scores, which can let a learned IFM keep more of them.
inline std::vector<std::string> check_sweep_kept(const std::vector<SweepPoint>& points,
                                                 const std::vector<RunReport>& reports) {
    return detail::sweep_rises(points, reports, "kept tokens", [](const RunReport& r) { return r.kept_final; });
}

inline SweepResult sweep(const PipelineConfig& config, const PipelineModels& models,
                         const std::vector<LabeledImage>& corpus, const std::vector<SweepPoint>& grid) {
    if (grid.empty()) {
        throw ConfigError("sweep grid is empty");
    }
    SweepResult result;
    for (const auto& point : grid) {
        PipelineConfig c = config;
        c.thresholds = scaled_schedule(config.thresholds, point.content, point.eps_i);
        try {
            PipelineModels m = models;
            m.ifm.eps_i = point.eps_i;
            result.reports.push_back(run(c, m, corpus));
            result.points.push_back(point);
        } catch (const std::exception& e) {
            result.error = e.what();
            break;
        }
    }
    result.violations = check_sweep_monotone(result.points, result.reports);
    result.kept_violations = check_sweep_kept(result.points, result.reports);
    return result;
}

/// IFM training examples: each document is encoded with the configured
/// detector and schedule, then paired with `instructions_per_doc` instruction
/// targets. Labels are the relevance masks max-pooled to the final grid.
inline std::vector<IfmSample> build_ifm_samples(const PipelineConfig& config, const PipelineModels& models,
                                                const std::vector<LabeledImage>& corpus) {
    std::vector<IfmSample> samples;
    const std::size_t side = config.grid_side();
    for (const auto& doc : corpus) {
        if (doc.layout.regions.empty()) {
            continue;
        }
        const ProbabilityMap p0 = detect(models.detector, doc);
        const TokenGrid tokens = partition(doc.image, models.encoder.embed);
        const EncodeResult enc = encode(models.encoder, tokens, p0, config.thresholds, {config.gate, config.bypass});
        if (enc.kept.empty()) {
            continue;
        }
        const StageStats& last = enc.stages.back();
        const Matrix projected = mlp2_forward(enc.sequence, models.projector);
        const Matrix visual = add_visual_positions(models.ifm, projected, enc.kept, last.cols);
        for (int k = 0; k < config.instructions_per_doc; ++k) {
            const InstructionTarget target =
                instruction_target(doc, derive_seed(doc.layout.seed, 0x747261696e00ULL + k), config.patch());
            const auto pooled = pool_mask(target.relevance, side, side / last.rows);
            IfmSample s;
            s.visual = visual;
            s.instruction = target.instruction;
            for (auto pos : enc.kept) {
                s.labels.push_back(pooled[pos] != 0 ? 1.0 : 0.0);
            }
            samples.push_back(std::move(s));
        }
    }
    return samples;
}

/// Recall of relevant tokens among IFM inputs at threshold eps.
inline double ifm_recall(const IfmModel& model, const std::vector<IfmSample>& samples, double eps) {
    std::size_t pos = 0;
    std::size_t hit = 0;
    for (const auto& s : samples) {
        const FuseResult f = fuse(model, s.visual, embed_instruction(model, s.instruction));
        const FilterResult r = filter(model, f, eps);
        for (std::size_t i = 0; i < s.labels.size(); ++i) {
            if (s.labels[i] == 1.0) {
                ++pos;
                hit += r.relevance_scores[i] >= eps ? 1 : 0;
            }
        }
    }
    return pos == 0 ? 1.0 : static_cast<double>(hit) / static_cast<double>(pos);
}

}  // namespace hrvda

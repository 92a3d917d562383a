// Copyright (C) 2026 The hrvda-desk Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "hrvda/pipeline.hpp"
#include "hrvda/pnm.hpp"
#include "json.hpp"

namespace hrvda {

using Json = nlohmann::ordered_json;

/// Fixed 9-decimal rendering so reports are byte-stable.
inline std::string fixed9(double v) {
    if (!std::isfinite(v)) {
        throw std::invalid_argument("report value is not finite");
    }
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.9f", v);
    std::string s(buf);
    return s == "-0.000000000" ? "0.000000000" : s;
}

/// Round-trips a fixed9 value through a JSON number literal.
inline Json json_fixed(double v) { return Json::parse(fixed9(v)); }

inline Json mask_to_json(const Mask& m) {
    Json rows = Json::array();
    for (std::size_t r = 0; r < m.rows; ++r) {
        std::string line;
        for (std::size_t c = 0; c < m.cols; ++c) {
            line.push_back(m.bits[r * m.cols + c] != 0 ? '1' : '0');
        }
        rows.push_back(line);
    }
    return Json{{"rows", m.rows}, {"cols", m.cols}, {"bits", rows}};
}

inline Mask mask_from_json(const Json& j) {
    Mask m;
    m.rows = j.at("rows").get<std::size_t>();
    m.cols = j.at("cols").get<std::size_t>();
    const auto& bits = j.at("bits");
    if (bits.size() != m.rows) {
        throw std::invalid_argument("mask row count mismatch");
    }
    for (const auto& row : bits) {
        const auto s = row.get<std::string>();
        if (s.size() != m.cols) {
            throw std::invalid_argument("mask column count mismatch");
        }
        for (char ch : s) {
            if (ch != '0' && ch != '1') {
                throw std::invalid_argument("mask bits must be '0' or '1'");
            }
            m.bits.push_back(ch == '1' ? 1 : 0);
        }
    }
    return m;
}

inline Json config_to_json(const PipelineConfig& c) {
    Json depths = Json::array();
    Json windows = Json::array();
    for (const auto& s : c.encoder.stages) {
        depths.push_back(s.depth);
        windows.push_back(s.window);
    }
    Json eps_c = Json::array();
    for (double e : c.thresholds.eps_c) {
        eps_c.push_back(json_fixed(e));
    }
    return Json{{"profile", to_string(c.profile)},
                {"image_size", c.image_size},
                {"patch", c.encoder.patch},
                {"channels", c.encoder.channels},
                {"base_dim", c.encoder.base_dim},
                {"depths", depths},
                {"windows", windows},
                {"mlp_ratio", c.encoder.mlp_ratio},
                {"eps_c", eps_c},
                {"eps_i", json_fixed(c.thresholds.eps_i)},
                {"detector", to_string(c.detector)},
                {"seed", c.seed},
                {"model_seed", c.model_seed},
                {"context_budget", c.context_budget},
                {"corpus_size", c.corpus_size},
                {"content_fraction", json_fixed(c.content_fraction)},
                {"llm_dim", c.llm_dim},
                {"ifm_hidden", c.ifm_hidden},
                {"decoder_pair_flops", c.decoder_pair_flops},
                {"gate", c.gate == GateMode::hard ? "hard" : "soft"},
                {"bypass", c.bypass},
                {"position_encoding", c.position_encoding}};
}

inline Json flops_to_json(const PhaseFlops& f) {
    return Json{{"patch_embed", f.patch_embed}, {"detector", f.detector}, {"encoder", f.encoder},
                {"projector", f.projector},     {"ifm", f.ifm},           {"decoder", f.decoder},
                {"total", f.total()}};
}

inline Json report_to_json(const RunReport& r) {
    Json stages = Json::array();
    for (std::size_t k = 0; k < r.stages.size(); ++k) {
        const StageSummary& s = r.stages[k];
        stages.push_back(Json{{"stage", k + 1},
                              {"rows", s.rows},
                              {"cols", s.cols},
                              {"eps_c", json_fixed(s.eps_c)},
                              {"positions", s.positions},
                              {"active", s.active},
                              {"windows_total", s.windows_total},
                              {"windows_computed", s.windows_computed},
                              {"windows_bypassed", s.windows_bypassed},
                              {"attention_flops", s.attention_flops},
                              {"merge_flops", s.merge_flops}});
    }
    Json docs = Json::array();
    for (const auto& d : r.per_document) {
        docs.push_back(Json{{"index", d.index},
                            {"layout_seed", d.layout_seed},
                            {"content_fraction", json_fixed(d.content_fraction)},
                            {"stage_active", d.stage_active},
                            {"post_encoder", d.post_encoder},
                            {"kept_final", d.kept_final},
                            {"instruction_tokens", d.instruction_tokens},
                            {"sequence_length", d.sequence_length},
                            {"context_fit", d.context_fit},
                            {"total_flops", d.total_flops},
                            {"masks",
                             Json{{"pruning1", mask_to_json(d.pruning1)},
                                  {"pruning2", mask_to_json(d.pruning2)},
                                  {"pruning3", mask_to_json(d.pruning3)}}}});
    }
    Json j{{"schema_version", r.schema_version},
           {"config", config_to_json(r.config)},
           {"models", Json{{"detector_trained", r.detector_trained}, {"ifm_trained", r.ifm_trained}}},
           {"corpus",
            Json{{"documents", r.documents},
                 {"mean_content_fraction", json_fixed(r.mean_content_fraction)},
                 {"mean_patch_label_fraction", json_fixed(r.mean_patch_label_fraction)}}},
           {"stages", stages},
           {"tokens",
            Json{{"initial", r.initial_tokens},
                 {"post_encoder", r.post_encoder},
                 {"ifm_input", r.ifm_input},
                 {"kept_final", r.kept_final},
                 {"instruction", r.instruction_tokens},
                 {"max_sequence_length", r.max_sequence_length}}},
           {"context_fit", r.context_fit},
           {"content_agnostic",
            Json{{"positions", r.agnostic_positions},
                 {"inactive_stage1", r.agnostic_inactive_stage1},
                 {"dropped", r.agnostic_dropped},
                 {"dropped_fraction", json_fixed(r.agnostic_dropped_fraction())}}},
           {"flops", flops_to_json(r.flops)}};
    if (r.times) {
        j["wall_ms"] = Json{{"detect", json_fixed(r.times->detect_ms)},
                            {"encode", json_fixed(r.times->encode_ms)},
                            {"project", json_fixed(r.times->project_ms)},
                            {"ifm", json_fixed(r.times->ifm_ms)}};
    }
    j["documents"] = docs;
    return j;
}

inline std::string serialize_report(const RunReport& r) { return report_to_json(r).dump(2) + "\n"; }

inline constexpr const char* kSweepCsvHeader =
    "content,eps_i,eps_c,initial_tokens,post_encoder,kept_final,instruction_tokens,encoder_flops,projector_flops,"
    "ifm_flops,decoder_flops,total_flops,context_fit";

inline std::string sweep_csv(const SweepResult& s) {
    std::ostringstream out;
    out << kSweepCsvHeader << "\n";
    for (std::size_t k = 0; k < s.reports.size(); ++k) {
        const RunReport& r = s.reports[k];
        std::string eps;
        for (std::size_t i = 0; i < r.config.thresholds.eps_c.size(); ++i) {
            eps += (i ? ";" : "") + fixed9(r.config.thresholds.eps_c[i]);
        }
        out << fixed9(s.points[k].content) << "," << fixed9(s.points[k].eps_i) << "," << eps << "," << r.initial_tokens
            << "," << r.post_encoder << "," << r.kept_final << "," << r.instruction_tokens << "," << r.flops.encoder
            << "," << r.flops.projector << "," << r.flops.ifm << "," << r.flops.decoder << "," << r.flops.total() << ","
            << (r.context_fit ? "true" : "false") << "\n";
    }
    return out.str();
}

/// Single-row CSV form of a run report.
inline std::string report_csv(const RunReport& r) {
    SweepResult s;
    s.points.push_back({r.config.thresholds.eps_c.empty() ? 0.0 : r.config.thresholds.eps_c.front(),
                        r.config.thresholds.eps_i});
    s.reports.push_back(r);
    return sweep_csv(s);
}

inline Json sweep_to_json(const SweepResult& s) {
    Json runs = Json::array();
    for (std::size_t k = 0; k < s.reports.size(); ++k) {
        Json entry{{"content", json_fixed(s.points[k].content)}, {"eps_i", json_fixed(s.points[k].eps_i)}};
        entry["report"] = report_to_json(s.reports[k]);
        runs.push_back(entry);
    }
    Json j{{"schema_version", kReportSchemaVersion}, {"monotone", s.monotone()}, {"violations", s.violations},
            {"kept_violations", s.kept_violations}};
    if (s.error) {
        j["error"] = *s.error;
    }
    j["runs"] = runs;
    return j;
}

inline Json layout_to_json(const LayoutSpec& spec) {
    Json regions = Json::array();
    for (const auto& r : spec.regions) {
        regions.push_back(Json{{"kind", to_string(r.kind)},
                               {"bbox", {r.bbox.x, r.bbox.y, r.bbox.w, r.bbox.h}},
                               {"texture_seed", r.texture_seed}});
    }
    return Json{{"image_size", spec.image_size},
                {"background_value", spec.background_value},
                {"target_content_fraction", spec.target_content_fraction},
                {"seed", spec.seed},
                {"regions", regions}};
}

inline LayoutSpec layout_from_json(const Json& j) {
    LayoutSpec spec;
    spec.image_size = j.at("image_size").get<int>();
    spec.background_value = j.at("background_value").get<double>();
    spec.target_content_fraction = j.at("target_content_fraction").get<double>();
    spec.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& r : j.at("regions")) {
        ContentRegion region;
        region.kind = region_kind_from_string(r.at("kind").get<std::string>());
        const auto& b = r.at("bbox");
        if (b.size() != 4) {
            throw std::invalid_argument("region bbox needs 4 integers");
        }
        region.bbox = {b[0].get<int>(), b[1].get<int>(), b[2].get<int>(), b[3].get<int>()};
        region.texture_seed = r.at("texture_seed").get<std::uint64_t>();
        spec.regions.push_back(region);
    }
    return spec;
}

/// Corpus manifest: layouts only. Images are regenerated exactly from them.
inline Json corpus_to_json(const std::vector<LabeledImage>& corpus) {
    Json docs = Json::array();
    for (const auto& d : corpus) {
        docs.push_back(layout_to_json(d.layout));
    }
    return Json{{"schema_version", kReportSchemaVersion}, {"documents", docs}};
}

inline std::vector<LabeledImage> corpus_from_json(const Json& j) {
    std::vector<LabeledImage> corpus;
    for (const auto& d : j.at("documents")) {
        corpus.push_back(generate(layout_from_json(d)));
    }
    return corpus;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot open '" + path.string() + "' for writing");
    }
    out << text;
    if (!out) {
        throw std::runtime_error("write failed for '" + path.string() + "'");
    }
}

struct RenderOutcome {
    std::vector<std::filesystem::path> written;
    std::vector<std::string> errors;  // one per file that failed
};

/// Writes the three pruning masks of document `doc` in a serialized report as
/// PBM files. White marks kept tokens.
inline RenderOutcome render_masks(const Json& report, std::size_t doc, const std::filesystem::path& dir) {
    const auto& docs = report.at("documents");
    if (doc >= docs.size()) {
        throw std::out_of_range("report has no document " + std::to_string(doc));
    }
    RenderOutcome out;
    for (const char* name : {"pruning1", "pruning2", "pruning3"}) {
        const Mask m = mask_from_json(docs[doc].at("masks").at(name));
        std::vector<std::uint8_t> ink(m.bits.size());
        for (std::size_t i = 0; i < ink.size(); ++i) {
            ink[i] = m.bits[i] != 0 ? 0 : 1;
        }
        const auto path = dir / ("doc" + std::to_string(doc) + "_" + name + ".pbm");
        try {
            write_pbm(path.string(), static_cast<int>(m.cols), static_cast<int>(m.rows), ink);
            out.written.push_back(path);
        } catch (const std::exception& e) {
            out.errors.push_back(path.string() + ": " + e.what());
        }
    }
    return out;
}

}  // namespace hrvda

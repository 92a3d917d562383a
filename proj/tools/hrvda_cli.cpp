// Copyright (C) 2026 The hrvda-desk Authors
// SPDX-License-Identifier: Apache-2.0

// hrvda: corpus generation, training, pipeline runs, sweeps and mask rendering.
// Exit codes: 0 success, 2 configuration or usage error, 3 runtime failure.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "hrvda/hrvda.hpp"

namespace fs = std::filesystem;
using namespace hrvda;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

struct CommonOptions {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string profile;
    std::string out = ".";
    std::string format = "json";
};

struct ModelPaths {
    std::string detector;
    std::string ifm;
};

PipelineConfig resolve_config(const CommonOptions& o) {
    std::optional<Profile> profile;
    if (!o.profile.empty()) {
        profile = parse_profile(o.profile);
    }
    PipelineConfig c = o.config_path.empty() ? profile_config(profile.value_or(Profile::desk))
                                             : load_config(o.config_path, profile);
    c.seed = resolve_seed(o.seed, c.seed);
    c.validate();
    return c;
}

fs::path out_dir(const CommonOptions& o) {
    fs::path dir(o.out);
    fs::create_directories(dir);
    return dir;
}

std::vector<LabeledImage> load_corpus_dir(const std::string& dir) {
    const fs::path manifest = fs::path(dir) / "corpus.json";
    std::ifstream in(manifest);
    if (!in) {
        throw ConfigError("cannot read corpus manifest '" + manifest.string() + "'");
    }
    try {
        return corpus_from_json(Json::parse(in));
    } catch (const Json::exception& e) {
        throw ConfigError("malformed corpus manifest '" + manifest.string() + "': " + e.what());
    }
}

std::vector<LabeledImage> corpus_for(const PipelineConfig& c, const std::string& corpus_dir) {
    return corpus_dir.empty() ? make_config_corpus(c) : load_corpus_dir(corpus_dir);
}

PipelineModels load_models(const PipelineConfig& c, const ModelPaths& paths) {
    std::optional<DetectorModel> det;
    std::optional<IfmModel> ifm;
    try {
        if (!paths.detector.empty()) {
            det = load_detector(paths.detector);
        }
        if (!paths.ifm.empty()) {
            ifm = load_ifm(paths.ifm);
        }
    } catch (const WeightFileError& e) {
        throw ConfigError(e.what());
    }
    return build_models(c, det, ifm);
}

Json loss_json(double initial, const std::vector<double>& curve) {
    Json j = Json::array();
    for (double v : curve) {
        j.push_back(json_fixed(v));
    }
    return Json{{"initial_loss", json_fixed(initial)}, {"loss_curve", j}};
}

std::vector<SweepPoint> parse_grid(const std::string& text) {
    std::vector<SweepPoint> grid;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto colon = item.find(':');
        if (colon == std::string::npos) {
            throw ConfigError("grid entry '" + item + "' must be content:eps_i");
        }
        grid.push_back({detail::parse_number<double>("grid", detail::trim(item.substr(0, colon))),
                        detail::parse_number<double>("grid", detail::trim(item.substr(colon + 1)))});
    }
    return grid;
}

int cmd_gen(const CommonOptions& o, int n, double fraction, int size) {
    PipelineConfig c = resolve_config(o);
    if (n > 0) {
        c.corpus_size = n;
    }
    if (fraction >= 0.0) {
        c.content_fraction = fraction;
    }
    if (size > 0) {
        c.image_size = size;
    }
    c.validate();
    const auto corpus = make_config_corpus(c);
    const fs::path dir = out_dir(o);
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        const auto& d = corpus[i];
        char name[32];
        std::snprintf(name, sizeof(name), "doc_%03zu", i);
        write_pgm((dir / (std::string(name) + ".pgm")).string(), d.size(), d.size(), d.image.data);
        write_pbm((dir / (std::string(name) + "_mask.pbm")).string(), d.size(), d.size(), d.content_mask);
    }
    write_text(dir / "corpus.json", corpus_to_json(corpus).dump(2) + "\n");
    std::cout << "wrote " << corpus.size() << " documents to " << dir.string() << " (mean content fraction "
              << fixed9(mean_patch_fraction(corpus, c.patch())) << ")\n";
    return 0;
}

int cmd_train_detector(const CommonOptions& o, const TrainProtocol& protocol) {
    const PipelineConfig c = resolve_config(o);
    const DetectorFit fit = fit_detector(c, protocol);
    const fs::path dir = out_dir(o);
    save_detector(fit.model, (dir / "detector.hrvd").string());
    Json j = loss_json(fit.initial_loss, fit.loss_curve);
    j["held_out_recall"] = {{"eps", json_fixed(c.thresholds.eps_c.front())},
                            {"recall", json_fixed(fit.held_out_recall)}};
    write_text(dir / "detector_train.json", j.dump(2) + "\n");
    std::cout << "detector saved to " << (dir / "detector.hrvd").string() << "; held-out recall "
              << j["held_out_recall"]["recall"].dump() << "\n";
    return 0;
}

int cmd_train_ifm(const CommonOptions& o, const ModelPaths& paths, const TrainProtocol& protocol) {
    const PipelineConfig c = resolve_config(o);
    const IfmFit fit = fit_ifm(c, load_models(c, {paths.detector, ""}), protocol);
    const fs::path dir = out_dir(o);
    save_ifm(fit.model, (dir / "ifm.hrvd").string());
    Json j = loss_json(fit.initial_loss, fit.loss_curve);
    j["held_out_recall"] = {{"eps", json_fixed(c.thresholds.eps_i)}, {"recall", json_fixed(fit.held_out_recall)}};
    write_text(dir / "ifm_train.json", j.dump(2) + "\n");
    std::cout << "IFM saved to " << (dir / "ifm.hrvd").string() << "; held-out recall "
              << j["held_out_recall"]["recall"].dump() << "\n";
    return 0;
}

int cmd_run(const CommonOptions& o, const ModelPaths& paths, const std::string& corpus_dir, const std::string& eps_c,
            std::optional<double> eps_i, bool timings, bool geometry_only) {
    PipelineConfig c = resolve_config(o);
    if (!eps_c.empty()) {
        c.thresholds.eps_c = parse_double_list("eps-c", eps_c);
    }
    if (eps_i) {
        c.thresholds.eps_i = *eps_i;
    }
    c.validate();
    const fs::path dir = out_dir(o);
    if (geometry_only) {
        const Geometry g = plan_geometry(c);
        Json j{{"schema_version", kReportSchemaVersion},
               {"config", config_to_json(c)},
               {"initial_tokens", g.initial_tokens},
               {"stage_sides", g.stage_sides},
               {"final_positions", g.final_positions}};
        write_text(dir / "geometry.json", j.dump(2) + "\n");
        std::cout << j.dump(2) << "\n";
        return 0;
    }
    const PipelineModels models = load_models(c, paths);
    const auto corpus = corpus_for(c, corpus_dir);
    RunOptions ro;
    ro.record_timings = timings;
    const RunReport report = run(c, models, corpus, ro);
    const fs::path path = dir / (o.format == "csv" ? "report.csv" : "report.json");
    write_text(path, o.format == "csv" ? report_csv(report) : serialize_report(report));
    std::cout << "report written to " << path.string() << ": kept_final " << report.kept_final << ", total FLOPs "
              << report.flops.total() << ", content-agnostic dropped " << fixed9(report.agnostic_dropped_fraction())
              << "\n";
    return 0;
}

int cmd_sweep(const CommonOptions& o, const ModelPaths& paths, const std::string& corpus_dir, const std::string& grid) {
    const PipelineConfig c = resolve_config(o);
    const auto points = parse_grid(grid);
    const PipelineModels models = load_models(c, paths);
    const auto corpus = corpus_for(c, corpus_dir);
    const SweepResult s = sweep(c, models, corpus, points);
    const fs::path dir = out_dir(o);
    write_text(dir / "summary.csv", sweep_csv(s));
    if (o.format == "json") {
        write_text(dir / "sweep.json", sweep_to_json(s).dump(2) + "\n");
    }
    std::cout << sweep_csv(s);
    if (s.error) {
        std::cerr << "sweep stopped after " << s.reports.size() << " settings: " << *s.error << "\n";
        return kExitRuntime;
    }
    for (const auto& v : s.kept_violations) {
        std::cerr << "warning: " << v << "\n";
    }
    if (!s.monotone()) {
        for (const auto& v : s.violations) {
            std::cerr << "monotonicity violated: " << v << "\n";
        }
        return kExitRuntime;
    }
    return 0;
}

int cmd_render(const CommonOptions& o, const std::string& report_path, std::size_t doc) {
    std::ifstream in(report_path);
    if (!in) {
        throw ConfigError("cannot read report '" + report_path + "'");
    }
    Json report;
    try {
        report = Json::parse(in);
    } catch (const Json::exception& e) {
        throw ConfigError("malformed report '" + report_path + "': " + e.what());
    }
    const RenderOutcome r = render_masks(report, doc, out_dir(o));
    for (const auto& p : r.written) {
        std::cout << "wrote " << p.string() << "\n";
    }
    for (const auto& e : r.errors) {
        std::cerr << "failed " << e << "\n";
    }
    return r.errors.empty() ? 0 : kExitRuntime;
}

void add_common(CLI::App* app, CommonOptions& o) {
    app->add_option("--config", o.config_path, "Config file (key = value lines)")->check(CLI::ExistingFile);
    app->add_option("--seed", o.seed, "Data seed (falls back to HRVDA_SEED, then the config)");
    app->add_option("--profile", o.profile, "desk or paper-scale")->check(CLI::IsMember({"desk", "paper-scale"}));
    app->add_option("--out", o.out, "Output directory");
    app->add_option("--format", o.format, "Report format")->check(CLI::IsMember({"json", "csv"}));
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Desk-scale visual token pruning pipeline"};
    app.require_subcommand(1);
    CommonOptions common;
    ModelPaths paths;

    auto* gen = app.add_subcommand("gen", "Generate a synthetic document corpus");
    int gen_n = 0;
    double gen_fraction = -1.0;
    int gen_size = 0;
    add_common(gen, common);
    gen->add_option("--n", gen_n, "Number of documents (default: corpus_size)");
    gen->add_option("--fraction", gen_fraction, "Target content fraction (default: content_fraction)");
    gen->add_option("--size", gen_size, "Image side in pixels (default: image_size)");

    auto* tdet = app.add_subcommand("train-detector", "Train the MLP content detector");
    TrainProtocol tdet_p = detector_protocol();
    add_common(tdet, common);
    tdet->add_option("--n", tdet_p.train_docs, "Training documents")->check(CLI::PositiveNumber)->capture_default_str();
    tdet->add_option("--epochs", tdet_p.epochs, "Epochs")->check(CLI::NonNegativeNumber)->capture_default_str();
    tdet->add_option("--lr", tdet_p.lr, "Adam learning rate")->check(CLI::PositiveNumber)->capture_default_str();

    auto* tifm = app.add_subcommand("train-ifm", "Train the instruction filter classifier");
    TrainProtocol tifm_p = ifm_protocol();
    add_common(tifm, common);
    tifm->add_option("--n", tifm_p.train_docs, "Training documents")->check(CLI::PositiveNumber)->capture_default_str();
    tifm->add_option("--epochs", tifm_p.epochs, "Epochs")->check(CLI::NonNegativeNumber)->capture_default_str();
    tifm->add_option("--lr", tifm_p.lr, "Adam learning rate")->check(CLI::PositiveNumber)->capture_default_str();
    tifm->add_option("--detector", paths.detector, "Detector weights (required when detector = mlp)");

    auto* runc = app.add_subcommand("run", "Run the pipeline and write a report");
    std::string run_corpus;
    std::string run_eps_c;
    std::optional<double> run_eps_i;
    bool run_timings = false;
    bool run_geometry = false;
    add_common(runc, common);
    runc->add_option("--corpus", run_corpus, "Corpus directory from gen (default: generated from the config)");
    runc->add_option("--detector", paths.detector, "Detector weights");
    runc->add_option("--ifm", paths.ifm, "IFM weights");
    runc->add_option("--eps-c", run_eps_c, "Per-stage content thresholds, comma separated");
    runc->add_option("--eps-i", run_eps_i, "Instruction threshold");
    runc->add_flag("--timings", run_timings, "Include wall-clock ms per phase (not byte-stable)");
    runc->add_flag("--geometry-only", run_geometry, "Report token geometry without running the model");

    auto* sw = app.add_subcommand("sweep", "Run a threshold grid and write summary.csv");
    std::string sw_corpus;
    std::string sw_grid = "0:0,0.25:0.25,0.25:0.5,0.5:0.25,0.5:0.5";
    add_common(sw, common);
    sw->add_option("--corpus", sw_corpus, "Corpus directory from gen");
    sw->add_option("--detector", paths.detector, "Detector weights");
    sw->add_option("--ifm", paths.ifm, "IFM weights");
    sw->add_option("--grid", sw_grid, "Settings content:eps_i, comma separated")->capture_default_str();

    auto* rnd = app.add_subcommand("render", "Write PBM pruning masks from a report");
    std::string rnd_report;
    std::size_t rnd_doc = 0;
    add_common(rnd, common);
    rnd->add_option("--report", rnd_report, "report.json from run")->required();
    rnd->add_option("--doc", rnd_doc, "Document index")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n\n" << (app.get_subcommands().empty() ? app.help() : app.get_subcommands().front()->help());
        return kExitConfig;
    }

    try {
        if (*gen) {
            return cmd_gen(common, gen_n, gen_fraction, gen_size);
        }
        if (*tdet) {
            return cmd_train_detector(common, tdet_p);
        }
        if (*tifm) {
            return cmd_train_ifm(common, paths, tifm_p);
        }
        if (*runc) {
            return cmd_run(common, paths, run_corpus, run_eps_c, run_eps_i, run_timings, run_geometry);
        }
        if (*sw) {
            return cmd_sweep(common, paths, sw_corpus, sw_grid);
        }
        return cmd_render(common, rnd_report, rnd_doc);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
}

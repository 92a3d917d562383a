// Copyright (C) 2026 The hrvda-desk Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "hrvda/pipeline.hpp"

namespace hrvda {

// Config file: one `key = value` per line, `#` starts a comment. Lists are
// comma separated. `profile` is applied first, other keys override it.
//
//   profile            desk | paper-scale
//   image_size         int, divisible by patch
//   patch              int
//   base_dim           int
//   depths             int list, one per stage
//   window             int, shared by all stages
//   mlp_ratio          int
//   eps_c              float list, one per stage, non-decreasing
//   eps_i              float
//   detector           oracle | mlp
//   seed               uint (data: corpus and instructions)
//   model_seed         uint (encoder, projector and IFM init)
//   context_budget     int
//   corpus_size        int
//   content_fraction   float
//   llm_dim            int, multiple of 4
//   ifm_hidden         int
//   decoder_pair_flops uint
//   gate               hard | soft
//   bypass             true | false
//   position_encoding  true | false
//   instructions_per_doc int

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) {
        return {};
    }
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        out.push_back(trim(item));
    }
    return out;
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
    std::istringstream in(text);
    in.imbue(std::locale::classic());
    T v{};
    in >> v;
    if (in.fail() || !in.eof()) {
        throw ConfigError("config key '" + key + "': cannot parse '" + text + "'");
    }
    if constexpr (std::is_unsigned_v<T>) {
        if (!text.empty() && text.front() == '-') {
            throw ConfigError("config key '" + key + "': must be non-negative");
        }
    }
    return v;
}

inline bool parse_bool(const std::string& key, const std::string& text) {
    if (text == "true" || text == "1") {
        return true;
    }
    if (text == "false" || text == "0") {
        return false;
    }
    throw ConfigError("config key '" + key + "': expected true or false, got '" + text + "'");
}

}  // namespace detail

inline Profile parse_profile(const std::string& s) {
    if (s == "desk") {
        return Profile::desk;
    }
    if (s == "paper-scale") {
        return Profile::paper_scale;
    }
    throw ConfigError("unknown profile '" + s + "' (expected desk or paper-scale)");
}

inline PipelineConfig profile_config(Profile p) {
    return p == Profile::desk ? PipelineConfig::desk() : PipelineConfig::paper_scale();
}

inline std::vector<double> parse_double_list(const std::string& key, const std::string& text) {
    std::vector<double> out;
    for (const auto& item : detail::split_list(text)) {
        out.push_back(detail::parse_number<double>(key, item));
    }
    return out;
}

/// Applies one key to a config. Throws ConfigError on unknown keys or bad values.
inline void apply_config_key(PipelineConfig& c, const std::string& key, const std::string& value) {
    using detail::parse_number;
    if (key == "profile") {
        c.profile = parse_profile(value);
    } else if (key == "image_size") {
        c.image_size = parse_number<int>(key, value);
    } else if (key == "patch") {
        c.encoder.patch = parse_number<int>(key, value);
    } else if (key == "base_dim") {
        c.encoder.base_dim = parse_number<std::size_t>(key, value);
    } else if (key == "depths") {
        const auto items = detail::split_list(value);
        std::vector<StageConfig> stages;
        const int window = c.encoder.stages.empty() ? 8 : c.encoder.stages.front().window;
        for (std::size_t i = 0; i < items.size(); ++i) {
            stages.push_back({parse_number<int>(key, items[i]), window, i + 1 < items.size()});
        }
        c.encoder.stages = std::move(stages);
    } else if (key == "window") {
        const int w = parse_number<int>(key, value);
        for (auto& s : c.encoder.stages) {
            s.window = w;
        }
    } else if (key == "mlp_ratio") {
        c.encoder.mlp_ratio = parse_number<std::size_t>(key, value);
    } else if (key == "eps_c") {
        c.thresholds.eps_c = parse_double_list(key, value);
    } else if (key == "eps_i") {
        c.thresholds.eps_i = parse_number<double>(key, value);
    } else if (key == "detector") {
        if (value == "oracle") {
            c.detector = DetectorVariant::oracle;
        } else if (value == "mlp") {
            c.detector = DetectorVariant::mlp;
        } else {
            throw ConfigError("unknown detector '" + value + "' (expected oracle or mlp)");
        }
    } else if (key == "seed") {
        c.seed = parse_number<std::uint64_t>(key, value);
    } else if (key == "model_seed") {
        c.model_seed = parse_number<std::uint64_t>(key, value);
    } else if (key == "context_budget") {
        c.context_budget = parse_number<std::size_t>(key, value);
    } else if (key == "corpus_size") {
        c.corpus_size = parse_number<int>(key, value);
    } else if (key == "content_fraction") {
        c.content_fraction = parse_number<double>(key, value);
    } else if (key == "llm_dim") {
        c.llm_dim = parse_number<std::size_t>(key, value);
    } else if (key == "ifm_hidden") {
        c.ifm_hidden = parse_number<std::size_t>(key, value);
    } else if (key == "decoder_pair_flops") {
        c.decoder_pair_flops = parse_number<std::uint64_t>(key, value);
    } else if (key == "gate") {
        if (value == "hard") {
            c.gate = GateMode::hard;
        } else if (value == "soft") {
            c.gate = GateMode::soft;
        } else {
            throw ConfigError("unknown gate '" + value + "' (expected hard or soft)");
        }
    } else if (key == "bypass") {
        c.bypass = detail::parse_bool(key, value);
    } else if (key == "position_encoding") {
        c.position_encoding = detail::parse_bool(key, value);
    } else if (key == "instructions_per_doc") {
        c.instructions_per_doc = parse_number<int>(key, value);
    } else {
        throw ConfigError("unknown config key '" + key + "'");
    }
}

/// Parses config text on top of the profile it names (desk by default).
inline PipelineConfig parse_config(const std::string& text, std::optional<Profile> profile_override = std::nullopt) {
    std::vector<std::pair<std::string, std::string>> entries;
    std::optional<Profile> profile;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) {
            line.erase(hash);
        }
        line = detail::trim(line);
        if (line.empty()) {
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
        }
        std::string key = detail::trim(line.substr(0, eq));
        std::string value = detail::trim(line.substr(eq + 1));
        if (key.empty() || value.empty()) {
            throw ConfigError("config line " + std::to_string(line_no) + ": empty key or value");
        }
        if (key == "profile") {
            profile = parse_profile(value);
        } else {
            entries.emplace_back(std::move(key), std::move(value));
        }
    }
    if (profile_override) {
        profile = profile_override;
    }
    PipelineConfig c = profile_config(profile.value_or(Profile::desk));
    for (const auto& [k, v] : entries) {
        apply_config_key(c, k, v);
    }
    return c;
}

inline PipelineConfig load_config(const std::string& path, std::optional<Profile> profile_override = std::nullopt) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot read config file '" + path + "'");
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), profile_override);
}

/// Seed precedence: explicit value, then HRVDA_SEED, then the config's own.
inline std::uint64_t resolve_seed(std::optional<std::uint64_t> explicit_seed, std::uint64_t fallback) {
    if (explicit_seed) {
        return *explicit_seed;
    }
    if (const char* env = std::getenv("HRVDA_SEED"); env != nullptr && *env != '\0') {
        return detail::parse_number<std::uint64_t>("HRVDA_SEED", env);
    }
    return fallback;
}

}  // namespace hrvda

#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "rppgm/trainer/trainer.hpp"

namespace rppgm::cli {

using Json = nlohmann::ordered_json;

struct LandscapeConfig {
    double extent = 1.0;
    std::size_t resolution = 10; // grid is (2R+1)^2
};

struct SweepConfig {
    std::vector<std::size_t> h;  // empty: the base estimator h only
    std::vector<bool> sn;        // toggles sn on the policy and model; empty: base setting only
};

struct RunConfig {
    trainer::TrainConfig train;
    LandscapeConfig landscape;
    std::vector<std::size_t> diag_h; // unroll lengths for the diag command; empty: the base h
    std::optional<SweepConfig> sweep;
    std::string out = "runs/default";
};

// Closed-world parse: unknown keys, type mismatches and range violations
// throw ConfigError naming the JSON pointer of the offending value.
RunConfig parse_config(const Json& j);
RunConfig load_config(const std::filesystem::path& path);

// Fully resolved form; parse_config(config_to_json(c)) reproduces c.
Json config_to_json(const RunConfig& c);

} // namespace rppgm::cli

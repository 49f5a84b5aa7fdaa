#pragma once

#include "harness.hpp"

#include <json.hpp>

#include <optional>
#include <string>

namespace oudrift::cli {

/// Fully resolved run description. Parsed strictly from JSON: unknown keys
/// are rejected, numeric parameters are validated against the module
/// preconditions before any computation starts.
struct RunConfig {
    std::string command;  // drift|matrices|simulate|converge|covariance|regimes|demo
    std::string demo;     // vortex|cellular|pipe|divmap when command == demo
    std::string model_name;
    nlohmann::json model_params = nlohmann::json::object();
    std::optional<Matrix> A;
    std::optional<Matrix> B;
    double alpha = 1.0;
    std::vector<double> eps_list;
    double eps = 0.01;
    double mu = -1.0;
    std::string mu_rule;
    double T = -1.0;
    double dt = -1.0;
    double dt_limit = 1e-3;
    double eta = 0.25;
    int paths = -1;
    int reps = 8;
    double burn_in = -1.0;
    double delta = 0.2;
    double rate_window = 0.25;
    int checkpoints = 10;
    int grid = -1;
    double extent = 3.2;
    std::vector<double> alpha_list;
    std::vector<double> x;  // evaluation point / frozen slow variable
    std::vector<double> x0;
    std::vector<double> v0;
    std::uint64_t seed = 42;
    int threads = 0;
    std::string out_dir = "out";
    bool force = false;
    double cache_resolution = 0.0;

    /// Canonical JSON of the effective configuration (defaults resolved).
    nlohmann::json to_json() const;
    /// Identity subset: excludes execution details (out, force, threads)
    /// that cannot affect results.
    nlohmann::json identity_json() const;
};

RunConfig parse_config(const std::string& json_text);

/// FNV-1a 64-bit hash of the canonical identity config, as 16 hex chars.
std::string config_hash(const RunConfig& cfg);

struct DispatchOutcome {
    int exit_code = 0;  // 0 pass, 2 verdict fail
    std::string report_path;
    std::string summary;  // human-readable per-row lines
};

/// Runs the configured command and writes report.json, data.csv and
/// config.echo.json under cfg.out_dir. Throws oudrift::Error on failure.
DispatchOutcome dispatch(const RunConfig& cfg);

}  // namespace oudrift::cli

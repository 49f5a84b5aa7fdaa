#pragma once

#include "sde.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace oudrift::harness {

struct ReportRow {
    std::string param;
    double estimate = 0.0;
    double stderr_ = 0.0;
    long n = 0;
    std::string verdict;  // "pass" | "fail" | "inconclusive" | "n/a"
};

/// Numeric payload written to data.csv. Schema names are versioned; floats
/// are printed with 17 significant digits.
struct DataTable {
    std::string schema;
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;
};

struct ExperimentReport {
    std::string command;
    std::vector<ReportRow> rows;
    std::string verdict = "n/a";  // overall
    double flagged_fraction = 0.0;
    bool valid = true;  // false once flagged fraction reaches 1%
    double wall_seconds = 0.0;
    std::uint64_t seed = 0;
    std::vector<std::string> notes;
};

struct ExperimentResult {
    ExperimentReport report;
    DataTable data;
};

/// Deterministic parallel map: evaluates fn(0..n-1) on `threads` workers
/// (0 = hardware concurrency) into pre-sized slots, so the worker count
/// never affects results.
void parallel_for(int n, int threads, const std::function<void(int)>& fn);

struct Stats {
    double mean = 0.0;
    double se = 0.0;
    long n = 0;
};
Stats summarize(const std::vector<double>& v);

/// mu(eps) scalings. "alpha-eps" needs finite positive alpha; the proxies
/// "eps-squared" and "sqrt-eps" mirror the sub/supercritical regimes.
double mu_of_eps(const std::string& rule, double alpha, double eps);

// --------------------------------------------------------------------------
// Experiments
// --------------------------------------------------------------------------

struct ConvergenceParams {
    double alpha = 1.0;
    std::string mu_rule = "alpha-eps";
    std::vector<double> eps_list{0.1, 0.05, 0.02, 0.01};
    int n_paths = 200;
    double T = 1.0;
    double dt_limit = 1e-3;
    double eta = 0.25;  // threshold for the P(sup > eta) view
    std::uint64_t seed = 42;
    int threads = 0;
};
ExperimentResult convergence_experiment(const model::ProblemModel& pm,
                                        const model::NoiseSpec& noise,
                                        const ConvergenceParams& p);

struct CovarianceParams {
    double alpha = 1.0;
    Vector x_frozen;
    double T = 2000.0;
    double dt = 0.005;
    int n_reps = 8;
    double burn_in = -1.0;  // < 0: use 8 / omega_alpha
    std::uint64_t seed = 42;
    int threads = 0;
};
ExperimentResult covariance_experiment(const model::ProblemModel& pm,
                                       const model::NoiseSpec& noise,
                                       const CovarianceParams& p);

struct RegimeParams {
    double eps = 1e-3;
    int n_paths = 200;
    double T = 1.0;
    double dt_limit = 1e-3;
    std::uint64_t seed = 42;
    int threads = 0;
};
ExperimentResult regime_separation_experiment(const model::ProblemModel& pm,
                                              const model::NoiseSpec& noise,
                                              const RegimeParams& p);

struct VortexExpParams {
    std::vector<double> alpha_list{0.0, 0.5, 1.0, 2.0};
    int n_paths = 500;
    double T = 1.0;
    double dt = 1e-3;
    int checkpoints = 10;
    std::uint64_t seed = 42;
    int threads = 0;
};
ExperimentResult vortex_experiment(const model::VortexParams& mp,
                                   const VortexExpParams& p);

struct CellularExpParams {
    double alpha = 1.0;
    int n_paths = 500;
    double T = 5.0;
    double dt = 1e-3;
    double delta = 0.2;
    double rate_window = 0.25;  // secant window for the decay-rate check
    int checkpoints = 10;
    std::uint64_t seed = 42;
    int threads = 0;
};
ExperimentResult cellular_experiment(const model::CellularParams& mp,
                                     const CellularExpParams& p);

struct TurboExpParams {
    double alpha = 1.0;
    int n_paths = 500;
    double T = 2.0;
    double dt = 1e-3;
    int checkpoints = 10;
    int grid_n = 101;  // pointwise sign check grid per axis
    std::uint64_t seed = 42;
    int threads = 0;
};
ExperimentResult turbophoresis_experiment(const model::PipeParams& mp,
                                          const TurboExpParams& p);

struct DivMapParams {
    double alpha = 1.0;
    int grid_n = 41;
    double extent = 3.2;  // grid spans [-extent, extent]^2
};
ExperimentResult divergence_map(const model::CellularParams& mp, const DivMapParams& p);

/// Coupled-trajectory ensemble at fixed (eps, mu, alpha); the `simulate`
/// command.
struct SimulateParams {
    double alpha = 1.0;
    double eps = 0.01;
    double mu = -1.0;  // < 0: alpha * eps
    double T = 1.0;
    double dt = -1.0;  // < 0: min(eps/20, 1e-3)
    int n_paths = 16;
    Vector x0, v0;
    std::uint64_t seed = 42;
    int threads = 0;
};
ExperimentResult simulate_ensemble(const model::ProblemModel& pm,
                                   const model::NoiseSpec& noise,
                                   const SimulateParams& p);

}  // namespace oudrift::harness

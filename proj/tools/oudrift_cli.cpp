// Command-line front end. Parses flags into the JSON run configuration,
// merges an optional --config file (flags win), and hands the result to the
// shared library through the C API.

#include <oudrift/oudrift.h>

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace {

using nlohmann::json;

json parse_alpha_token(const std::string& tok) {
    if (tok == "inf" || tok == "infinity" || tok == "Infinity") return json("inf");
    try {
        size_t used = 0;
        const double v = std::stod(tok, &used);
        if (used != tok.size()) throw std::invalid_argument(tok);
        return json(v);
    } catch (const std::exception&) {
        throw CLI::ValidationError("--alpha", "expected a number or 'inf'");
    }
}

std::vector<double> parse_list(const std::string& csv, const std::string& flag) {
    std::vector<double> out;
    std::stringstream ss(csv);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        try {
            out.push_back(std::stod(tok));
        } catch (const std::exception&) {
            throw CLI::ValidationError(flag, "expected a comma-separated number list");
        }
    }
    if (out.empty()) throw CLI::ValidationError(flag, "empty list");
    return out;
}

struct CommonFlags {
    std::string config_file;
    std::string model;
    std::string params;
    std::string A, B;
    std::string alpha;
    std::optional<double> lambda, sigma;
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;
    std::string out_dir;
    bool force = false;
};

void add_common(CLI::App* cmd, CommonFlags& f, bool with_model = true) {
    cmd->add_option("--config", f.config_file, "JSON config file; flags override it");
    if (with_model) {
        cmd->add_option("--model", f.model, "builtin model name");
        cmd->add_option("--params", f.params, "model parameters as a JSON object");
        cmd->add_option("--lambda", f.lambda, "shorthand for params.lambda");
        cmd->add_option("--sigma", f.sigma, "shorthand for params.sigma");
        cmd->add_option("--A", f.A, "noise matrix A as a JSON array of rows");
        cmd->add_option("--B", f.B, "noise matrix B as a JSON array of rows");
    }
    cmd->add_option("--alpha", f.alpha, "mass/correlation-time ratio limit (or 'inf')");
    cmd->add_option("--seed", f.seed, "master RNG seed");
    cmd->add_option("--threads", f.threads, "worker threads (0 = hardware)");
    cmd->add_option("-o,--out", f.out_dir, "output directory (default 'out')");
    cmd->add_flag("--force", f.force, "overwrite a directory with a different config");
}

void merge_common(json& cfg, const CommonFlags& f) {
    if (!f.model.empty()) cfg["model"]["name"] = f.model;
    if (!f.params.empty()) {
        json p = json::parse(f.params, nullptr, false);
        if (p.is_discarded() || !p.is_object())
            throw CLI::ValidationError("--params", "must be a JSON object");
        cfg["model"]["params"] = p;
    }
    if (f.lambda) cfg["model"]["params"]["lambda"] = *f.lambda;
    if (f.sigma) cfg["model"]["params"]["sigma"] = *f.sigma;
    auto parse_matrix = [](const std::string& text, const char* flag) {
        json m = json::parse(text, nullptr, false);
        if (m.is_discarded() || !m.is_array())
            throw CLI::ValidationError(flag, "must be a JSON array of rows");
        return m;
    };
    if (!f.A.empty()) cfg["noise"]["A"] = parse_matrix(f.A, "--A");
    if (!f.B.empty()) cfg["noise"]["B"] = parse_matrix(f.B, "--B");
    if (!f.alpha.empty()) cfg["alpha"] = parse_alpha_token(f.alpha);
    if (f.seed) cfg["seed"] = *f.seed;
    if (f.threads) cfg["threads"] = *f.threads;
    if (!f.out_dir.empty()) cfg["out"] = f.out_dir;
    if (f.force) cfg["force"] = true;
}

json load_config_file(const std::string& path) {
    if (path.empty()) return json::object();
    std::ifstream in(path);
    if (!in) {
        std::cerr << "error: cannot read config file '" << path << "'\n";
        std::exit(1);
    }
    std::stringstream ss;
    ss << in.rdbuf();
    json j = json::parse(ss.str(), nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
        std::cerr << "error: config file '" << path << "' is not a JSON object\n";
        std::exit(1);
    }
    return j;
}

// Overlay src onto dst, recursing into objects so flag-level keys override
// file-level keys without clobbering whole sections.
void overlay(json& dst, const json& src) {
    for (auto it = src.begin(); it != src.end(); ++it) {
        if (it->is_object() && dst.contains(it.key()) && dst[it.key()].is_object())
            overlay(dst[it.key()], *it);
        else
            dst[it.key()] = *it;
    }
}

int run(const json& flags_cfg, const std::string& config_file) {
    json cfg = load_config_file(config_file);
    overlay(cfg, flags_cfg);
    const char* summary = nullptr;
    const int rc = ou_dispatch(cfg.dump().c_str(), &summary);
    if (rc == 1) {
        std::cerr << "error: " << ou_last_error() << "\n";
        return 1;
    }
    if (summary && *summary) std::cout << summary;
    const std::string out = cfg.contains("out") ? cfg["out"].get<std::string>() : "out";
    std::cout << "artifacts: " << out << "/report.json, data.csv, config.echo.json\n";
    return rc;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"oudrift: inertial-Ito drift of OU-driven second-order systems"};
    app.require_subcommand(1);

    // drift -------------------------------------------------------------
    CommonFlags f_drift;
    std::string drift_x;
    auto* c_drift = app.add_subcommand("drift", "evaluate the limit drift at a point");
    add_common(c_drift, f_drift);
    c_drift->add_option("--x", drift_x, "evaluation point, comma separated");

    // matrices ------------------------------------------------------------
    CommonFlags f_mat;
    std::string mat_x;
    auto* c_mat = app.add_subcommand("matrices", "drift matrices M, L, N, alphaN, Q");
    add_common(c_mat, f_mat);
    c_mat->add_option("--x", mat_x, "evaluation point, comma separated");

    // simulate ------------------------------------------------------------
    CommonFlags f_sim;
    std::optional<double> sim_eps, sim_mu, sim_T, sim_dt;
    std::optional<int> sim_paths;
    std::string sim_x0, sim_v0;
    auto* c_sim = app.add_subcommand("simulate", "coupled pre-limit/limit ensemble");
    add_common(c_sim, f_sim);
    c_sim->add_option("--eps", sim_eps, "noise correlation time");
    c_sim->add_option("--mu", sim_mu, "particle mass (default alpha*eps)");
    c_sim->add_option("--T", sim_T, "horizon");
    c_sim->add_option("--dt", sim_dt, "step (default min(eps/20, 1e-3))");
    c_sim->add_option("--paths", sim_paths, "trajectories");
    c_sim->add_option("--x0", sim_x0, "initial position, comma separated");
    c_sim->add_option("--v0", sim_v0, "initial velocity, comma separated");

    // converge ------------------------------------------------------------
    CommonFlags f_conv;
    std::string conv_eps;
    std::optional<double> conv_T, conv_dt_limit, conv_eta;
    std::optional<int> conv_paths;
    std::string conv_mu_rule;
    auto* c_conv = app.add_subcommand("converge", "sup-distance vs eps table");
    add_common(c_conv, f_conv);
    c_conv->add_option("--eps", conv_eps, "decreasing eps list, comma separated");
    c_conv->add_option("--paths", conv_paths, "coupled paths per eps");
    c_conv->add_option("--T", conv_T, "horizon");
    c_conv->add_option("--dt-limit", conv_dt_limit, "cap on the shared grid step");
    c_conv->add_option("--eta", conv_eta, "threshold for the tail-probability view");
    c_conv->add_option("--mu-rule", conv_mu_rule,
                       "mu(eps): alpha-eps | eps-squared | sqrt-eps");

    // covariance ----------------------------------------------------------
    CommonFlags f_cov;
    std::string cov_x;
    std::optional<double> cov_T, cov_dt, cov_burn;
    std::optional<int> cov_reps;
    auto* c_cov = app.add_subcommand("covariance", "frozen-fast stationary covariance");
    add_common(c_cov, f_cov);
    c_cov->add_option("--x", cov_x, "frozen slow variable, comma separated");
    c_cov->add_option("--T", cov_T, "averaging horizon per replica");
    c_cov->add_option("--dt", cov_dt, "step");
    c_cov->add_option("--reps", cov_reps, "independent replicas");
    c_cov->add_option("--burn-in", cov_burn, "burn-in time (default 8/omega_alpha)");

    // regimes -------------------------------------------------------------
    CommonFlags f_reg;
    std::optional<double> reg_eps, reg_T, reg_dt_limit;
    std::optional<int> reg_paths;
    auto* c_reg = app.add_subcommand("regimes", "mu=eps^2 vs mu=sqrt(eps) separation");
    add_common(c_reg, f_reg);
    c_reg->add_option("--eps", reg_eps, "correlation time (default 1e-3)");
    c_reg->add_option("--paths", reg_paths, "paths");
    c_reg->add_option("--T", reg_T, "horizon");
    c_reg->add_option("--dt-limit", reg_dt_limit, "cap on the shared grid step");

    // demo ----------------------------------------------------------------
    CommonFlags f_demo;
    std::string demo_name, demo_alphas;
    std::optional<double> demo_T, demo_dt, demo_delta, demo_extent;
    std::optional<double> demo_k1, demo_k2, demo_lambda;
    std::optional<int> demo_paths, demo_grid, demo_checkpoints;
    auto* c_demo = app.add_subcommand("demo", "turbulence-drift phenomena");
    c_demo->add_option("phenomenon", demo_name, "vortex | cellular | pipe | divmap")
        ->required();
    add_common(c_demo, f_demo);
    c_demo->add_option("--alphas", demo_alphas, "alpha list for the vortex demo");
    c_demo->add_option("--paths", demo_paths, "paths");
    c_demo->add_option("--T", demo_T, "horizon");
    c_demo->add_option("--dt", demo_dt, "step");
    c_demo->add_option("--delta", demo_delta, "separatrix band half-width (cellular)");
    c_demo->add_option("--grid", demo_grid, "grid points per axis (divmap / pipe sign check)");
    c_demo->add_option("--extent", demo_extent, "grid half-extent (divmap)");
    c_demo->add_option("--checkpoints", demo_checkpoints, "time-series checkpoints");
    c_demo->add_option("--k1", demo_k1, "cellular wavenumber k1");
    c_demo->add_option("--k2", demo_k2, "cellular wavenumber k2");
    c_demo->add_option("--lam", demo_lambda, "cellular constant friction");

    CLI11_PARSE(app, argc, argv);

    json cfg;
    std::string config_file;
    try {
        if (app.got_subcommand(c_drift)) {
            cfg["command"] = "drift";
            merge_common(cfg, f_drift);
            if (!drift_x.empty()) cfg["x"] = parse_list(drift_x, "--x");
            config_file = f_drift.config_file;
        } else if (app.got_subcommand(c_mat)) {
            cfg["command"] = "matrices";
            merge_common(cfg, f_mat);
            if (!mat_x.empty()) cfg["x"] = parse_list(mat_x, "--x");
            config_file = f_mat.config_file;
        } else if (app.got_subcommand(c_sim)) {
            cfg["command"] = "simulate";
            merge_common(cfg, f_sim);
            if (sim_eps) cfg["eps"] = *sim_eps;
            if (sim_mu) cfg["mu"] = *sim_mu;
            if (sim_T) cfg["T"] = *sim_T;
            if (sim_dt) cfg["dt"] = *sim_dt;
            if (sim_paths) cfg["paths"] = *sim_paths;
            if (!sim_x0.empty()) cfg["x0"] = parse_list(sim_x0, "--x0");
            if (!sim_v0.empty()) cfg["v0"] = parse_list(sim_v0, "--v0");
            config_file = f_sim.config_file;
        } else if (app.got_subcommand(c_conv)) {
            cfg["command"] = "converge";
            merge_common(cfg, f_conv);
            if (!conv_eps.empty()) cfg["eps"] = parse_list(conv_eps, "--eps");
            if (conv_paths) cfg["paths"] = *conv_paths;
            if (conv_T) cfg["T"] = *conv_T;
            if (conv_dt_limit) cfg["dt_limit"] = *conv_dt_limit;
            if (conv_eta) cfg["eta"] = *conv_eta;
            if (!conv_mu_rule.empty()) cfg["mu_rule"] = conv_mu_rule;
            config_file = f_conv.config_file;
        } else if (app.got_subcommand(c_cov)) {
            cfg["command"] = "covariance";
            merge_common(cfg, f_cov);
            if (!cov_x.empty()) cfg["x"] = parse_list(cov_x, "--x");
            if (cov_T) cfg["T"] = *cov_T;
            if (cov_dt) cfg["dt"] = *cov_dt;
            if (cov_reps) cfg["reps"] = *cov_reps;
            if (cov_burn) cfg["burn_in"] = *cov_burn;
            config_file = f_cov.config_file;
        } else if (app.got_subcommand(c_reg)) {
            cfg["command"] = "regimes";
            merge_common(cfg, f_reg);
            if (reg_eps) cfg["eps"] = *reg_eps;
            if (reg_paths) cfg["paths"] = *reg_paths;
            if (reg_T) cfg["T"] = *reg_T;
            if (reg_dt_limit) cfg["dt_limit"] = *reg_dt_limit;
            config_file = f_reg.config_file;
        } else if (app.got_subcommand(c_demo)) {
            cfg["command"] = "demo";
            cfg["demo"] = demo_name;
            merge_common(cfg, f_demo);
            if (!demo_alphas.empty()) cfg["alpha_list"] = parse_list(demo_alphas, "--alphas");
            if (demo_paths) cfg["paths"] = *demo_paths;
            if (demo_T) cfg["T"] = *demo_T;
            if (demo_dt) cfg["dt"] = *demo_dt;
            if (demo_delta) cfg["delta"] = *demo_delta;
            if (demo_grid) cfg["grid"] = *demo_grid;
            if (demo_extent) cfg["extent"] = *demo_extent;
            if (demo_checkpoints) cfg["checkpoints"] = *demo_checkpoints;
            if (demo_k1) cfg["model"]["params"]["k1"] = *demo_k1;
            if (demo_k2) cfg["model"]["params"]["k2"] = *demo_k2;
            if (demo_lambda) cfg["model"]["params"]["lambda"] = *demo_lambda;
            config_file = f_demo.config_file;
        }
    } catch (const CLI::Error& e) {
        return app.exit(e);
    }

    return run(cfg, config_file);
}

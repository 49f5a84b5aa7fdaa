#include "runconfig.hpp"

#include "drift.hpp"

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace oudrift::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const std::set<std::string> kCommands = {"drift",    "matrices",   "simulate",
                                         "converge", "covariance", "regimes",
                                         "demo"};
const std::set<std::string> kDemos = {"vortex", "cellular", "pipe", "divmap"};

[[noreturn]] void bad(const std::string& path, const std::string& what) {
    throw Error("config: key '" + path + "' " + what);
}

double number_at(const json& v, const std::string& path) {
    if (!v.is_number()) bad(path, "must be numeric");
    return v.get<double>();
}

double alpha_at(const json& v, const std::string& path) {
    if (v.is_string()) {
        const std::string s = v.get<std::string>();
        if (s == "inf" || s == "infinity" || s == "Infinity")
            return std::numeric_limits<double>::infinity();
        bad(path, "must be a number or \"inf\"");
    }
    const double a = number_at(v, path);
    if (std::isnan(a) || a < 0.0) bad(path, "must lie in [0, inf]");
    return a;
}

std::vector<double> vector_at(const json& v, const std::string& path) {
    if (!v.is_array()) bad(path, "must be an array of numbers");
    std::vector<double> out;
    for (const auto& e : v) out.push_back(number_at(e, path));
    return out;
}

Matrix matrix_at(const json& v, const std::string& path) {
    if (!v.is_array() || v.empty()) bad(path, "must be a non-empty array of rows");
    const size_t cols = v[0].is_array() ? v[0].size() : 0;
    if (cols == 0) bad(path, "rows must be non-empty arrays");
    Matrix m(static_cast<Eigen::Index>(v.size()), static_cast<Eigen::Index>(cols));
    for (size_t i = 0; i < v.size(); ++i) {
        if (!v[i].is_array() || v[i].size() != cols) bad(path, "rows must have equal length");
        for (size_t j = 0; j < cols; ++j)
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                number_at(v[i][j], path);
    }
    if (!m.allFinite()) bad(path, "entries must be finite");
    return m;
}

json matrix_to_json(const Matrix& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

json alpha_to_json(double a) {
    if (std::isinf(a)) return json("inf");
    return json(a);
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void write_text(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open '" + p.string() + "' for writing");
    out << text;
    if (!out) throw Error("failed writing '" + p.string() + "'");
}

std::string csv_text(const harness::DataTable& t) {
    std::ostringstream os;
    for (size_t c = 0; c < t.columns.size(); ++c) {
        if (c) os << ',';
        os << t.columns[c];
    }
    os << '\n';
    for (const auto& row : t.rows) {
        for (size_t c = 0; c < row.size(); ++c) {
            if (c) os << ',';
            os << format_double(row[c]);
        }
        os << '\n';
    }
    return os.str();
}

std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Default model per demo phenomenon.
std::string demo_model(const std::string& demo) {
    if (demo == "vortex") return "vortex";
    if (demo == "pipe") return "pipe";
    return "cellular";  // cellular and divmap
}

}  // namespace

RunConfig parse_config(const std::string& json_text) {
    json root = json::parse(json_text, nullptr, /*allow_exceptions=*/false);
    if (root.is_discarded() || !root.is_object())
        throw Error("config: top level must be a JSON object");

    RunConfig cfg;
    auto take = [&root](const char* key) -> std::optional<json> {
        auto it = root.find(key);
        if (it == root.end()) return std::nullopt;
        json v = *it;
        root.erase(it);
        return v;
    };

    if (auto v = take("command")) {
        if (!v->is_string()) bad("command", "must be a string");
        cfg.command = v->get<std::string>();
    } else {
        throw Error("config: missing 'command'");
    }
    if (!kCommands.count(cfg.command))
        throw Error("config: unknown command '" + cfg.command + "'");

    if (auto v = take("demo")) {
        if (!v->is_string()) bad("demo", "must be a string");
        cfg.demo = v->get<std::string>();
    }
    if (cfg.command == "demo") {
        if (!kDemos.count(cfg.demo))
            throw Error("config: demo must be one of vortex|cellular|pipe|divmap");
    } else if (!cfg.demo.empty()) {
        bad("demo", "is only valid for the demo command");
    }

    if (auto v = take("model")) {
        if (!v->is_object()) bad("model", "must be an object {name, params}");
        json m = *v;
        if (m.contains("name")) {
            if (!m["name"].is_string()) bad("model.name", "must be a string");
            cfg.model_name = m["name"].get<std::string>();
            m.erase("name");
        }
        if (m.contains("params")) {
            if (!m["params"].is_object()) bad("model.params", "must be an object");
            cfg.model_params = m["params"];
            m.erase("params");
        }
        if (!m.empty()) bad("model." + m.begin().key(), "is unknown");
    }
    if (auto v = take("noise")) {
        if (!v->is_object()) bad("noise", "must be an object {A, B}");
        json nj = *v;
        if (nj.contains("A")) {
            cfg.A = matrix_at(nj["A"], "noise.A");
            nj.erase("A");
        }
        if (nj.contains("B")) {
            cfg.B = matrix_at(nj["B"], "noise.B");
            nj.erase("B");
        }
        if (!nj.empty()) bad("noise." + nj.begin().key(), "is unknown");
    }

    if (auto v = take("alpha")) cfg.alpha = alpha_at(*v, "alpha");
    bool eps_given = false;
    if (auto v = take("eps")) {
        eps_given = true;
        if (v->is_array())
            cfg.eps_list = vector_at(*v, "eps");
        else
            cfg.eps = number_at(*v, "eps");
    }
    if (auto v = take("mu")) {
        cfg.mu = number_at(*v, "mu");
        if (!(cfg.mu > 0.0)) bad("mu", "must be positive");
    }
    if (auto v = take("mu_rule")) {
        if (!v->is_string()) bad("mu_rule", "must be a string");
        cfg.mu_rule = v->get<std::string>();
    }
    if (auto v = take("T")) {
        cfg.T = number_at(*v, "T");
        if (!(cfg.T > 0.0)) bad("T", "must be positive");
    }
    if (auto v = take("dt")) {
        cfg.dt = number_at(*v, "dt");
        if (!(cfg.dt > 0.0)) bad("dt", "must be positive");
    }
    if (auto v = take("dt_limit")) cfg.dt_limit = number_at(*v, "dt_limit");
    if (auto v = take("eta")) cfg.eta = number_at(*v, "eta");
    if (auto v = take("paths")) cfg.paths = static_cast<int>(number_at(*v, "paths"));
    if (auto v = take("reps")) cfg.reps = static_cast<int>(number_at(*v, "reps"));
    if (auto v = take("burn_in")) cfg.burn_in = number_at(*v, "burn_in");
    if (auto v = take("delta")) cfg.delta = number_at(*v, "delta");
    if (auto v = take("rate_window")) cfg.rate_window = number_at(*v, "rate_window");
    if (auto v = take("checkpoints"))
        cfg.checkpoints = static_cast<int>(number_at(*v, "checkpoints"));
    if (auto v = take("grid")) cfg.grid = static_cast<int>(number_at(*v, "grid"));
    if (auto v = take("extent")) cfg.extent = number_at(*v, "extent");
    if (auto v = take("alpha_list")) {
        if (!v->is_array()) bad("alpha_list", "must be an array");
        for (const auto& e : *v) cfg.alpha_list.push_back(alpha_at(e, "alpha_list"));
    }
    if (auto v = take("x")) cfg.x = vector_at(*v, "x");
    if (auto v = take("x0")) cfg.x0 = vector_at(*v, "x0");
    if (auto v = take("v0")) cfg.v0 = vector_at(*v, "v0");
    if (auto v = take("seed")) {
        if (!v->is_number_unsigned() && !v->is_number_integer())
            bad("seed", "must be an integer");
        cfg.seed = v->get<std::uint64_t>();
    }
    if (auto v = take("threads")) cfg.threads = static_cast<int>(number_at(*v, "threads"));
    if (auto v = take("out")) {
        if (!v->is_string()) bad("out", "must be a string");
        cfg.out_dir = v->get<std::string>();
    }
    if (auto v = take("force")) {
        if (!v->is_boolean()) bad("force", "must be a boolean");
        cfg.force = v->get<bool>();
    }
    if (auto v = take("cache_resolution"))
        cfg.cache_resolution = number_at(*v, "cache_resolution");

    if (!root.empty()) bad(root.begin().key(), "is unknown");

    // ----- defaults per command -----
    const std::string& c = cfg.command;
    if (cfg.model_name.empty()) {
        if (c == "demo")
            cfg.model_name = demo_model(cfg.demo);
        else if (c == "converge" || c == "regimes")
            cfg.model_name = c == "regimes" ? "scalar-sine-xi" : "scalar-sine";
        else
            cfg.model_name = "constant";
    }
    if (cfg.model_name == "scalar") cfg.model_name = "constant";  // CLI alias
    if (c == "demo" && cfg.model_name != demo_model(cfg.demo))
        throw Error("config: demo '" + cfg.demo + "' requires model '" +
                    demo_model(cfg.demo) + "'");

    if (cfg.T < 0.0) {
        if (c == "covariance")
            cfg.T = 2000.0;
        else if (cfg.demo == "cellular")
            cfg.T = 5.0;
        else if (cfg.demo == "pipe")
            cfg.T = 2.0;
        else
            cfg.T = 1.0;
    }
    if (cfg.dt < 0.0) {
        if (c == "covariance")
            cfg.dt = 0.005;
        else if (c == "demo")
            cfg.dt = 1e-3;
        // simulate keeps dt < 0: resolved as min(eps/20, 1e-3)
    }
    if (cfg.paths < 0) {
        if (c == "converge" || c == "regimes")
            cfg.paths = 200;
        else if (c == "demo")
            cfg.paths = 500;
        else
            cfg.paths = 16;
    }
    if (cfg.eps_list.empty() && c == "converge") cfg.eps_list = {0.1, 0.05, 0.02, 0.01};
    if (c == "regimes" && !eps_given) cfg.eps = 1e-3;
    if (cfg.alpha_list.empty() && cfg.demo == "vortex")
        cfg.alpha_list = {0.0, 0.5, 1.0, 2.0};
    if (cfg.grid < 0) cfg.grid = cfg.demo == "divmap" ? 41 : 101;
    if (cfg.mu_rule.empty()) {
        if (cfg.alpha == 0.0)
            cfg.mu_rule = "eps-squared";
        else if (std::isinf(cfg.alpha))
            cfg.mu_rule = "sqrt-eps";
        else
            cfg.mu_rule = "alpha-eps";
    }
    try {
        (void)harness::mu_of_eps(cfg.mu_rule, cfg.alpha, 0.5);
    } catch (const Error& e) {
        bad("mu_rule", e.what());
    }

    // ----- validation against module preconditions -----
    if (cfg.dt > 0.0 && cfg.dt > cfg.T) bad("dt", "must satisfy dt <= T");
    if (cfg.dt_limit <= 0.0) bad("dt_limit", "must be positive");
    if (cfg.eps <= 0.0) bad("eps", "must be positive");
    for (double e : cfg.eps_list)
        if (e <= 0.0) bad("eps", "entries must be positive");
    for (size_t i = 1; i < cfg.eps_list.size(); ++i)
        if (!(cfg.eps_list[i] < cfg.eps_list[i - 1])) bad("eps", "list must be decreasing");
    if (cfg.paths < 1) bad("paths", "must be at least 1");
    if (cfg.reps < 2) bad("reps", "must be at least 2");
    if (cfg.eta <= 0.0) bad("eta", "must be positive");
    if (cfg.delta <= 0.0) bad("delta", "must be positive");
    if (cfg.checkpoints < 1) bad("checkpoints", "must be at least 1");
    if (cfg.grid < 2) bad("grid", "must be at least 2");
    if (cfg.extent <= 0.0) bad("extent", "must be positive");
    if (cfg.threads < 0) bad("threads", "must be non-negative");
    if (cfg.cache_resolution < 0.0) bad("cache_resolution", "must be non-negative");
    for (size_t i = 1; i < cfg.alpha_list.size(); ++i)
        if (!(cfg.alpha_list[i] > cfg.alpha_list[i - 1]))
            bad("alpha_list", "must be increasing");
    return cfg;
}

json RunConfig::to_json() const {
    json j;
    j["command"] = command;
    if (!demo.empty()) j["demo"] = demo;
    j["model"] = {{"name", model_name}, {"params", model_params}};
    if (A || B) {
        json nj = json::object();
        if (A) nj["A"] = matrix_to_json(*A);
        if (B) nj["B"] = matrix_to_json(*B);
        j["noise"] = nj;
    }
    j["alpha"] = alpha_to_json(alpha);
    if (!eps_list.empty())
        j["eps"] = eps_list;
    else
        j["eps"] = eps;
    if (mu > 0.0) j["mu"] = mu;
    j["mu_rule"] = mu_rule;
    j["T"] = T;
    if (dt > 0.0) j["dt"] = dt;
    j["dt_limit"] = dt_limit;
    j["eta"] = eta;
    j["paths"] = paths;
    j["reps"] = reps;
    if (burn_in >= 0.0) j["burn_in"] = burn_in;
    j["delta"] = delta;
    j["rate_window"] = rate_window;
    j["checkpoints"] = checkpoints;
    j["grid"] = grid;
    j["extent"] = extent;
    if (!alpha_list.empty()) {
        json al = json::array();
        for (double a : alpha_list) al.push_back(alpha_to_json(a));
        j["alpha_list"] = al;
    }
    if (!x.empty()) j["x"] = x;
    if (!x0.empty()) j["x0"] = x0;
    if (!v0.empty()) j["v0"] = v0;
    j["seed"] = seed;
    j["cache_resolution"] = cache_resolution;
    j["out"] = out_dir;
    j["force"] = force;
    j["threads"] = threads;
    return j;
}

json RunConfig::identity_json() const {
    json j = to_json();
    j.erase("out");
    j.erase("force");
    j.erase("threads");
    return j;
}

std::string config_hash(const RunConfig& cfg) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016" PRIx64, fnv1a64(cfg.identity_json().dump()));
    return buf;
}

namespace {

Vector to_vector(const std::vector<double>& v) {
    Vector out(static_cast<Eigen::Index>(v.size()));
    for (size_t i = 0; i < v.size(); ++i) out(static_cast<Eigen::Index>(i)) = v[i];
    return out;
}

model::NoiseSpec resolve_noise(const RunConfig& cfg, const model::ProblemModel& pm) {
    if (cfg.A || cfg.B) {
        if (!cfg.A || !cfg.B) throw Error("config: noise needs both A and B");
        return model::NoiseSpec::make(*cfg.A, *cfg.B);
    }
    return model::NoiseSpec::identity(pm.default_noise_dim);
}

Vector eval_point(const RunConfig& cfg, int d) {
    if (cfg.x.empty()) return Vector::Zero(d);
    if (static_cast<int>(cfg.x.size()) != d)
        throw Error("config: x has dimension " + std::to_string(cfg.x.size()) +
                    ", model needs " + std::to_string(d));
    return to_vector(cfg.x);
}

harness::ExperimentResult run_matrices(const RunConfig& cfg,
                                       const model::ProblemModel& pm,
                                       const model::NoiseSpec& noise) {
    harness::ExperimentResult out;
    out.report.command = "matrices";
    out.report.seed = cfg.seed;
    out.data.schema = "matrices-v1";
    out.data.columns = {"block", "i", "j", "value"};
    Vector x = eval_point(cfg, pm.coeff.dim);
    drift::DriftMatrices dm = drift::drift_matrices(pm.coeff, noise, cfg.alpha, x);

    auto emit = [&](const char* name, double block_code, const Matrix& m) {
        for (Eigen::Index i = 0; i < m.rows(); ++i)
            for (Eigen::Index j = 0; j < m.cols(); ++j) {
                out.data.rows.push_back({block_code, static_cast<double>(i),
                                         static_cast<double>(j), m(i, j)});
                out.report.rows.push_back({std::string(name) + "[" + std::to_string(i) +
                                               "," + std::to_string(j) + "]",
                                           m(i, j), 0.0, 1, "n/a"});
            }
    };
    emit("M", 0, dm.M);
    emit("L", 1, dm.L);
    emit("N", 2, dm.N);
    emit("alphaN", 3, dm.alphaN);
    if (cfg.alpha > 0.0 && !std::isinf(cfg.alpha))
        emit("Q", 4, drift::assemble_Q_alpha(pm.coeff, noise, cfg.alpha, x));
    out.report.verdict = "n/a";
    return out;
}

harness::ExperimentResult run_drift(const RunConfig& cfg, const model::ProblemModel& pm,
                                    const model::NoiseSpec& noise) {
    harness::ExperimentResult out;
    out.report.command = "drift";
    out.report.seed = cfg.seed;
    Vector x = eval_point(cfg, pm.coeff.dim);
    Vector f = drift::inertial_drift(pm.coeff, noise, cfg.alpha, x);
    out.data.schema = "drift-v1";
    out.data.columns = {"i", "f_alpha"};
    std::vector<Vector> extra;
    // The closed forms assume the identity OU driver; skip them when the
    // user supplied a custom A or B.
    const bool identity_noise =
        noise.A.isIdentity(1e-14) && noise.B.isIdentity(1e-14) &&
        noise.n() == pm.coeff.noise_dim && noise.m() == pm.coeff.noise_dim;
    if (pm.scalar && identity_noise) {
        out.data.columns.push_back("f_scalar_closed_form");
        extra.push_back(drift::scalar_drift(*pm.scalar, cfg.alpha, x));
    }
    if (pm.turbulence && identity_noise) {
        drift::TurbulenceDrift td = drift::turbulence_drift(*pm.turbulence, cfg.alpha, x);
        out.data.columns.push_back("minus_b_alpha");
        out.data.columns.push_back("centrifugal");
        out.data.columns.push_back("turbophoretic");
        extra.push_back(td.total);
        extra.push_back(td.centrifugal);
        extra.push_back(td.turbophoretic);
    }
    for (int i = 0; i < pm.coeff.dim; ++i) {
        std::vector<double> row = {static_cast<double>(i), f(i)};
        for (const auto& e : extra) row.push_back(e(i));
        out.data.rows.push_back(row);
        out.report.rows.push_back({"f_alpha[" + std::to_string(i) + "]", f(i), 0.0, 1,
                                   "n/a"});
    }
    out.report.verdict = "n/a";
    return out;
}

harness::ExperimentResult run_command(const RunConfig& cfg) {
    model::ProblemModel pm =
        model::make_builtin_model(cfg.model_name, cfg.model_params.dump());
    if (cfg.command == "matrices") return run_matrices(cfg, pm, resolve_noise(cfg, pm));
    if (cfg.command == "drift") return run_drift(cfg, pm, resolve_noise(cfg, pm));
    if (cfg.command == "simulate") {
        harness::SimulateParams p;
        p.alpha = cfg.alpha;
        p.eps = cfg.eps;
        p.mu = cfg.mu;
        p.T = cfg.T;
        p.dt = cfg.dt;
        p.n_paths = cfg.paths;
        if (!cfg.x0.empty()) p.x0 = to_vector(cfg.x0);
        if (!cfg.v0.empty()) p.v0 = to_vector(cfg.v0);
        p.seed = cfg.seed;
        p.threads = cfg.threads;
        return harness::simulate_ensemble(pm, resolve_noise(cfg, pm), p);
    }
    if (cfg.command == "converge") {
        harness::ConvergenceParams p;
        p.alpha = cfg.alpha;
        p.mu_rule = cfg.mu_rule;
        p.eps_list = cfg.eps_list;
        p.n_paths = cfg.paths;
        p.T = cfg.T;
        p.dt_limit = cfg.dt_limit;
        p.eta = cfg.eta;
        p.seed = cfg.seed;
        p.threads = cfg.threads;
        return harness::convergence_experiment(pm, resolve_noise(cfg, pm), p);
    }
    if (cfg.command == "covariance") {
        harness::CovarianceParams p;
        p.alpha = cfg.alpha;
        p.x_frozen = eval_point(cfg, pm.coeff.dim);
        p.T = cfg.T;
        p.dt = cfg.dt > 0.0 ? cfg.dt : 0.005;
        p.n_reps = cfg.reps;
        p.burn_in = cfg.burn_in;
        p.seed = cfg.seed;
        p.threads = cfg.threads;
        return harness::covariance_experiment(pm, resolve_noise(cfg, pm), p);
    }
    if (cfg.command == "regimes") {
        harness::RegimeParams p;
        p.eps = cfg.eps;
        p.n_paths = cfg.paths;
        p.T = cfg.T;
        p.dt_limit = cfg.dt_limit;
        p.seed = cfg.seed;
        p.threads = cfg.threads;
        return harness::regime_separation_experiment(pm, resolve_noise(cfg, pm), p);
    }
    // demo
    auto number_param = [&](const char* key, double fallback) {
        if (cfg.model_params.contains(key)) return cfg.model_params[key].get<double>();
        return fallback;
    };
    if (cfg.demo == "vortex") {
        model::VortexParams mp;
        mp.c0 = number_param("c0", mp.c0);
        mp.kT = number_param("kT", mp.kT);
        mp.cutoff_radius = number_param("cutoff_radius", mp.cutoff_radius);
        harness::VortexExpParams p;
        p.alpha_list = cfg.alpha_list;
        p.n_paths = cfg.paths;
        p.T = cfg.T;
        p.dt = cfg.dt;
        p.checkpoints = cfg.checkpoints;
        p.seed = cfg.seed;
        p.threads = cfg.threads;
        return harness::vortex_experiment(mp, p);
    }
    model::CellularParams cp;
    cp.k1 = number_param("k1", cp.k1);
    cp.k2 = number_param("k2", cp.k2);
    cp.lambda = number_param("lambda", cp.lambda);
    if (cfg.demo == "cellular") {
        harness::CellularExpParams p;
        p.alpha = cfg.alpha;
        p.n_paths = cfg.paths;
        p.T = cfg.T;
        p.dt = cfg.dt;
        p.delta = cfg.delta;
        p.rate_window = cfg.rate_window;
        p.checkpoints = cfg.checkpoints;
        p.seed = cfg.seed;
        p.threads = cfg.threads;
        return harness::cellular_experiment(cp, p);
    }
    if (cfg.demo == "divmap") {
        harness::DivMapParams p;
        p.alpha = cfg.alpha;
        p.grid_n = cfg.grid;
        p.extent = cfg.extent;
        return harness::divergence_map(cp, p);
    }
    // pipe
    model::PipeParams pp;
    pp.c0 = number_param("c0", pp.c0);
    pp.kT_center = number_param("kT_center", pp.kT_center);
    pp.kT_floor = number_param("kT_floor", pp.kT_floor);
    pp.u_max = number_param("u_max", pp.u_max);
    harness::TurboExpParams p;
    p.alpha = cfg.alpha;
    p.n_paths = cfg.paths;
    p.T = cfg.T;
    p.dt = cfg.dt;
    p.checkpoints = cfg.checkpoints;
    p.grid_n = cfg.grid;
    p.seed = cfg.seed;
    p.threads = cfg.threads;
    return harness::turbophoresis_experiment(pp, p);
}

}  // namespace

DispatchOutcome dispatch(const RunConfig& cfg) {
    const std::string hash = config_hash(cfg);
    const fs::path dir(cfg.out_dir);
    const fs::path echo_path = dir / "config.echo.json";

    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error("cannot create output directory '" + dir.string() + "'");

    if (fs::exists(echo_path) && !cfg.force) {
        std::ifstream in(echo_path);
        std::stringstream ss;
        ss << in.rdbuf();
        json existing = json::parse(ss.str(), nullptr, false);
        std::string old_hash;
        if (!existing.is_discarded() && existing.contains("config_hash"))
            old_hash = existing["config_hash"].get<std::string>();
        if (old_hash != hash)
            throw Error("output directory '" + dir.string() +
                        "' holds a different configuration (hash " + old_hash +
                        " vs " + hash + "); pass force to overwrite");
    }

    harness::ExperimentResult result = run_command(cfg);

    json echo = cfg.to_json();
    echo["config_hash"] = hash;
    write_text(echo_path, echo.dump(2) + "\n");

    json report;
    report["command"] = result.report.command;
    report["config_hash"] = hash;
    report["seed"] = result.report.seed;
    report["verdict"] = result.report.verdict;
    report["flagged_fraction"] = result.report.flagged_fraction;
    report["valid"] = result.report.valid;
    report["wall_seconds"] = result.report.wall_seconds;
    report["csv_schema"] = result.data.schema;
    report["notes"] = result.report.notes;
    json rows = json::array();
    for (const auto& r : result.report.rows)
        rows.push_back({{"param", r.param},
                        {"estimate", r.estimate},
                        {"stderr", r.stderr_},
                        {"n", r.n},
                        {"verdict", r.verdict}});
    report["rows"] = rows;
    write_text(dir / "report.json", report.dump(2) + "\n");
    write_text(dir / "data.csv", csv_text(result.data));

    DispatchOutcome out;
    out.report_path = (dir / "report.json").string();
    std::ostringstream os;
    for (const auto& r : result.report.rows) {
        os << "  [" << r.verdict << "] " << r.param << ": " << r.estimate;
        if (r.stderr_ > 0.0) os << " +- " << r.stderr_;
        os << " (n=" << r.n << ")\n";
    }
    os << "verdict: " << result.report.verdict << " | flagged "
       << result.report.flagged_fraction << " | " << result.report.wall_seconds << " s\n";
    out.summary = os.str();
    out.exit_code = result.report.verdict == "fail" || !result.report.valid ? 2 : 0;
    return out;
}

}  // namespace oudrift::cli

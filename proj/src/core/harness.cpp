#include "harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <mutex>
#include <sstream>
#include <thread>

namespace oudrift::harness {

using model::CoefficientModel;
using model::NoiseSpec;
using model::ProblemModel;
using sde::SimConfig;

namespace {

class WallClock {
public:
    WallClock() : start_(std::chrono::steady_clock::now()) {}
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_)
            .count();
    }

private:
    std::chrono::steady_clock::time_point start_;
};

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(6);
    os << v;
    return os.str();
}

Stats paired_diff(const std::vector<double>& a, const std::vector<double>& b) {
    std::vector<double> d(a.size());
    for (size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
    return summarize(d);
}

double binom_se(double p, long n) {
    return std::sqrt(std::max(p * (1.0 - p), 1e-12) / static_cast<double>(n));
}

void finalize_flags(ExperimentReport& rep, long flagged, long total) {
    rep.flagged_fraction = total > 0 ? static_cast<double>(flagged) / total : 0.0;
    if (rep.flagged_fraction >= 0.01) {
        rep.valid = false;
        rep.notes.push_back("flagged fraction reached 1%; report marked invalid");
    }
}

int checkpoint_step(int j, int checkpoints, int steps) {
    return static_cast<int>(std::llround(static_cast<double>(j) * steps / checkpoints));
}

// Discretization-floor control: integrates the limit SDE at dt and dt/2 on
// the same Brownian path (fine pairs summed into the coarse increment) and
// returns the per-path terminal metric gaps. Statistical noise cancels, so
// the mean gap isolates the dt-dependence of the headline estimate.
std::vector<double> dt_refinement_gap(
    const CoefficientModel& cm, const NoiseSpec& noise, const sde::DriftProvider& f,
    double T, double dt, int n_paths, std::uint64_t seed, int threads,
    const std::function<Vector(int, sde::GaussianStream&)>& initial,
    const std::function<double(const Vector&)>& metric) {
    sde::LimitStepper coarse(cm, noise, f, dt);
    sde::LimitStepper fine(cm, noise, f, 0.5 * dt);
    const int steps = static_cast<int>(std::llround(T / dt));
    const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
    std::vector<double> gap(n_paths, 0.0);
    parallel_for(n_paths, threads, [&](int i) {
        sde::GaussianStream rng(seed, static_cast<std::uint64_t>(i));
        Vector xc = initial(i, rng);
        Vector xf = xc;
        Vector g1(noise.m()), g2(noise.m());
        bool ok = true;
        for (int k = 0; k < steps && ok; ++k) {
            rng.fill(g1);
            rng.fill(g2);
            xf = fine.step(xf, g1, &ok);
            if (!ok) break;
            xf = fine.step(xf, g2, &ok);
            if (!ok) break;
            xc = coarse.step(xc, ((g1 + g2) * inv_sqrt2).eval(), &ok);
        }
        gap[i] = ok ? metric(xc) - metric(xf) : 0.0;
    });
    return gap;
}

}  // namespace

void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
    int workers = threads <= 0 ? static_cast<int>(std::thread::hardware_concurrency())
                               : threads;
    workers = std::max(1, std::min(workers, n));
    if (workers == 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (;;) {
                const int i = next.fetch_add(1);
                if (i >= n) return;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!first_error) first_error = std::current_exception();
                    return;
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

Stats summarize(const std::vector<double>& v) {
    Stats s;
    s.n = static_cast<long>(v.size());
    if (s.n == 0) return s;
    double sum = 0.0;
    for (double x : v) sum += x;
    s.mean = sum / static_cast<double>(s.n);
    if (s.n < 2) return s;
    double ss = 0.0;
    for (double x : v) ss += (x - s.mean) * (x - s.mean);
    s.se = std::sqrt(ss / static_cast<double>(s.n - 1)) /
           std::sqrt(static_cast<double>(s.n));
    return s;
}

double mu_of_eps(const std::string& rule, double alpha, double eps) {
    if (rule == "alpha-eps") {
        if (!(alpha > 0.0) || std::isinf(alpha))
            throw Error("mu rule 'alpha-eps' needs finite positive alpha");
        return alpha * eps;
    }
    if (rule == "eps-squared") return eps * eps;
    if (rule == "sqrt-eps") return std::sqrt(eps);
    if (rule.rfind("eps^", 0) == 0) {  // general power scaling mu = eps^g
        char* end = nullptr;
        const double g = std::strtod(rule.c_str() + 4, &end);
        if (end == rule.c_str() + 4 || *end != '\0' || !(g > 0.0))
            throw Error("mu rule '" + rule + "': exponent must be a positive number");
        return std::pow(eps, g);
    }
    throw Error("unknown mu rule '" + rule + "'");
}

// ---------------------------------------------------------------------------
// Convergence to the limit equation
// ---------------------------------------------------------------------------

ExperimentResult convergence_experiment(const ProblemModel& pm, const NoiseSpec& noise,
                                        const ConvergenceParams& p) {
    WallClock clock;
    if (p.eps_list.empty()) throw Error("convergence experiment: empty eps list");
    for (size_t i = 1; i < p.eps_list.size(); ++i)
        if (!(p.eps_list[i] < p.eps_list[i - 1]))
            throw Error("convergence experiment: eps list must be decreasing");
    if (p.n_paths < 2) throw Error("convergence experiment: need at least 2 paths");

    const int d = pm.coeff.dim;
    ExperimentResult out;
    out.report.command = "converge";
    out.report.seed = p.seed;
    out.data.schema = "trajectories-v1";
    out.data.columns = {"trajectory_index", "eps", "mu", "alpha", "sup_distance"};
    for (int i = 0; i < d; ++i) out.data.columns.push_back("terminal_x" + std::to_string(i));
    out.data.columns.push_back("flagged");

    struct Column {
        double eps, mu, dt;
        bool control;
        std::vector<double> sup;
        std::vector<char> flagged;
    };
    std::vector<Column> cols;
    for (double eps : p.eps_list)
        cols.push_back({eps, mu_of_eps(p.mu_rule, p.alpha, eps),
                        std::min(eps / 20.0, p.dt_limit), false, {}, {}});
    // dt-halved discretization-floor control at the smallest eps.
    cols.push_back({p.eps_list.back(), cols.back().mu, 0.5 * cols.back().dt, true, {}, {}});

    long flagged_total = 0;
    for (auto& col : cols) {
        col.sup.resize(p.n_paths);
        col.flagged.assign(p.n_paths, 0);
        std::vector<Vector> terminals(p.n_paths);
        auto provider = sde::make_drift_provider(pm, noise, p.alpha);
        parallel_for(p.n_paths, p.threads, [&](int i) {
            SimConfig cfg;
            cfg.T = p.T;
            cfg.dt = col.dt;
            cfg.epsilon = col.eps;
            cfg.mu = col.mu;
            cfg.alpha = p.alpha;
            cfg.x0 = Vector::Zero(d);
            cfg.v0 = Vector::Zero(d);
            cfg.seed = p.seed;
            cfg.trajectory_index = static_cast<std::uint64_t>(i);
            sde::CoupledResult r = sde::run_coupled(cfg, pm.coeff, noise, provider);
            col.sup[i] = r.sup_distance;
            col.flagged[i] = r.flagged ? 1 : 0;
            terminals[i] = r.terminal_pre;
        });
        for (int i = 0; i < p.n_paths; ++i) {
            std::vector<double> row = {static_cast<double>(i), col.eps, col.mu, p.alpha,
                                       col.sup[i]};
            for (int k = 0; k < d; ++k) row.push_back(terminals[i](k));
            row.push_back(col.flagged[i]);
            out.data.rows.push_back(std::move(row));
            flagged_total += col.flagged[i];
        }
    }

    // Headline rows and the monotonicity verdict.
    std::vector<Stats> stats;
    for (size_t c = 0; c + 1 < cols.size(); ++c) stats.push_back(summarize(cols[c].sup));
    bool monotone = true;
    for (size_t c = 0; c + 1 < stats.size(); ++c) {
        const double joint = std::hypot(stats[c].se, stats[c + 1].se);
        if (!(stats[c].mean - stats[c + 1].mean > joint)) monotone = false;
    }
    for (size_t c = 0; c < stats.size(); ++c) {
        ReportRow row;
        row.param = "eps=" + fmt(cols[c].eps);
        row.estimate = stats[c].mean;
        row.stderr_ = stats[c].se;
        row.n = stats[c].n;
        row.verdict = c == 0 ? "n/a"
                             : (stats[c].mean < stats[c - 1].mean -
                                                    std::hypot(stats[c].se, stats[c - 1].se)
                                    ? "pass"
                                    : "inconclusive");
        out.report.rows.push_back(row);
    }
    // Tail-probability view of the convergence statement.
    for (size_t c = 0; c + 1 < cols.size(); ++c) {
        long over = 0;
        for (double s : cols[c].sup) over += s > p.eta;
        const double frac = static_cast<double>(over) / p.n_paths;
        ReportRow row;
        row.param = "P(sup>" + fmt(p.eta) + ")|eps=" + fmt(cols[c].eps);
        row.estimate = frac;
        row.stderr_ = binom_se(frac, p.n_paths);
        row.n = p.n_paths;
        row.verdict = "n/a";
        out.report.rows.push_back(row);
    }
    {
        Stats ctl = summarize(cols.back().sup);
        ReportRow row;
        row.param = "control:eps=" + fmt(cols.back().eps) + ",dt/2";
        row.estimate = ctl.mean;
        row.stderr_ = ctl.se;
        row.n = ctl.n;
        row.verdict = "n/a";
        out.report.rows.push_back(row);
    }

    out.report.verdict = monotone ? "pass" : "fail";
    finalize_flags(out.report, flagged_total,
                   static_cast<long>(cols.size()) * p.n_paths);
    out.report.wall_seconds = clock.seconds();
    return out;
}

// ---------------------------------------------------------------------------
// Stationary covariance of the frozen fast system
// ---------------------------------------------------------------------------

ExperimentResult covariance_experiment(const ProblemModel& pm, const NoiseSpec& noise,
                                       const CovarianceParams& p) {
    WallClock clock;
    if (!(p.alpha > 0.0) || std::isinf(p.alpha))
        throw Error("covariance experiment: alpha must be finite and positive");
    if (p.n_reps < 2) throw Error("covariance experiment: need at least 2 replicas");
    const int d = pm.coeff.dim, n = noise.n();
    Vector x = p.x_frozen.size() == d ? p.x_frozen : Vector::Zero(d);

    double gamma0 = pm.coeff.gamma0;
    if (!(gamma0 > 0.0)) {
        Matrix g = pm.coeff.gamma(x);
        Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (g + g.transpose()));
        gamma0 = es.eigenvalues().minCoeff();
    }
    const double omega = drift::mixing_rate(gamma0, noise, p.alpha);
    const double burn_in = p.burn_in >= 0.0 ? p.burn_in : 8.0 / omega;

    ExperimentResult out;
    out.report.command = "covariance";
    out.report.seed = p.seed;
    if (burn_in < 4.0 / omega)
        out.report.notes.push_back("warning: burn-in shorter than 4/omega_alpha (omega=" +
                                   fmt(omega) + ")");

    drift::DriftMatrices target = drift::drift_matrices(pm.coeff, noise, p.alpha, x);

    std::vector<sde::FrozenMoments> reps(p.n_reps);
    parallel_for(p.n_reps, p.threads, [&](int r) {
        reps[r] = sde::frozen_fast_moments(x, pm.coeff, noise, p.alpha, p.T + burn_in,
                                           p.dt, burn_in, p.seed,
                                           static_cast<std::uint64_t>(r));
    });

    out.data.schema = "moments-v1";
    out.data.columns = {"rep"};
    struct Entry {
        std::string name;
        double target;
        std::function<double(const sde::FrozenMoments&)> get;
    };
    std::vector<Entry> entries;
    for (int i = 0; i < d; ++i)
        for (int j = i; j < d; ++j)
            entries.push_back({"uu[" + std::to_string(i) + "," + std::to_string(j) + "]",
                               target.N(i, j),
                               [i, j](const sde::FrozenMoments& m) { return m.uu(i, j); }});
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < n; ++j)
            entries.push_back({"uz[" + std::to_string(i) + "," + std::to_string(j) + "]",
                               target.L(i, j),
                               [i, j](const sde::FrozenMoments& m) { return m.uz(i, j); }});
    for (int i = 0; i < n; ++i)
        for (int j = i; j < n; ++j)
            entries.push_back({"zz[" + std::to_string(i) + "," + std::to_string(j) + "]",
                               target.M(i, j),
                               [i, j](const sde::FrozenMoments& m) { return m.zz(i, j); }});
    for (const auto& e : entries) out.data.columns.push_back(e.name);

    for (int r = 0; r < p.n_reps; ++r) {
        std::vector<double> row = {static_cast<double>(r)};
        for (const auto& e : entries) row.push_back(e.get(reps[r]));
        out.data.rows.push_back(std::move(row));
    }

    bool all_pass = true;
    for (const auto& e : entries) {
        std::vector<double> vals(p.n_reps);
        for (int r = 0; r < p.n_reps; ++r) vals[r] = e.get(reps[r]);
        Stats s = summarize(vals);
        const double z = s.se > 0.0 ? (s.mean - e.target) / s.se : 0.0;
        ReportRow row;
        row.param = e.name + " (target " + fmt(e.target) + ", z=" + fmt(z) + ")";
        row.estimate = s.mean;
        row.stderr_ = s.se;
        row.n = s.n;
        row.verdict = std::abs(z) <= 3.0 ? "pass" : "fail";
        all_pass = all_pass && std::abs(z) <= 3.0;
        out.report.rows.push_back(row);
    }
    out.report.verdict = all_pass ? "pass" : "fail";
    out.report.wall_seconds = clock.seconds();
    return out;
}

// ---------------------------------------------------------------------------
// Regime separation: mu = eps^2 vs mu = sqrt(eps)
// ---------------------------------------------------------------------------

ExperimentResult regime_separation_experiment(const ProblemModel& pm,
                                              const NoiseSpec& noise,
                                              const RegimeParams& p) {
    WallClock clock;
    if (p.n_paths < 2) throw Error("regime experiment: need at least 2 paths");
    const int d = pm.coeff.dim;
    const double dt = std::min(p.eps / 20.0, p.dt_limit);
    const double mu_small = p.eps * p.eps;     // alpha -> 0 proxy
    const double mu_large = std::sqrt(p.eps);  // alpha -> infinity proxy

    auto f0 = sde::make_drift_provider(pm, noise, 0.0);
    auto finf = sde::make_drift_provider(pm, noise,
                                         std::numeric_limits<double>::infinity());
    sde::LimitStepper lim0(pm.coeff, noise, f0, dt);
    sde::LimitStepper liminf(pm.coeff, noise, finf, dt);
    sde::InertialStepper pre_small(pm.coeff, noise, mu_small, p.eps, dt);
    sde::InertialStepper pre_large(pm.coeff, noise, mu_large, p.eps, dt);

    const int steps = static_cast<int>(std::llround(p.T / dt));
    struct PathOut {
        double s_small_0, s_small_inf, s_large_0, s_large_inf;
        double x0_T, xinf_T, pre_small_T, pre_large_T;
        bool flagged;
    };
    std::vector<PathOut> outs(p.n_paths);
    parallel_for(p.n_paths, p.threads, [&](int i) {
        sde::GaussianStream rng(p.seed, static_cast<std::uint64_t>(i));
        Vector gauss(noise.m());
        sde::InertialState small, large;
        small.x = Vector::Zero(d);
        small.v = Vector::Zero(d);
        small.z = Vector::Zero(noise.n());
        large = small;
        Vector x0 = Vector::Zero(d), xinf = Vector::Zero(d);
        PathOut po{0, 0, 0, 0, 0, 0, 0, 0, false};
        for (int k = 1; k <= steps; ++k) {
            rng.fill(gauss);
            bool ok0 = true, okinf = true;
            x0 = lim0.step(x0, gauss, &ok0);
            xinf = liminf.step(xinf, gauss, &okinf);
            pre_small.step(small, gauss);
            pre_large.step(large, gauss);
            if (!ok0 || !okinf || small.flagged || large.flagged) {
                po.flagged = true;
                break;
            }
            po.s_small_0 = std::max(po.s_small_0, (small.x - x0).norm());
            po.s_small_inf = std::max(po.s_small_inf, (small.x - xinf).norm());
            po.s_large_0 = std::max(po.s_large_0, (large.x - x0).norm());
            po.s_large_inf = std::max(po.s_large_inf, (large.x - xinf).norm());
        }
        po.x0_T = x0(0);
        po.xinf_T = xinf(0);
        po.pre_small_T = small.x(0);
        po.pre_large_T = large.x(0);
        outs[i] = po;
    });

    ExperimentResult out;
    out.report.command = "regimes";
    out.report.seed = p.seed;
    out.data.schema = "regimes-v1";
    out.data.columns = {"trajectory_index", "eps",          "sup_small_x0",
                        "sup_small_xinf",   "sup_large_x0", "sup_large_xinf",
                        "terminal_x0",      "terminal_xinf", "terminal_pre_small",
                        "terminal_pre_large", "flagged"};
    long flagged = 0;
    std::vector<double> s_small_0, s_small_inf, s_large_0, s_large_inf, x0T, xinfT;
    for (int i = 0; i < p.n_paths; ++i) {
        const PathOut& po = outs[i];
        out.data.rows.push_back({static_cast<double>(i), p.eps, po.s_small_0,
                                 po.s_small_inf, po.s_large_0, po.s_large_inf, po.x0_T,
                                 po.xinf_T, po.pre_small_T, po.pre_large_T,
                                 po.flagged ? 1.0 : 0.0});
        flagged += po.flagged;
        if (po.flagged) continue;
        s_small_0.push_back(po.s_small_0);
        s_small_inf.push_back(po.s_small_inf);
        s_large_0.push_back(po.s_large_0);
        s_large_inf.push_back(po.s_large_inf);
        x0T.push_back(po.x0_T);
        xinfT.push_back(po.xinf_T);
    }

    auto add_stat_row = [&](const std::string& name, const Stats& s, bool pass_gt_zero,
                            bool judged) {
        ReportRow row;
        row.param = name;
        row.estimate = s.mean;
        row.stderr_ = s.se;
        row.n = s.n;
        row.verdict = judged ? (pass_gt_zero ? "pass" : "fail") : "n/a";
        out.report.rows.push_back(row);
    };
    add_stat_row("sup|mu=eps^2 vs x^0", summarize(s_small_0), false, false);
    add_stat_row("sup|mu=eps^2 vs x^inf", summarize(s_small_inf), false, false);
    add_stat_row("sup|mu=sqrt(eps) vs x^0", summarize(s_large_0), false, false);
    add_stat_row("sup|mu=sqrt(eps) vs x^inf", summarize(s_large_inf), false, false);

    Stats d_small = paired_diff(s_small_inf, s_small_0);  // > 0: closer to x^0
    Stats d_large = paired_diff(s_large_0, s_large_inf);  // > 0: closer to x^inf
    Stats gap = paired_diff(x0T, xinfT);
    const bool small_ok = d_small.mean > 3.0 * d_small.se;
    const bool large_ok = d_large.mean > 3.0 * d_large.se;
    const bool gap_ok = std::abs(gap.mean) > 3.0 * gap.se;
    add_stat_row("paired gap: mu=eps^2 favors x^0", d_small, small_ok, true);
    add_stat_row("paired gap: mu=sqrt(eps) favors x^inf", d_large, large_ok, true);
    add_stat_row("terminal mean gap x^0 - x^inf", gap, gap_ok, true);

    out.report.verdict = small_ok && large_ok && gap_ok ? "pass" : "fail";
    finalize_flags(out.report, flagged, p.n_paths);
    out.report.wall_seconds = clock.seconds();
    return out;
}

// ---------------------------------------------------------------------------
// Vortex: centrifugal spreading of the limit dynamics
// ---------------------------------------------------------------------------

ExperimentResult vortex_experiment(const model::VortexParams& mp,
                                   const VortexExpParams& p) {
    WallClock clock;
    if (p.alpha_list.empty()) throw Error("vortex experiment: empty alpha list");
    for (size_t i = 1; i < p.alpha_list.size(); ++i)
        if (!(p.alpha_list[i] > p.alpha_list[i - 1]))
            throw Error("vortex experiment: alpha list must be increasing");
    model::TurbulenceModel tm = model::builtin_vortex(mp);
    CoefficientModel cm = model::as_coefficient_model(tm);
    NoiseSpec noise = NoiseSpec::identity(tm.num_fields);
    const int C = p.checkpoints;

    ExperimentResult out;
    out.report.command = "demo-vortex";
    out.report.seed = p.seed;
    out.data.schema = "timeseries-v1";
    out.data.columns = {"alpha", "is_control", "t", "estimate", "stderr", "n"};

    struct SeriesOut {
        std::vector<std::vector<double>> r2;  // [checkpoint][path]
        long flagged = 0;
    };
    auto run_series = [&](double alpha, double dt) {
        sde::DriftProvider f = sde::make_turbulence_drift_provider(tm, alpha);
        const int nsteps = static_cast<int>(std::llround(p.T / dt));
        SeriesOut so;
        so.r2.assign(C + 1, std::vector<double>(p.n_paths, 0.0));
        std::vector<char> flagged(p.n_paths, 0);
        parallel_for(p.n_paths, p.threads, [&](int i) {
            SimConfig cfg;
            cfg.T = p.T;
            cfg.dt = dt;
            cfg.epsilon = 1.0;
            cfg.mu = 1.0;
            cfg.alpha = alpha;
            const double theta = 2.0 * M_PI * i / p.n_paths;
            cfg.x0 = Vector(2);
            cfg.x0 << std::cos(theta), std::sin(theta);
            cfg.seed = p.seed;
            cfg.trajectory_index = static_cast<std::uint64_t>(i);
            int next_cp = 0;
            auto observe = [&](int k, const Vector& x) {
                while (next_cp <= C && k == checkpoint_step(next_cp, C, nsteps)) {
                    so.r2[next_cp][i] = x.squaredNorm();
                    ++next_cp;
                }
            };
            sde::LimitRunResult r = sde::run_limit(cfg, cm, noise, f, observe);
            flagged[i] = r.flagged ? 1 : 0;
        });
        for (char fl : flagged) so.flagged += fl;
        return so;
    };

    std::vector<SeriesOut> series;
    for (double a : p.alpha_list) series.push_back(run_series(a, p.dt));
    SeriesOut control = run_series(0.0, p.dt);

    long flagged_total = control.flagged;
    for (size_t s = 0; s < series.size(); ++s) {
        flagged_total += series[s].flagged;
        for (int j = 0; j <= C; ++j) {
            Stats st = summarize(series[s].r2[j]);
            out.data.rows.push_back({p.alpha_list[s], 0.0,
                                     p.T * j / static_cast<double>(C), st.mean, st.se,
                                     static_cast<double>(st.n)});
        }
    }
    for (int j = 0; j <= C; ++j) {
        Stats st = summarize(control.r2[j]);
        out.data.rows.push_back({0.0, 1.0, p.T * j / static_cast<double>(C), st.mean,
                                 st.se, static_cast<double>(st.n)});
    }

    bool all_pass = true;
    // Growth in t for each alpha > 0 (paired per-path terminal vs initial).
    for (size_t s = 0; s < series.size(); ++s) {
        const double a = p.alpha_list[s];
        Stats growth = paired_diff(series[s].r2[C], series[s].r2[0]);
        ReportRow row;
        row.param = "E|x(T)|^2 - E|x(0)|^2 @ alpha=" + fmt(a);
        row.estimate = growth.mean;
        row.stderr_ = growth.se;
        row.n = growth.n;
        if (a > 0.0) {
            const bool ok = growth.mean > 3.0 * growth.se;
            row.verdict = ok ? "pass" : "fail";
            all_pass = all_pass && ok;
        } else {
            // alpha = 0 column: flat against the drift-free control.
            Stats dctl = paired_diff(series[s].r2[C], control.r2[C]);
            const bool ok = std::abs(dctl.mean) <= 2.0 * std::max(dctl.se, 1e-15);
            row.verdict = ok ? "pass" : "fail";
            all_pass = all_pass && ok;
        }
        out.report.rows.push_back(row);
    }
    // Monotone in alpha across the list (paired, same Brownian streams).
    for (size_t s = 0; s + 1 < series.size(); ++s) {
        Stats d = paired_diff(series[s + 1].r2[C], series[s].r2[C]);
        const bool ok = d.mean > 3.0 * d.se;
        ReportRow row;
        row.param = "E|x(T)|^2 increase: alpha " + fmt(p.alpha_list[s]) + " -> " +
                    fmt(p.alpha_list[s + 1]);
        row.estimate = d.mean;
        row.stderr_ = d.se;
        row.n = d.n;
        row.verdict = ok ? "pass" : "fail";
        all_pass = all_pass && ok;
        out.report.rows.push_back(row);
    }
    // Discretization control: dt vs dt/2 on the same Brownian paths at the
    // largest alpha; the headline growth must dominate the dt-dependence.
    {
        const double a_head = p.alpha_list.back();
        sde::DriftProvider f_head = sde::make_turbulence_drift_provider(tm, a_head);
        std::vector<double> gaps = dt_refinement_gap(
            cm, noise, f_head, p.T, p.dt, p.n_paths, p.seed, p.threads,
            [&](int i, sde::GaussianStream&) {
                const double theta = 2.0 * M_PI * i / p.n_paths;
                Vector x0(2);
                x0 << std::cos(theta), std::sin(theta);
                return x0;
            },
            [](const Vector& x) { return x.squaredNorm(); });
        Stats g1 = paired_diff(series.back().r2[C], series.back().r2[0]);
        Stats gap = summarize(gaps);
        const double control_drift = std::abs(gap.mean);
        const bool ok = g1.mean > 3.0 * control_drift;
        ReportRow row;
        row.param = "control: terminal E|x|^2 gap, dt vs dt/2 @ alpha=" + fmt(a_head);
        row.estimate = control_drift;
        row.stderr_ = gap.se;
        row.n = gap.n;
        row.verdict = ok ? "pass" : "fail";
        all_pass = all_pass && ok;
        out.report.rows.push_back(row);
    }

    out.report.verdict = all_pass ? "pass" : "fail";
    finalize_flags(out.report, flagged_total,
                   static_cast<long>(series.size() + 2) * p.n_paths);
    out.report.wall_seconds = clock.seconds();
    return out;
}

// ---------------------------------------------------------------------------
// Cellular flow: concentration on the separatrices
// ---------------------------------------------------------------------------

ExperimentResult cellular_experiment(const model::CellularParams& mp,
                                     const CellularExpParams& p) {
    WallClock clock;
    model::TurbulenceModel tm = model::builtin_cellular(mp);
    CoefficientModel cm = model::as_coefficient_model(tm);
    NoiseSpec noise = NoiseSpec::identity(1);
    sde::DriftProvider f = sde::make_turbulence_drift_provider(tm, p.alpha);
    sde::LimitStepper stepper(cm, noise, f, p.dt);

    const int steps = static_cast<int>(std::llround(p.T / p.dt));
    const int C = p.checkpoints;
    const int window_steps =
        std::max(1, static_cast<int>(std::llround(p.rate_window / p.dt)));

    auto psi_of = [&](const Vector& x) {
        return std::sin(mp.k1 * x(0)) * std::cos(mp.k2 * x(1));
    };
    auto predicted_rate = [&](const Vector& x) {
        // dpsi/dt = -1/2 w grad psi . Dxi xi along the limit path.
        drift::CellularDiagnostics dg = drift::cellular_diagnostics(mp, p.alpha, x);
        const double w = std::isinf(p.alpha) ? 1.0 : p.alpha / (mp.lambda + p.alpha);
        return -0.5 * w * dg.grad_psi_dot_Dxixi;
    };

    struct PathOut {
        double max_increase = 0.0;
        std::vector<double> abs_psi_cp;
        double mp_sum = 0.0;  // sum of measured*predicted over windows
        double pp_sum = 0.0;  // sum of predicted^2 over windows
        long windows = 0;
        bool flagged = false;
    };
    std::vector<PathOut> outs(p.n_paths);
    parallel_for(p.n_paths, p.threads, [&](int i) {
        sde::GaussianStream rng(p.seed, static_cast<std::uint64_t>(i));
        PathOut po;
        po.abs_psi_cp.assign(C + 1, 0.0);
        Vector x(2);
        // Uniform cloud on one cell of the vortex lattice.
        x << (M_PI / mp.k1) * rng.uniform01(),
            (M_PI / mp.k2) * (rng.uniform01() - 0.5);
        Vector gauss(1);
        double psi_prev = psi_of(x);
        po.abs_psi_cp[0] = std::abs(psi_prev);
        int next_cp = 1;
        double win_start_psi = psi_prev;
        double win_pred_integral = 0.0;
        int win_count = 0;
        for (int k = 1; k <= steps; ++k) {
            win_pred_integral += predicted_rate(x) * p.dt;
            rng.fill(gauss);
            bool ok = true;
            x = stepper.step(x, gauss, &ok);
            if (!ok) {
                po.flagged = true;
                break;
            }
            const double psi = psi_of(x);
            po.max_increase = std::max(po.max_increase, std::abs(psi) - std::abs(psi_prev));
            psi_prev = psi;
            if (++win_count == window_steps) {
                if (std::abs(win_start_psi) > 0.1) {
                    const double measured = (psi - win_start_psi) /
                                            (window_steps * p.dt);
                    const double predicted = win_pred_integral / (window_steps * p.dt);
                    po.mp_sum += measured * predicted;
                    po.pp_sum += predicted * predicted;
                    ++po.windows;
                }
                win_start_psi = psi;
                win_pred_integral = 0.0;
                win_count = 0;
            }
            while (next_cp <= C && k == checkpoint_step(next_cp, C, steps)) {
                po.abs_psi_cp[next_cp] = std::abs(psi);
                ++next_cp;
            }
        }
        outs[i] = po;
    });

    ExperimentResult out;
    out.report.command = "demo-cellular";
    out.report.seed = p.seed;
    out.data.schema = "timeseries-v1";
    out.data.columns = {"t", "occupancy", "occupancy_stderr", "mean_abs_psi", "n"};

    long flagged = 0;
    for (const auto& po : outs) flagged += po.flagged;

    std::vector<double> occupancy(C + 1, 0.0);
    for (int j = 0; j <= C; ++j) {
        double occ = 0.0, mean_abs = 0.0;
        long n_ok = 0;
        for (const auto& po : outs) {
            if (po.flagged) continue;
            occ += po.abs_psi_cp[j] <= p.delta;
            mean_abs += po.abs_psi_cp[j];
            ++n_ok;
        }
        occ /= std::max<long>(1, n_ok);
        mean_abs /= std::max<long>(1, n_ok);
        occupancy[j] = occ;
        out.data.rows.push_back({p.T * j / static_cast<double>(C), occ,
                                 binom_se(occ, n_ok), mean_abs,
                                 static_cast<double>(n_ok)});
    }

    // Verdict A: pathwise monotone non-increasing |psi| within 10 dt.
    double worst_increase = 0.0;
    for (const auto& po : outs)
        if (!po.flagged) worst_increase = std::max(worst_increase, po.max_increase);
    const bool a_ok = worst_increase <= 10.0 * p.dt;
    {
        ReportRow row{"max per-step |psi| increase (tol 10*dt)", worst_increase, 0.0,
                      static_cast<long>(p.n_paths), a_ok ? "pass" : "fail"};
        out.report.rows.push_back(row);
    }
    // Verdict B: occupancy non-decreasing (slack one path) and >= 0.95 at T.
    bool mono_ok = true;
    const double slack = 1.0 / p.n_paths + 1e-12;
    for (int j = 1; j <= C; ++j)
        if (occupancy[j] < occupancy[j - 1] - slack) mono_ok = false;
    {
        ReportRow row{"occupancy monotone in t", occupancy[C] - occupancy[0], 0.0,
                      static_cast<long>(p.n_paths), mono_ok ? "pass" : "fail"};
        out.report.rows.push_back(row);
    }
    const bool occ_ok = occupancy[C] >= 0.95;
    {
        ReportRow row{"occupancy(T) >= 0.95 (delta=" + fmt(p.delta) + ")", occupancy[C],
                      binom_se(occupancy[C], p.n_paths), static_cast<long>(p.n_paths),
                      occ_ok ? "pass" : "fail"};
        out.report.rows.push_back(row);
    }
    // Verdict C: decay-rate regression slope across pointwise window samples.
    double mp_sum = 0.0, pp_sum = 0.0;
    long windows = 0;
    for (const auto& po : outs) {
        mp_sum += po.mp_sum;
        pp_sum += po.pp_sum;
        windows += po.windows;
    }
    const double slope = pp_sum > 0.0 ? mp_sum / pp_sum : 0.0;
    const bool c_ok = std::abs(slope - 1.0) <= 0.05;
    {
        ReportRow row{"measured/predicted dpsi/dt slope (|psi|>0.1)", slope, 0.0, windows,
                      c_ok ? "pass" : "fail"};
        out.report.rows.push_back(row);
    }

    out.report.verdict = a_ok && mono_ok && occ_ok && c_ok ? "pass" : "fail";
    finalize_flags(out.report, flagged, p.n_paths);
    out.report.wall_seconds = clock.seconds();
    return out;
}

// ---------------------------------------------------------------------------
// Turbophoresis in the pipe
// ---------------------------------------------------------------------------

ExperimentResult turbophoresis_experiment(const model::PipeParams& mp,
                                          const TurboExpParams& p) {
    WallClock clock;
    model::TurbulenceModel tm = model::builtin_pipe(mp);
    CoefficientModel cm = model::as_coefficient_model(tm);
    NoiseSpec noise = NoiseSpec::identity(tm.num_fields);
    const int C = p.checkpoints;

    struct SeriesOut {
        std::vector<std::vector<double>> abs_x2;  // [checkpoint][path]
        long flagged = 0;
    };
    auto run_series = [&](double alpha, double dt) {
        sde::DriftProvider f = sde::make_turbulence_drift_provider(tm, alpha);
        const int nsteps = static_cast<int>(std::llround(p.T / dt));
        SeriesOut so;
        so.abs_x2.assign(C + 1, std::vector<double>(p.n_paths, 0.0));
        std::vector<char> flagged(p.n_paths, 0);
        parallel_for(p.n_paths, p.threads, [&](int i) {
            sde::GaussianStream rng(p.seed, static_cast<std::uint64_t>(i));
            SimConfig cfg;
            cfg.T = p.T;
            cfg.dt = dt;
            cfg.epsilon = 1.0;
            cfg.mu = 1.0;
            cfg.alpha = alpha;
            cfg.x0 = Vector(2);
            cfg.x0 << 0.0, 0.4 * rng.uniform01() - 0.2;
            cfg.seed = p.seed;
            cfg.trajectory_index = static_cast<std::uint64_t>(i) + (1ULL << 32);
            int next_cp = 0;
            auto observe = [&](int k, const Vector& x) {
                while (next_cp <= C && k == checkpoint_step(next_cp, C, nsteps)) {
                    so.abs_x2[next_cp][i] = std::abs(x(1));
                    ++next_cp;
                }
            };
            sde::LimitRunResult r = sde::run_limit(cfg, cm, noise, f, observe);
            flagged[i] = r.flagged ? 1 : 0;
        });
        for (char fl : flagged) so.flagged += fl;
        return so;
    };

    SeriesOut headline = run_series(p.alpha, p.dt);
    SeriesOut zero = run_series(0.0, p.dt);
    SeriesOut control = run_series(0.0, p.dt);  // drift-free control == alpha 0

    ExperimentResult out;
    out.report.command = "demo-pipe";
    out.report.seed = p.seed;
    out.data.schema = "timeseries-v1";
    out.data.columns = {"series", "t", "mean_abs_x2", "stderr", "n"};
    auto emit_series = [&](double code, const SeriesOut& so) {
        for (int j = 0; j <= C; ++j) {
            Stats st = summarize(so.abs_x2[j]);
            out.data.rows.push_back({code, p.T * j / static_cast<double>(C), st.mean,
                                     st.se, static_cast<double>(st.n)});
        }
    };
    emit_series(p.alpha, headline);
    emit_series(0.0, zero);
    emit_series(-1.0, control);

    bool all_pass = true;
    // Pointwise sign property of the drift on a grid.
    {
        long checked = 0, violations = 0;
        for (int i = 0; i < p.grid_n; ++i)
            for (int j = 0; j < p.grid_n; ++j) {
                Vector x(2);
                x << -3.0 + 6.0 * i / (p.grid_n - 1), -1.5 + 3.0 * j / (p.grid_n - 1);
                const double gk = tm.grad_kT(x)(1);
                const double drift2 = drift::turbulence_drift(tm, p.alpha, x).total(1);
                ++checked;
                if (gk != 0.0) {
                    if (!(drift2 * x(1) > 0.0) && x(1) != 0.0) ++violations;
                } else if (drift2 != 0.0) {
                    ++violations;
                }
            }
        ReportRow row{"drift x2-sign matches sign(x2) on grid",
                      static_cast<double>(violations), 0.0, checked,
                      violations == 0 ? "pass" : "fail"};
        all_pass = all_pass && violations == 0;
        out.report.rows.push_back(row);
    }
    // Migration: headline vs control, paired by seed.
    {
        Stats eff = paired_diff(headline.abs_x2[C], control.abs_x2[C]);
        const bool ok = eff.mean > 3.0 * eff.se;
        ReportRow row{"E|x2(T)| gain vs drift-free control @ alpha=" + fmt(p.alpha),
                      eff.mean, eff.se, eff.n, ok ? "pass" : "fail"};
        all_pass = all_pass && ok;
        out.report.rows.push_back(row);

        sde::DriftProvider f_head = sde::make_turbulence_drift_provider(tm, p.alpha);
        std::vector<double> gaps = dt_refinement_gap(
            cm, noise, f_head, p.T, p.dt, p.n_paths, p.seed, p.threads,
            [&](int, sde::GaussianStream& rng) {
                Vector x0(2);
                x0 << 0.0, 0.4 * rng.uniform01() - 0.2;
                return x0;
            },
            [](const Vector& x) { return std::abs(x(1)); });
        Stats gap = summarize(gaps);
        const double control_drift = std::abs(gap.mean);
        const bool ok2 = eff.mean > 3.0 * control_drift;
        ReportRow row2{"control: terminal E|x2| gap, dt vs dt/2", control_drift, gap.se,
                       gap.n, ok2 ? "pass" : "fail"};
        all_pass = all_pass && ok2;
        out.report.rows.push_back(row2);
    }
    // alpha = 0 flat against the control (identical dynamics, same seeds).
    {
        Stats flat = paired_diff(zero.abs_x2[C], control.abs_x2[C]);
        const bool ok = std::abs(flat.mean) <= 2.0 * std::max(flat.se, 1e-15);
        ReportRow row{"E|x2(T)| @ alpha=0 vs control", flat.mean, flat.se, flat.n,
                      ok ? "pass" : "fail"};
        all_pass = all_pass && ok;
        out.report.rows.push_back(row);
    }

    out.report.verdict = all_pass ? "pass" : "fail";
    finalize_flags(out.report, headline.flagged + zero.flagged + control.flagged,
                   3L * p.n_paths);
    out.report.wall_seconds = clock.seconds();
    return out;
}

// ---------------------------------------------------------------------------
// Divergence map of the cellular drift
// ---------------------------------------------------------------------------

ExperimentResult divergence_map(const model::CellularParams& mp, const DivMapParams& p) {
    WallClock clock;
    if (p.grid_n < 2) throw Error("divergence map: grid must have at least 2 points");
    model::TurbulenceModel tm = model::builtin_cellular(mp);

    auto drift_at = [&](const Vector& x) {
        return drift::turbulence_drift(tm, p.alpha, x).total;
    };
    auto numeric_div = [&](const Vector& x) {
        // Two-level central differences with Richardson extrapolation.
        auto central = [&](double h) {
            double acc = 0.0;
            for (int l = 0; l < 2; ++l) {
                Vector xp = x, xm = x;
                xp(l) += h;
                xm(l) -= h;
                acc += (drift_at(xp)(l) - drift_at(xm)(l)) / (2.0 * h);
            }
            return acc;
        };
        const double h = 2e-3;
        return (4.0 * central(0.5 * h) - central(h)) / 3.0;
    };

    ExperimentResult out;
    out.report.command = "divmap";
    out.data.schema = "grid-v1";
    out.data.columns = {"x1", "x2", "div_minus_b", "div_minus_b_numeric"};
    double worst = 0.0, scale = 0.0;
    for (int i = 0; i < p.grid_n; ++i)
        for (int j = 0; j < p.grid_n; ++j) {
            Vector x(2);
            x << -p.extent + 2.0 * p.extent * i / (p.grid_n - 1),
                -p.extent + 2.0 * p.extent * j / (p.grid_n - 1);
            const double closed =
                drift::cellular_diagnostics(mp, p.alpha, x).div_minus_b;
            const double numeric = numeric_div(x);
            worst = std::max(worst, std::abs(numeric - closed));
            scale = std::max(scale, std::abs(closed));
            out.data.rows.push_back({x(0), x(1), closed, numeric});
        }
    const bool ok = worst <= 1e-10 * (1.0 + scale);
    ReportRow row{"max |numeric - closed form| divergence", worst, 0.0,
                  static_cast<long>(p.grid_n) * p.grid_n, ok ? "pass" : "fail"};
    out.report.rows.push_back(row);
    out.report.verdict = ok ? "pass" : "fail";
    out.report.wall_seconds = clock.seconds();
    return out;
}

// ---------------------------------------------------------------------------
// Plain coupled ensemble (the `simulate` command)
// ---------------------------------------------------------------------------

ExperimentResult simulate_ensemble(const ProblemModel& pm, const NoiseSpec& noise,
                                   const SimulateParams& p) {
    WallClock clock;
    if (p.n_paths < 1) throw Error("simulate: need at least one path");
    const int d = pm.coeff.dim;
    const double mu = p.mu > 0.0 ? p.mu : mu_of_eps("alpha-eps", p.alpha, p.eps);
    const double dt = p.dt > 0.0 ? p.dt : std::min(p.eps / 20.0, 1e-3);

    auto provider = sde::make_drift_provider(pm, noise, p.alpha);
    std::vector<double> sups(p.n_paths);
    std::vector<Vector> terminals(p.n_paths);
    std::vector<char> flagged(p.n_paths, 0);
    parallel_for(p.n_paths, p.threads, [&](int i) {
        SimConfig cfg;
        cfg.T = p.T;
        cfg.dt = dt;
        cfg.epsilon = p.eps;
        cfg.mu = mu;
        cfg.alpha = p.alpha;
        cfg.x0 = p.x0.size() == d ? p.x0 : Vector::Zero(d);
        cfg.v0 = p.v0.size() == d ? p.v0 : Vector::Zero(d);
        cfg.seed = p.seed;
        cfg.trajectory_index = static_cast<std::uint64_t>(i);
        sde::CoupledResult r = sde::run_coupled(cfg, pm.coeff, noise, provider);
        sups[i] = r.sup_distance;
        terminals[i] = r.terminal_pre;
        flagged[i] = r.flagged ? 1 : 0;
    });

    ExperimentResult out;
    out.report.command = "simulate";
    out.report.seed = p.seed;
    out.data.schema = "trajectories-v1";
    out.data.columns = {"trajectory_index", "eps", "mu", "alpha", "sup_distance"};
    for (int i = 0; i < d; ++i) out.data.columns.push_back("terminal_x" + std::to_string(i));
    out.data.columns.push_back("flagged");
    long nflag = 0;
    for (int i = 0; i < p.n_paths; ++i) {
        std::vector<double> row = {static_cast<double>(i), p.eps, mu, p.alpha, sups[i]};
        for (int k = 0; k < d; ++k) row.push_back(terminals[i](k));
        row.push_back(flagged[i]);
        out.data.rows.push_back(std::move(row));
        nflag += flagged[i];
    }
    Stats s = summarize(sups);
    out.report.rows.push_back(
        {"E[sup distance] (eps=" + fmt(p.eps) + ", mu=" + fmt(mu) + ")", s.mean, s.se,
         s.n, "n/a"});
    out.report.verdict = "n/a";
    finalize_flags(out.report, nflag, p.n_paths);
    out.report.wall_seconds = clock.seconds();
    return out;
}

}  // namespace oudrift::harness

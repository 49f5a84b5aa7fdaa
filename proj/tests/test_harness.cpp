#include "core/harness.hpp"
#include "test_models.hpp"

#include <doctest.h>

#include <atomic>
#include <cmath>

using namespace oudrift;
using namespace oudrift::harness;
using model::ProblemModel;

TEST_CASE("summarize") {
    Stats s = summarize({1.0, 2.0, 3.0, 4.0});
    CHECK(s.mean == doctest::Approx(2.5));
    CHECK(s.n == 4);
    CHECK(s.se == doctest::Approx(std::sqrt(5.0 / 3.0) / 2.0));
}

TEST_CASE("mu rules") {
    CHECK(mu_of_eps("alpha-eps", 2.0, 0.01) == doctest::Approx(0.02));
    CHECK(mu_of_eps("eps-squared", 0.0, 0.01) == doctest::Approx(1e-4));
    CHECK(mu_of_eps("sqrt-eps", 0.0, 0.01) == doctest::Approx(0.1));
    CHECK(mu_of_eps("eps^1.5", 1.0, 0.01) == doctest::Approx(1e-3));
    CHECK_THROWS_AS(mu_of_eps("alpha-eps", 0.0, 0.01), Error);
    CHECK_THROWS_AS(mu_of_eps("eps^-1", 1.0, 0.01), Error);
    CHECK_THROWS_AS(mu_of_eps("eps^two", 1.0, 0.01), Error);
    CHECK_THROWS_AS(mu_of_eps("geometric", 1.0, 0.01), Error);
}

TEST_CASE("parallel_for: slot results independent of worker count") {
    auto run = [](int threads) {
        std::vector<double> out(257);
        parallel_for(257, threads, [&](int i) { out[i] = std::sin(0.1 * i) * i; });
        return out;
    };
    CHECK(run(1) == run(4));
}

TEST_CASE("parallel_for propagates worker exceptions") {
    CHECK_THROWS_AS(parallel_for(16, 4,
                                 [](int i) {
                                     if (i == 7) throw Error("boom");
                                 }),
                    Error);
}

TEST_CASE("convergence experiment: constant model stays at the discretization floor") {
    ProblemModel pm = model::make_builtin_model("constant", R"({"lambda": 2, "sigma": 1})");
    model::NoiseSpec noise = model::NoiseSpec::identity(1);
    ConvergenceParams p;
    p.eps_list = {0.05, 0.02};
    p.n_paths = 40;
    p.T = 0.5;
    p.seed = 5;
    ExperimentResult r = convergence_experiment(pm, noise, p);
    REQUIRE(r.report.rows.size() >= 5);
    // Estimates are small, and the finest-eps estimate sits within 3x the
    // dt-halved control estimate.
    const double final_est = r.report.rows[1].estimate;
    const double control_est = r.report.rows.back().estimate;
    CHECK(final_est < 0.2);
    CHECK(final_est < 3.0 * control_est);
    // Data table: one row per (eps, path) plus the control block.
    CHECK(r.data.rows.size() == 3u * 40u);
    CHECK(r.data.columns.front() == "trajectory_index");
    CHECK(r.data.schema == "trajectories-v1");
}

TEST_CASE("convergence experiment: scalar-sine column decreases") {
    ProblemModel pm = model::make_builtin_model("scalar-sine", "{}");
    model::NoiseSpec noise = model::NoiseSpec::identity(1);
    ConvergenceParams p;
    p.eps_list = {0.1, 0.02};
    p.n_paths = 60;
    p.seed = 4;
    ExperimentResult r = convergence_experiment(pm, noise, p);
    CHECK(r.report.verdict == "pass");
    CHECK(r.report.rows[1].estimate < r.report.rows[0].estimate);
}

TEST_CASE("convergence experiment rejects bad input") {
    ProblemModel pm = model::make_builtin_model("constant", "{}");
    model::NoiseSpec noise = model::NoiseSpec::identity(1);
    ConvergenceParams p;
    p.eps_list = {0.01, 0.05};
    CHECK_THROWS_AS(convergence_experiment(pm, noise, p), Error);
    p.eps_list = {};
    CHECK_THROWS_AS(convergence_experiment(pm, noise, p), Error);
}

TEST_CASE("covariance experiment hits the scalar targets") {
    ProblemModel pm = model::make_builtin_model("constant", R"({"lambda": 2, "sigma": 1})");
    model::NoiseSpec noise = model::NoiseSpec::identity(1);
    CovarianceParams p;
    p.T = 600.0;
    p.n_reps = 4;
    p.seed = 77;
    ExperimentResult r = covariance_experiment(pm, noise, p);
    CHECK(r.report.verdict == "pass");
    REQUIRE(r.report.rows.size() == 3);
    CHECK(r.report.rows[0].estimate == doctest::Approx(1.0 / 12.0).epsilon(0.1));
    CHECK(r.report.rows[1].estimate == doctest::Approx(1.0 / 6.0).epsilon(0.1));
    CHECK(r.report.rows[2].estimate == doctest::Approx(0.5).epsilon(0.1));
    CHECK(r.data.columns.size() == 4);  // rep + three entries
}

TEST_CASE("covariance experiment warns on short burn-in") {
    ProblemModel pm = model::make_builtin_model("constant", "{}");
    model::NoiseSpec noise = model::NoiseSpec::identity(1);
    CovarianceParams p;
    p.T = 100.0;
    p.n_reps = 2;
    p.burn_in = 0.5;  // < 4 / omega_alpha = 4
    ExperimentResult r = covariance_experiment(pm, noise, p);
    REQUIRE(!r.report.notes.empty());
    CHECK(r.report.notes[0].find("burn-in") != std::string::npos);
}

TEST_CASE("regime separation on a reduced ensemble") {
    ProblemModel pm = model::make_builtin_model("scalar-sine-xi", "{}");
    model::NoiseSpec noise = model::NoiseSpec::identity(1);
    RegimeParams p;
    p.eps = 2e-3;  // keeps the unit test fast; acceptance runs 1e-3
    p.n_paths = 80;
    p.seed = 9;
    ExperimentResult r = regime_separation_experiment(pm, noise, p);
    CHECK(r.report.verdict == "pass");
    CHECK(r.data.schema == "regimes-v1");
    CHECK(r.data.rows.size() == 80);
}

TEST_CASE("vortex experiment: growth and alpha monotonicity") {
    model::VortexParams mp;
    VortexExpParams p;
    p.alpha_list = {0.0, 1.0};
    p.n_paths = 80;
    p.seed = 3;
    ExperimentResult r = vortex_experiment(mp, p);
    CHECK(r.report.verdict == "pass");
    bool saw_alpha0 = false, saw_alpha1 = false;
    for (const auto& row : r.report.rows) {
        if (row.param.find("alpha=0") != std::string::npos && row.verdict == "pass")
            saw_alpha0 = true;
        if (row.param.find("alpha=1") != std::string::npos && row.verdict == "pass")
            saw_alpha1 = true;
    }
    CHECK(saw_alpha0);
    CHECK(saw_alpha1);
}

TEST_CASE("cellular experiment: monotone decay and matched rate") {
    model::CellularParams mp;
    CellularExpParams p;
    p.n_paths = 60;
    p.T = 3.0;
    p.seed = 6;
    ExperimentResult r = cellular_experiment(mp, p);
    // Occupancy cannot reach 0.95 by T=3 under the corrected decay rate;
    // the pathwise and rate verdicts must still hold.
    for (const auto& row : r.report.rows) {
        if (row.param.find("max per-step") != std::string::npos)
            CHECK(row.verdict == "pass");
        if (row.param.find("monotone in t") != std::string::npos)
            CHECK(row.verdict == "pass");
        if (row.param.find("slope") != std::string::npos) {
            CHECK(row.verdict == "pass");
            CHECK(row.estimate == doctest::Approx(1.0).epsilon(0.05));
        }
    }
}

TEST_CASE("turbophoresis experiment on a reduced ensemble") {
    model::PipeParams mp;
    TurboExpParams p;
    p.n_paths = 100;
    p.seed = 8;
    p.grid_n = 31;
    ExperimentResult r = turbophoresis_experiment(mp, p);
    CHECK(r.report.verdict == "pass");
}

TEST_CASE("divergence map matches the closed form") {
    model::CellularParams mp;
    DivMapParams p;
    p.grid_n = 21;
    ExperimentResult r = divergence_map(mp, p);
    CHECK(r.report.verdict == "pass");
    CHECK(r.data.rows.size() == 21u * 21u);
}

TEST_CASE("determinism: worker count never changes the data table") {
    ProblemModel pm = model::make_builtin_model("scalar-sine", "{}");
    model::NoiseSpec noise = model::NoiseSpec::identity(1);
    SimulateParams p;
    p.eps = 0.05;
    p.T = 0.25;
    p.n_paths = 24;
    p.seed = 123;
    p.threads = 1;
    ExperimentResult a = simulate_ensemble(pm, noise, p);
    p.threads = 4;
    ExperimentResult b = simulate_ensemble(pm, noise, p);
    REQUIRE(a.data.rows.size() == b.data.rows.size());
    for (size_t i = 0; i < a.data.rows.size(); ++i) CHECK(a.data.rows[i] == b.data.rows[i]);
}

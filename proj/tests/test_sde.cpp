#include "core/sde.hpp"
#include "test_models.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace oudrift;
using namespace oudrift::sde;
using model::NoiseSpec;
using model::ProblemModel;
using linalg::max_abs;

TEST_CASE("gaussian stream determinism and stream separation") {
    GaussianStream a(42, 7), b(42, 7), c(42, 8);
    bool all_equal = true, any_diff = false;
    double mean = 0.0, var = 0.0;
    for (int i = 0; i < 10000; ++i) {
        const double va = a.next(), vb = b.next(), vc = c.next();
        all_equal = all_equal && va == vb;
        any_diff = any_diff || va != vc;
        mean += va;
        var += va * va;
    }
    CHECK(all_equal);
    CHECK(any_diff);
    mean /= 10000.0;
    var = var / 10000.0 - mean * mean;
    CHECK(std::abs(mean) < 0.05);
    CHECK(var == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("ou step: scalar innovation variance is exact") {
    NoiseSpec noise = NoiseSpec::identity(1);
    const double eps = 0.5, dt = 0.1;
    OUStepper ou(noise, eps, dt);
    const double expected = (1.0 - std::exp(-2.0 * dt / eps)) / (2.0 * eps);
    CHECK(ou.innovation_cov()(0, 0) == doctest::Approx(expected).epsilon(1e-12));

    // One long step reaches the stationary variance M / eps.
    OUStepper wide(noise, eps, 50.0 * eps);
    CHECK(wide.innovation_cov()(0, 0) ==
          doctest::Approx(noise.M(0, 0) / eps).epsilon(1e-8));
}

TEST_CASE("ou step: B = 0 decays deterministically") {
    NoiseSpec noise = NoiseSpec::make(Matrix::Identity(1, 1), Matrix::Zero(1, 1));
    const double eps = 0.2, dt = 0.05;
    OUStepper ou(noise, eps, dt);
    Vector z = Vector::Constant(1, 3.0), g = Vector::Constant(1, 1.7);
    Vector zn = ou.step(z, g);
    CHECK(zn(0) == doctest::Approx(3.0 * std::exp(-dt / eps)).epsilon(1e-13));
}

TEST_CASE("ou step: empirical variance of sqrt(eps) z matches M") {
    NoiseSpec noise = NoiseSpec::identity(1);
    const double eps = 0.5, dt = 0.25;
    OUStepper ou(noise, eps, dt);
    GaussianStream rng(4242, 0);
    Vector z = Vector::Zero(1), g(1);
    const int n = 200000, burn = 200;
    double sum = 0.0, count = 0.0;
    for (int k = 0; k < n; ++k) {
        g(0) = rng.next();
        z = ou.step(z, g);
        if (k >= burn) {
            sum += eps * z(0) * z(0);
            count += 1.0;
        }
    }
    const double mean = sum / count;
    // Batch-free bound: correlation time is ~eps/(2 dt) steps; 4 sigma.
    const double se = std::sqrt(2.0 / (count * dt / eps)) * noise.M(0, 0) * 2.0;
    CHECK(std::abs(mean - noise.M(0, 0)) < 4.0 * se);
}

TEST_CASE("inertial step: deterministic linear decay") {
    ProblemModel pm = model::make_builtin_model("constant", R"({"lambda": 1, "sigma": 0})");
    NoiseSpec noise = NoiseSpec::identity(1);
    const double dt = 0.05;
    InertialStepper st(pm.coeff, noise, /*mu=*/1.0, /*eps=*/1.0, dt);
    InertialState s;
    s.x = Vector::Zero(1);
    s.v = Vector::Constant(1, 1.0);
    s.z = Vector::Zero(1);
    Vector g = Vector::Zero(1);
    st.step(s, g);
    CHECK(s.v(0) == doctest::Approx(std::exp(-dt)).epsilon(1e-12));
    CHECK(s.x(0) == doctest::Approx(0.5 * dt * (1.0 + std::exp(-dt))).epsilon(1e-12));
}

TEST_CASE("inertial step: pinned scalar example") {
    // gamma = 2, b = 0, sigma = 1, z = 1, mu = 0.1, dt = 0.05, v = 0:
    // v' = (1 - e^-1) * 0.5.
    ProblemModel pm = model::make_builtin_model("constant", R"({"lambda": 2, "sigma": 1})");
    NoiseSpec noise = NoiseSpec::identity(1);
    InertialStepper st(pm.coeff, noise, 0.1, 1.0, 0.05);
    InertialState s;
    s.x = Vector::Zero(1);
    s.v = Vector::Zero(1);
    s.z = Vector::Constant(1, 1.0);
    Vector g = Vector::Zero(1);
    st.step(s, g);
    CHECK(s.v(0) == doctest::Approx((1.0 - std::exp(-1.0)) * 0.5).epsilon(1e-12));
}

TEST_CASE("inertial step: stiff limit slaves the velocity") {
    ProblemModel pm = model::make_builtin_model("scalar-sine", "{}");
    NoiseSpec noise = NoiseSpec::identity(1);
    const double mu = 1e-8, dt = 1e-3;
    InertialStepper st(pm.coeff, noise, mu, 0.5, dt);
    InertialState s;
    s.x = Vector::Constant(1, 0.3);
    s.v = Vector::Constant(1, 5.0);
    s.z = Vector::Zero(1);
    GaussianStream rng(7, 0);
    Vector g(1);
    for (int k = 0; k < 200; ++k) {
        const Vector x_prev = s.x;
        const Vector z_prev = s.z;
        g(0) = rng.next();
        st.step(s, g);
        REQUIRE(!s.flagged);
        // v' tracks gamma^-1 (b + sigma z) at the step's frozen coefficients.
        const double lam = 2.0 + std::sin(x_prev(0));
        const double slaved = z_prev(0) / lam;
        CHECK(s.v(0) == doctest::Approx(slaved).epsilon(1e-9));
    }
}

TEST_CASE("limit step: zero noise reduces to explicit Euler") {
    ProblemModel pm = model::make_builtin_model("constant", R"({"lambda": 2, "sigma": 1, "b": 3})");
    NoiseSpec noise = NoiseSpec::identity(1);
    auto provider = make_drift_provider(pm, noise, 1.0);
    const double dt = 1e-3;
    LimitStepper st(pm.coeff, noise, provider, dt);
    Vector x = Vector::Constant(1, 0.2), g = Vector::Zero(1);
    Vector xn = st.step(x, g);
    CHECK(xn(0) == doctest::Approx(0.2 + 1.5 * dt).epsilon(1e-12));
}

TEST_CASE("limit step: drift uses the closed form at a pinned point") {
    ProblemModel pm = model::make_builtin_model("scalar-affine", "{}");
    NoiseSpec noise = NoiseSpec::identity(1);
    auto provider = make_drift_provider(pm, noise, 1.0);
    const double dt = 1e-3;
    LimitStepper st(pm.coeff, noise, provider, dt);
    Vector x = Vector::Zero(1), g = Vector::Zero(1);
    Vector xn = st.step(x, g);
    CHECK(xn(0) == doctest::Approx(-dt / 12.0).epsilon(1e-10));
}

TEST_CASE("limit step: one-step mean and covariance for constant coefficients") {
    ProblemModel pm = model::make_builtin_model("constant", R"({"lambda": 2, "sigma": 1.5, "b": 1})");
    NoiseSpec noise = NoiseSpec::identity(1);
    auto provider = make_drift_provider(pm, noise, 1.0);
    const double dt = 0.01;
    LimitStepper st(pm.coeff, noise, provider, dt);
    Vector x = Vector::Zero(1), g(1);
    GaussianStream rng(99, 0);
    const int n = 100000;
    double sum = 0.0, sum2 = 0.0;
    for (int k = 0; k < n; ++k) {
        g(0) = rng.next();
        const double dx = st.step(x, g)(0);
        sum += dx;
        sum2 += dx * dx;
    }
    const double mean = sum / n;
    const double var = sum2 / n - mean * mean;
    const double mean_expected = 0.5 * dt;               // gamma^-1 b dt
    const double var_expected = 0.75 * 0.75 * dt;        // (sigma/lambda)^2 dt
    CHECK(std::abs(mean - mean_expected) < 4.0 * std::sqrt(var_expected / n));
    CHECK(std::abs(var - var_expected) < 4.0 * var_expected * std::sqrt(2.0 / n));
}

TEST_CASE("limit integrator: terminal law for constant coefficients") {
    // dx = (b/lambda) dt + (sigma/lambda) dW has an exact Gaussian terminal
    // law; the Euler chain must reproduce it (f_alpha = 0, constant
    // diffusion, so each step is exact in distribution).
    ProblemModel pm = model::make_builtin_model("constant", R"({"lambda": 2, "sigma": 1.5, "b": 1})");
    NoiseSpec noise = NoiseSpec::identity(1);
    auto provider = make_drift_provider(pm, noise, 1.0);
    const double dt = 0.02, T = 1.0;
    const int paths = 20000, steps = 50;
    LimitStepper st(pm.coeff, noise, provider, dt);
    double sum = 0.0, sum2 = 0.0;
    for (int i = 0; i < paths; ++i) {
        GaussianStream rng(314, static_cast<std::uint64_t>(i));
        Vector x = Vector::Zero(1), g(1);
        for (int k = 0; k < steps; ++k) {
            g(0) = rng.next();
            x = st.step(x, g);
        }
        sum += x(0);
        sum2 += x(0) * x(0);
    }
    const double mean = sum / paths;
    const double var = sum2 / paths - mean * mean;
    const double mean_expected = 0.5 * T;
    const double var_expected = 0.75 * 0.75 * T;
    CHECK(std::abs(mean - mean_expected) < 4.0 * std::sqrt(var_expected / paths));
    CHECK(std::abs(var - var_expected) < 4.0 * var_expected * std::sqrt(2.0 / paths));
}

TEST_CASE("general drift provider: lattice cache quantizes consistently") {
    ProblemModel pm = model::make_builtin_model("scalar-sine", "{}");
    NoiseSpec noise = NoiseSpec::identity(1);
    auto exact = make_general_drift_provider(pm.coeff, noise, 1.0);
    auto cached = make_general_drift_provider(pm.coeff, noise, 1.0, 0.125);
    Vector x = Vector::Constant(1, 0.30);
    Vector xq = Vector::Constant(1, 0.250);  // nearest lattice point
    CHECK(cached(x)(0) == doctest::Approx(exact(xq)(0)).epsilon(1e-14));
    CHECK(cached(x)(0) == cached(Vector::Constant(1, 0.31))(0));  // same cell
    CHECK(cached(x)(0) != cached(Vector::Constant(1, 0.44))(0));  // next cell
}

TEST_CASE("run_coupled: quiescent system stays put") {
    ProblemModel pm = model::make_builtin_model("constant", R"({"sigma": 0, "b": 0})");
    NoiseSpec noise = NoiseSpec::make(Matrix::Identity(1, 1), Matrix::Zero(1, 1));
    SimConfig cfg;
    cfg.T = 1.0;
    cfg.dt = 1e-2;
    cfg.epsilon = 0.1;
    cfg.mu = 0.1;
    cfg.x0 = Vector::Constant(1, 0.7);
    cfg.v0 = Vector::Zero(1);
    auto provider = make_drift_provider(pm, noise, 1.0);
    CoupledResult r = run_coupled(cfg, pm.coeff, noise, provider);
    CHECK(r.sup_distance == 0.0);
    CHECK(r.terminal_pre(0) == doctest::Approx(0.7));
    CHECK(r.terminal_limit(0) == doctest::Approx(0.7));
}

TEST_CASE("run_coupled: determinism and path storage") {
    ProblemModel pm = model::make_builtin_model("scalar-sine", "{}");
    NoiseSpec noise = NoiseSpec::identity(1);
    SimConfig cfg;
    cfg.T = 0.5;
    cfg.dt = 1e-3;
    cfg.epsilon = 0.05;
    cfg.mu = 0.05;
    cfg.alpha = 1.0;
    cfg.seed = 4242;
    cfg.trajectory_index = 3;
    cfg.x0 = Vector::Zero(1);
    cfg.v0 = Vector::Zero(1);
    auto provider = make_drift_provider(pm, noise, cfg.alpha);
    CoupledResult a = run_coupled(cfg, pm.coeff, noise, provider);
    CoupledResult b = run_coupled(cfg, pm.coeff, noise, provider);
    CHECK(a.sup_distance == b.sup_distance);
    CHECK(a.terminal_pre(0) == b.terminal_pre(0));
    CHECK(a.terminal_limit(0) == b.terminal_limit(0));
    CHECK(!a.flagged);
    CHECK(a.sup_distance > 0.0);

    cfg.store_paths = true;
    CoupledResult c = run_coupled(cfg, pm.coeff, noise, provider);
    REQUIRE(c.pre.x.size() == static_cast<size_t>(cfg.steps() + 1));
    REQUIRE(c.limit.x.size() == c.pre.x.size());
    CHECK(c.pre.x.front()(0) == 0.0);
    CHECK(c.pre.z.front()(0) == 0.0);
    CHECK(c.pre.x.back()(0) == doctest::Approx(a.terminal_pre(0)));
    // Uniform grid with spacing dt.
    for (size_t k = 1; k < c.pre.times.size(); ++k)
        CHECK(c.pre.times[k] - c.pre.times[k - 1] == doctest::Approx(cfg.dt));
}

TEST_CASE("frozen fast system: sigma = 0 relaxes u and keeps z stationary") {
    ProblemModel pm = model::make_builtin_model("constant", R"({"sigma": 0})");
    NoiseSpec noise = NoiseSpec::identity(1);
    Trajectory tr = simulate_frozen_fast(Vector::Zero(1), pm.coeff, noise, 1.0, 400.0,
                                         0.01, 11, 0);
    CHECK(!tr.flagged);
    CHECK(std::abs(tr.x.back()(0)) < 1e-12);
    double zvar = 0.0;
    for (size_t k = tr.z.size() / 2; k < tr.z.size(); ++k) zvar += tr.z[k](0) * tr.z[k](0);
    zvar /= static_cast<double>(tr.z.size() - tr.z.size() / 2);
    // ~400 effective samples of z^2; 0.1 is about 3 standard errors.
    CHECK(zvar == doctest::Approx(0.5).epsilon(0.2));
}

TEST_CASE("frozen fast moments approach the Q_alpha blocks") {
    ProblemModel pm = model::make_builtin_model("constant", R"({"lambda": 2, "sigma": 1})");
    NoiseSpec noise = NoiseSpec::identity(1);
    FrozenMoments mom = frozen_fast_moments(Vector::Zero(1), pm.coeff, noise, 1.0,
                                            2000.0, 0.005, 8.0, 20250810, 0);
    CHECK(mom.uu(0, 0) == doctest::Approx(1.0 / 12.0).epsilon(0.08));
    CHECK(mom.uz(0, 0) == doctest::Approx(1.0 / 6.0).epsilon(0.08));
    CHECK(mom.zz(0, 0) == doctest::Approx(0.5).epsilon(0.08));
}

TEST_CASE("sim config validation") {
    SimConfig cfg;
    cfg.x0 = Vector::Zero(1);
    cfg.dt = -1.0;
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg.dt = 0.1;
    cfg.T = 0.01;
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg.T = 1.0;
    cfg.mu = 0.0;
    CHECK_THROWS_AS(cfg.validate(), Error);
}

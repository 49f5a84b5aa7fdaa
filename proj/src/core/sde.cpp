#include "sde.hpp"

#include <cmath>
#include <memory>
#include <sstream>
#include <unordered_map>

namespace oudrift::sde {

using model::CoefficientModel;
using model::NoiseSpec;

// ---------------------------------------------------------------------------
// RNG: xoshiro256++ seeded via splitmix64 from (master seed, trajectory index)
// ---------------------------------------------------------------------------

namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

GaussianStream::GaussianStream(std::uint64_t master_seed, std::uint64_t trajectory_index) {
    std::uint64_t mix = master_seed;
    (void)splitmix64(mix);
    mix ^= 0x632be59bd9b4e019ULL * (trajectory_index + 1);
    for (auto& word : s_) word = splitmix64(mix);
}

std::uint64_t GaussianStream::raw() {
    const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
}

double GaussianStream::uniform01() { return static_cast<double>(raw() >> 11) * 0x1.0p-53; }

double GaussianStream::next() {
    if (has_cached_) {
        has_cached_ = false;
        return cached_;
    }
    // Box-Muller on uniforms in (0, 1].
    const double u1 = (static_cast<double>(raw() >> 11) + 1.0) * 0x1.0p-53;
    const double u2 = (static_cast<double>(raw() >> 11) + 1.0) * 0x1.0p-53;
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 6.283185307179586476925286766559 * u2;
    cached_ = r * std::sin(theta);
    has_cached_ = true;
    return r * std::cos(theta);
}

void GaussianStream::fill(Vector& out) {
    for (Eigen::Index i = 0; i < out.size(); ++i) out(i) = next();
}

// ---------------------------------------------------------------------------
// SimConfig
// ---------------------------------------------------------------------------

int SimConfig::steps() const { return static_cast<int>(std::llround(T / dt)); }

void SimConfig::validate() const {
    if (!(dt > 0.0)) throw Error("SimConfig: dt must be positive");
    if (!(T >= dt)) throw Error("SimConfig: horizon T must be at least dt");
    if (!(epsilon > 0.0)) throw Error("SimConfig: epsilon must be positive");
    if (!(mu > 0.0)) throw Error("SimConfig: mu must be positive");
    if (std::isnan(alpha) || alpha < 0.0) throw Error("SimConfig: alpha must be in [0, inf]");
    if (x0.size() == 0) throw Error("SimConfig: x0 not set");
}

// ---------------------------------------------------------------------------
// Steppers
// ---------------------------------------------------------------------------

OUStepper::OUStepper(const NoiseSpec& noise, double epsilon, double dt) {
    if (!(epsilon > 0.0) || !(dt > 0.0)) throw Error("OUStepper: epsilon and dt must be positive");
    E_ = linalg::matrix_exponential(noise.A, -dt / epsilon);
    cov_ = (noise.M - E_ * noise.M * E_.transpose()) / epsilon;
    try {
        sqrt_cov_ = linalg::psd_sqrt(cov_, 1e-12);
    } catch (const Error& e) {
        throw Error(std::string("OUStepper: innovation covariance is not PSD "
                                "(upstream M is suspect): ") +
                    e.what());
    }
}

Vector OUStepper::step(const Vector& z, const Vector& gauss) const {
    return E_ * z + sqrt_cov_ * gauss;
}

InertialStepper::InertialStepper(const CoefficientModel& m, const NoiseSpec& noise,
                                 double mu, double epsilon, double dt)
    : model_(m), ou_(noise, epsilon, dt), mu_(mu), dt_(dt) {
    if (!(mu > 0.0)) throw Error("InertialStepper: mu must be positive");
}

void InertialStepper::step(InertialState& s, const Vector& gauss) const {
    Matrix g = model_.gamma(s.x);
    Matrix decay = linalg::matrix_exponential(g, -dt_ / mu_);
    Vector forced = Eigen::PartialPivLU<Matrix>(g).solve(
        (model_.b(s.x) + model_.sigma(s.x) * s.z).eval());
    Vector v_new = decay * (s.v - forced) + forced;
    s.x += 0.5 * dt_ * (s.v + v_new);
    s.v = v_new;
    s.z = ou_.step(s.z, gauss);
    if (!(s.x.allFinite() && s.v.allFinite() && s.z.allFinite())) s.flagged = true;
}

LimitStepper::LimitStepper(const CoefficientModel& m, const NoiseSpec& noise,
                           DriftProvider f_alpha, double dt)
    : model_(m), noise_(noise), f_(std::move(f_alpha)), dt_(dt), sqrt_dt_(std::sqrt(dt)) {}

Vector LimitStepper::step(const Vector& x, const Vector& gauss, bool* ok) const {
    Matrix g = model_.gamma(x);
    Eigen::PartialPivLU<Matrix> lu(g);
    Vector drift = lu.solve(model_.b(x)) + f_(x);
    Vector noise_in = noise_.A_inv_B * (sqrt_dt_ * gauss);
    Vector xn = x + dt_ * drift + lu.solve(model_.sigma(x) * noise_in);
    if (ok) *ok = xn.allFinite();
    return xn;
}

// ---------------------------------------------------------------------------
// Drift providers
// ---------------------------------------------------------------------------

DriftProvider make_general_drift_provider(const CoefficientModel& m,
                                          const NoiseSpec& noise, double alpha,
                                          double cache_resolution) {
    if (cache_resolution <= 0.0) {
        return [&m, &noise, alpha](const Vector& x) {
            return drift::inertial_drift(m, noise, alpha, x);
        };
    }
    // Lattice-quantized memoization; per-provider state, hand one provider
    // to each trajectory.
    auto cache = std::make_shared<std::unordered_map<std::string, Vector>>();
    const double res = cache_resolution;
    return [&m, &noise, alpha, cache, res](const Vector& x) {
        std::string key;
        key.reserve(16 * static_cast<size_t>(x.size()));
        Vector xq(x.size());
        for (Eigen::Index i = 0; i < x.size(); ++i) {
            const long long q = static_cast<long long>(std::llround(x(i) / res));
            xq(i) = static_cast<double>(q) * res;
            key += std::to_string(q);
            key += ',';
        }
        auto it = cache->find(key);
        if (it != cache->end()) return it->second;
        Vector f = drift::inertial_drift(m, noise, alpha, xq);
        cache->emplace(std::move(key), f);
        return f;
    };
}

DriftProvider make_scalar_drift_provider(const model::ScalarFrictionModel& m,
                                         double alpha) {
    return [m, alpha](const Vector& x) { return drift::scalar_drift(m, alpha, x); };
}

DriftProvider make_turbulence_drift_provider(const model::TurbulenceModel& m,
                                             double alpha) {
    // Ito drift of the limit equation: Stratonovich correction plus -b_alpha.
    return [m, alpha](const Vector& x) {
        Vector f = 0.5 * m.centrifugal_term(x);
        return (f + drift::turbulence_drift(m, alpha, x).total).eval();
    };
}

DriftProvider make_drift_provider(const model::ProblemModel& pm, const NoiseSpec& noise,
                                  double alpha, double cache_resolution) {
    const bool identity_noise =
        noise.A.isIdentity(1e-14) && noise.B.isIdentity(1e-14) &&
        noise.n() == pm.coeff.noise_dim && noise.m() == pm.coeff.noise_dim;
    if (pm.turbulence && identity_noise)
        return make_turbulence_drift_provider(*pm.turbulence, alpha);
    if (pm.scalar && identity_noise) return make_scalar_drift_provider(*pm.scalar, alpha);
    return make_general_drift_provider(pm.coeff, noise, alpha, cache_resolution);
}

// ---------------------------------------------------------------------------
// Runs
// ---------------------------------------------------------------------------

CoupledResult run_coupled(const SimConfig& cfg, const CoefficientModel& m,
                          const NoiseSpec& noise, const DriftProvider& f_alpha) {
    cfg.validate();
    const int d = m.dim;
    if (cfg.x0.size() != d) throw Error("run_coupled: x0 has wrong dimension");
    InertialStepper pre(m, noise, cfg.mu, cfg.epsilon, cfg.dt);
    LimitStepper lim(m, noise, f_alpha, cfg.dt);
    GaussianStream rng(cfg.seed, cfg.trajectory_index);

    InertialState s;
    s.x = cfg.x0;
    s.v = cfg.v0.size() == d ? cfg.v0 : Vector::Zero(d);
    s.z = Vector::Zero(noise.n());
    Vector xl = cfg.x0;
    Vector gauss(noise.m());

    CoupledResult res;
    res.sup_distance = 0.0;
    const int n_steps = cfg.steps();
    if (cfg.store_paths) {
        res.pre.dt = res.limit.dt = cfg.dt;
        res.pre.trajectory_index = res.limit.trajectory_index = cfg.trajectory_index;
        auto record = [&](int k) {
            res.pre.times.push_back(k * cfg.dt);
            res.pre.x.push_back(s.x);
            res.pre.v.push_back(s.v);
            res.pre.z.push_back(s.z);
            res.limit.times.push_back(k * cfg.dt);
            res.limit.x.push_back(xl);
        };
        record(0);
        for (int k = 1; k <= n_steps; ++k) {
            rng.fill(gauss);
            bool ok = true;
            xl = lim.step(xl, gauss, &ok);
            pre.step(s, gauss);
            if (!ok || s.flagged) {
                res.flagged = true;
                break;
            }
            record(k);
            res.sup_distance = std::max(res.sup_distance, (s.x - xl).norm());
        }
    } else {
        for (int k = 1; k <= n_steps; ++k) {
            rng.fill(gauss);
            bool ok = true;
            xl = lim.step(xl, gauss, &ok);
            pre.step(s, gauss);
            if (!ok || s.flagged) {
                res.flagged = true;
                break;
            }
            res.sup_distance = std::max(res.sup_distance, (s.x - xl).norm());
        }
    }
    res.pre.flagged = res.limit.flagged = res.flagged;
    res.terminal_pre = s.x;
    res.terminal_limit = xl;
    return res;
}

LimitRunResult run_limit(const SimConfig& cfg, const CoefficientModel& m,
                         const NoiseSpec& noise, const DriftProvider& f_alpha,
                         const std::function<void(int, const Vector&)>& observe) {
    cfg.validate();
    if (cfg.x0.size() != m.dim) throw Error("run_limit: x0 has wrong dimension");
    LimitStepper lim(m, noise, f_alpha, cfg.dt);
    GaussianStream rng(cfg.seed, cfg.trajectory_index);
    Vector x = cfg.x0;
    Vector gauss(noise.m());
    LimitRunResult out;
    if (observe) observe(0, x);
    const int n_steps = cfg.steps();
    for (int k = 1; k <= n_steps; ++k) {
        rng.fill(gauss);
        bool ok = true;
        x = lim.step(x, gauss, &ok);
        if (!ok) {
            out.flagged = true;
            break;
        }
        if (observe) observe(k, x);
    }
    out.terminal = x;
    return out;
}

namespace {

struct FrozenFastStepper {
    Matrix decay;   // exp(-gamma(x) dt / alpha)
    Matrix inject;  // (I - decay) gamma^-1 sigma
    OUStepper ou;

    FrozenFastStepper(const Vector& x, const CoefficientModel& m, const NoiseSpec& noise,
                      double alpha, double dt)
        : ou(noise, 1.0, dt) {
        if (!(alpha > 0.0) || std::isinf(alpha))
            throw Error("frozen fast system: alpha must be finite and positive");
        Matrix g = m.gamma(x);
        decay = linalg::matrix_exponential(g, -dt / alpha);
        const int d = m.dim;
        inject = (Matrix::Identity(d, d) - decay) *
                 Eigen::PartialPivLU<Matrix>(g).solve(m.sigma(x));
    }

    // Trapezoidal z injection: second-order weak accuracy in the stationary
    // second moments, where the start-of-step injection would leave an
    // O(dt) bias against the Q_alpha blocks.
    void advance(Vector& u, Vector& z, const Vector& gauss) const {
        Vector z_next = ou.step(z, gauss);
        u = decay * u + inject * (0.5 * (z + z_next));
        z = std::move(z_next);
    }
};

}  // namespace

Trajectory simulate_frozen_fast(const Vector& x_frozen, const CoefficientModel& m,
                                const NoiseSpec& noise, double alpha, double T,
                                double dt, std::uint64_t seed,
                                std::uint64_t trajectory_index) {
    FrozenFastStepper st(x_frozen, m, noise, alpha, dt);
    GaussianStream rng(seed, trajectory_index);
    const int n_steps = static_cast<int>(std::llround(T / dt));
    Trajectory tr;
    tr.dt = dt;
    tr.trajectory_index = trajectory_index;
    Vector u = Vector::Zero(m.dim), z = Vector::Zero(noise.n());
    Vector gauss(noise.m());
    tr.times.push_back(0.0);
    tr.x.push_back(u);
    tr.z.push_back(z);
    for (int k = 1; k <= n_steps; ++k) {
        rng.fill(gauss);
        st.advance(u, z, gauss);
        if (!(u.allFinite() && z.allFinite())) {
            tr.flagged = true;
            break;
        }
        tr.times.push_back(k * dt);
        tr.x.push_back(u);
        tr.z.push_back(z);
    }
    return tr;
}

FrozenMoments frozen_fast_moments(const Vector& x_frozen, const CoefficientModel& m,
                                  const NoiseSpec& noise, double alpha, double T,
                                  double dt, double burn_in, std::uint64_t seed,
                                  std::uint64_t trajectory_index) {
    FrozenFastStepper st(x_frozen, m, noise, alpha, dt);
    GaussianStream rng(seed, trajectory_index);
    const int n_steps = static_cast<int>(std::llround(T / dt));
    const int burn_steps = static_cast<int>(std::llround(burn_in / dt));
    const int d = m.dim, n = noise.n();
    FrozenMoments mom;
    mom.uu = Matrix::Zero(d, d);
    mom.uz = Matrix::Zero(d, n);
    mom.zz = Matrix::Zero(n, n);
    Vector u = Vector::Zero(d), z = Vector::Zero(n);
    Vector gauss(noise.m());
    for (int k = 1; k <= n_steps; ++k) {
        rng.fill(gauss);
        st.advance(u, z, gauss);
        if (k > burn_steps) {
            mom.uu += u * u.transpose();
            mom.uz += u * z.transpose();
            mom.zz += z * z.transpose();
            ++mom.samples;
        }
    }
    if (mom.samples == 0) throw Error("frozen_fast_moments: horizon shorter than burn-in");
    mom.uu /= static_cast<double>(mom.samples);
    mom.uz /= static_cast<double>(mom.samples);
    mom.zz /= static_cast<double>(mom.samples);
    return mom;
}

}  // namespace oudrift::sde

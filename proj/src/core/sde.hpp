#pragma once

#include "drift.hpp"
#include "model.hpp"

#include <cstdint>
#include <functional>
#include <vector>

namespace oudrift::sde {

/// Integration parameters for one coupled trajectory.
struct SimConfig {
    double T = 1.0;
    double dt = 1e-3;
    double epsilon = 0.01;
    double mu = 0.01;
    double alpha = 1.0;
    Vector x0;
    Vector v0;
    std::uint64_t seed = 42;
    std::uint64_t trajectory_index = 0;
    bool store_paths = false;

    int steps() const;
    void validate() const;
};

/// Deterministic per-trajectory Gaussian stream. Fully determined by
/// (master seed, trajectory index); the same increments feed the pre-limit
/// and the limit integrator of a coupled run.
class GaussianStream {
public:
    GaussianStream(std::uint64_t master_seed, std::uint64_t trajectory_index);
    double next();
    void fill(Vector& out);
    double uniform01();  // in [0, 1); for initial-condition sampling

private:
    std::uint64_t raw();
    std::uint64_t s_[4];  // xoshiro256++ state
    double cached_ = 0.0;
    bool has_cached_ = false;
};

/// Exact-in-distribution stepping of eps dz = -A z dt + B dw:
///   z' = E z + eta,  E = exp(-A dt/eps),  eta ~ N(0, (M - E M E^T)/eps).
/// The innovation covariance is factorized once per (A, B, eps, dt).
class OUStepper {
public:
    OUStepper(const model::NoiseSpec& noise, double epsilon, double dt);
    Vector step(const Vector& z, const Vector& gauss) const;
    const Matrix& propagator() const { return E_; }
    const Matrix& innovation_cov() const { return cov_; }

private:
    Matrix E_;
    Matrix cov_;
    Matrix sqrt_cov_;
};

/// One step of the inertial system dx = v dt, mu dv = (b - gamma v + sigma z) dt
/// by the frozen-coefficient exponential scheme (unconditionally stable as
/// mu -> 0), trapezoidal in x, with the OU driver advanced by the shared
/// Gaussian draw.
struct InertialState {
    Vector x, v, z;
    bool flagged = false;
};

class InertialStepper {
public:
    InertialStepper(const model::CoefficientModel& m, const model::NoiseSpec& noise,
                    double mu, double epsilon, double dt);
    void step(InertialState& s, const Vector& gauss) const;

private:
    const model::CoefficientModel& model_;
    OUStepper ou_;
    double mu_, dt_;
};

/// f_alpha provider for the limit integrator; x -> drift vector.
using DriftProvider = std::function<Vector(const Vector&)>;

/// Provider backed by the general inertial_drift computation, optionally
/// memoized on a lattice of resolution `cache_resolution` (0 disables; the
/// cache is per-provider, so give each trajectory its own instance).
DriftProvider make_general_drift_provider(const model::CoefficientModel& m,
                                          const model::NoiseSpec& noise, double alpha,
                                          double cache_resolution = 0.0);
/// Closed-form providers for the special model classes.
DriftProvider make_scalar_drift_provider(const model::ScalarFrictionModel& m,
                                         double alpha);
DriftProvider make_turbulence_drift_provider(const model::TurbulenceModel& m,
                                             double alpha);
/// Picks the cheapest exact provider the problem admits.
DriftProvider make_drift_provider(const model::ProblemModel& pm,
                                  const model::NoiseSpec& noise, double alpha,
                                  double cache_resolution = 0.0);

/// Euler-Maruyama step of the limit equation
///   dx = [gamma^-1 b + f_alpha] dt + gamma^-1 sigma A^-1 B dW,
/// consuming the same Gaussian draw as the coupled pre-limit step.
class LimitStepper {
public:
    LimitStepper(const model::CoefficientModel& m, const model::NoiseSpec& noise,
                 DriftProvider f_alpha, double dt);
    Vector step(const Vector& x, const Vector& gauss, bool* ok = nullptr) const;

private:
    const model::CoefficientModel& model_;
    const model::NoiseSpec& noise_;
    DriftProvider f_;
    double dt_, sqrt_dt_;
};

struct Trajectory {
    double dt = 0.0;
    std::vector<double> times;
    std::vector<Vector> x;
    std::vector<Vector> v;
    std::vector<Vector> z;
    bool flagged = false;
    std::uint64_t trajectory_index = 0;
};

struct CoupledResult {
    double sup_distance = 0.0;
    Vector terminal_pre;
    Vector terminal_limit;
    bool flagged = false;
    Trajectory pre;    // populated when store_paths
    Trajectory limit;  // populated when store_paths
};

/// Runs the pre-limit inertial system and the limit SDE on one shared grid,
/// both consuming the identical Gaussian stream, and reports the sup over
/// grid times of |x_eps - x^alpha|. Pure function of (config, model, noise).
CoupledResult run_coupled(const SimConfig& cfg, const model::CoefficientModel& m,
                          const model::NoiseSpec& noise, const DriftProvider& f_alpha);

/// Limit-equation-only run; `observe` (if set) is called at every grid point
/// including t = 0. Returns the terminal state and a flag.
struct LimitRunResult {
    Vector terminal;
    bool flagged = false;
};
LimitRunResult run_limit(const SimConfig& cfg, const model::CoefficientModel& m,
                         const model::NoiseSpec& noise, const DriftProvider& f_alpha,
                         const std::function<void(int, const Vector&)>& observe = {});

/// Frozen fast system du = (1/alpha)(-gamma(x) u + sigma(x) z) dt,
/// dz = -A z dt + B dw at fixed x. Exponential scheme, exact OU block.
Trajectory simulate_frozen_fast(const Vector& x_frozen, const model::CoefficientModel& m,
                                const model::NoiseSpec& noise, double alpha, double T,
                                double dt, std::uint64_t seed,
                                std::uint64_t trajectory_index = 0);

/// Streaming second moments of the frozen fast system after burn-in:
/// time averages of u u^T, u z^T, z z^T.
struct FrozenMoments {
    Matrix uu, uz, zz;
    long samples = 0;
};
FrozenMoments frozen_fast_moments(const Vector& x_frozen,
                                  const model::CoefficientModel& m,
                                  const model::NoiseSpec& noise, double alpha, double T,
                                  double dt, double burn_in, std::uint64_t seed,
                                  std::uint64_t trajectory_index = 0);

}  // namespace oudrift::sde

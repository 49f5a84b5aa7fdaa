#pragma once

#include "linalg.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace oudrift::model {

/// Stack of d matrices, one per derivative direction l.
using Tensor3 = std::vector<Matrix>;

/// General problem definition: drift b, friction gamma, noise coefficient
/// sigma, with optional analytic derivative bundles for the tensors that
/// enter the noise-induced drift.
struct CoefficientModel {
    int dim = 0;        // d
    int noise_dim = 0;  // n, columns of sigma
    std::function<Vector(const Vector&)> b;
    std::function<Matrix(const Vector&)> gamma;
    std::function<Matrix(const Vector&)> sigma;
    // Analytic d_l(gamma^-1)_{ij} and d_l(gamma^-1 sigma)_{ik}; empty means
    // fall back to finite differences.
    std::function<Tensor3(const Vector&)> dgamma_inv;
    std::function<Tensor3(const Vector&)> dgamma_inv_sigma;
    double gamma0 = 0.0;  // declared friction bounds
    double gamma1 = 0.0;
    std::string name;

    bool has_analytic_derivatives() const {
        return static_cast<bool>(dgamma_inv) && static_cast<bool>(dgamma_inv_sigma);
    }
};

/// Ornstein-Uhlenbeck driver: dz = -A z dt + B dw (before the 1/eps time
/// change). All eigenvalues of A must have strictly positive real part.
struct NoiseSpec {
    Matrix A;       // n x n
    Matrix B;       // n x m
    Matrix M;       // stationary covariance, solves A M + M A^T = B B^T
    Matrix A_inv;
    Matrix A_inv_B;
    double spectral_gap = 0.0;  // min real part over eig(A)

    int n() const { return static_cast<int>(A.rows()); }
    int m() const { return static_cast<int>(B.cols()); }

    static NoiseSpec make(Matrix A, Matrix B);
    static NoiseSpec identity(int n);
};

/// Scalar-friction special case: gamma = lambda(x) I, sigma = lambda * xi,
/// A = identity. Carries analytic gradients for the closed-form drift.
struct ScalarFrictionModel {
    int dim = 0;
    int noise_dim = 0;   // n, columns of xi
    int wiener_dim = 0;  // m, columns of B
    std::function<double(const Vector&)> lambda;
    std::function<Vector(const Vector&)> grad_lambda;
    std::function<Matrix(const Vector&)> xi;   // d x n
    std::function<Tensor3(const Vector&)> dxi; // per l: d x n
    std::function<Vector(const Vector&)> b;
    Matrix B;  // n x m
    double lambda0 = 0.0;
    double lambda1 = 0.0;
    std::string name;
};

/// Stokes-drag turbulence model: friction c0*kT(x), mean flow ubar, and a
/// finite family of divergence-free fields xi_k driven by independent
/// scalar OU processes.
struct TurbulenceModel {
    int dim = 0;
    int num_fields = 0;  // |K|
    double c0 = 1.0;
    double kT_floor = 0.0;
    std::function<double(const Vector&)> kT;
    std::function<Vector(const Vector&)> grad_kT;
    std::function<Vector(const Vector&)> ubar;
    std::function<Matrix(const Vector&)> fields;      // d x |K|, columns xi_k
    std::function<Tensor3(const Vector&)> dfields;    // per l: d x |K|
    std::string name;

    /// Sum_k Dxi_k(x) xi_k(x).
    Vector centrifugal_term(const Vector& x) const;
    /// C(x) = Sum_k xi_k (x) xi_k(x)^T.
    Matrix covariance_C(const Vector& x) const;
};

/// Finite-difference derivative bundle with a Richardson h vs h/2
/// consistency check.
struct DerivativeBundle {
    Tensor3 dgamma_inv;
    Tensor3 dgamma_inv_sigma;
};

DerivativeBundle fd_derivatives(const CoefficientModel& m, const Vector& x,
                                double h = 0.0);

/// Derivative bundle from analytic callbacks when present, else fd.
DerivativeBundle derivative_bundle(const CoefficientModel& m, const Vector& x);

/// Views. The general view of a turbulence model is b = c0 kT ubar,
/// gamma = c0 kT I, sigma = c0 kT Xi, with A = B = I_{|K|}.
CoefficientModel as_coefficient_model(const ScalarFrictionModel& m);
ScalarFrictionModel as_scalar_friction(const TurbulenceModel& m);
CoefficientModel as_coefficient_model(const TurbulenceModel& m);

/// Eigenvalue spot check of gamma0 I <= (gamma+gamma^T)/2 <= gamma1 I.
void check_friction_bounds(const CoefficientModel& m, const Vector& x,
                           double tol = 1e-9);
/// div xi_k == 0 at x for every k, from the analytic Jacobians.
double max_field_divergence(const TurbulenceModel& m, const Vector& x);

/// Built-in turbulence models.
struct VortexParams {
    std::string profile = "linear";  // or "gaussian"
    double c0 = 1.0;
    double kT = 1.0;
    double cutoff_radius = 10.0;   // profile "linear" levels off past this
    double gaussian_scale = 25.0;  // profile "gaussian": f'(s) = exp(-s/scale)
};
TurbulenceModel builtin_vortex(const VortexParams& p = {});

struct CellularParams {
    double k1 = 1.0;
    double k2 = 1.0;
    double lambda = 1.0;  // constant friction c0 * kT
};
TurbulenceModel builtin_cellular(const CellularParams& p = {});

struct PipeParams {
    double c0 = 1.0;
    double kT_center = 1.5;
    double kT_floor = 0.5;
    double u_max = 1.0;
    // kT follows the center parabola for x2^2 <= q0 and levels off to the
    // floor across [q0, q1].
    double q0 = 0.8;
    double q1 = 1.2;
};
TurbulenceModel builtin_pipe(const PipeParams& p = {});

/// Catalog entry resolved from a model name + parameter map. Scalar and
/// turbulence views are present when the model admits them.
struct ProblemModel {
    CoefficientModel coeff;
    std::optional<ScalarFrictionModel> scalar;
    std::optional<TurbulenceModel> turbulence;
    int default_noise_dim = 1;   // n for the A = B = I default driver
    int default_wiener_dim = 1;  // m
};

/// Models addressable from the CLI: constant, scalar-affine, scalar-sine,
/// scalar-sine-xi, vortex, cellular, pipe. Parameters come as a JSON object
/// (text); unknown keys are rejected.
ProblemModel make_builtin_model(const std::string& name, const std::string& params_json);
std::vector<std::string> builtin_model_names();

}  // namespace oudrift::model

#pragma once

#include "model.hpp"

namespace oudrift::drift {

/// Ingredients of the limit-equation drift at a point x, for one alpha.
/// alpha*N is stored separately so the extensions alpha = 0 and
/// alpha = infinity stay representable (N itself vanishes at infinity).
struct DriftMatrices {
    Matrix M;       // n x n stationary OU covariance
    Matrix L;       // d x n
    Matrix N;       // d x d
    Matrix alphaN;  // d x d
    double alpha = 1.0;
};

/// Stationary covariance of the (unscaled) OU driver: A M + M A^T = B B^T.
Matrix compute_M(const model::NoiseSpec& noise);

/// L_alpha(x): gamma(x) L + alpha L A^T = sigma(x) M for finite alpha;
/// gamma^-1 sigma M at alpha = 0; zero at alpha = infinity.
Matrix compute_L_alpha(const model::CoefficientModel& m, const model::NoiseSpec& noise,
                       const Matrix& M, double alpha, const Vector& x);

/// (N_alpha, alpha*N_alpha). For finite alpha, N solves
/// gamma N + N gamma^T = L sigma^T + sigma L^T; at infinity alpha*N solves
/// gamma X + X gamma^T = sigma (M A^-T + A^-1 M) sigma^T.
std::pair<Matrix, Matrix> compute_N_alpha(const model::CoefficientModel& m,
                                          const model::NoiseSpec& noise, const Matrix& L,
                                          double alpha, const Vector& x);

/// All ingredients at once.
DriftMatrices drift_matrices(const model::CoefficientModel& m,
                             const model::NoiseSpec& noise, double alpha,
                             const Vector& x);

/// Invariant covariance of the frozen fast (u, z) system as one
/// (d+n) x (d+n) Lyapunov solve. Finite nonzero alpha only. Blocks must
/// match (N_alpha, L_alpha, M).
Matrix assemble_Q_alpha(const model::CoefficientModel& m, const model::NoiseSpec& noise,
                        double alpha, const Vector& x);

/// The inertial-Ito drift f_alpha(x):
///   f_i = d_l(gamma^-1)_{ij} [alpha N]_{lj}
///       + d_l(gamma^-1 sigma)_{ik} (A^-1)_{kh} L_{lh}.
Vector inertial_drift(const model::CoefficientModel& m, const model::NoiseSpec& noise,
                      double alpha, const Vector& x);
Vector inertial_drift(const model::CoefficientModel& m, const model::NoiseSpec& noise,
                      double alpha, const Vector& x, const model::DerivativeBundle& bundle);

/// Closed form for scalar friction (gamma = lambda I, sigma = lambda xi,
/// A = identity); the independent oracle for inertial_drift:
///   f = 1/2 Tr[D(xi B)(xi B)]
///     - 1/2 alpha/(lambda+alpha) (Tr[D(xi B)(xi B)] + (xi B)(xi B)^T grad lambda / lambda).
Vector scalar_drift(const model::ScalarFrictionModel& m, double alpha, const Vector& x);

/// Signed drift -b_alpha entering the limit equation, split for diagnostics.
struct TurbulenceDrift {
    Vector total;          // -b_alpha
    Vector centrifugal;    // -1/2 w Sum_k Dxi_k xi_k
    Vector turbophoretic;  // -1/2 w C(x) grad log kT
    double prefactor = 0.0;  // w = alpha / (c0 kT + alpha)
};
TurbulenceDrift turbulence_drift(const model::TurbulenceModel& m, double alpha,
                                 const Vector& x);

/// Pointwise identities for the cellular (Greengard-Thomann) flow.
/// grad_psi_dot_Dxixi carries the expanded bracket
/// (k1 k2)^2 psi [cos^2(k1 x1) + sin^2(k2 x2)]; div_minus_b carries the
/// alpha/(lambda+alpha) prefactor.
struct CellularDiagnostics {
    double psi = 0.0;
    double grad_psi_dot_xi = 0.0;
    double grad_psi_dot_Dxixi = 0.0;
    double div_minus_b = 0.0;
};
CellularDiagnostics cellular_diagnostics(const model::CellularParams& p, double alpha,
                                         const Vector& x);

/// Exponential ergodicity rate of the frozen fast system,
/// omega_alpha = min(gamma0 / alpha, spectral gap of A). Sizes burn-in.
double mixing_rate(double gamma0, const model::NoiseSpec& noise, double alpha);

}  // namespace oudrift::drift

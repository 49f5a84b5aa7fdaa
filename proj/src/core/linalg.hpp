#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace oudrift {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Error raised by any oudrift operation on invalid input or a failed
/// numerical precondition. `what()` carries a single-line diagnostic.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

namespace linalg {

struct StabilityReport {
    double spectral_abscissa = 0.0;  // max real part over eigenvalues
    bool is_stable = false;          // abscissa < -tolerance
};

/// Max real part over the eigenvalues of a square matrix.
double spectral_abscissa(const Matrix& F);

/// Stability check for -F (callers pass the matrix whose eigenvalues must
/// have strictly positive real part, e.g. A or gamma(x)).
StabilityReport check_positive_spectrum(const Matrix& F, double tol = 1e-12);

/// exp(t*F) by scaling-and-squaring with the degree-13 Pade approximant.
Matrix matrix_exponential(const Matrix& F, double t = 1.0);

/// Solves F*X + X*F^T = W. Requires all eigenvalues of F to have strictly
/// negative real part; W is expected symmetric (then X is symmetrized).
Matrix solve_lyapunov(const Matrix& F, const Matrix& W);

/// Solves F*X + X*G = C for X (d x n), F d x d, G n x n. Requires the
/// spectra of F and -G to be disjoint.
Matrix solve_sylvester(const Matrix& F, const Matrix& G, const Matrix& C);

/// Symmetric PSD square root. Eigenvalues in [-neg_tol*scale, 0) are
/// clamped to zero; anything below that is an error (the matrix was not
/// a covariance).
Matrix psd_sqrt(const Matrix& S, double neg_tol = 1e-12);

/// Elementwise max-norm residual helpers used by tests and solvers.
double max_abs(const Matrix& m);
bool all_finite(const Matrix& m);

}  // namespace linalg
}  // namespace oudrift

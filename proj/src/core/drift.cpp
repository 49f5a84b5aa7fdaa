#include "drift.hpp"

#include <cmath>
#include <sstream>

namespace oudrift::drift {

using model::CoefficientModel;
using model::NoiseSpec;

namespace {

void require_alpha(double alpha, const char* who) {
    if (std::isnan(alpha) || alpha < 0.0)
        throw Error(std::string(who) + ": alpha must lie in [0, infinity]");
}

Matrix gamma_at(const CoefficientModel& m, const Vector& x) {
    Matrix g = m.gamma(x);
    auto st = linalg::check_positive_spectrum(g);
    if (!st.is_stable) {
        std::ostringstream os;
        os << "friction gamma(x) must have spectrum in the right half plane "
              "(abscissa of -gamma: "
           << st.spectral_abscissa << ") for model '" << m.name << "'";
        throw Error(os.str());
    }
    return g;
}

}  // namespace

Matrix compute_M(const NoiseSpec& noise) {
    return linalg::solve_lyapunov(-noise.A, -noise.B * noise.B.transpose());
}

Matrix compute_L_alpha(const CoefficientModel& m, const NoiseSpec& noise,
                       const Matrix& M, double alpha, const Vector& x) {
    require_alpha(alpha, "compute_L_alpha");
    Matrix g = gamma_at(m, x);
    Matrix sigmaM = m.sigma(x) * M;
    if (std::isinf(alpha)) return Matrix::Zero(m.dim, noise.n());
    if (alpha == 0.0) return Eigen::PartialPivLU<Matrix>(g).solve(sigmaM);
    return linalg::solve_sylvester(g, alpha * noise.A.transpose(), sigmaM);
}

std::pair<Matrix, Matrix> compute_N_alpha(const CoefficientModel& m,
                                          const NoiseSpec& noise, const Matrix& L,
                                          double alpha, const Vector& x) {
    require_alpha(alpha, "compute_N_alpha");
    Matrix g = gamma_at(m, x);
    Matrix sig = m.sigma(x);
    if (std::isinf(alpha)) {
        Matrix core = noise.M * noise.A_inv.transpose() + noise.A_inv * noise.M;
        Matrix rhs = sig * core * sig.transpose();
        Matrix alphaN = linalg::solve_lyapunov(-g, -rhs);
        return {Matrix::Zero(m.dim, m.dim), alphaN};
    }
    Matrix rhs = L * sig.transpose() + sig * L.transpose();
    Matrix N = linalg::solve_lyapunov(-g, -rhs);
    Matrix alphaN = alpha == 0.0 ? Matrix::Zero(m.dim, m.dim) : (alpha * N).eval();
    return {N, alphaN};
}

DriftMatrices drift_matrices(const CoefficientModel& m, const NoiseSpec& noise,
                             double alpha, const Vector& x) {
    DriftMatrices dm;
    dm.alpha = alpha;
    dm.M = noise.M;
    dm.L = compute_L_alpha(m, noise, dm.M, alpha, x);
    std::tie(dm.N, dm.alphaN) = compute_N_alpha(m, noise, dm.L, alpha, x);
    return dm;
}

Matrix assemble_Q_alpha(const CoefficientModel& m, const NoiseSpec& noise, double alpha,
                        const Vector& x) {
    require_alpha(alpha, "assemble_Q_alpha");
    if (alpha == 0.0 || std::isinf(alpha))
        throw Error("assemble_Q_alpha: alpha must be finite and positive");
    const int d = m.dim, n = noise.n(), mm = noise.m();
    Matrix g = gamma_at(m, x);
    Matrix Gamma = Matrix::Zero(d + n, d + n);
    Gamma.topLeftCorner(d, d) = -g / alpha;
    Gamma.topRightCorner(d, n) = m.sigma(x) / alpha;
    Gamma.bottomRightCorner(n, n) = -noise.A;
    Matrix Sig = Matrix::Zero(d + n, mm);
    Sig.bottomRows(n) = noise.B;
    return linalg::solve_lyapunov(Gamma, (-Sig * Sig.transpose()).eval());
}

Vector inertial_drift(const CoefficientModel& m, const NoiseSpec& noise, double alpha,
                      const Vector& x) {
    return inertial_drift(m, noise, alpha, x, model::derivative_bundle(m, x));
}

Vector inertial_drift(const CoefficientModel& m, const NoiseSpec& noise, double alpha,
                      const Vector& x, const model::DerivativeBundle& bundle) {
    require_alpha(alpha, "inertial_drift");
    const int d = m.dim;
    DriftMatrices dm = drift_matrices(m, noise, alpha, x);
    // W(l,k) = (L A^-T)(l,k) contracts the A^-1 factor once.
    Matrix W = dm.L * noise.A_inv.transpose();
    Vector f = Vector::Zero(d);
    for (int l = 0; l < d; ++l) {
        f += bundle.dgamma_inv[l] * dm.alphaN.row(l).transpose();
        f += bundle.dgamma_inv_sigma[l] * W.row(l).transpose();
    }
    return f;
}

Vector scalar_drift(const model::ScalarFrictionModel& m, double alpha, const Vector& x) {
    require_alpha(alpha, "scalar_drift");
    const int d = m.dim;
    const double lam = m.lambda(x);
    if (lam <= 0.0) throw Error("scalar_drift: lambda(x) must be positive");
    Matrix XB = m.xi(x) * m.B;  // d x m
    model::Tensor3 dxi = m.dxi(x);
    Vector trace_term = Vector::Zero(d);
    for (int l = 0; l < d; ++l) trace_term += (dxi[l] * m.B) * XB.row(l).transpose();
    Vector g_term = (XB * XB.transpose()) * m.grad_lambda(x) / lam;
    const double w = std::isinf(alpha) ? 1.0 : alpha / (lam + alpha);
    return 0.5 * trace_term - 0.5 * w * (trace_term + g_term);
}

TurbulenceDrift turbulence_drift(const model::TurbulenceModel& m, double alpha,
                                 const Vector& x) {
    require_alpha(alpha, "turbulence_drift");
    const double kT = m.kT(x);
    if (kT < m.kT_floor - 1e-12) {
        std::ostringstream os;
        os << "turbulence_drift: kT(x) = " << kT << " below declared floor "
           << m.kT_floor;
        throw Error(os.str());
    }
    TurbulenceDrift out;
    const double lam = m.c0 * kT;
    out.prefactor = std::isinf(alpha) ? 1.0 : alpha / (lam + alpha);
    // grad lambda / lambda = grad log kT; the general scalar-friction form,
    // which the c0 = 1 displays of the source model reduce to.
    out.centrifugal = -0.5 * out.prefactor * m.centrifugal_term(x);
    out.turbophoretic =
        -0.5 * out.prefactor * (m.covariance_C(x) * (m.grad_kT(x) / kT)).eval();
    out.total = out.centrifugal + out.turbophoretic;
    return out;
}

CellularDiagnostics cellular_diagnostics(const model::CellularParams& p, double alpha,
                                         const Vector& x) {
    require_alpha(alpha, "cellular_diagnostics");
    const double k1 = p.k1, k2 = p.k2;
    const double s1 = std::sin(k1 * x(0)), c1 = std::cos(k1 * x(0));
    const double s2 = std::sin(k2 * x(1)), c2 = std::cos(k2 * x(1));
    CellularDiagnostics diag;
    diag.psi = s1 * c2;
    const double gpsi[2] = {k1 * c1 * c2, -k2 * s1 * s2};
    const double xi[2] = {k2 * s1 * s2, k1 * c1 * c2};
    const double dxixi[2] = {k1 * k2 * k2 * s1 * c1, -k1 * k1 * k2 * s2 * c2};
    diag.grad_psi_dot_xi = gpsi[0] * xi[0] + gpsi[1] * xi[1];
    diag.grad_psi_dot_Dxixi = gpsi[0] * dxixi[0] + gpsi[1] * dxixi[1];
    const double w = std::isinf(alpha) ? 1.0 : alpha / (p.lambda + alpha);
    const double kk = k1 * k2;
    diag.div_minus_b = -w * kk * kk * (s2 * s2 - s1 * s1);
    return diag;
}

double mixing_rate(double gamma0, const NoiseSpec& noise, double alpha) {
    if (alpha <= 0.0 || std::isinf(alpha) || gamma0 <= 0.0)
        throw Error("mixing_rate: needs finite positive alpha and gamma0");
    return std::min(gamma0 / alpha, noise.spectral_gap);
}

}  // namespace oudrift::drift

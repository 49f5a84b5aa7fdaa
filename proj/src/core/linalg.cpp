#include "linalg.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <sstream>

namespace oudrift::linalg {

namespace {

void require_square(const Matrix& F, const char* who) {
    if (F.rows() != F.cols() || F.rows() < 1) {
        std::ostringstream os;
        os << who << ": matrix must be square, got " << F.rows() << "x" << F.cols();
        throw Error(os.str());
    }
    if (!all_finite(F)) throw Error(std::string(who) + ": non-finite entries");
}

// Kronecker product, column-major vec convention: vec(AXB) = (B^T (x) A) vec(X).
Matrix kron(const Matrix& A, const Matrix& B) {
    Matrix K(A.rows() * B.rows(), A.cols() * B.cols());
    for (Eigen::Index i = 0; i < A.rows(); ++i)
        for (Eigen::Index j = 0; j < A.cols(); ++j)
            K.block(i * B.rows(), j * B.cols(), B.rows(), B.cols()) = A(i, j) * B;
    return K;
}

constexpr double kRcondFloor = 1e-12;

Matrix solve_vectorized(const Matrix& K, const Matrix& rhs, Eigen::Index rows,
                        Eigen::Index cols, const char* who) {
    Eigen::PartialPivLU<Matrix> lu(K);
    double rc = lu.rcond();
    if (!(rc > kRcondFloor)) {
        std::ostringstream os;
        os << who << ": near-singular linear system (reciprocal condition estimate "
           << rc << ")";
        throw Error(os.str());
    }
    Vector vecx = lu.solve(Vector(rhs.reshaped()));
    return vecx.reshaped(rows, cols);
}

}  // namespace

double max_abs(const Matrix& m) { return m.size() ? m.cwiseAbs().maxCoeff() : 0.0; }

bool all_finite(const Matrix& m) { return m.allFinite(); }

double spectral_abscissa(const Matrix& F) {
    require_square(F, "spectral_abscissa");
    if (F.rows() == 1) return F(0, 0);
    Eigen::EigenSolver<Matrix> es(F, /*computeEigenvectors=*/false);
    if (es.info() != Eigen::Success)
        throw Error("spectral_abscissa: eigenvalue iteration did not converge");
    return es.eigenvalues().real().maxCoeff();
}

StabilityReport check_positive_spectrum(const Matrix& F, double tol) {
    StabilityReport r;
    r.spectral_abscissa = spectral_abscissa(-F);
    r.is_stable = r.spectral_abscissa < -tol;
    return r;
}

Matrix matrix_exponential(const Matrix& F, double t) {
    require_square(F, "matrix_exponential");
    if (!std::isfinite(t)) throw Error("matrix_exponential: non-finite t");
    const Eigen::Index d = F.rows();
    if (d == 1) return Matrix::Constant(1, 1, std::exp(t * F(0, 0)));

    Matrix A = t * F;
    // Scale so the 1-norm falls under the degree-13 Pade threshold.
    const double theta13 = 5.371920351148152;
    const double norm1 = A.cwiseAbs().colwise().sum().maxCoeff();
    int squarings = 0;
    if (norm1 > theta13) {
        squarings = static_cast<int>(std::ceil(std::log2(norm1 / theta13)));
        A /= std::ldexp(1.0, squarings);
    }

    static const double b[] = {64764752532480000.0, 32382376266240000.0,
                               7771770303897600.0,  1187353796428800.0,
                               129060195264000.0,   10559470521600.0,
                               670442572800.0,      33522128640.0,
                               1323241920.0,        40840800.0,
                               960960.0,            16380.0,
                               182.0,               1.0};
    const Matrix I = Matrix::Identity(d, d);
    const Matrix A2 = A * A;
    const Matrix A4 = A2 * A2;
    const Matrix A6 = A2 * A4;
    Matrix U = A * (A6 * (b[13] * A6 + b[11] * A4 + b[9] * A2) +
                    b[7] * A6 + b[5] * A4 + b[3] * A2 + b[1] * I);
    Matrix V = A6 * (b[12] * A6 + b[10] * A4 + b[8] * A2) +
               b[6] * A6 + b[4] * A4 + b[2] * A2 + b[0] * I;

    Eigen::PartialPivLU<Matrix> lu(V - U);
    Matrix R = lu.solve(V + U);
    for (int i = 0; i < squarings; ++i) R = R * R;
    return R;
}

Matrix solve_lyapunov(const Matrix& F, const Matrix& W) {
    require_square(F, "solve_lyapunov");
    require_square(W, "solve_lyapunov (rhs)");
    if (F.rows() != W.rows())
        throw Error("solve_lyapunov: dimension mismatch between F and W");
    StabilityReport st = check_positive_spectrum(-F);
    if (!st.is_stable) {
        std::ostringstream os;
        os << "solve_lyapunov: F is not stable (spectral abscissa "
           << -st.spectral_abscissa << " >= 0)";
        throw Error(os.str());
    }
    const Eigen::Index d = F.rows();
    const Matrix I = Matrix::Identity(d, d);
    // vec(FX) = (I (x) F) vec X, vec(X F^T) = (F (x) I) vec X.
    Matrix K = kron(I, F) + kron(F, I);
    Matrix X = solve_vectorized(K, W, d, d, "solve_lyapunov");
    const bool w_symmetric = max_abs(W - W.transpose()) <= 1e-12 * (1.0 + max_abs(W));
    if (w_symmetric) X = 0.5 * (X + X.transpose()).eval();
    return X;
}

Matrix solve_sylvester(const Matrix& F, const Matrix& G, const Matrix& C) {
    require_square(F, "solve_sylvester (F)");
    require_square(G, "solve_sylvester (G)");
    if (C.rows() != F.rows() || C.cols() != G.rows())
        throw Error("solve_sylvester: rhs dimensions do not match F, G");
    const Eigen::Index d = F.rows(), n = G.rows();
    Matrix K = kron(Matrix::Identity(n, n), F) +
               kron(G.transpose(), Matrix::Identity(d, d));
    return solve_vectorized(K, C, d, n, "solve_sylvester");
}

Matrix psd_sqrt(const Matrix& S, double neg_tol) {
    require_square(S, "psd_sqrt");
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (S + S.transpose()));
    if (es.info() != Eigen::Success) throw Error("psd_sqrt: eigendecomposition failed");
    Vector ev = es.eigenvalues();
    const double scale = std::max(1.0, ev.cwiseAbs().maxCoeff());
    Vector root(ev.size());
    for (Eigen::Index i = 0; i < ev.size(); ++i) {
        if (ev(i) < -neg_tol * scale) {
            std::ostringstream os;
            os << "psd_sqrt: matrix is not positive semidefinite (eigenvalue " << ev(i)
               << ")";
            throw Error(os.str());
        }
        root(i) = std::sqrt(std::max(ev(i), 0.0));
    }
    return es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace oudrift::linalg

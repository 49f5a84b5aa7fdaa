#include "core/linalg.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace oudrift;
using namespace oudrift::linalg;
using oudrift::test::random_matrix;
using oudrift::test::random_spd;
using oudrift::test::random_stable;

namespace {

// Plain Taylor summation, the independent oracle for matrix_exponential on
// small-norm arguments.
Matrix expm_series(const Matrix& F, double t) {
    const Eigen::Index d = F.rows();
    Matrix term = Matrix::Identity(d, d);
    Matrix sum = term;
    for (int k = 1; k < 60; ++k) {
        term = (term * (t * F) / static_cast<double>(k)).eval();
        sum += term;
        if (max_abs(term) < 1e-18) break;
    }
    return sum;
}

}  // namespace

TEST_CASE("matrix exponential basics") {
    CHECK(max_abs(matrix_exponential(Matrix::Zero(2, 2), 5.0) - Matrix::Identity(2, 2)) <
          1e-15);

    Matrix one(1, 1);
    one << -1.0;
    CHECK(matrix_exponential(one, 1.0)(0, 0) == doctest::Approx(std::exp(-1.0)).epsilon(1e-13));

    // Rotation generator: exp(t J) rotates by t.
    Matrix J(2, 2);
    J << 0.0, -1.0, 1.0, 0.0;
    Matrix R = matrix_exponential(J, M_PI_2);
    Matrix expected(2, 2);
    expected << 0.0, -1.0, 1.0, 0.0;
    CHECK(max_abs(R - expected) < 1e-12);
    CHECK(max_abs(R - expm_series(J, M_PI_2)) < 1e-12);
}

TEST_CASE("matrix exponential semigroup property") {
    std::mt19937_64 eng(1234);
    std::uniform_real_distribution<double> st(-2.0, 2.0);
    for (int rep = 0; rep < 40; ++rep) {
        const int d = 1 + static_cast<int>(eng() % 5);
        Matrix F = random_stable(eng, d, 0.5);
        const double s = st(eng), t = st(eng);
        Matrix lhs = matrix_exponential(F, s + t);
        Matrix rhs = matrix_exponential(F, s) * matrix_exponential(F, t);
        CHECK(max_abs(lhs - rhs) < 1e-10);
    }
}

TEST_CASE("matrix exponential agrees with series on moderate norms") {
    std::mt19937_64 eng(77);
    for (int rep = 0; rep < 20; ++rep) {
        const int d = 2 + static_cast<int>(eng() % 4);
        Matrix F = random_matrix(eng, d, d);
        Matrix a = matrix_exponential(F, 1.3);
        Matrix b = expm_series(F, 1.3);
        CHECK(max_abs(a - b) <= 1e-12 * (1.0 + max_abs(b)));
    }
}

TEST_CASE("matrix exponential input validation") {
    CHECK_THROWS_AS(matrix_exponential(Matrix::Zero(2, 3), 1.0), Error);
    Matrix bad(1, 1);
    bad << std::nan("");
    CHECK_THROWS_AS(matrix_exponential(bad, 1.0), Error);
    CHECK_THROWS_AS(matrix_exponential(Matrix::Identity(2, 2),
                                       std::numeric_limits<double>::infinity()),
                    Error);
}

TEST_CASE("spectral abscissa") {
    Matrix m1(1, 1);
    m1 << -3.0;
    CHECK(spectral_abscissa(m1) == doctest::Approx(-3.0));

    Matrix J(2, 2);
    J << 0.0, -1.0, 1.0, 0.0;
    CHECK(spectral_abscissa(J) == doctest::Approx(0.0).epsilon(1e-9));

    Matrix tri(2, 2);
    tri << 1.0, 4.0, 0.0, 2.0;
    CHECK(spectral_abscissa(tri) == doctest::Approx(2.0).epsilon(1e-9));
}

TEST_CASE("lyapunov solver on pinned instances") {
    Matrix F1(1, 1), W1(1, 1);
    F1 << -1.0;
    W1 << -2.0;
    CHECK(solve_lyapunov(F1, W1)(0, 0) == doctest::Approx(1.0).epsilon(1e-13));

    CHECK(max_abs(solve_lyapunov(-Matrix::Identity(2, 2), -Matrix::Identity(2, 2)) -
                  0.5 * Matrix::Identity(2, 2)) < 1e-13);

    // Diagonal F: componentwise X_ij = W_ij / (lambda_i + lambda_j).
    Matrix F(2, 2), W(2, 2), X(2, 2);
    F << -2.0, 0.0, 0.0, -1.0;
    W = -Matrix::Ones(2, 2);
    X << 0.25, 1.0 / 3.0, 1.0 / 3.0, 0.5;
    CHECK(max_abs(solve_lyapunov(F, W) - X) < 1e-13);
}

TEST_CASE("lyapunov residual and symmetry on random stable instances") {
    std::mt19937_64 eng(2024);
    for (int rep = 0; rep < 200; ++rep) {
        const int d = 1 + static_cast<int>(eng() % 6);
        Matrix F = random_stable(eng, d, 0.4);
        Matrix W = -random_spd(eng, d);
        Matrix X = solve_lyapunov(F, W);
        const double resid = max_abs(F * X + X * F.transpose() - W);
        CHECK(resid <= 1e-10 * (1.0 + max_abs(W)));
        CHECK(max_abs(X - X.transpose()) <= 1e-12 * (1.0 + max_abs(X)));
    }
}

TEST_CASE("lyapunov solution equals the controllability quadrature") {
    std::mt19937_64 eng(31337);
    for (int rep = 0; rep < 20; ++rep) {
        const int d = 1 + static_cast<int>(eng() % 3);
        Matrix F = random_stable(eng, d, 0.6);
        Matrix B = random_matrix(eng, d, d);
        Matrix W = (B * B.transpose()).eval();
        Matrix X = solve_lyapunov(F, (-W).eval());
        Matrix Q = test::gramian_quadrature(F, W);
        CHECK(max_abs(X - Q) <= 1e-6 * (1.0 + max_abs(Q)));
    }
}

TEST_CASE("lyapunov rejects unstable and mismatched input") {
    Matrix F(1, 1), W(1, 1);
    F << 0.5;
    W << 1.0;
    CHECK_THROWS_WITH_AS(solve_lyapunov(F, W) /* abscissa reported */,
                         doctest::Contains("spectral abscissa"), Error);
    CHECK_THROWS_AS(solve_lyapunov(-Matrix::Identity(2, 2), Matrix::Zero(3, 3)), Error);
}

TEST_CASE("sylvester solver") {
    Matrix F(1, 1), G(1, 1), C(1, 1);
    F << 2.0;
    G << 1.0;
    C << 3.0;
    CHECK(solve_sylvester(F, G, C)(0, 0) == doctest::Approx(1.0));

    std::mt19937_64 eng(99);
    Matrix C2 = random_matrix(eng, 2, 2);
    Matrix X2 = solve_sylvester(1.7 * Matrix::Identity(2, 2), 0.3 * Matrix::Identity(2, 2),
                                C2);
    CHECK(max_abs(X2 - C2 / 2.0) < 1e-13);

    for (int rep = 0; rep < 20; ++rep) {
        Matrix F3 = -random_stable(eng, 3, 0.4);  // spectrum in the right half plane
        Matrix G3 = -random_stable(eng, 3, 0.4);
        Matrix C3 = random_matrix(eng, 3, 3);
        Matrix X3 = solve_sylvester(F3, G3, C3);
        CHECK(max_abs(F3 * X3 + X3 * G3 - C3) <= 1e-10 * (1.0 + max_abs(C3)));
    }
}

TEST_CASE("sylvester reports spectral overlap") {
    // F and -G share the eigenvalue 1, so the Kronecker system is singular.
    Matrix F(1, 1), G(1, 1), C(1, 1);
    F << 1.0;
    G << -1.0;
    C << 1.0;
    CHECK_THROWS_WITH_AS(solve_sylvester(F, G, C), doctest::Contains("condition"), Error);
}

TEST_CASE("psd sqrt") {
    std::mt19937_64 eng(5);
    Matrix S = random_spd(eng, 4);
    Matrix R = psd_sqrt(S);
    CHECK(max_abs(R * R - S) < 1e-11 * (1.0 + max_abs(S)));
    CHECK(max_abs(R - R.transpose()) < 1e-12);

    Matrix neg = -Matrix::Identity(2, 2);
    CHECK_THROWS_AS(psd_sqrt(neg), Error);
}

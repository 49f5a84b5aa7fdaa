#pragma once

#include "core/model.hpp"
#include "test_util.hpp"

#include <cmath>
#include <random>

namespace oudrift::test {

/// Random smooth scalar-friction model with analytic gradients:
/// lambda(x) = c + sum_i a_i sin(w_i x_i + p_i), xi entries are single-mode
/// sinusoids in one coordinate each.
inline model::ScalarFrictionModel random_scalar_model(std::mt19937_64& eng, int d, int n,
                                                      int m) {
    std::uniform_real_distribution<double> amp(0.1, 0.4);
    std::uniform_real_distribution<double> freq(0.5, 2.0);
    std::uniform_real_distribution<double> phase(0.0, 6.28);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);

    std::vector<double> a(d), w(d), p(d);
    double c = 1.2;
    for (int i = 0; i < d; ++i) {
        a[i] = amp(eng);
        w[i] = freq(eng);
        p[i] = phase(eng);
        c += a[i];
    }
    struct Mode {
        double q, r, w, phi;
        int coord;
    };
    std::vector<Mode> modes(static_cast<size_t>(d) * n);
    for (int i = 0; i < d; ++i)
        for (int k = 0; k < n; ++k)
            modes[i * n + k] = {unit(eng), 0.5 * unit(eng), freq(eng), phase(eng),
                               (i + k) % d};

    model::ScalarFrictionModel s;
    s.dim = d;
    s.noise_dim = n;
    s.wiener_dim = m;
    s.name = "random-scalar";
    s.lambda0 = 1.2;  // c - sum a_i by construction
    s.lambda1 = 2.0 * c - 1.2;
    s.lambda = [a, w, p, c, d](const Vector& x) {
        double v = c;
        for (int i = 0; i < d; ++i) v += a[i] * std::sin(w[i] * x(i) + p[i]);
        return v;
    };
    s.grad_lambda = [a, w, p, d](const Vector& x) {
        Vector g(d);
        for (int i = 0; i < d; ++i) g(i) = a[i] * w[i] * std::cos(w[i] * x(i) + p[i]);
        return g;
    };
    s.xi = [modes, d, n](const Vector& x) {
        Matrix xi(d, n);
        for (int i = 0; i < d; ++i)
            for (int k = 0; k < n; ++k) {
                const Mode& mo = modes[i * n + k];
                xi(i, k) = mo.q + mo.r * std::sin(mo.w * x(mo.coord) + mo.phi);
            }
        return xi;
    };
    s.dxi = [modes, d, n](const Vector& x) {
        model::Tensor3 t(d, Matrix::Zero(d, n));
        for (int i = 0; i < d; ++i)
            for (int k = 0; k < n; ++k) {
                const Mode& mo = modes[i * n + k];
                t[mo.coord](i, k) = mo.r * mo.w * std::cos(mo.w * x(mo.coord) + mo.phi);
            }
        return t;
    };
    s.b = [d](const Vector&) { return Vector::Zero(d).eval(); };
    s.B = random_matrix(eng, n, m);
    return s;
}

/// Random general coefficient model (matrix friction, no analytic
/// derivative callbacks). The symmetric part of gamma stays uniformly
/// positive by construction.
inline model::CoefficientModel random_general_model(std::mt19937_64& eng, int d, int n) {
    std::uniform_real_distribution<double> freq(0.5, 2.0);
    std::uniform_real_distribution<double> phase(0.0, 6.28);
    Matrix C0 = random_spd(eng, d, 1.5);
    Matrix C1 = random_matrix(eng, d, d);
    C1 = (0.5 * (C1 + C1.transpose()) / std::max(1.0, linalg::max_abs(C1))).eval();
    Matrix K = random_matrix(eng, d, d);
    K = (0.2 * (K - K.transpose())).eval();
    Matrix S0 = random_matrix(eng, d, n);
    Matrix S1 = random_matrix(eng, d, n);
    const double w1 = freq(eng), p1 = phase(eng), w2 = freq(eng), p2 = phase(eng);

    model::CoefficientModel m;
    m.dim = d;
    m.noise_dim = n;
    m.name = "random-general";
    m.gamma0 = 0.5;
    m.gamma1 = 0.0;
    m.b = [d](const Vector&) { return Vector::Zero(d).eval(); };
    m.gamma = [C0, C1, K, w1, p1](const Vector& x) {
        return (C0 + 0.3 * std::sin(w1 * x(0) + p1) * C1 + K).eval();
    };
    m.sigma = [S0, S1, w2, p2](const Vector& x) {
        return (S0 + 0.5 * std::sin(w2 * x(0) + p2) * S1).eval();
    };
    return m;
}

inline model::NoiseSpec random_noise(std::mt19937_64& eng, int n, int m) {
    Matrix A = -random_stable(eng, n, 0.5);  // eigenvalues with real part >= 0.5
    Matrix B = random_matrix(eng, n, m);
    return model::NoiseSpec::make(A, B);
}

inline Vector random_point(std::mt19937_64& eng, int d, double radius = 2.0) {
    std::uniform_real_distribution<double> u(-radius, radius);
    Vector x(d);
    for (int i = 0; i < d; ++i) x(i) = u(eng);
    return x;
}

}  // namespace oudrift::test

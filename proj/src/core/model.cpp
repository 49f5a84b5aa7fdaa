#include "model.hpp"

#include <json.hpp>

#include <Eigen/Eigenvalues>
#include <cmath>
#include <sstream>
#include <utility>

namespace oudrift::model {

using nlohmann::json;

// ---------------------------------------------------------------------------
// NoiseSpec
// ---------------------------------------------------------------------------

NoiseSpec NoiseSpec::make(Matrix A, Matrix B) {
    if (A.rows() != A.cols() || A.rows() < 1) throw Error("NoiseSpec: A must be square");
    if (B.rows() != A.rows() || B.cols() < 1)
        throw Error("NoiseSpec: B must have the same row count as A");
    auto st = linalg::check_positive_spectrum(A);
    if (!st.is_stable) {
        std::ostringstream os;
        os << "NoiseSpec: eigenvalues of A must have strictly positive real part "
              "(min real part "
           << -st.spectral_abscissa << ")";
        throw Error(os.str());
    }
    NoiseSpec s;
    s.A = std::move(A);
    s.B = std::move(B);
    s.spectral_gap = -st.spectral_abscissa;
    // Stationary covariance of dz = -A z dt + B dw.
    s.M = linalg::solve_lyapunov(-s.A, -s.B * s.B.transpose());
    Eigen::PartialPivLU<Matrix> lu(s.A);
    if (!(lu.rcond() > 1e-12)) throw Error("NoiseSpec: A is numerically singular");
    s.A_inv = lu.inverse();
    s.A_inv_B = s.A_inv * s.B;
    return s;
}

NoiseSpec NoiseSpec::identity(int n) {
    return make(Matrix::Identity(n, n), Matrix::Identity(n, n));
}

// ---------------------------------------------------------------------------
// Derivative bundles
// ---------------------------------------------------------------------------

namespace {

Matrix gamma_inverse(const CoefficientModel& m, const Vector& x) {
    Matrix g = m.gamma(x);
    Eigen::PartialPivLU<Matrix> lu(g);
    if (!(lu.rcond() > 1e-12)) throw Error("gamma(x) is numerically singular");
    return lu.inverse();
}

Tensor3 central_difference(const CoefficientModel& m, const Vector& x, double h,
                           bool with_sigma) {
    const int d = m.dim;
    Tensor3 out(d);
    for (int l = 0; l < d; ++l) {
        Vector xp = x, xm = x;
        xp(l) += h;
        xm(l) -= h;
        Matrix fp = gamma_inverse(m, xp);
        Matrix fm = gamma_inverse(m, xm);
        if (with_sigma) {
            fp = fp * m.sigma(xp);
            fm = fm * m.sigma(xm);
        }
        out[l] = (fp - fm) / (2.0 * h);
    }
    return out;
}

double tensor_gap(const Tensor3& a, const Tensor3& b) {
    double g = 0.0;
    for (size_t l = 0; l < a.size(); ++l) g = std::max(g, linalg::max_abs(a[l] - b[l]));
    return g;
}

Tensor3 richardson(const Tensor3& coarse, const Tensor3& fine) {
    Tensor3 out(coarse.size());
    for (size_t l = 0; l < coarse.size(); ++l)
        out[l] = (4.0 * fine[l] - coarse[l]) / 3.0;
    return out;
}

}  // namespace

DerivativeBundle fd_derivatives(const CoefficientModel& m, const Vector& x, double h) {
    if (h <= 0.0) h = 1e-5 * (1.0 + x.norm());
    DerivativeBundle b;
    Tensor3 gi_h = central_difference(m, x, h, false);
    Tensor3 gi_h2 = central_difference(m, x, 0.5 * h, false);
    Tensor3 gs_h = central_difference(m, x, h, true);
    Tensor3 gs_h2 = central_difference(m, x, 0.5 * h, true);

    const double scale_gi = 1.0 + linalg::max_abs(gamma_inverse(m, x));
    const double scale_gs = 1.0 + linalg::max_abs(gamma_inverse(m, x) * m.sigma(x));
    if (tensor_gap(gi_h, gi_h2) > 10.0 * h * h * scale_gi ||
        tensor_gap(gs_h, gs_h2) > 10.0 * h * h * scale_gs) {
        std::ostringstream os;
        os << "fd_derivatives: Richardson h vs h/2 check failed at h=" << h
           << " (model '" << m.name << "' too rough here, or h ill-chosen)";
        throw Error(os.str());
    }
    b.dgamma_inv = richardson(gi_h, gi_h2);
    b.dgamma_inv_sigma = richardson(gs_h, gs_h2);
    return b;
}

DerivativeBundle derivative_bundle(const CoefficientModel& m, const Vector& x) {
    if (m.has_analytic_derivatives())
        return DerivativeBundle{m.dgamma_inv(x), m.dgamma_inv_sigma(x)};
    return fd_derivatives(m, x);
}

// ---------------------------------------------------------------------------
// Views
// ---------------------------------------------------------------------------

CoefficientModel as_coefficient_model(const ScalarFrictionModel& m) {
    CoefficientModel c;
    c.dim = m.dim;
    c.noise_dim = m.noise_dim;
    c.name = m.name;
    c.gamma0 = m.lambda0;
    c.gamma1 = m.lambda1;
    const int d = m.dim;
    auto lam = m.lambda;
    auto dlam = m.grad_lambda;
    auto xi = m.xi;
    auto dxi = m.dxi;
    auto b = m.b;
    c.b = b ? b : [d](const Vector&) { return Vector::Zero(d).eval(); };
    c.gamma = [lam, d](const Vector& x) { return (lam(x) * Matrix::Identity(d, d)).eval(); };
    c.sigma = [lam, xi](const Vector& x) { return (lam(x) * xi(x)).eval(); };
    c.dgamma_inv = [lam, dlam, d](const Vector& x) {
        const double l = lam(x);
        const Vector g = dlam(x);
        Tensor3 t(d);
        for (int l_idx = 0; l_idx < d; ++l_idx)
            t[l_idx] = (-g(l_idx) / (l * l)) * Matrix::Identity(d, d);
        return t;
    };
    // gamma^-1 sigma = xi, so the second tensor is just Dxi.
    c.dgamma_inv_sigma = [dxi](const Vector& x) { return dxi(x); };
    return c;
}

ScalarFrictionModel as_scalar_friction(const TurbulenceModel& m) {
    ScalarFrictionModel s;
    s.dim = m.dim;
    s.noise_dim = m.num_fields;
    s.wiener_dim = m.num_fields;
    s.name = m.name;
    s.lambda0 = m.c0 * m.kT_floor;
    s.lambda1 = 0.0;  // filled by builders that know sup kT
    const double c0 = m.c0;
    auto kT = m.kT;
    auto gkT = m.grad_kT;
    auto ubar = m.ubar;
    auto fields = m.fields;
    s.lambda = [c0, kT](const Vector& x) { return c0 * kT(x); };
    s.grad_lambda = [c0, gkT](const Vector& x) { return (c0 * gkT(x)).eval(); };
    s.xi = fields;
    s.dxi = m.dfields;
    s.b = [c0, kT, ubar](const Vector& x) { return (c0 * kT(x) * ubar(x)).eval(); };
    s.B = Matrix::Identity(m.num_fields, m.num_fields);
    return s;
}

CoefficientModel as_coefficient_model(const TurbulenceModel& m) {
    ScalarFrictionModel s = as_scalar_friction(m);
    CoefficientModel c = as_coefficient_model(s);
    // Spot-check the kT floor at the origin so obviously broken profiles
    // fail fast.
    Vector origin = Vector::Zero(m.dim);
    if (m.kT(origin) < m.kT_floor - 1e-12)
        throw Error("turbulence model: kT below declared floor at the origin");
    return c;
}

Vector TurbulenceModel::centrifugal_term(const Vector& x) const {
    Matrix Xi = fields(x);
    Tensor3 D = dfields(x);
    Vector out = Vector::Zero(dim);
    for (int i = 0; i < dim; ++i)
        for (int l = 0; l < dim; ++l)
            for (int k = 0; k < num_fields; ++k) out(i) += D[l](i, k) * Xi(l, k);
    return out;
}

Matrix TurbulenceModel::covariance_C(const Vector& x) const {
    Matrix Xi = fields(x);
    return Xi * Xi.transpose();
}

void check_friction_bounds(const CoefficientModel& m, const Vector& x, double tol) {
    Matrix g = m.gamma(x);
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (g + g.transpose()));
    const double lo = es.eigenvalues().minCoeff();
    const double hi = es.eigenvalues().maxCoeff();
    const double scale = 1.0 + std::abs(hi);
    if (lo < m.gamma0 - tol * scale || (m.gamma1 > 0.0 && hi > m.gamma1 + tol * scale)) {
        std::ostringstream os;
        os << "friction bounds violated for model '" << m.name << "': eigenvalues in ["
           << lo << ", " << hi << "], declared [" << m.gamma0 << ", " << m.gamma1 << "]";
        throw Error(os.str());
    }
}

double max_field_divergence(const TurbulenceModel& m, const Vector& x) {
    Tensor3 D = m.dfields(x);
    double worst = 0.0;
    for (int k = 0; k < m.num_fields; ++k) {
        double div = 0.0;
        for (int i = 0; i < m.dim; ++i) div += D[i](i, k);
        worst = std::max(worst, std::abs(div));
    }
    return worst;
}

// ---------------------------------------------------------------------------
// Built-in turbulence models
// ---------------------------------------------------------------------------

namespace {

// C^2 smoothstep and its derivative, for profile cutoffs.
double smoothstep(double t) { return t * t * t * (10.0 + t * (-15.0 + 6.0 * t)); }
double smoothstep_d(double t) {
    const double u = t * (1.0 - t);
    return 30.0 * u * u;
}
double smoothstep_int(double t) {  // int_0^t S
    const double t4 = t * t * t * t;
    return t4 * (2.5 + t * (-3.0 + t));
}

struct RadialProfile {
    // f'(s), f''(s) for xi(x) = 2 f'(|x|^2) x_perp.
    std::function<double(double)> fp;
    std::function<double(double)> fpp;
};

RadialProfile make_profile(const VortexParams& p) {
    if (p.profile == "linear") {
        const double s0 = p.cutoff_radius * p.cutoff_radius;
        const double s1 = (p.cutoff_radius + 2.0) * (p.cutoff_radius + 2.0);
        const double width = s1 - s0;
        return {[s0, s1, width](double s) {
                    if (s <= s0) return 1.0;
                    if (s >= s1) return 0.0;
                    return 1.0 - smoothstep((s - s0) / width);
                },
                [s0, s1, width](double s) {
                    if (s <= s0 || s >= s1) return 0.0;
                    return -smoothstep_d((s - s0) / width) / width;
                }};
    }
    if (p.profile == "gaussian") {
        const double sc = p.gaussian_scale;
        return {[sc](double s) { return std::exp(-s / sc); },
                [sc](double s) { return -std::exp(-s / sc) / sc; }};
    }
    throw Error("vortex: unknown radial profile '" + p.profile + "'");
}

}  // namespace

TurbulenceModel builtin_vortex(const VortexParams& p) {
    if (p.kT <= 0.0 || p.c0 <= 0.0) throw Error("vortex: c0 and kT must be positive");
    RadialProfile prof = make_profile(p);
    TurbulenceModel m;
    m.dim = 2;
    m.num_fields = 1;
    m.c0 = p.c0;
    m.kT_floor = p.kT;
    m.name = "vortex";
    const double kT = p.kT;
    m.kT = [kT](const Vector&) { return kT; };
    m.grad_kT = [](const Vector&) { return Vector::Zero(2).eval(); };
    m.ubar = [](const Vector&) { return Vector::Zero(2).eval(); };
    auto fp = prof.fp;
    auto fpp = prof.fpp;
    m.fields = [fp](const Vector& x) {
        const double s = x.squaredNorm();
        Matrix xi(2, 1);
        xi(0, 0) = -2.0 * fp(s) * x(1);
        xi(1, 0) = 2.0 * fp(s) * x(0);
        return xi;
    };
    m.dfields = [fp, fpp](const Vector& x) {
        const double s = x.squaredNorm();
        const double a = fp(s), b = fpp(s);
        const double perp[2] = {-x(1), x(0)};
        static const double J[2][2] = {{0.0, -1.0}, {1.0, 0.0}};
        Tensor3 t(2);
        for (int l = 0; l < 2; ++l) {
            t[l] = Matrix(2, 1);
            for (int i = 0; i < 2; ++i)
                t[l](i, 0) = 4.0 * b * x(l) * perp[i] + 2.0 * a * J[i][l];
        }
        return t;
    };
    return m;
}

TurbulenceModel builtin_cellular(const CellularParams& p) {
    if (p.k1 == 0.0 || p.k2 == 0.0) throw Error("cellular: wavenumbers must be nonzero");
    if (p.lambda <= 0.0) throw Error("cellular: lambda must be positive");
    TurbulenceModel m;
    m.dim = 2;
    m.num_fields = 1;
    m.c0 = p.lambda;
    m.kT_floor = 1.0;
    m.name = "cellular";
    m.kT = [](const Vector&) { return 1.0; };
    m.grad_kT = [](const Vector&) { return Vector::Zero(2).eval(); };
    m.ubar = [](const Vector&) { return Vector::Zero(2).eval(); };
    const double k1 = p.k1, k2 = p.k2;
    m.fields = [k1, k2](const Vector& x) {
        Matrix xi(2, 1);
        xi(0, 0) = k2 * std::sin(k1 * x(0)) * std::sin(k2 * x(1));
        xi(1, 0) = k1 * std::cos(k1 * x(0)) * std::cos(k2 * x(1));
        return xi;
    };
    m.dfields = [k1, k2](const Vector& x) {
        const double s1 = std::sin(k1 * x(0)), c1 = std::cos(k1 * x(0));
        const double s2 = std::sin(k2 * x(1)), c2 = std::cos(k2 * x(1));
        Tensor3 t(2);
        t[0] = Matrix(2, 1);
        t[1] = Matrix(2, 1);
        t[0](0, 0) = k1 * k2 * c1 * s2;
        t[0](1, 0) = -k1 * k1 * s1 * c2;
        t[1](0, 0) = k2 * k2 * s1 * c2;
        t[1](1, 0) = -k1 * k2 * c1 * s2;
        return t;
    };
    return m;
}

TurbulenceModel builtin_pipe(const PipeParams& p) {
    if (p.kT_floor <= 0.0) throw Error("pipe: kT floor must be positive");
    if (p.kT_center <= p.kT_floor) throw Error("pipe: center kT must exceed the floor");
    if (!(p.q1 > p.q0 && p.q0 > 0.0)) throw Error("pipe: need 0 < q0 < q1");
    // The leveled parabola reaches kT_center - (q0 + (q1-q0)/2); keep it at
    // or above the declared floor.
    const double g_inf = p.q0 + 0.5 * (p.q1 - p.q0);
    if (p.kT_center - g_inf < p.kT_floor - 1e-12)
        throw Error("pipe: profile dips below the kT floor; adjust q0/q1");

    TurbulenceModel m;
    m.dim = 2;
    m.num_fields = 2;
    m.c0 = p.c0;
    m.kT_floor = p.kT_floor;
    m.name = "pipe";
    const double a = p.kT_center, q0 = p.q0, q1 = p.q1, width = p.q1 - p.q0;
    auto g = [q0, q1, width](double q) {
        if (q <= q0) return q;
        if (q >= q1) return q0 + 0.5 * width;
        const double t = (q - q0) / width;
        return q0 + width * (t - smoothstep_int(t));
    };
    auto gp = [q0, q1, width](double q) {
        if (q <= q0) return 1.0;
        if (q >= q1) return 0.0;
        return 1.0 - smoothstep((q - q0) / width);
    };
    m.kT = [a, g](const Vector& x) { return a - g(x(1) * x(1)); };
    m.grad_kT = [gp](const Vector& x) {
        Vector v = Vector::Zero(2);
        v(1) = -2.0 * x(1) * gp(x(1) * x(1));
        return v;
    };
    const double umax = p.u_max;
    m.ubar = [umax](const Vector& x) {
        Vector v = Vector::Zero(2);
        const double t = std::max(1.0 - x(1) * x(1), 0.0);
        v(0) = umax * t * t;
        return v;
    };
    m.fields = [](const Vector&) { return Matrix::Identity(2, 2).eval(); };
    m.dfields = [](const Vector&) { return Tensor3{Matrix::Zero(2, 2), Matrix::Zero(2, 2)}; };
    return m;
}

// ---------------------------------------------------------------------------
// Catalog
// ---------------------------------------------------------------------------

namespace {

class ParamReader {
public:
    explicit ParamReader(const std::string& text, std::string model)
        : model_(std::move(model)) {
        if (text.empty()) {
            obj_ = json::object();
            return;
        }
        obj_ = json::parse(text, nullptr, /*allow_exceptions=*/false);
        if (obj_.is_discarded() || !obj_.is_object())
            throw Error("model '" + model_ + "': parameters must be a JSON object");
    }

    double number(const std::string& key, double fallback) {
        if (!obj_.contains(key)) return fallback;
        if (!obj_[key].is_number())
            throw Error("model '" + model_ + "': parameter '" + key + "' must be numeric");
        double v = obj_[key].get<double>();
        obj_.erase(key);
        return v;
    }

    std::string text(const std::string& key, const std::string& fallback) {
        if (!obj_.contains(key)) return fallback;
        if (!obj_[key].is_string())
            throw Error("model '" + model_ + "': parameter '" + key + "' must be a string");
        std::string v = obj_[key].get<std::string>();
        obj_.erase(key);
        return v;
    }

    void finish() const {
        if (!obj_.empty())
            throw Error("model '" + model_ + "': unknown parameter '" +
                        obj_.begin().key() + "'");
    }

private:
    json obj_;
    std::string model_;
};

ScalarFrictionModel scalar_1d(const std::string& name,
                              std::function<double(double)> lam,
                              std::function<double(double)> dlam,
                              std::function<double(double)> xi_of_x,
                              std::function<double(double)> dxi_of_x,
                              double lambda0, double lambda1) {
    ScalarFrictionModel s;
    s.dim = 1;
    s.noise_dim = 1;
    s.wiener_dim = 1;
    s.name = name;
    s.lambda0 = lambda0;
    s.lambda1 = lambda1;
    s.lambda = [lam](const Vector& x) { return lam(x(0)); };
    s.grad_lambda = [dlam](const Vector& x) {
        return Vector::Constant(1, dlam(x(0))).eval();
    };
    s.xi = [xi_of_x](const Vector& x) { return Matrix::Constant(1, 1, xi_of_x(x(0))).eval(); };
    s.dxi = [dxi_of_x](const Vector& x) {
        return Tensor3{Matrix::Constant(1, 1, dxi_of_x(x(0)))};
    };
    s.b = [](const Vector&) { return Vector::Zero(1).eval(); };
    s.B = Matrix::Identity(1, 1);
    return s;
}

ProblemModel from_scalar(ScalarFrictionModel s) {
    ProblemModel p;
    p.coeff = as_coefficient_model(s);
    p.default_noise_dim = s.noise_dim;
    p.default_wiener_dim = s.wiener_dim;
    p.scalar = std::move(s);
    return p;
}

ProblemModel from_turbulence(TurbulenceModel t, double lambda1) {
    ProblemModel p;
    p.coeff = as_coefficient_model(t);
    p.coeff.gamma1 = lambda1;
    p.scalar = as_scalar_friction(t);
    p.scalar->lambda1 = lambda1;
    p.default_noise_dim = t.num_fields;
    p.default_wiener_dim = t.num_fields;
    p.turbulence = std::move(t);
    return p;
}

}  // namespace

ProblemModel make_builtin_model(const std::string& name_in, const std::string& params_json) {
    const std::string name = name_in == "scalar" ? "constant" : name_in;
    ParamReader pr(params_json, name);
    if (name == "constant") {
        const double lam = pr.number("lambda", 2.0);
        const double sig = pr.number("sigma", 1.0);
        const double b0 = pr.number("b", 0.0);
        pr.finish();
        if (lam <= 0.0) throw Error("constant: lambda must be positive");
        ScalarFrictionModel s =
            scalar_1d("constant", [lam](double) { return lam; }, [](double) { return 0.0; },
                      [sig, lam](double) { return sig / lam; }, [](double) { return 0.0; },
                      lam, lam);
        s.b = [b0](const Vector&) { return Vector::Constant(1, b0).eval(); };
        return from_scalar(std::move(s));
    }
    if (name == "scalar-affine") {
        const double base = pr.number("base", 2.0);
        const double slope = pr.number("slope", 1.0);
        const double xi0 = pr.number("xi", 1.0);
        pr.finish();
        // lambda = base + slope*x, sigma = lambda*xi0. Positive only on a
        // half-line; meant for pointwise drift evaluation near x = 0.
        return from_scalar(scalar_1d(
            "scalar-affine", [base, slope](double x) { return base + slope * x; },
            [slope](double) { return slope; }, [xi0](double) { return xi0; },
            [](double) { return 0.0; }, 1e-9, 0.0));
    }
    if (name == "scalar-sine") {
        const double base = pr.number("base", 2.0);
        const double amp = pr.number("amp", 1.0);
        const double sig = pr.number("sigma", 1.0);
        pr.finish();
        if (base - std::abs(amp) <= 0.0)
            throw Error("scalar-sine: base must exceed |amp| so friction stays positive");
        return from_scalar(scalar_1d(
            "scalar-sine", [base, amp](double x) { return base + amp * std::sin(x); },
            [amp](double x) { return amp * std::cos(x); },
            [sig, base, amp](double x) { return sig / (base + amp * std::sin(x)); },
            [sig, base, amp](double x) {
                const double l = base + amp * std::sin(x);
                return -sig * amp * std::cos(x) / (l * l);
            },
            base - std::abs(amp), base + std::abs(amp)));
    }
    if (name == "scalar-sine-xi") {
        const double base = pr.number("base", 2.0);
        const double amp = pr.number("amp", 1.0);
        const double xi0 = pr.number("xi", 1.0);
        pr.finish();
        if (base - std::abs(amp) <= 0.0)
            throw Error("scalar-sine-xi: base must exceed |amp| so friction stays positive");
        return from_scalar(scalar_1d(
            "scalar-sine-xi", [base, amp](double x) { return base + amp * std::sin(x); },
            [amp](double x) { return amp * std::cos(x); }, [xi0](double) { return xi0; },
            [](double) { return 0.0; }, base - std::abs(amp), base + std::abs(amp)));
    }
    if (name == "vortex") {
        VortexParams vp;
        vp.profile = pr.text("profile", vp.profile);
        vp.c0 = pr.number("c0", vp.c0);
        vp.kT = pr.number("kT", vp.kT);
        vp.cutoff_radius = pr.number("cutoff_radius", vp.cutoff_radius);
        vp.gaussian_scale = pr.number("gaussian_scale", vp.gaussian_scale);
        pr.finish();
        return from_turbulence(builtin_vortex(vp), vp.c0 * vp.kT);
    }
    if (name == "cellular") {
        CellularParams cp;
        cp.k1 = pr.number("k1", cp.k1);
        cp.k2 = pr.number("k2", cp.k2);
        cp.lambda = pr.number("lambda", cp.lambda);
        pr.finish();
        return from_turbulence(builtin_cellular(cp), cp.lambda);
    }
    if (name == "pipe") {
        PipeParams pp;
        pp.c0 = pr.number("c0", pp.c0);
        pp.kT_center = pr.number("kT_center", pp.kT_center);
        pp.kT_floor = pr.number("kT_floor", pp.kT_floor);
        pp.u_max = pr.number("u_max", pp.u_max);
        pp.q0 = pr.number("q0", pp.q0);
        pp.q1 = pr.number("q1", pp.q1);
        pr.finish();
        return from_turbulence(builtin_pipe(pp), pp.c0 * pp.kT_center);
    }
    throw Error("unknown model '" + name + "'");
}

std::vector<std::string> builtin_model_names() {
    return {"constant", "scalar-affine", "scalar-sine", "scalar-sine-xi",
            "vortex",   "cellular",      "pipe"};
}

}  // namespace oudrift::model

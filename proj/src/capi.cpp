#include "oudrift/oudrift.h"

#include "core/drift.hpp"
#include "core/runconfig.hpp"
#include "core/sde.hpp"

#include <cstring>
#include <string>

namespace {

thread_local std::string g_last_error;
thread_local std::string g_summary;

void set_error(const std::string& msg) { g_last_error = msg; }

template <typename Fn>
ou_status guarded(Fn&& fn) {
    try {
        fn();
        g_last_error.clear();
        return OU_OK;
    } catch (const oudrift::Error& e) {
        set_error(e.what());
        return OU_ERROR_INVALID_ARGUMENT;
    } catch (const std::exception& e) {
        set_error(e.what());
        return OU_ERROR_NUMERIC;
    }
}

using RowMajorMap = Eigen::Map<
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using ConstRowMajorMap = Eigen::Map<
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

void store(double* out, const oudrift::Matrix& m) {
    if (out) RowMajorMap(out, m.rows(), m.cols()) = m;
}

}  // namespace

struct ou_model {
    oudrift::model::ProblemModel pm;
};

struct ou_noise {
    oudrift::model::NoiseSpec spec;
};

extern "C" {

const char* ou_version(void) { return "0.1.0"; }

const char* ou_last_error(void) { return g_last_error.c_str(); }

ou_model* ou_model_create(const char* name, const char* params_json) {
    ou_model* handle = nullptr;
    guarded([&] {
        if (!name) throw oudrift::Error("model name is null");
        handle = new ou_model{oudrift::model::make_builtin_model(
            name, params_json ? params_json : "{}")};
    });
    return handle;
}

void ou_model_destroy(ou_model* m) { delete m; }

int ou_model_dim(const ou_model* m) { return m ? m->pm.coeff.dim : 0; }

int ou_model_noise_dim(const ou_model* m) { return m ? m->pm.coeff.noise_dim : 0; }

ou_noise* ou_noise_create(int n, int m, const double* A, const double* B) {
    ou_noise* handle = nullptr;
    guarded([&] {
        if (n < 1 || m < 1 || !A || !B)
            throw oudrift::Error("ou_noise_create: need n, m >= 1 and both matrices");
        oudrift::Matrix a = ConstRowMajorMap(A, n, n);
        oudrift::Matrix b = ConstRowMajorMap(B, n, m);
        handle = new ou_noise{oudrift::model::NoiseSpec::make(a, b)};
    });
    return handle;
}

ou_noise* ou_noise_identity(int n) {
    ou_noise* handle = nullptr;
    guarded([&] {
        if (n < 1) throw oudrift::Error("ou_noise_identity: n must be >= 1");
        handle = new ou_noise{oudrift::model::NoiseSpec::identity(n)};
    });
    return handle;
}

void ou_noise_destroy(ou_noise* s) { delete s; }

int ou_noise_n(const ou_noise* s) { return s ? s->spec.n() : 0; }

int ou_noise_m(const ou_noise* s) { return s ? s->spec.m() : 0; }

ou_status ou_noise_stationary_covariance(const ou_noise* s, double* M_out) {
    return guarded([&] {
        if (!s || !M_out) throw oudrift::Error("null argument");
        store(M_out, s->spec.M);
    });
}

ou_status ou_drift_matrices(const ou_model* m, const ou_noise* s, double alpha,
                            const double* x, double* M_out, double* L_out, double* N_out,
                            double* alphaN_out) {
    return guarded([&] {
        if (!m || !s || !x) throw oudrift::Error("null argument");
        oudrift::Vector xv =
            Eigen::Map<const oudrift::Vector>(x, m->pm.coeff.dim);
        oudrift::drift::DriftMatrices dm =
            oudrift::drift::drift_matrices(m->pm.coeff, s->spec, alpha, xv);
        store(M_out, dm.M);
        store(L_out, dm.L);
        store(N_out, dm.N);
        store(alphaN_out, dm.alphaN);
    });
}

ou_status ou_inertial_drift(const ou_model* m, const ou_noise* s, double alpha,
                            const double* x, double* f_out) {
    return guarded([&] {
        if (!m || !s || !x || !f_out) throw oudrift::Error("null argument");
        oudrift::Vector xv = Eigen::Map<const oudrift::Vector>(x, m->pm.coeff.dim);
        oudrift::Vector f =
            oudrift::drift::inertial_drift(m->pm.coeff, s->spec, alpha, xv);
        std::memcpy(f_out, f.data(), sizeof(double) * f.size());
    });
}

ou_status ou_scalar_drift(const ou_model* m, double alpha, const double* x,
                          double* f_out) {
    return guarded([&] {
        if (!m || !x || !f_out) throw oudrift::Error("null argument");
        if (!m->pm.scalar)
            throw oudrift::Error("model has no scalar-friction closed form");
        oudrift::Vector xv = Eigen::Map<const oudrift::Vector>(x, m->pm.coeff.dim);
        oudrift::Vector f = oudrift::drift::scalar_drift(*m->pm.scalar, alpha, xv);
        std::memcpy(f_out, f.data(), sizeof(double) * f.size());
    });
}

ou_status ou_turbulence_drift(const ou_model* m, double alpha, const double* x,
                              double* total_out, double* centrifugal_out,
                              double* turbophoretic_out) {
    return guarded([&] {
        if (!m || !x) throw oudrift::Error("null argument");
        if (!m->pm.turbulence) throw oudrift::Error("model is not a turbulence model");
        oudrift::Vector xv = Eigen::Map<const oudrift::Vector>(x, m->pm.coeff.dim);
        oudrift::drift::TurbulenceDrift td =
            oudrift::drift::turbulence_drift(*m->pm.turbulence, alpha, xv);
        if (total_out)
            std::memcpy(total_out, td.total.data(), sizeof(double) * td.total.size());
        if (centrifugal_out)
            std::memcpy(centrifugal_out, td.centrifugal.data(),
                        sizeof(double) * td.centrifugal.size());
        if (turbophoretic_out)
            std::memcpy(turbophoretic_out, td.turbophoretic.data(),
                        sizeof(double) * td.turbophoretic.size());
    });
}

ou_status ou_run_coupled(const ou_model* m, const ou_noise* s, double T, double dt,
                         double eps, double mu, double alpha, const double* x0,
                         const double* v0, uint64_t seed, uint64_t trajectory_index,
                         double* sup_distance, double* terminal_pre,
                         double* terminal_limit, int* flagged) {
    return guarded([&] {
        if (!m || !s || !x0) throw oudrift::Error("null argument");
        const int d = m->pm.coeff.dim;
        oudrift::sde::SimConfig cfg;
        cfg.T = T;
        cfg.dt = dt;
        cfg.epsilon = eps;
        cfg.mu = mu;
        cfg.alpha = alpha;
        cfg.x0 = Eigen::Map<const oudrift::Vector>(x0, d);
        cfg.v0 = v0 ? oudrift::Vector(Eigen::Map<const oudrift::Vector>(v0, d))
                    : oudrift::Vector(oudrift::Vector::Zero(d));
        cfg.seed = seed;
        cfg.trajectory_index = trajectory_index;
        auto provider = oudrift::sde::make_drift_provider(m->pm, s->spec, alpha);
        oudrift::sde::CoupledResult r =
            oudrift::sde::run_coupled(cfg, m->pm.coeff, s->spec, provider);
        if (sup_distance) *sup_distance = r.sup_distance;
        if (terminal_pre)
            std::memcpy(terminal_pre, r.terminal_pre.data(), sizeof(double) * d);
        if (terminal_limit)
            std::memcpy(terminal_limit, r.terminal_limit.data(), sizeof(double) * d);
        if (flagged) *flagged = r.flagged ? 1 : 0;
    });
}

int ou_dispatch(const char* config_json, const char** summary_out) {
    try {
        if (!config_json) throw oudrift::Error("config is null");
        oudrift::cli::RunConfig cfg = oudrift::cli::parse_config(config_json);
        oudrift::cli::DispatchOutcome outcome = oudrift::cli::dispatch(cfg);
        g_summary = outcome.summary;
        if (summary_out) *summary_out = g_summary.c_str();
        g_last_error.clear();
        return outcome.exit_code;
    } catch (const std::exception& e) {
        set_error(e.what());
        if (summary_out) *summary_out = "";
        return 1;
    }
}

}  // extern "C"

#include <oudrift/oudrift.h>

#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <string>

namespace fs = std::filesystem;

TEST_CASE("c api: version and error state") {
    CHECK(std::strcmp(ou_version(), "0.1.0") == 0);
    CHECK(ou_model_create("nonsense", "{}") == nullptr);
    CHECK(std::string(ou_last_error()).find("unknown model") != std::string::npos);
}

TEST_CASE("c api: scalar pipeline through opaque handles") {
    ou_model* m = ou_model_create("scalar", R"({"lambda": 2, "sigma": 1})");
    REQUIRE(m != nullptr);
    CHECK(ou_model_dim(m) == 1);
    CHECK(ou_model_noise_dim(m) == 1);

    ou_noise* s = ou_noise_identity(1);
    REQUIRE(s != nullptr);
    double M = 0.0;
    REQUIRE(ou_noise_stationary_covariance(s, &M) == OU_OK);
    CHECK(M == doctest::Approx(0.5));

    double x = 0.0, L = 0.0, N = 0.0, aN = 0.0;
    REQUIRE(ou_drift_matrices(m, s, 1.0, &x, &M, &L, &N, &aN) == OU_OK);
    CHECK(L == doctest::Approx(1.0 / 6.0));
    CHECK(N == doctest::Approx(1.0 / 12.0));
    CHECK(aN == doctest::Approx(1.0 / 12.0));

    // alpha = infinity branch.
    REQUIRE(ou_drift_matrices(m, s, INFINITY, &x, &M, &L, &N, &aN) == OU_OK);
    CHECK(L == 0.0);
    CHECK(aN == doctest::Approx(0.25));

    ou_noise_destroy(s);
    ou_model_destroy(m);
}

TEST_CASE("c api: drifts") {
    ou_model* m = ou_model_create("scalar-affine", nullptr);
    ou_noise* s = ou_noise_identity(1);
    REQUIRE(m);
    REQUIRE(s);
    double x = 0.0, f = 0.0;
    REQUIRE(ou_inertial_drift(m, s, 1.0, &x, &f) == OU_OK);
    CHECK(f == doctest::Approx(-1.0 / 12.0));
    REQUIRE(ou_scalar_drift(m, 1.0, &x, &f) == OU_OK);
    CHECK(f == doctest::Approx(-1.0 / 12.0));
    CHECK(ou_turbulence_drift(m, 1.0, &x, &f, nullptr, nullptr) ==
          OU_ERROR_INVALID_ARGUMENT);
    ou_noise_destroy(s);
    ou_model_destroy(m);

    ou_model* v = ou_model_create("vortex", "{}");
    REQUIRE(v);
    double xv[2] = {1.0, 0.0};
    double total[2], centrifugal[2], turbo[2];
    REQUIRE(ou_turbulence_drift(v, 1.0, xv, total, centrifugal, turbo) == OU_OK);
    CHECK(total[0] == doctest::Approx(1.0));
    CHECK(total[1] == doctest::Approx(0.0));
    CHECK(turbo[0] == 0.0);
    ou_model_destroy(v);
}

TEST_CASE("c api: noise construction from row-major buffers") {
    const double A[4] = {2.0, 0.0, 0.0, 1.0};
    const double B[2] = {1.0, 1.0};
    ou_noise* s = ou_noise_create(2, 1, A, B);
    REQUIRE(s != nullptr);
    CHECK(ou_noise_n(s) == 2);
    CHECK(ou_noise_m(s) == 1);
    double M[4];
    REQUIRE(ou_noise_stationary_covariance(s, M) == OU_OK);
    CHECK(M[0] == doctest::Approx(0.25));
    CHECK(M[1] == doctest::Approx(1.0 / 3.0));
    CHECK(M[3] == doctest::Approx(0.5));
    ou_noise_destroy(s);

    const double bad[1] = {-1.0};
    CHECK(ou_noise_create(1, 1, bad, B) == nullptr);
    CHECK(std::string(ou_last_error()).find("positive real part") != std::string::npos);
}

TEST_CASE("c api: coupled run is deterministic") {
    ou_model* m = ou_model_create("scalar-sine", "{}");
    ou_noise* s = ou_noise_identity(1);
    REQUIRE(m);
    REQUIRE(s);
    double x0 = 0.0;
    double sup1 = 0.0, sup2 = 0.0, tp = 0.0, tl = 0.0;
    int flagged = 0;
    REQUIRE(ou_run_coupled(m, s, 0.5, 1e-3, 0.05, 0.05, 1.0, &x0, nullptr, 42, 7, &sup1,
                           &tp, &tl, &flagged) == OU_OK);
    REQUIRE(ou_run_coupled(m, s, 0.5, 1e-3, 0.05, 0.05, 1.0, &x0, nullptr, 42, 7, &sup2,
                           &tp, &tl, &flagged) == OU_OK);
    CHECK(sup1 == sup2);
    CHECK(sup1 > 0.0);
    CHECK(flagged == 0);
    ou_noise_destroy(s);
    ou_model_destroy(m);
}

TEST_CASE("c api: dispatch runs a config end to end") {
    fs::path dir = fs::temp_directory_path() / "oudrift_capi_dispatch";
    fs::remove_all(dir);
    std::string cfg = std::string(R"({"command": "matrices", "model": {"name": "scalar"},
                                     "alpha": 1, "out": ")") +
                      dir.string() + "\"}";
    const char* summary = nullptr;
    CHECK(ou_dispatch(cfg.c_str(), &summary) == 0);
    REQUIRE(summary != nullptr);
    CHECK(std::string(summary).find("M[0,0]") != std::string::npos);
    CHECK(fs::exists(dir / "report.json"));

    CHECK(ou_dispatch("{\"command\": \"warp\"}", nullptr) == 1);
    CHECK(std::string(ou_last_error()).find("unknown command") != std::string::npos);
}

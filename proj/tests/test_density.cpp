#include <doctest.h>

#include <cmath>
#include <random>

#include "psmfl/density.hpp"
#include "psmfl/errors.hpp"

using namespace psmfl;

namespace {

BehavioralDataset make_dataset(const Eigen::MatrixXd& rows,
                               const std::string& exec_id = "Test.f") {
    BehavioralDataset ds;
    ds.executable_id = exec_id;
    for (Eigen::Index j = 0; j < rows.cols(); ++j) {
        CodeElementRef ref;
        ref.executable_id = exec_id;
        ref.element_id = "f.c" + std::to_string(j);
        ref.role = Role::parameter;
        ref.value_kind = ValueKind::continuous;
        ds.columns.push_back(ref);
        ds.discrete_cardinalities.push_back(std::nullopt);
    }
    ds.rows = rows;
    return ds;
}

Eigen::MatrixXd gaussian_2d(Eigen::Index n, double rho, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::MatrixXd rows(n, 2);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double z1 = normal(rng);
        const double z2 = normal(rng);
        rows(i, 0) = z1;
        rows(i, 1) = rho * z1 + std::sqrt(1.0 - rho * rho) * z2;
    }
    return rows;
}

// Identity model: unit standardizer, untrained (zero-output) flow.
DensityModel identity_model(int d) {
    DensityModel model;
    model.executable_id = "Test.f";
    model.kind = ModelKind::nvp_flow;
    std::mt19937_64 rng(1);
    model.flow = RealNvpFlow(d, 2, 8, rng);
    model.standardizer.mean = Eigen::VectorXd::Zero(d);
    model.standardizer.scale = Eigen::VectorXd::Ones(d);
    model.standardizer.dequantize.assign(static_cast<std::size_t>(d), false);
    model.standardizer.degenerate.assign(static_cast<std::size_t>(d), false);
    for (int j = 0; j < d; ++j) {
        CodeElementRef ref;
        ref.executable_id = "Test.f";
        ref.element_id = "f.c" + std::to_string(j);
        ref.role = Role::parameter;
        model.columns.push_back(ref);
    }
    return model;
}

FitConfig quick_config(std::uint64_t seed = 1) {
    FitConfig config;
    config.epochs = 60;
    config.seed = seed;
    return config;
}

}  // namespace

TEST_CASE("untrained flow reproduces base-Gaussian log densities exactly") {
    auto model = identity_model(1);
    CHECK(model.log_prob(Eigen::VectorXd::Zero(1)) ==
          doctest::Approx(-0.9189385332046727).epsilon(1e-13));
    Eigen::VectorXd one(1);
    one << 1.0;
    CHECK(model.log_prob(one) == doctest::Approx(-1.4189385332046727).epsilon(1e-13));
}

TEST_CASE("standardization scale enters the jacobian as -log scale") {
    auto model = identity_model(1);
    model.standardizer.scale(0) = 4.0;
    Eigen::VectorXd x(1);
    x << 0.0;
    CHECK(model.log_det_jacobian(x) == doctest::Approx(-std::log(4.0)).epsilon(1e-13));
}

TEST_CASE("fit on 2D standard Gaussian reaches the analytic likelihood") {
    auto ds = make_dataset(gaussian_2d(5000, 0.0, 42));
    FitResult result = fit_with_validation(ds, quick_config());
    const double analytic = -2.8378770664093453;  // -(d/2)(1 + ln 2pi), d = 2
    CHECK(result.model.self_ll == doctest::Approx(analytic).epsilon(0.04));
    CHECK(std::abs(result.model.self_ll - analytic) < 0.1);
}

TEST_CASE("fit on correlated Gaussian beats the independence bound") {
    const double rho = 0.6;
    auto ds = make_dataset(gaussian_2d(5000, rho, 7));
    FitResult result = fit_with_validation(ds, quick_config(3));
    // True mean log-density: -(1 + ln 2pi) - 0.5 ln(1 - rho^2).
    const double analytic = -2.8378770664093453 - 0.5 * std::log(1.0 - rho * rho);
    CHECK(std::abs(result.model.self_ll - analytic) < 0.1);
}

TEST_CASE("training does not degrade validation likelihood") {
    auto ds = make_dataset(gaussian_2d(3000, 0.5, 9));
    FitResult result = fit_with_validation(ds, quick_config(5));
    const double final_ll = mean_log_likelihood(result.model, result.validation);
    CHECK(final_ll >= result.initial_validation_ll - 1e-9);
}

TEST_CASE("insufficient data is rejected with the executable named") {
    Eigen::MatrixXd rows = Eigen::MatrixXd::Random(5, 10);
    auto ds = make_dataset(rows, "Tiny.f");
    try {
        fit(ds, quick_config());
        FAIL("expected InsufficientDataError");
    } catch (const InsufficientDataError& ex) {
        CHECK(std::string(ex.what()).find("Tiny.f") != std::string::npos);
    }
}

TEST_CASE("fit is deterministic given dataset, config, and seed") {
    auto ds = make_dataset(gaussian_2d(500, 0.3, 13));
    FitConfig config = quick_config(21);
    config.epochs = 10;
    DensityModel a = fit(ds, config);
    DensityModel b = fit(ds, config);
    CHECK(a.to_json().dump() == b.to_json().dump());
}

TEST_CASE("self_ll equals mean_log_likelihood on the held-out split exactly") {
    auto ds = make_dataset(gaussian_2d(1000, 0.4, 17));
    FitConfig config = quick_config(2);
    config.epochs = 15;
    FitResult result = fit_with_validation(ds, config);
    CHECK(mean_log_likelihood(result.model, result.validation) == result.model.self_ll);
}

TEST_CASE("sampling matches training moments for the identity model") {
    auto model = identity_model(1);
    model.standardizer.mean(0) = 2.5;
    model.standardizer.scale(0) = 1.5;
    Eigen::MatrixXd draws = model.sample(100000, 99);
    const double mean = draws.col(0).mean();
    const double sd = std::sqrt((draws.col(0).array() - mean).square().mean());
    CHECK(std::abs(mean - 2.5) < 0.02);
    CHECK(std::abs(sd - 1.5) < 0.02);
}

TEST_CASE("sample count must be positive") {
    auto model = identity_model(2);
    CHECK_THROWS_AS(model.sample(0, 1), DataError);
}

TEST_CASE("log_prob of sampled rows is finite") {
    auto ds = make_dataset(gaussian_2d(800, 0.2, 19));
    FitConfig config = quick_config(4);
    config.epochs = 10;
    DensityModel model = fit(ds, config);
    Eigen::MatrixXd draws = model.sample(500, 12);
    Eigen::VectorXd lp = model.log_prob_rows(draws);
    for (Eigen::Index i = 0; i < lp.size(); ++i) CHECK(std::isfinite(lp(i)));
}

TEST_CASE("non-finite input is a domain error") {
    auto model = identity_model(2);
    Eigen::VectorXd row(2);
    row << 1.0, std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(model.log_prob(row), DomainError);
    CHECK_THROWS_AS(model.log_det_jacobian(row), DomainError);
}

TEST_CASE("d=1 density integrates to one") {
    std::mt19937_64 rng(23);
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::MatrixXd rows(2000, 1);
    // Bimodal: mixture of two shifted Gaussians.
    for (Eigen::Index i = 0; i < rows.rows(); ++i) {
        rows(i, 0) = normal(rng) + ((i % 2 == 0) ? -2.0 : 2.0);
    }
    FitConfig config = quick_config(8);
    config.epochs = 40;
    DensityModel model = fit(make_dataset(rows), config);

    const double mean = model.standardizer.mean(0);
    const double scale = model.standardizer.scale(0);
    const int steps = 4000;
    const double lo = mean - 8.0 * scale, hi = mean + 8.0 * scale;
    const double dx = (hi - lo) / steps;
    double integral = 0.0;
    for (int i = 0; i <= steps; ++i) {
        Eigen::VectorXd x(1);
        x << lo + i * dx;
        const double density = std::exp(model.log_prob(x));
        integral += (i == 0 || i == steps) ? 0.5 * density : density;
    }
    integral *= dx;
    CHECK(integral > 0.98);
    CHECK(integral < 1.02);
}

TEST_CASE("model serialization round-trips log densities bitwise") {
    auto ds = make_dataset(gaussian_2d(600, 0.5, 29));
    FitConfig config = quick_config(6);
    config.epochs = 8;
    DensityModel model = fit(ds, config);
    DensityModel reloaded = DensityModel::from_json(
        nlohmann::json::parse(model.to_json().dump()));
    Eigen::MatrixXd probe = gaussian_2d(50, 0.5, 31);
    Eigen::VectorXd a = model.log_prob_rows(probe);
    Eigen::VectorXd b = reloaded.log_prob_rows(probe);
    CHECK(a == b);
}

TEST_CASE("gaussian baseline fits a correlated Gaussian") {
    const double rho = 0.7;
    auto ds = make_dataset(gaussian_2d(4000, rho, 37));
    FitConfig config = quick_config(10);
    config.kind = ModelKind::gaussian_baseline;
    FitResult result = fit_with_validation(ds, config);
    const double analytic = -2.8378770664093453 - 0.5 * std::log(1.0 - rho * rho);
    CHECK(std::abs(result.model.self_ll - analytic) < 0.1);
}

TEST_CASE("degenerate columns are jittered and flagged") {
    Eigen::MatrixXd rows(200, 2);
    rows.col(0) = Eigen::VectorXd::Random(200);
    rows.col(1).setConstant(3.14);
    FitConfig config = quick_config(11);
    config.epochs = 5;
    DensityModel model = fit(make_dataset(rows), config);
    CHECK(model.standardizer.degenerate[1]);
    CHECK_FALSE(model.standardizer.degenerate[0]);
    CHECK(std::isfinite(model.self_ll));
}

TEST_CASE("mean_log_likelihood trivial values on the identity model") {
    auto model = identity_model(1);
    model.self_ll = -1.0;
    Eigen::MatrixXd one_point(1, 1);
    one_point << 0.0;
    auto ds1 = make_dataset(one_point);
    CHECK(mean_log_likelihood(model, ds1) ==
          doctest::Approx(-0.9189385332046727).epsilon(1e-13));

    Eigen::MatrixXd three(3, 1);
    three << 0.0, 1.0, -1.0;
    auto ds3 = make_dataset(three);
    CHECK(mean_log_likelihood(model, ds3) ==
          doctest::Approx(-1.2522718665379727).epsilon(1e-12));
}

TEST_CASE("mean_log_likelihood rejects mismatched columns") {
    auto model = identity_model(2);
    auto ds = make_dataset(Eigen::MatrixXd::Random(10, 2));
    ds.columns[1].element_id = "f.other";
    CHECK_THROWS_AS(mean_log_likelihood(model, ds), SchemaError);
}

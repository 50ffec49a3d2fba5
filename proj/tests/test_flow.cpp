#include <doctest.h>

#include <random>

#include <Eigen/LU>

#include "psmfl/flow.hpp"

using namespace psmfl;

namespace {

RealNvpFlow make_flow(int dim, int layers, int hidden, std::uint64_t seed,
                      double perturb = 0.0) {
    std::mt19937_64 rng(seed);
    RealNvpFlow flow(dim, layers, hidden, rng);
    if (perturb > 0.0) {
        std::normal_distribution<double> noise(0.0, perturb);
        flow.visit_params([&](auto& m) {
            for (Eigen::Index i = 0; i < m.rows(); ++i) {
                for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) += noise(rng);
            }
        });
    }
    return flow;
}

Eigen::MatrixXd random_points(Eigen::Index n, Eigen::Index d, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::MatrixXd x(n, d);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < d; ++j) x(i, j) = normal(rng);
    }
    return x;
}

// log|det| of the numerically differentiated Jacobian of the forward map.
double finite_difference_log_det(const RealNvpFlow& flow, const Eigen::VectorXd& x) {
    const Eigen::Index d = x.size();
    const double h = 1e-6;
    Eigen::MatrixXd jac(d, d);
    for (Eigen::Index j = 0; j < d; ++j) {
        Eigen::MatrixXd plus = x.transpose(), minus = x.transpose();
        plus(0, j) += h;
        minus(0, j) -= h;
        Eigen::MatrixXd f_plus = flow.forward(plus);
        Eigen::MatrixXd f_minus = flow.forward(minus);
        jac.col(j) = (f_plus - f_minus).transpose() / (2.0 * h);
    }
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(jac);
    return lu.matrixLU().diagonal().array().abs().log().sum();
}

}  // namespace

TEST_CASE("fresh flow is the identity map") {
    auto flow = make_flow(3, 4, 16, 1);
    Eigen::MatrixXd x = random_points(10, 3, 2);
    Eigen::VectorXd log_det;
    Eigen::MatrixXd z = flow.forward(x, &log_det);
    CHECK((z - x).cwiseAbs().maxCoeff() == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(log_det.cwiseAbs().maxCoeff() == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("identity flow log_prob matches the standard normal") {
    auto flow = make_flow(1, 2, 8, 1);
    Eigen::MatrixXd x(2, 1);
    x << 0.0, 1.0;
    Eigen::VectorXd lp = flow.log_prob(x);
    CHECK(lp(0) == doctest::Approx(-0.9189385332046727).epsilon(1e-12));
    CHECK(lp(1) == doctest::Approx(-1.4189385332046727).epsilon(1e-12));
}

TEST_CASE("masks and their complements cover every dimension") {
    auto flow = make_flow(5, 4, 8, 3);
    for (const auto& layer : flow.layers()) {
        for (Eigen::Index j = 0; j < 5; ++j) {
            const double m = layer.mask(j);
            CHECK((m == 0.0 || m == 1.0));
        }
    }
    // Consecutive layers alternate, so every dimension is transformed.
    for (Eigen::Index j = 0; j < 5; ++j) {
        double transformed = 0.0;
        for (const auto& layer : flow.layers()) transformed += 1.0 - layer.mask(j);
        CHECK(transformed > 0.0);
    }
}

TEST_CASE("invertibility: forward(inverse(z)) == z") {
    for (int d : {1, 2, 5}) {
        auto flow = make_flow(d, 4, 16, 17, 0.2);
        Eigen::MatrixXd z = random_points(1000, d, 23);
        Eigen::MatrixXd x = flow.inverse(z);
        Eigen::MatrixXd z2 = flow.forward(x);
        CHECK((z2 - z).cwiseAbs().maxCoeff() < 1e-6);
    }
}

TEST_CASE("analytic log-det matches finite differences") {
    for (int d : {2, 3, 4}) {
        auto flow = make_flow(d, 4, 16, 31 + static_cast<unsigned>(d), 0.2);
        Eigen::MatrixXd x = random_points(5, d, 41);
        Eigen::VectorXd log_det;
        flow.forward(x, &log_det);
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
            const double fd = finite_difference_log_det(flow, x.row(i).transpose());
            const double rel = std::abs(log_det(i) - fd) /
                               std::max({std::abs(fd), std::abs(log_det(i)), 1e-3});
            CHECK(rel < 1e-4);
        }
    }
}

TEST_CASE("analytic gradients match central finite differences") {
    auto flow = make_flow(3, 2, 8, 53, 0.2);
    Eigen::MatrixXd batch = random_points(8, 3, 59);

    RealNvpFlow grad = flow.zeros_like();
    const double base_loss = flow.nll_and_grad(batch, grad);
    CHECK(std::isfinite(base_loss));

    std::vector<double*> params, grads;
    std::vector<Eigen::Index> sizes;
    flow.visit_params([&](auto& m) {
        params.push_back(m.data());
        sizes.push_back(m.size());
    });
    grad.visit_params([&](auto& m) { grads.push_back(m.data()); });

    auto loss_at = [&]() { return -flow.log_prob(batch).mean(); };
    for (std::size_t p = 0; p < params.size(); ++p) {
        for (Eigen::Index i = 0; i < sizes[p]; ++i) {
            double& theta = params[p][i];
            const double saved = theta;
            const double h = 1e-5 * std::max(1.0, std::abs(saved));
            theta = saved + h;
            const double up = loss_at();
            theta = saved - h;
            const double down = loss_at();
            theta = saved;
            const double fd = (up - down) / (2.0 * h);
            const double analytic = grads[p][i];
            const double rel = std::abs(analytic - fd) /
                               std::max({std::abs(analytic), std::abs(fd), 1e-3});
            CHECK(rel < 1e-4);
        }
    }
}

TEST_CASE("log_prob of perturbed flow stays finite for extreme inputs") {
    auto flow = make_flow(2, 4, 16, 71, 0.3);
    Eigen::MatrixXd x(3, 2);
    x << 50.0, -50.0, 0.0, 100.0, -100.0, 0.0;
    Eigen::VectorXd lp = flow.log_prob(x);
    for (Eigen::Index i = 0; i < lp.size(); ++i) CHECK(std::isfinite(lp(i)));
}

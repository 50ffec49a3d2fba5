#include "psmfl/mlp.hpp"

namespace psmfl {

void Mlp::init(int in, int hidden, int out, std::mt19937_64& rng) {
    auto fill_normal = [&rng](Eigen::MatrixXd& m, double stddev) {
        std::normal_distribution<double> dist(0.0, stddev);
        for (Eigen::Index i = 0; i < m.rows(); ++i) {
            for (Eigen::Index j = 0; j < m.cols(); ++j) {
                m(i, j) = dist(rng);
            }
        }
    };
    w1.resize(in, hidden);
    w2.resize(hidden, hidden);
    w3 = Eigen::MatrixXd::Zero(hidden, out);
    fill_normal(w1, 1.0 / std::sqrt(static_cast<double>(in)));
    fill_normal(w2, 1.0 / std::sqrt(static_cast<double>(hidden)));
    b1 = Eigen::RowVectorXd::Zero(hidden);
    b2 = Eigen::RowVectorXd::Zero(hidden);
    b3 = Eigen::RowVectorXd::Zero(out);
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& x, Cache* cache) const {
    Eigen::MatrixXd h1 = ((x * w1).rowwise() + b1).array().tanh();
    Eigen::MatrixXd h2 = ((h1 * w2).rowwise() + b2).array().tanh();
    Eigen::MatrixXd out = (h2 * w3).rowwise() + b3;
    if (cache != nullptr) {
        cache->x = x;
        cache->h1 = std::move(h1);
        cache->h2 = std::move(h2);
        return out;
    }
    return out;
}

Eigen::MatrixXd Mlp::backward(const Cache& cache, const Eigen::MatrixXd& d_out,
                              Mlp& grad) const {
    grad.w3 += cache.h2.transpose() * d_out;
    grad.b3 += d_out.colwise().sum();
    Eigen::MatrixXd d_h2 = d_out * w3.transpose();
    Eigen::MatrixXd d_z2 =
        d_h2.array() * (1.0 - cache.h2.array().square());
    grad.w2 += cache.h1.transpose() * d_z2;
    grad.b2 += d_z2.colwise().sum();
    Eigen::MatrixXd d_h1 = d_z2 * w2.transpose();
    Eigen::MatrixXd d_z1 =
        d_h1.array() * (1.0 - cache.h1.array().square());
    grad.w1 += cache.x.transpose() * d_z1;
    grad.b1 += d_z1.colwise().sum();
    return d_z1 * w1.transpose();
}

void Mlp::set_zero_like(const Mlp& shape) {
    w1 = Eigen::MatrixXd::Zero(shape.w1.rows(), shape.w1.cols());
    w2 = Eigen::MatrixXd::Zero(shape.w2.rows(), shape.w2.cols());
    w3 = Eigen::MatrixXd::Zero(shape.w3.rows(), shape.w3.cols());
    b1 = Eigen::RowVectorXd::Zero(shape.b1.cols());
    b2 = Eigen::RowVectorXd::Zero(shape.b2.cols());
    b3 = Eigen::RowVectorXd::Zero(shape.b3.cols());
}

}  // namespace psmfl

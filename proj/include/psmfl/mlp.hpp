#pragma once

#include <random>

#include <Eigen/Core>

namespace psmfl {

// Dense net: in -> tanh(hidden) -> tanh(hidden) -> out. Output layer is
// zero-initialized so a fresh coupling layer is the identity map.
struct Mlp {
    Eigen::MatrixXd w1, w2, w3;
    Eigen::RowVectorXd b1, b2, b3;

    struct Cache {
        Eigen::MatrixXd x, h1, h2;
    };

    void init(int in, int hidden, int out, std::mt19937_64& rng);

    // x is batch x in; returns batch x out.
    Eigen::MatrixXd forward(const Eigen::MatrixXd& x, Cache* cache = nullptr) const;

    // Accumulates parameter gradients into `grad` (same shapes) and returns
    // the gradient with respect to the input.
    Eigen::MatrixXd backward(const Cache& cache, const Eigen::MatrixXd& d_out,
                             Mlp& grad) const;

    void set_zero_like(const Mlp& shape);

    template <typename Fn>
    void visit_params(Fn&& fn) {
        fn(w1);
        fn(b1);
        fn(w2);
        fn(b2);
        fn(w3);
        fn(b3);
    }
};

}  // namespace psmfl

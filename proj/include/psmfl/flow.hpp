#pragma once

#include <random>
#include <vector>

#include <Eigen/Core>

#include "psmfl/mlp.hpp"

namespace psmfl {

// Affine coupling layer. Dimensions with mask == 1 pass through unchanged and
// condition the scale/translation nets; the rest are transformed
//   z = x * exp(s(x_masked)) + t(x_masked).
struct CouplingLayer {
    Eigen::RowVectorXd mask;  // 0/1 per dimension
    Mlp s_net;
    Mlp t_net;
};

// RealNVP-style flow mapping data to a standard-normal latent space.
// forward() is the data -> latent direction used for density evaluation;
// inverse() is used for sampling. Scale outputs are soft-clamped to
// +-scale_clamp to keep training stable.
class RealNvpFlow {
  public:
    RealNvpFlow() = default;
    RealNvpFlow(int dim, int n_layers, int hidden_units, std::mt19937_64& rng,
                double scale_clamp = 5.0);

    int dim() const { return dim_; }
    std::vector<CouplingLayer>& layers() { return layers_; }
    const std::vector<CouplingLayer>& layers() const { return layers_; }
    double scale_clamp() const { return scale_clamp_; }
    void set_scale_clamp(double c) { scale_clamp_ = c; }

    // x: batch x d. Fills per-row log|det df/dx| when log_det != nullptr.
    Eigen::MatrixXd forward(const Eigen::MatrixXd& x,
                            Eigen::VectorXd* log_det = nullptr) const;
    Eigen::MatrixXd inverse(const Eigen::MatrixXd& z) const;

    // Per-row log-density under the flow + standard-normal base.
    Eigen::VectorXd log_prob(const Eigen::MatrixXd& x) const;

    // Mean negative log-likelihood of the batch; accumulates parameter
    // gradients into `grad` (a zeroed flow of identical shape).
    double nll_and_grad(const Eigen::MatrixXd& x, RealNvpFlow& grad) const;

    RealNvpFlow zeros_like() const;

    template <typename Fn>
    void visit_params(Fn&& fn) {
        for (auto& layer : layers_) {
            layer.s_net.visit_params(fn);
            layer.t_net.visit_params(fn);
        }
    }

    std::size_t param_count();

  private:
    int dim_ = 0;
    double scale_clamp_ = 5.0;
    std::vector<CouplingLayer> layers_;
};

}  // namespace psmfl

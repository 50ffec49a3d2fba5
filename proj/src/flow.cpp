#include "psmfl/flow.hpp"

#include <cmath>

namespace psmfl {

namespace {
constexpr double kLog2Pi = 1.8378770664093453;
}

RealNvpFlow::RealNvpFlow(int dim, int n_layers, int hidden_units, std::mt19937_64& rng,
                         double scale_clamp)
    : dim_(dim), scale_clamp_(scale_clamp) {
    layers_.resize(static_cast<std::size_t>(n_layers));
    for (int k = 0; k < n_layers; ++k) {
        auto& layer = layers_[static_cast<std::size_t>(k)];
        layer.mask = Eigen::RowVectorXd::Zero(dim);
        // Alternating parity masks; together each pair covers every dimension.
        for (int j = 0; j < dim; ++j) {
            layer.mask(j) = ((j + k) % 2 == 0) ? 1.0 : 0.0;
        }
        layer.s_net.init(dim, hidden_units, dim, rng);
        layer.t_net.init(dim, hidden_units, dim, rng);
    }
}

Eigen::MatrixXd RealNvpFlow::forward(const Eigen::MatrixXd& x,
                                     Eigen::VectorXd* log_det) const {
    Eigen::MatrixXd cur = x;
    if (log_det != nullptr) *log_det = Eigen::VectorXd::Zero(x.rows());
    for (const auto& layer : layers_) {
        Eigen::ArrayXXd mask = layer.mask.replicate(cur.rows(), 1).array();
        Eigen::MatrixXd xm = (cur.array() * mask).matrix();
        Eigen::ArrayXXd s_raw = layer.s_net.forward(xm).array();
        Eigen::ArrayXXd s =
            scale_clamp_ * (s_raw / scale_clamp_).tanh() * (1.0 - mask);
        Eigen::ArrayXXd t = layer.t_net.forward(xm).array() * (1.0 - mask);
        cur = (cur.array() * s.exp() + t).matrix();
        if (log_det != nullptr) *log_det += s.rowwise().sum().matrix();
    }
    return cur;
}

Eigen::MatrixXd RealNvpFlow::inverse(const Eigen::MatrixXd& z) const {
    Eigen::MatrixXd cur = z;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) {
        Eigen::ArrayXXd mask = it->mask.replicate(cur.rows(), 1).array();
        Eigen::MatrixXd zm = (cur.array() * mask).matrix();
        Eigen::ArrayXXd s_raw = it->s_net.forward(zm).array();
        Eigen::ArrayXXd s =
            scale_clamp_ * (s_raw / scale_clamp_).tanh() * (1.0 - mask);
        Eigen::ArrayXXd t = it->t_net.forward(zm).array() * (1.0 - mask);
        cur = ((cur.array() - t) * (-s).exp()).matrix();
    }
    return cur;
}

Eigen::VectorXd RealNvpFlow::log_prob(const Eigen::MatrixXd& x) const {
    Eigen::VectorXd log_det;
    Eigen::MatrixXd z = forward(x, &log_det);
    Eigen::VectorXd base =
        (-0.5 * z.array().square().rowwise().sum() - 0.5 * kLog2Pi * dim_).matrix();
    return base + log_det;
}

double RealNvpFlow::nll_and_grad(const Eigen::MatrixXd& x, RealNvpFlow& grad) const {
    const Eigen::Index batch = x.rows();
    const double inv_batch = 1.0 / static_cast<double>(batch);

    struct LayerCache {
        Eigen::ArrayXXd mask, s, es, input;
        Mlp::Cache s_cache, t_cache;
    };
    std::vector<LayerCache> caches(layers_.size());

    Eigen::MatrixXd cur = x;
    Eigen::VectorXd log_det = Eigen::VectorXd::Zero(batch);
    for (std::size_t k = 0; k < layers_.size(); ++k) {
        const auto& layer = layers_[k];
        auto& cache = caches[k];
        cache.mask = layer.mask.replicate(batch, 1).array();
        cache.input = cur.array();
        Eigen::MatrixXd xm = (cur.array() * cache.mask).matrix();
        Eigen::ArrayXXd s_raw = layer.s_net.forward(xm, &cache.s_cache).array();
        cache.s = scale_clamp_ * (s_raw / scale_clamp_).tanh() * (1.0 - cache.mask);
        Eigen::ArrayXXd t = layer.t_net.forward(xm, &cache.t_cache).array() *
                            (1.0 - cache.mask);
        cache.es = cache.s.exp();
        cur = (cache.input * cache.es + t).matrix();
        log_det += cache.s.rowwise().sum().matrix();
    }

    double mean_log_prob =
        (-0.5 * cur.array().square().rowwise().sum() - 0.5 * kLog2Pi * dim_ +
         log_det.array())
            .mean();

    // d(mean NLL)/dz = z / batch; d/d(log_det) = -1/batch per row.
    Eigen::MatrixXd d_cur = cur * inv_batch;
    const double d_log_det = -inv_batch;
    for (std::size_t k = layers_.size(); k-- > 0;) {
        const auto& layer = layers_[k];
        auto& cache = caches[k];
        auto& layer_grad = grad.layers()[k];

        Eigen::ArrayXXd inv_mask = 1.0 - cache.mask;
        Eigen::ArrayXXd d_t = d_cur.array() * inv_mask;
        Eigen::ArrayXXd d_s =
            (d_cur.array() * cache.input * cache.es + d_log_det) * inv_mask;
        // soft clamp derivative: d/dr [c tanh(r/c)] = 1 - (s/c)^2
        Eigen::ArrayXXd d_s_raw =
            d_s * (1.0 - (cache.s / scale_clamp_).square());

        Eigen::MatrixXd d_xm =
            layer.s_net.backward(cache.s_cache, d_s_raw.matrix(), layer_grad.s_net);
        d_xm +=
            layer.t_net.backward(cache.t_cache, d_t.matrix(), layer_grad.t_net);
        d_cur = (d_cur.array() * cache.es + d_xm.array() * cache.mask).matrix();
    }
    return -mean_log_prob;
}

RealNvpFlow RealNvpFlow::zeros_like() const {
    RealNvpFlow out;
    out.dim_ = dim_;
    out.scale_clamp_ = scale_clamp_;
    out.layers_.resize(layers_.size());
    for (std::size_t k = 0; k < layers_.size(); ++k) {
        out.layers_[k].mask = layers_[k].mask;
        out.layers_[k].s_net.set_zero_like(layers_[k].s_net);
        out.layers_[k].t_net.set_zero_like(layers_[k].t_net);
    }
    return out;
}

std::size_t RealNvpFlow::param_count() {
    std::size_t count = 0;
    visit_params([&count](auto& m) { count += static_cast<std::size_t>(m.size()); });
    return count;
}

}  // namespace psmfl

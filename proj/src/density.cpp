#include "psmfl/density.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include <Eigen/Cholesky>

#include "psmfl/errors.hpp"

namespace psmfl {

using nlohmann::json;

namespace {

constexpr double kLog2Pi = 1.8378770664093453;
// Fixed seed for evaluation-side dequantization so repeated evaluations of
// the same dataset are identical.
constexpr std::uint64_t kEvalSeed = 0x9e3779b97f4a7c15ULL;

json matrix_to_json(const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

Eigen::MatrixXd matrix_from_json(const json& j) {
    const auto n_rows = static_cast<Eigen::Index>(j.size());
    if (n_rows == 0) return {};
    const auto n_cols = static_cast<Eigen::Index>(j.at(0).size());
    Eigen::MatrixXd m(n_rows, n_cols);
    for (Eigen::Index i = 0; i < n_rows; ++i) {
        for (Eigen::Index jj = 0; jj < n_cols; ++jj) {
            m(i, jj) = j.at(static_cast<std::size_t>(i)).at(static_cast<std::size_t>(jj))
                           .get<double>();
        }
    }
    return m;
}

json vector_to_json(const Eigen::VectorXd& v) {
    json out = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
    return out;
}

Eigen::VectorXd vector_from_json(const json& j) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        v(i) = j.at(static_cast<std::size_t>(i)).get<double>();
    }
    return v;
}

json mlp_to_json(const Mlp& net) {
    return json{{"w1", matrix_to_json(net.w1)}, {"b1", vector_to_json(net.b1.transpose())},
                {"w2", matrix_to_json(net.w2)}, {"b2", vector_to_json(net.b2.transpose())},
                {"w3", matrix_to_json(net.w3)}, {"b3", vector_to_json(net.b3.transpose())}};
}

Mlp mlp_from_json(const json& j) {
    Mlp net;
    net.w1 = matrix_from_json(j.at("w1"));
    net.w2 = matrix_from_json(j.at("w2"));
    net.w3 = matrix_from_json(j.at("w3"));
    net.b1 = vector_from_json(j.at("b1")).transpose();
    net.b2 = vector_from_json(j.at("b2")).transpose();
    net.b3 = vector_from_json(j.at("b3")).transpose();
    return net;
}

json column_to_json(const CodeElementRef& col) {
    json j{{"x", col.executable_id},
           {"e", col.element_id},
           {"role", to_string(col.role)},
           {"kind", to_string(col.value_kind)}};
    if (col.cardinality) j["card"] = *col.cardinality;
    return j;
}

CodeElementRef column_from_json(const json& j) {
    CodeElementRef col;
    col.executable_id = j.at("x").get<std::string>();
    col.element_id = j.at("e").get<std::string>();
    col.role = role_from_string(j.at("role").get<std::string>());
    col.value_kind = value_kind_from_string(j.at("kind").get<std::string>());
    if (j.contains("card")) col.cardinality = j.at("card").get<int>();
    return col;
}

// Minimal Adam over the flow's flattened parameters.
class AdamState {
  public:
    AdamState(RealNvpFlow& flow, double lr) : lr_(lr) {
        flow.visit_params([this](auto& m) {
            params_.push_back({m.data(), m.size()});
        });
        std::size_t total = 0;
        for (const auto& [ptr, n] : params_) total += static_cast<std::size_t>(n);
        m_.assign(total, 0.0);
        v_.assign(total, 0.0);
    }

    void step(RealNvpFlow& grad) {
        std::vector<std::pair<const double*, Eigen::Index>> grads;
        grad.visit_params([&grads](auto& m) {
            grads.push_back({m.data(), m.size()});
        });
        ++t_;
        const double bc1 = 1.0 - std::pow(beta1_, t_);
        const double bc2 = 1.0 - std::pow(beta2_, t_);
        std::size_t offset = 0;
        for (std::size_t p = 0; p < params_.size(); ++p) {
            double* theta = params_[p].first;
            const double* g = grads[p].first;
            const auto n = static_cast<std::size_t>(params_[p].second);
            for (std::size_t i = 0; i < n; ++i) {
                double& m = m_[offset + i];
                double& v = v_[offset + i];
                m = beta1_ * m + (1.0 - beta1_) * g[i];
                v = beta2_ * v + (1.0 - beta2_) * g[i] * g[i];
                theta[i] -= lr_ * (m / bc1) / (std::sqrt(v / bc2) + eps_);
            }
            offset += n;
        }
    }

  private:
    double lr_;
    double beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
    long t_ = 0;
    std::vector<std::pair<double*, Eigen::Index>> params_;
    std::vector<double> m_, v_;
};

}  // namespace

const char* to_string(ModelKind kind) {
    return kind == ModelKind::nvp_flow ? "nvp_flow" : "gaussian_baseline";
}

ModelKind model_kind_from_string(const std::string& s) {
    if (s == "nvp_flow") return ModelKind::nvp_flow;
    if (s == "gaussian_baseline") return ModelKind::gaussian_baseline;
    throw SchemaError("unknown model kind: " + s);
}

void FitConfig::validate() const {
    if (coupling_layers < 1 || hidden_units < 1 || epochs < 1 || batch_size < 1 ||
        early_stop_patience < 1) {
        throw DataError("fit config counts must be >= 1");
    }
    if (!(learning_rate > 0)) throw DataError("learning rate must be positive");
    if (!(validation_fraction > 0 && validation_fraction < 1)) {
        throw DataError("validation fraction must be in (0, 1)");
    }
    if (!(scale_clamp > 0)) throw DataError("scale clamp must be positive");
    if (train_jitter < 0) throw DataError("train jitter must be non-negative");
}

json FitConfig::to_json() const {
    return json{{"coupling_layers", coupling_layers},
                {"hidden_units", hidden_units},
                {"epochs", epochs},
                {"learning_rate", learning_rate},
                {"batch_size", batch_size},
                {"validation_fraction", validation_fraction},
                {"seed", seed},
                {"early_stop_patience", early_stop_patience},
                {"kind", psmfl::to_string(kind)},
                {"scale_clamp", scale_clamp},
                {"train_jitter", train_jitter}};
}

FitConfig FitConfig::from_json(const json& j) {
    FitConfig c;
    c.coupling_layers = j.at("coupling_layers").get<int>();
    c.hidden_units = j.at("hidden_units").get<int>();
    c.epochs = j.at("epochs").get<int>();
    c.learning_rate = j.at("learning_rate").get<double>();
    c.batch_size = j.at("batch_size").get<int>();
    c.validation_fraction = j.at("validation_fraction").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.early_stop_patience = j.at("early_stop_patience").get<int>();
    c.kind = model_kind_from_string(j.at("kind").get<std::string>());
    c.scale_clamp = j.at("scale_clamp").get<double>();
    c.train_jitter = j.at("train_jitter").get<double>();
    return c;
}

double Standardizer::log_det() const {
    return -scale.array().log().sum();
}

Eigen::MatrixXd Standardizer::apply(const Eigen::MatrixXd& raw) const {
    return ((raw.rowwise() - mean.transpose()).array().rowwise() /
            scale.transpose().array())
        .matrix();
}

Eigen::MatrixXd Standardizer::invert(const Eigen::MatrixXd& standardized) const {
    return (standardized.array().rowwise() * scale.transpose().array()).matrix()
               .rowwise() +
           mean.transpose();
}

Eigen::VectorXd GaussianParams::log_prob(const Eigen::MatrixXd& rows) const {
    const Eigen::Index d = mean.size();
    const double log_det_chol = cholesky_lower.diagonal().array().log().sum();
    Eigen::MatrixXd centered = rows.rowwise() - mean.transpose();
    // Solve L y^T = centered^T; quadratic form is ||y||^2 per row.
    Eigen::MatrixXd y = cholesky_lower.triangularView<Eigen::Lower>().solve(
        centered.transpose());
    Eigen::VectorXd quad =
        y.array().square().colwise().sum().matrix().transpose();
    return (-0.5 * quad.array() - 0.5 * kLog2Pi * d - log_det_chol).matrix();
}

Eigen::VectorXd DensityModel::log_prob_rows(const Eigen::MatrixXd& raw_rows) const {
    if (raw_rows.cols() != dim()) {
        throw SchemaError("row dimension " + std::to_string(raw_rows.cols()) +
                          " does not match model dimension " + std::to_string(dim()));
    }
    if (!raw_rows.allFinite()) throw DomainError("non-finite input to log_prob");
    Eigen::MatrixXd std_rows = standardizer.apply(raw_rows);
    Eigen::VectorXd lp = kind == ModelKind::nvp_flow ? flow.log_prob(std_rows)
                                                     : gaussian.log_prob(std_rows);
    return (lp.array() + standardizer.log_det()).matrix();
}

double DensityModel::log_prob(const Eigen::VectorXd& raw_row) const {
    return log_prob_rows(raw_row.transpose())(0);
}

double DensityModel::log_det_jacobian(const Eigen::VectorXd& raw_row) const {
    if (raw_row.size() != dim()) {
        throw SchemaError("row dimension does not match model dimension");
    }
    if (!raw_row.allFinite()) throw DomainError("non-finite input to log_det_jacobian");
    if (kind != ModelKind::nvp_flow) return standardizer.log_det();
    Eigen::MatrixXd std_row = standardizer.apply(raw_row.transpose());
    Eigen::VectorXd ld;
    flow.forward(std_row, &ld);
    return ld(0) + standardizer.log_det();
}

Eigen::MatrixXd DensityModel::sample(int count, std::uint64_t seed) const {
    if (count < 1) throw DataError("sample count must be >= 1");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::MatrixXd z(count, dim());
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
        for (Eigen::Index j = 0; j < z.cols(); ++j) z(i, j) = normal(rng);
    }
    Eigen::MatrixXd std_rows;
    if (kind == ModelKind::nvp_flow) {
        std_rows = flow.inverse(z);
    } else {
        std_rows = (gaussian.cholesky_lower * z.transpose()).transpose().rowwise() +
                   gaussian.mean.transpose();
    }
    return standardizer.invert(std_rows);
}

Eigen::MatrixXd evaluation_rows(const DensityModel& model,
                                const BehavioralDataset& dataset) {
    Eigen::MatrixXd rows = dataset.rows;
    std::mt19937_64 rng(kEvalSeed);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    for (Eigen::Index j = 0; j < rows.cols(); ++j) {
        if (j < static_cast<Eigen::Index>(model.standardizer.dequantize.size()) &&
            model.standardizer.dequantize[static_cast<std::size_t>(j)]) {
            for (Eigen::Index i = 0; i < rows.rows(); ++i) rows(i, j) += u01(rng);
        }
    }
    return rows;
}

FitResult fit_with_validation(const BehavioralDataset& dataset, const FitConfig& config) {
    config.validate();
    const Eigen::Index n = dataset.n();
    const Eigen::Index d = dataset.d();
    const Eigen::Index min_n = std::max<Eigen::Index>(10, 2 * d);
    if (n < min_n) {
        throw InsufficientDataError("executable " + dataset.executable_id + ": N=" +
                                    std::to_string(n) + " below minimum " +
                                    std::to_string(min_n));
    }

    std::mt19937_64 rng(config.seed);
    std::uniform_real_distribution<double> u01(0.0, 1.0);

    std::vector<Eigen::Index> indices(static_cast<std::size_t>(n));
    std::iota(indices.begin(), indices.end(), 0);
    std::shuffle(indices.begin(), indices.end(), rng);
    const auto n_val = std::clamp<Eigen::Index>(
        static_cast<Eigen::Index>(std::lround(config.validation_fraction *
                                              static_cast<double>(n))),
        1, n - 1);
    const Eigen::Index n_train = n - n_val;

    Eigen::MatrixXd train(n_train, d), val_raw(n_val, d);
    std::vector<Eigen::Index> val_indices(indices.begin() + n_train, indices.end());
    for (Eigen::Index i = 0; i < n_train; ++i) {
        train.row(i) = dataset.rows.row(indices[static_cast<std::size_t>(i)]);
    }
    for (Eigen::Index i = 0; i < n_val; ++i) {
        val_raw.row(i) = dataset.rows.row(val_indices[static_cast<std::size_t>(i)]);
    }
    if (!train.allFinite() || !val_raw.allFinite()) {
        throw DomainError("executable " + dataset.executable_id +
                          ": dataset contains non-finite values");
    }

    Standardizer std_;
    std_.dequantize.resize(static_cast<std::size_t>(d));
    std_.degenerate.resize(static_cast<std::size_t>(d));
    for (Eigen::Index j = 0; j < d; ++j) {
        std_.dequantize[static_cast<std::size_t>(j)] =
            dataset.columns[static_cast<std::size_t>(j)].value_kind ==
            ValueKind::discrete;
        if (std_.dequantize[static_cast<std::size_t>(j)]) {
            for (Eigen::Index i = 0; i < n_train; ++i) train(i, j) += u01(rng);
        }
    }
    for (Eigen::Index j = 0; j < d; ++j) {
        const double mean = train.col(j).mean();
        const double var = (train.col(j).array() - mean).square().sum() /
                           static_cast<double>(std::max<Eigen::Index>(1, n_train - 1));
        if (var < 1e-12) {
            std_.degenerate[static_cast<std::size_t>(j)] = true;
            for (Eigen::Index i = 0; i < n_train; ++i) train(i, j) += 1e-6 * u01(rng);
        }
    }
    std_.mean.resize(d);
    std_.scale.resize(d);
    for (Eigen::Index j = 0; j < d; ++j) {
        std_.mean(j) = train.col(j).mean();
        double var = (train.col(j).array() - std_.mean(j)).square().sum() /
                     static_cast<double>(std::max<Eigen::Index>(1, n_train - 1));
        std_.scale(j) = var > 1e-24 ? std::sqrt(var) : 1.0;
    }

    Eigen::MatrixXd train_std = std_.apply(train);
    if (config.train_jitter > 0) {
        std::normal_distribution<double> jitter(0.0, config.train_jitter);
        for (Eigen::Index i = 0; i < train_std.rows(); ++i) {
            for (Eigen::Index j = 0; j < train_std.cols(); ++j) {
                train_std(i, j) += jitter(rng);
            }
        }
    }

    // Internal early-stopping view of the validation split (training-side
    // dequantization noise; the recorded self_ll uses the shared
    // mean-log-likelihood path instead).
    Eigen::MatrixXd val_internal = val_raw;
    for (Eigen::Index j = 0; j < d; ++j) {
        if (std_.dequantize[static_cast<std::size_t>(j)]) {
            for (Eigen::Index i = 0; i < n_val; ++i) val_internal(i, j) += u01(rng);
        }
    }
    Eigen::MatrixXd val_std = std_.apply(val_internal);

    FitResult result;
    DensityModel& model = result.model;
    model.executable_id = dataset.executable_id;
    model.kind = config.kind;
    model.columns = dataset.columns;
    model.standardizer = std_;
    model.config = config;

    if (config.kind == ModelKind::gaussian_baseline) {
        GaussianParams g;
        g.mean = train_std.colwise().mean().transpose();
        Eigen::MatrixXd centered = train_std.rowwise() - g.mean.transpose();
        Eigen::MatrixXd cov = centered.transpose() * centered /
                              static_cast<double>(std::max<Eigen::Index>(1, n_train - 1));
        cov += 1e-9 * Eigen::MatrixXd::Identity(d, d);
        Eigen::LLT<Eigen::MatrixXd> llt(cov);
        if (llt.info() != Eigen::Success) {
            throw TrainingError("covariance of " + dataset.executable_id +
                                " is not positive definite");
        }
        g.cholesky_lower = llt.matrixL();
        model.gaussian = std::move(g);
        result.initial_validation_ll =
            model.gaussian.log_prob(val_std).mean() + std_.log_det();
        result.epochs_run = 0;
    } else {
        RealNvpFlow flow(static_cast<int>(d), config.coupling_layers,
                         config.hidden_units, rng, config.scale_clamp);
        RealNvpFlow grad = flow.zeros_like();
        AdamState adam(flow, config.learning_rate);

        double best_val = flow.log_prob(val_std).mean();
        result.initial_validation_ll = best_val + std_.log_det();
        RealNvpFlow best = flow;
        int patience = 0;

        std::vector<Eigen::Index> order(static_cast<std::size_t>(n_train));
        std::iota(order.begin(), order.end(), 0);
        for (int epoch = 1; epoch <= config.epochs; ++epoch) {
            std::shuffle(order.begin(), order.end(), rng);
            for (Eigen::Index start = 0; start < n_train; start += config.batch_size) {
                const Eigen::Index size =
                    std::min<Eigen::Index>(config.batch_size, n_train - start);
                Eigen::MatrixXd batch(size, d);
                for (Eigen::Index i = 0; i < size; ++i) {
                    batch.row(i) = train_std.row(order[static_cast<std::size_t>(start + i)]);
                }
                grad.visit_params([](auto& m) { m.setZero(); });
                const double loss = flow.nll_and_grad(batch, grad);
                if (!std::isfinite(loss)) {
                    throw TrainingError("training diverged for " + dataset.executable_id +
                                        " (non-finite loss); try a lower learning rate");
                }
                adam.step(grad);
            }
            result.epochs_run = epoch;
            const double val_ll = flow.log_prob(val_std).mean();
            if (!std::isfinite(val_ll)) {
                throw TrainingError("training diverged for " + dataset.executable_id +
                                    " (non-finite validation likelihood)");
            }
            if (val_ll > best_val) {
                best_val = val_ll;
                best = flow;
                patience = 0;
            } else if (++patience >= config.early_stop_patience) {
                break;
            }
        }
        model.flow = std::move(best);
    }

    result.validation.executable_id = dataset.executable_id;
    result.validation.columns = dataset.columns;
    result.validation.rows = std::move(val_raw);
    result.validation.discrete_cardinalities = dataset.discrete_cardinalities;
    result.validation_indices = std::move(val_indices);
    model.self_ll = mean_log_likelihood(model, result.validation);
    return result;
}

DensityModel fit(const BehavioralDataset& dataset, const FitConfig& config) {
    return fit_with_validation(dataset, config).model;
}

double mean_log_likelihood(const DensityModel& model, const BehavioralDataset& dataset) {
    if (dataset.d() != model.dim() ||
        dataset.columns.size() != model.columns.size()) {
        throw SchemaError("dataset for " + dataset.executable_id +
                          " does not match model dimension");
    }
    for (std::size_t j = 0; j < model.columns.size(); ++j) {
        if (dataset.columns[j].element_id != model.columns[j].element_id) {
            throw SchemaError("dataset column '" + dataset.columns[j].element_id +
                              "' does not match model column '" +
                              model.columns[j].element_id + "'");
        }
    }
    const Eigen::Index n = dataset.n();
    if (n < 1) throw DataError("empty dataset for " + dataset.executable_id);

    Eigen::MatrixXd rows = evaluation_rows(model, dataset);
    std::vector<Eigen::Index> finite;
    finite.reserve(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
        if (rows.row(i).allFinite()) finite.push_back(i);
    }
    Eigen::MatrixXd kept(static_cast<Eigen::Index>(finite.size()), rows.cols());
    for (Eigen::Index i = 0; i < kept.rows(); ++i) {
        kept.row(i) = rows.row(finite[static_cast<std::size_t>(i)]);
    }
    double total = 0.0;
    Eigen::Index included = 0;
    if (kept.rows() > 0) {
        Eigen::VectorXd lp = model.log_prob_rows(kept);
        for (Eigen::Index i = 0; i < lp.size(); ++i) {
            if (std::isfinite(lp(i))) {
                total += lp(i);
                ++included;
            }
        }
    }
    const Eigen::Index excluded = n - included;
    if (excluded > 0 &&
        static_cast<double>(excluded) > 0.01 * static_cast<double>(n)) {
        throw DataError("dataset for " + dataset.executable_id + " excluded " +
                        std::to_string(excluded) + " of " + std::to_string(n) +
                        " rows (>1%); alt trace is incompatible");
    }
    return total / static_cast<double>(included);
}

json DensityModel::to_json() const {
    json j{{"format", "psmfl-model/1"},
           {"executable", executable_id},
           {"kind", psmfl::to_string(kind)},
           {"dimension", dim()},
           {"base", "standard_normal"},
           {"self_ll", self_ll},
           {"fit_config", config.to_json()}};
    json cols = json::array();
    for (const auto& col : columns) cols.push_back(column_to_json(col));
    j["columns"] = std::move(cols);
    j["preprocessing"] = json{{"mean", vector_to_json(standardizer.mean)},
                              {"scale", vector_to_json(standardizer.scale)},
                              {"dequantize", standardizer.dequantize},
                              {"degenerate", standardizer.degenerate}};
    if (kind == ModelKind::nvp_flow) {
        json layers = json::array();
        for (const auto& layer : flow.layers()) {
            layers.push_back(json{{"mask", vector_to_json(layer.mask.transpose())},
                                  {"s_net", mlp_to_json(layer.s_net)},
                                  {"t_net", mlp_to_json(layer.t_net)}});
        }
        j["flow"] = json{{"scale_clamp", flow.scale_clamp()}, {"layers", std::move(layers)}};
    } else {
        j["gaussian"] = json{{"mean", vector_to_json(gaussian.mean)},
                             {"cholesky_lower", matrix_to_json(gaussian.cholesky_lower)}};
    }
    return j;
}

DensityModel DensityModel::from_json(const json& j) {
    if (j.at("format").get<std::string>() != "psmfl-model/1") {
        throw SchemaError("unsupported model format: " +
                          j.at("format").get<std::string>());
    }
    DensityModel model;
    model.executable_id = j.at("executable").get<std::string>();
    model.kind = model_kind_from_string(j.at("kind").get<std::string>());
    model.self_ll = j.at("self_ll").get<double>();
    model.config = FitConfig::from_json(j.at("fit_config"));
    for (const auto& col : j.at("columns")) {
        model.columns.push_back(column_from_json(col));
    }
    const json& pre = j.at("preprocessing");
    model.standardizer.mean = vector_from_json(pre.at("mean"));
    model.standardizer.scale = vector_from_json(pre.at("scale"));
    model.standardizer.dequantize = pre.at("dequantize").get<std::vector<bool>>();
    model.standardizer.degenerate = pre.at("degenerate").get<std::vector<bool>>();
    if (model.kind == ModelKind::nvp_flow) {
        const json& f = j.at("flow");
        std::mt19937_64 rng(0);
        RealNvpFlow flow(static_cast<int>(model.standardizer.dim()),
                         static_cast<int>(f.at("layers").size()), 1, rng,
                         f.at("scale_clamp").get<double>());
        for (std::size_t k = 0; k < flow.layers().size(); ++k) {
            const json& lj = f.at("layers").at(k);
            auto& layer = flow.layers()[k];
            layer.mask = vector_from_json(lj.at("mask")).transpose();
            layer.s_net = mlp_from_json(lj.at("s_net"));
            layer.t_net = mlp_from_json(lj.at("t_net"));
        }
        model.flow = std::move(flow);
    } else {
        model.gaussian.mean = vector_from_json(j.at("gaussian").at("mean"));
        model.gaussian.cholesky_lower =
            matrix_from_json(j.at("gaussian").at("cholesky_lower"));
    }
    return model;
}

}  // namespace psmfl

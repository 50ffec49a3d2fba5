#include "psmfl/univariate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "psmfl/errors.hpp"

namespace psmfl {

using nlohmann::json;

namespace {
constexpr double kLog2Pi = 1.8378770664093453;
constexpr double kMinBandwidth = 1e-6;
}  // namespace

const char* to_string(UnivariateKind kind) {
    return kind == UnivariateKind::gaussian_kde ? "gaussian_kde" : "histogram_discrete";
}

UnivariateKind univariate_kind_from_string(const std::string& s) {
    if (s == "gaussian_kde") return UnivariateKind::gaussian_kde;
    if (s == "histogram_discrete") return UnivariateKind::histogram_discrete;
    throw SchemaError("unknown univariate kind: " + s);
}

double silverman_bandwidth(const Eigen::VectorXd& values) {
    const auto n = values.size();
    if (n < 2) return 0.0;
    const double mean = values.mean();
    const double sd = std::sqrt((values.array() - mean).square().sum() /
                                static_cast<double>(n - 1));
    std::vector<double> sorted(values.data(), values.data() + n);
    std::sort(sorted.begin(), sorted.end());
    auto quantile = [&sorted](double q) {
        const double pos = q * static_cast<double>(sorted.size() - 1);
        const auto lo = static_cast<std::size_t>(pos);
        const auto hi = std::min(lo + 1, sorted.size() - 1);
        const double frac = pos - static_cast<double>(lo);
        return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
    };
    const double iqr = quantile(0.75) - quantile(0.25);
    double spread = sd;
    if (iqr > 0) spread = std::min(sd, iqr / 1.34);
    return 0.9 * spread * std::pow(static_cast<double>(n), -0.2);
}

double UnivariateModel::log_pdf(double value) const {
    if (!std::isfinite(value)) throw DomainError("non-finite value in log_pdf");
    if (kind == UnivariateKind::histogram_discrete) {
        const auto code = static_cast<long long>(value);
        if (code < 0 || code >= static_cast<long long>(probs.size())) {
            return unseen_log_prob;
        }
        return std::log(probs[static_cast<std::size_t>(code)]);
    }
    // log of (1/(n h)) sum phi((v - x_i)/h), via logsumexp
    const double h = bandwidth;
    const auto n = points.size();
    Eigen::ArrayXd expo = -0.5 * ((value - points.array()) / h).square();
    const double m = expo.maxCoeff();
    const double sum = (expo - m).exp().sum();
    return m + std::log(sum) - std::log(static_cast<double>(n)) - std::log(h) -
           0.5 * kLog2Pi;
}

double UnivariateModel::mean_log_likelihood(const Eigen::VectorXd& values) const {
    if (values.size() < 1) throw DataError("empty value vector");
    double total = 0.0;
    for (Eigen::Index i = 0; i < values.size(); ++i) total += log_pdf(values(i));
    return total / static_cast<double>(values.size());
}

UnivariateModel fit_kde(const Eigen::VectorXd& values) {
    if (values.size() < 1) throw DataError("empty value vector");
    UnivariateModel model;
    model.kind = UnivariateKind::gaussian_kde;
    model.points = values;
    model.bandwidth = silverman_bandwidth(values);
    if (model.bandwidth < kMinBandwidth) {
        // Constant (or near-constant) column; keep a sliver of width so the
        // density stays proper and flag it.
        model.bandwidth = kMinBandwidth;
        model.degenerate = true;
    }
    return model;
}

UnivariateModel fit_discrete(const Eigen::VectorXd& codes, int cardinality,
                             double alpha) {
    if (codes.size() < 1) throw DataError("empty value vector");
    if (cardinality < 1) throw DataError("cardinality must be >= 1");
    UnivariateModel model;
    model.kind = UnivariateKind::histogram_discrete;
    std::vector<double> counts(static_cast<std::size_t>(cardinality), 0.0);
    for (Eigen::Index i = 0; i < codes.size(); ++i) {
        const auto code = static_cast<long long>(codes(i));
        if (code < 0 || code >= cardinality) {
            throw SchemaError("code " + std::to_string(code) +
                              " outside declared cardinality " +
                              std::to_string(cardinality));
        }
        counts[static_cast<std::size_t>(code)] += 1.0;
    }
    const double denom = static_cast<double>(codes.size()) +
                         alpha * static_cast<double>(cardinality);
    model.probs.resize(counts.size());
    std::size_t nonzero = 0;
    for (std::size_t k = 0; k < counts.size(); ++k) {
        model.probs[k] = (counts[k] + alpha) / denom;
        if (counts[k] > 0) ++nonzero;
    }
    model.unseen_log_prob = std::log(alpha / denom);
    model.degenerate = nonzero <= 1;
    return model;
}

UnivariateModel fit_univariate(const BehavioralDataset& dataset,
                               const CodeElementRef& element, std::uint64_t seed,
                               double validation_fraction) {
    const Eigen::Index col = dataset.column_index(element.element_id);
    if (col < 0) {
        throw SchemaError("element " + element.element_id + " is not a column of " +
                          dataset.executable_id);
    }
    const Eigen::Index n = dataset.n();
    if (n < 2) throw InsufficientDataError("need at least 2 rows for " + element.element_id);

    std::mt19937_64 rng(seed);
    std::vector<Eigen::Index> indices(static_cast<std::size_t>(n));
    std::iota(indices.begin(), indices.end(), 0);
    std::shuffle(indices.begin(), indices.end(), rng);
    const auto n_val = std::clamp<Eigen::Index>(
        static_cast<Eigen::Index>(std::lround(validation_fraction *
                                              static_cast<double>(n))),
        1, n - 1);
    const Eigen::Index n_train = n - n_val;

    Eigen::VectorXd train(n_train), val(n_val);
    for (Eigen::Index i = 0; i < n_train; ++i) {
        train(i) = dataset.rows(indices[static_cast<std::size_t>(i)], col);
    }
    for (Eigen::Index i = 0; i < n_val; ++i) {
        val(i) = dataset.rows(indices[static_cast<std::size_t>(n_train + i)], col);
    }

    UnivariateModel model;
    if (element.value_kind == ValueKind::discrete) {
        if (!element.cardinality) {
            throw SchemaError("discrete element " + element.element_id +
                              " has no declared cardinality");
        }
        model = fit_discrete(train, *element.cardinality);
    } else {
        model = fit_kde(train);
    }
    model.element = element;
    model.self_ll = model.mean_log_likelihood(val);
    return model;
}

json UnivariateModel::to_json() const {
    json j{{"kind", psmfl::to_string(kind)},
           {"element",
            json{{"x", element.executable_id},
                 {"e", element.element_id},
                 {"role", psmfl::to_string(element.role)},
                 {"vkind", psmfl::to_string(element.value_kind)}}},
           {"degenerate", degenerate},
           {"self_ll", self_ll}};
    if (element.cardinality) j["element"]["card"] = *element.cardinality;
    if (kind == UnivariateKind::gaussian_kde) {
        json pts = json::array();
        for (Eigen::Index i = 0; i < points.size(); ++i) pts.push_back(points(i));
        j["points"] = std::move(pts);
        j["bandwidth"] = bandwidth;
    } else {
        j["probs"] = probs;
        j["unseen_log_prob"] = unseen_log_prob;
    }
    return j;
}

UnivariateModel UnivariateModel::from_json(const json& j) {
    UnivariateModel model;
    model.kind = univariate_kind_from_string(j.at("kind").get<std::string>());
    const json& e = j.at("element");
    model.element.executable_id = e.at("x").get<std::string>();
    model.element.element_id = e.at("e").get<std::string>();
    model.element.role = role_from_string(e.at("role").get<std::string>());
    model.element.value_kind = value_kind_from_string(e.at("vkind").get<std::string>());
    if (e.contains("card")) model.element.cardinality = e.at("card").get<int>();
    model.degenerate = j.at("degenerate").get<bool>();
    model.self_ll = j.at("self_ll").get<double>();
    if (model.kind == UnivariateKind::gaussian_kde) {
        const json& pts = j.at("points");
        model.points.resize(static_cast<Eigen::Index>(pts.size()));
        for (Eigen::Index i = 0; i < model.points.size(); ++i) {
            model.points(i) = pts.at(static_cast<std::size_t>(i)).get<double>();
        }
        model.bandwidth = j.at("bandwidth").get<double>();
    } else {
        model.probs = j.at("probs").get<std::vector<double>>();
        model.unseen_log_prob = j.at("unseen_log_prob").get<double>();
    }
    return model;
}

}  // namespace psmfl

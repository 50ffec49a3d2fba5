#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "psmfl/dataset.hpp"

namespace psmfl {

enum class UnivariateKind { gaussian_kde, histogram_discrete };

const char* to_string(UnivariateKind kind);
UnivariateKind univariate_kind_from_string(const std::string& s);

// Per-element marginal estimator: Gaussian KDE (Silverman bandwidth) for
// continuous columns, Laplace-smoothed frequency table for discrete ones.
struct UnivariateModel {
    CodeElementRef element;
    UnivariateKind kind = UnivariateKind::gaussian_kde;

    // gaussian_kde
    Eigen::VectorXd points;
    double bandwidth = 0.0;

    // histogram_discrete
    std::vector<double> probs;   // sums to 1 after smoothing
    double unseen_log_prob = 0;  // mass assigned to out-of-range codes

    bool degenerate = false;  // constant training column
    double self_ll = std::numeric_limits<double>::quiet_NaN();

    double log_pdf(double value) const;
    double mean_log_likelihood(const Eigen::VectorXd& values) const;

    nlohmann::json to_json() const;
    static UnivariateModel from_json(const nlohmann::json& j);
};

// Silverman's rule of thumb: 0.9 * min(sd, iqr/1.34) * n^(-1/5).
double silverman_bandwidth(const Eigen::VectorXd& values);

// Low-level fits on explicit value vectors (no held-out split).
UnivariateModel fit_kde(const Eigen::VectorXd& values);
UnivariateModel fit_discrete(const Eigen::VectorXd& codes, int cardinality,
                             double alpha = 1.0);

// Fits on a shuffled training split and records self_ll on the rest.
// Deterministic given seed.
UnivariateModel fit_univariate(const BehavioralDataset& dataset,
                               const CodeElementRef& element,
                               std::uint64_t seed = 1,
                               double validation_fraction = 0.2);

}  // namespace psmfl

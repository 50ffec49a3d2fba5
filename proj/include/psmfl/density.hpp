#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "psmfl/dataset.hpp"
#include "psmfl/flow.hpp"

namespace psmfl {

enum class ModelKind { nvp_flow, gaussian_baseline };

const char* to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& s);

struct FitConfig {
    int coupling_layers = 4;
    int hidden_units = 32;
    int epochs = 60;
    double learning_rate = 1e-3;
    int batch_size = 256;
    double validation_fraction = 0.2;
    std::uint64_t seed = 1;
    int early_stop_patience = 10;
    ModelKind kind = ModelKind::nvp_flow;
    double scale_clamp = 5.0;
    // Gaussian noise (in standardized units) added to training rows only;
    // keeps fits well-conditioned when columns duplicate each other, as
    // parameter/property-write pairs routinely do.
    double train_jitter = 1e-3;

    void validate() const;
    nlohmann::json to_json() const;
    static FitConfig from_json(const nlohmann::json& j);
};

// Frozen per-column affine preprocessing. Statistics come from the null
// training split only; alt data is standardized with the same numbers.
struct Standardizer {
    Eigen::VectorXd mean;
    Eigen::VectorXd scale;
    std::vector<bool> dequantize;  // discrete columns get +U[0,1) before use
    std::vector<bool> degenerate;  // near-constant columns, jittered per fit

    Eigen::Index dim() const { return mean.size(); }
    // log|det| of x -> (x - mean) / scale, i.e. -sum log scale.
    double log_det() const;
    Eigen::MatrixXd apply(const Eigen::MatrixXd& raw) const;
    Eigen::MatrixXd invert(const Eigen::MatrixXd& standardized) const;
};

struct GaussianParams {
    Eigen::VectorXd mean;            // in standardized space
    Eigen::MatrixXd cholesky_lower;  // of the (ridged) covariance
    Eigen::VectorXd log_prob(const Eigen::MatrixXd& rows) const;
};

// Fitted multivariate density for one executable.
struct DensityModel {
    std::string executable_id;
    ModelKind kind = ModelKind::nvp_flow;
    std::vector<CodeElementRef> columns;
    Standardizer standardizer;
    RealNvpFlow flow;         // kind == nvp_flow
    GaussianParams gaussian;  // kind == gaussian_baseline
    double self_ll = std::numeric_limits<double>::quiet_NaN();
    FitConfig config;

    Eigen::Index dim() const { return standardizer.dim(); }

    // Natural-log density of raw-unit rows, including the standardization
    // Jacobian. Throws DomainError on non-finite input.
    Eigen::VectorXd log_prob_rows(const Eigen::MatrixXd& raw_rows) const;
    double log_prob(const Eigen::VectorXd& raw_row) const;
    // log|det| of the full data -> latent map at the given row.
    double log_det_jacobian(const Eigen::VectorXd& raw_row) const;
    // Draws in raw units; deterministic given seed.
    Eigen::MatrixXd sample(int count, std::uint64_t seed) const;

    nlohmann::json to_json() const;
    static DensityModel from_json(const nlohmann::json& j);
};

struct FitResult {
    DensityModel model;
    // Held-out rows (raw units) the recorded self_ll was computed on.
    BehavioralDataset validation;
    std::vector<Eigen::Index> validation_indices;
    double initial_validation_ll = 0.0;  // before any training step
    int epochs_run = 0;
};

// Throws InsufficientDataError when N < max(10, 2d) and TrainingError on
// divergent optimization. Deterministic given (dataset, config).
FitResult fit_with_validation(const BehavioralDataset& dataset, const FitConfig& config);
DensityModel fit(const BehavioralDataset& dataset, const FitConfig& config);

// Converts raw dataset rows to the model's input convention: discrete
// columns get deterministic +U[0,1) dequantization noise.
Eigen::MatrixXd evaluation_rows(const DensityModel& model, const BehavioralDataset& dataset);

// (1/N) sum_i log_prob(row_i). Rows with non-finite values are excluded; more
// than 1% excluded is an error. Column order must match the model exactly.
double mean_log_likelihood(const DensityModel& model, const BehavioralDataset& dataset);

}  // namespace psmfl

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "setchoice/market.hpp"
#include "setchoice/matrix.hpp"
#include "setchoice/mlp.hpp"

namespace setchoice {

// Multinomial logit fit via the log share inversion
//   ln(s_j / s_0) = alpha * price_j + beta . x_j
// solved by least squares (no intercept; the outside good absorbs the level).
struct MnlFit {
    double alpha = 0.0;
    std::vector<double> beta;

    std::vector<double> predict(const Matrix& x) const;
    Predictor predictor() const;
};

MnlFit fit_mnl(const std::vector<const Market*>& train);

// Random-coefficients logit fit by simulated share matching: coefficients
// coef_i = means + exp(log_sds) * zeta_i over R frozen standard normal draws,
// objective is mean squared share error, minimized by Adam on
// (means, log_sds).
struct RclFit {
    std::vector<double> means;    // alpha then beta_1..K
    std::vector<double> log_sds;  // same layout
    Matrix zeta;                  // R x (1+K) frozen draws
    std::vector<double> loss_history;
    std::vector<std::string> warnings;

    size_t k_in() const { return means.size(); }
    Matrix coef_matrix() const;
    std::vector<double> predict(const Matrix& x) const;
    Predictor predictor() const;
};

struct RclFitConfig {
    size_t R = 500;
    size_t epochs = 400;
    double lr = 0.05;
    uint64_t seed = 33;
};

RclFit fit_rcl(const std::vector<const Market*>& train, const RclFitConfig& cfg = {});

// Mean squared share error of the simulated-share objective at the fit's
// current parameters (exposed so nesting against the MNL objective can be
// checked directly).
double rcl_sse(const RclFit& fit, const std::vector<const Market*>& markets);

// Stacked-input feedforward baseline: the whole market's (price, features)
// rows concatenated in product order feed one net that emits all J shares.
// The input width bakes in J, so markets with a different product count are
// a structural error.
struct StackedNpModel {
    MlpParams mlp;
    size_t J = 0;
    size_t k_cols = 0; // feature columns per product, price included
    size_t layers = 0;
    size_t nodes = 0;
    double lr = 0.0;
    size_t epochs = 0;
    double cv_mse = 0.0;

    std::vector<double> predict(const Market& mk) const;
    Predictor predictor() const;
};

struct StackedNpGrid {
    std::vector<size_t> layers{3, 4, 5};
    std::vector<size_t> nodes{64, 128, 256};
    std::vector<double> lrs{1e-2, 1e-3, 1e-4};
    std::vector<size_t> epochs{1, 2, 4};
    size_t folds = 5;
    uint64_t seed = 71;
};

StackedNpModel fit_stacked_np(const std::vector<const Market*>& train,
                              const StackedNpGrid& grid = {});

struct MeanPredictor {
    double mean = 0.0;

    Predictor predictor() const;
};

MeanPredictor fit_mean(const std::vector<const Market*>& train);

// Mean over all (market, product) cells of squared share prediction error.
double mean_sq_share_error(const Predictor& pred, const std::vector<const Market*>& markets);

nlohmann::json mnl_to_json(const MnlFit& fit);
MnlFit mnl_from_json(const nlohmann::json& j);
nlohmann::json rcl_to_json(const RclFit& fit);
RclFit rcl_from_json(const nlohmann::json& j);
nlohmann::json stacked_np_to_json(const StackedNpModel& m);
StackedNpModel stacked_np_from_json(const nlohmann::json& j);
nlohmann::json mean_to_json(const MeanPredictor& m);
MeanPredictor mean_from_json(const nlohmann::json& j);

} // namespace setchoice

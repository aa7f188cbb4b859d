#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "json.hpp"
#include "setchoice/deepset.hpp"
#include "setchoice/market.hpp"
#include "setchoice/mlp.hpp"
#include "setchoice/simgen.hpp"

namespace setchoice {

// First stage of the control-function correction: regress price on product
// characteristics and instruments, keep the residuals.
enum class FirstStageSpec { ols, mlp };

const char* first_stage_name(FirstStageSpec s);
FirstStageSpec first_stage_from_name(const std::string& s);

struct FirstStageHyper {
    std::vector<size_t> hidden{32, 32};
    double lr = 1e-3;
    size_t epochs = 200;
    uint64_t seed = 97;
};

struct FirstStageFit {
    FirstStageSpec spec = FirstStageSpec::ols;
    std::vector<double> coef; // ols: intercept, x1..xK, then instrument columns
    MlpParams net;            // mlp spec only
    std::vector<std::vector<double>> residuals; // per market, row-aligned
    std::vector<size_t> market_sizes;           // alignment fingerprint
    double r2 = 0.0;
};

FirstStageFit fit_first_stage(const Dataset& ds, FirstStageSpec spec,
                              const FirstStageHyper& hyper = {});

// Copy of the dataset with the residual appended as one more feature column
// (so both own and competitor featurizations see it); mu_col marks it.
Dataset augment_with_residuals(const Dataset& ds, const FirstStageFit& fit);

// m(w; f) = f_j(own price shifted, competitors unchanged) - f_j(observed).
double moment_price_change(const Predictor& pred, const Market& mk, size_t j,
                           const PriceShift& shift);

// Optional per-row moment scale c_jt (empty = 1 everywhere). Rows may carry
// scale 0; they then contribute only the alpha^2 pull toward zero.
using RowScale = std::function<double(const Market&, size_t)>;

// Riesz representer alpha(z) for the price-shift moment, as a deep-set net
// with identity output over the same featurization as the demand model,
// trained on mean[alpha(z)^2 - 2 c (alpha(z shifted) - alpha(z))].
struct RieszHyper {
    DeepSetArch arch{{32, 32}, 16, {32, 32}, Activation::identity};
    double lr = 1e-3;
    size_t epochs = 300;
    size_t batch_markets = 0;
    uint64_t seed = 53;
};

struct RieszModel {
    DeepSetModel net;
    PriceShift shift;
};

std::vector<double> riesz_values(const RieszModel& m, const Market& mk);

struct RieszFit {
    RieszModel model;
    std::vector<double> loss_history;
    std::vector<std::string> warnings;
};

RieszFit fit_riesz(const std::vector<const Market*>& train, const PriceShift& shift,
                   const RieszHyper& hyper, const RowScale& scale = {});

double riesz_loss(const RieszModel& m, const std::vector<const Market*>& markets,
                  const RowScale& scale = {});

// Which estimand the cross-fit targets: the own-price-shift moment, optional
// per-row scaling, and which rows enter the score average.
struct MomentSpec {
    PriceShift shift{PriceShift::Kind::pct, 0.01};
    RowScale scale;                                        // empty = 1
    std::function<bool(const Market&, size_t)> score_row;  // empty = all rows
};

struct CrossfitHyper {
    size_t folds = 5;
    DeepSetArch pi_arch;
    TrainHyper pi_hyper;
    RieszHyper riesz_hyper;
    uint64_t seed = 7;
    bool plugin_only = false; // force alpha = 0 (no debiasing correction)
    Predictor pi_override;    // diagnostic hook: use this instead of training pi
};

struct InferenceResult {
    double theta = 0.0;
    double V = 0.0;
    double se = 0.0;
    double ci_lo = 0.0;
    double ci_hi = 0.0;
    size_t L = 0;
    size_t n = 0;            // scored rows
    double plugin_theta = 0.0; // mean moment only, no correction term
    double plugin_se = 0.0;
    std::vector<double> psi; // centered scores, dataset row order
    std::vector<std::string> warnings;
};

nlohmann::json inference_to_json(const InferenceResult& r);

// L-fold cross-fitting: per fold, train the demand model and the Riesz net on
// the complement (seeds keyed to the held-out markets' ids, so fold order
// cannot matter), score held-out rows, and pool in dataset order.
InferenceResult crossfit_debiased(const Dataset& ds, const MomentSpec& moment,
                                  const CrossfitHyper& hyper);

// Several estimands over one dataset: the per-fold demand model is trained
// once and shared, the Riesz net is refit per moment (scales differ).
std::vector<InferenceResult> crossfit_debiased_multi(const Dataset& ds,
                                                     const std::vector<MomentSpec>& moments,
                                                     const CrossfitHyper& hyper);

struct CoverageConfig {
    SimConfig preset;
    size_t n_sims = 50;
    PriceShift shift{PriceShift::Kind::pct, 0.01};
    CrossfitHyper hyper;
    uint64_t seed = 11;
    size_t theta0_samples = 400000; // joint (market, consumer-draw) samples
    size_t threads = 0;             // 0: SETCHOICE_THREADS or 1
};

struct CoverageRow {
    size_t sim = 0;
    double theta = 0.0;
    double se = 0.0;
    double ci_lo = 0.0;
    double ci_hi = 0.0;
    bool covered = false;
    double plugin_theta = 0.0;
    double plugin_se = 0.0;
};

struct CoverageResult {
    double theta0 = 0.0;
    double coverage = 0.0;   // fraction of successful sims whose CI contains theta0
    double mean_bias = 0.0;
    double skew = 0.0;        // skewness of (theta - theta0)/se
    double plugin_coverage = 0.0;
    double plugin_skew = 0.0;
    std::vector<CoverageRow> rows;
    std::vector<std::string> warnings; // failed sims, excluded from the rate
};

CoverageResult coverage_experiment(const CoverageConfig& cfg);

} // namespace setchoice

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "setchoice/baselines.hpp"
#include "setchoice/deepset.hpp"
#include "setchoice/market.hpp"
#include "setchoice/simgen.hpp"

namespace setchoice {

// Entry (j,k): percent change of product j's predicted share when product k's
// price moves by the spec, divided by the percent price move. Entries that
// cannot be formed (zero base share, or zero price under a percent spec) are
// NaN and listed in `undefined` rather than silently zeroed.
struct ElasticityMatrix {
    Matrix e;
    std::vector<std::pair<size_t, size_t>> undefined;
    PriceShift spec;
};

ElasticityMatrix elasticity_matrix(const Predictor& pred, const Market& mk,
                                   const PriceShift& spec);

// (mean |pred-truth|, sqrt(mean (pred-truth)^2))
std::pair<double, double> mae_rmse(const std::vector<double>& pred,
                                   const std::vector<double>& truth);

struct MetricRow {
    std::string dgp;
    size_t J = 0;
    size_t M = 0;
    size_t K = 0;
    std::string estimator;
    std::string metric; // share | own_elasticity | cross_elasticity | new_product_share
    double mae = 0.0;
    double rmse = 0.0;
    size_t n_obs = 0;
};

struct BenchmarkConfig {
    SimConfig sim;
    size_t reps = 20;
    double train_frac = 0.8;
    std::vector<std::string> estimators{"deepset", "mnl", "rcl", "np", "mean"};
    bool elasticities = true;
    bool new_product = false; // evaluate share errors on J+1 augmented test markets
    double pct = 0.01;        // elasticity price step
    TrainHyper deepset_hyper;
    DeepSetArch deepset_arch;
    RclFitConfig rcl_cfg;
    StackedNpGrid np_grid;
};

struct BenchmarkResult {
    std::vector<MetricRow> rows;
    std::vector<std::string> warnings; // per-estimator failures, skipped entries
};

// For each replication: simulate, split by market, fit every requested
// estimator on train, pool test-set share and elasticity errors across
// replications into one MetricRow per (estimator, metric).
BenchmarkResult benchmark_run(const BenchmarkConfig& cfg);

// Plot-ready own-elasticity curve: one row per (market, product, estimator),
// plus estimator="truth" rows, on the selected markets.
struct ElastCurveRow {
    std::string estimator;
    std::string market_id;
    size_t product = 0;
    double price = 0.0;
    double elasticity = 0.0;
};

std::vector<ElastCurveRow> own_elasticity_curve(
    const std::vector<std::pair<std::string, Predictor>>& predictors, const TruthModel& truth,
    const Dataset& ds, const std::vector<size_t>& market_idx, double pct);

} // namespace setchoice

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "setchoice/autodata.hpp"
#include "setchoice/baselines.hpp"
#include "setchoice/causal.hpp"
#include "setchoice/elasticity.hpp"

namespace setchoice {

std::string setchoice_version();

// One declarative config drives every command; the CLI builds it from a JSON
// file plus flag overrides. config_from_json validates strictly: unknown
// keys, bad types and bad enum values are ConfigErrors before any work runs.
struct RunnerConfig {
    std::string command;
    std::string out_dir = "out";
    std::string preset = "baseline-rcl";
    std::string data; // input CSV; replaces simulation where allowed
    uint64_t seed = 1;

    SimConfig sim; // resolved preset plus dgp-block overrides

    // benchmark / train
    std::vector<std::string> estimators{"deepset", "mnl", "rcl", "np", "mean"};
    size_t reps = 10;
    double train_frac = 0.8;
    bool new_product = false;
    bool elasticity_curve = false;
    double pct = 0.01;
    TrainHyper train_hyper;
    DeepSetArch arch;
    RclFitConfig rcl_cfg;
    StackedNpGrid np_grid;

    // infer / coverage
    PriceShift shift{PriceShift::Kind::pct, 0.01};
    size_t folds = 5;
    RieszHyper riesz;
    bool plugin_only = false;
    size_t sims = 50;
    size_t theta0_samples = 400000;
    size_t threads = 0;

    // empirical
    std::string iv = "blp"; // blp | none
    FirstStageSpec first_stage = FirstStageSpec::ols;
    bool synthetic_auto = false;
    SyntheticAutoConfig auto_cfg;
    bool categories = true;

    nlohmann::json echo; // original document, reproduced in the manifest
};

RunnerConfig config_from_json(const nlohmann::json& doc);

struct RunOutput {
    std::vector<std::string> files; // relative to out_dir, manifest last
    std::vector<std::string> warnings;
};

// Dispatches on cfg.command, writes every artifact atomically under
// cfg.out_dir, and finishes with manifest.json (version, config echo, seeds,
// outputs, warnings). No timestamps anywhere, so a rerun of the same config
// on the same build reproduces every file byte for byte.
RunOutput run_experiment(const RunnerConfig& cfg);

// Empirical pipeline pieces, exposed for tests: fits the demand model on the
// (optionally residual-augmented) markets and evaluates per-car own-price
// elasticities for a $1,000 increase.
struct EmpiricalFit {
    AutoMarkets am;            // raw markets (residual-augmented when corrected)
    FirstStageFit first_stage; // populated when iv != none
    bool corrected = false;
    Standardizer scaler; // the net is trained on standardized features
    Dataset scaled;
    DeepSetModel net;
    std::vector<std::vector<double>> elasticity; // per market, per row
    std::vector<std::string> warnings;
};

EmpiricalFit run_empirical_fit(const std::vector<AutoRecord>& records, const std::string& iv,
                               FirstStageSpec first_stage, const DeepSetArch& arch,
                               const TrainHyper& hyper);

} // namespace setchoice

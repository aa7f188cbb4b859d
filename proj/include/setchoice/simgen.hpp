#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "setchoice/market.hpp"
#include "setchoice/rng.hpp"

namespace setchoice {

// Data generating processes. mnl draws hard-argmax choices with Gumbel
// shocks; the rcl family averages per-consumer softmax probabilities over
// frozen coefficient draws. rcl_log / rcl_sin pass features through a
// non-linear transform inside the utility only; estimators always see the
// raw features. inattention mixes full-choice-set and reduced-choice-set
// rcl shares, dropping the highest-priced product for the inattentive slice.
enum class Dgp { mnl, rcl, rcl_log, rcl_sin, inattention };

const char* dgp_name(Dgp d);
Dgp dgp_from_name(const std::string& s);

struct SimConfig {
    Dgp dgp = Dgp::rcl;
    size_t J = 10;
    size_t M = 100;
    size_t K = 10;   // characteristics beyond price
    size_t N = 10000; // consumer draws per market
    uint64_t seed = 1;

    // Consumer coefficient distribution. alpha multiplies price.
    double alpha_mean = -1.0;
    double alpha_sd = 1.0;
    // Per-characteristic mean: either one dataset-level draw per feature from
    // N(0, hyper_sd^2) or the fixed value below.
    bool beta_mean_drawn = true;
    double beta_mean_fixed = 1.0;
    double beta_mean_hyper_sd = -1.0; // <0 means the default sqrt(1/(2K))
    double beta_sd = 1.0;

    double price_lo = 0.0;
    double price_hi = 4.0;
};

void validate_config(const SimConfig& cfg);

// Named presets used across benchmarks and the CLI.
SimConfig preset_baseline(Dgp dgp, size_t J, size_t M, size_t K, uint64_t seed);
SimConfig preset_coverage_rcl(uint64_t seed);
SimConfig preset_coverage_mnl(uint64_t seed);

// The feature transform used inside rcl_log / rcl_sin utilities.
double apply_nonlinear(Dgp dgp, double x);

// J x (1+K) feature block: price ~ U[price_lo, price_hi] in column 0,
// x ~ N(0,1) elsewhere; row-major draw order (price then x per product).
Matrix gen_features(size_t J, size_t K, double price_lo, double price_hi, RngStream& rng);

// Closed-form choice probabilities for deterministic utilities
// v_j = alpha p_j + beta . x_j with an outside option at 0.
std::vector<double> mnl_choice_probs(const Matrix& x, double alpha,
                                     const std::vector<double>& beta);

// Hard-argmax simulation of the same model over n Gumbel draws. Every cell
// (outside option included) gets half a draw added, so shares stay inside
// (0,1) and the inside sum stays strictly below 1; distortion is O(1/n).
std::vector<double> simulate_mnl_shares(const Matrix& x, double alpha,
                                        const std::vector<double>& beta, size_t n,
                                        RngStream& rng);

// Average over coefficient draws of the per-draw softmax. coef row i is
// (alpha_i, beta_i1..beta_iK). `available` masks the choice set (empty =
// all products); masked-out products get share 0.
std::vector<double> rcl_mix_shares(const Matrix& x, const Matrix& coefs, Dgp transform,
                                   const std::vector<uint8_t>& available = {});

// Index of the highest-priced product, lowest index on ties.
size_t highest_price_index(const Matrix& x);

// Frozen data generating process: regenerates any market's consumer draws
// on demand from (seed, market index), so oracle evaluations reuse exactly
// the draws that generated the data.
struct TruthModel {
    SimConfig cfg;
    std::vector<double> beta_means; // realized per-dataset characteristic means

    Matrix coef_draws(size_t market_index) const; // N x (1+K)

    // True share vector for arbitrary features laid out like the dataset's.
    std::vector<double> shares(const Matrix& x, size_t market_index) const;

    // Predictor closure for a fixed market index with draws cached; suitable
    // for the generic elasticity routine.
    std::function<std::vector<double>(const Market&)> predictor(size_t market_index) const;
};

struct SimOutput {
    Dataset data;
    TruthModel truth;
};
SimOutput simulate_dataset(const SimConfig& cfg);

// d log share_j / d log p_k under the truth with frozen draws, by forward
// difference with relative step pct. NumericError if share_j is 0.
double true_elasticity(const TruthModel& truth, const Market& mk, size_t market_index,
                       size_t j, size_t k, double pct);

// market' with one extra product drawn from the same feature distributions,
// shares recomputed under the truth (same consumer draws).
Market add_new_product(const TruthModel& truth, const Market& mk, size_t market_index);

// Population average over (features, consumers) of
// share_j(p_j shifted) - share_j(p): the coverage experiments' theta_0.
// Requires a fixed (non-hyper-drawn) beta mean so the estimand does not vary
// across datasets. Joint Monte Carlo with one consumer draw per sampled
// market; n_samples counts sampled markets.
double true_mean_own_price_effect(const SimConfig& cfg, const PriceShift& shift,
                                  size_t n_samples, uint64_t seed);

} // namespace setchoice

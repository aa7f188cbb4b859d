#pragma once

#include <memory>
#include <string>
#include <vector>

#include "setchoice/market.hpp"
#include "setchoice/mlp.hpp"

namespace setchoice {

// pi_j = rho( phi1(x_j) + sum_{k != j} phi2(x_k) ): share of product j from
// its own features plus an order-free pooled summary of its competitors.
// The competitor sum runs in a canonical content order (lexicographic over
// raw feature rows), which makes predictions bit-identical under any
// permutation of the market's rows.
struct DeepSetModel {
    MlpParams phi1;
    MlpParams phi2;
    MlpParams rho;
    size_t k_in = 0;
    size_t embed_dim = 0;
};

struct DeepSetArch {
    std::vector<size_t> phi_hidden = {64, 64};
    size_t embed_dim = 32;
    std::vector<size_t> rho_hidden = {64, 64};
    Activation out_act = Activation::sigmoid;
};

DeepSetModel init_deepset(size_t k_in, const DeepSetArch& arch, uint64_t seed);

// Lexicographic order over rows; identical rows tie arbitrarily (their
// embeddings are bitwise equal, so any tie order sums identically).
std::vector<size_t> canonical_order(const Matrix& x);

double predict_share(const DeepSetModel& m, const Market& mk, size_t j);
std::vector<double> predict_market(const DeepSetModel& m, const Market& mk);

// Prediction for each row when that row's own price is shifted and every
// competitor stays at observed prices: one extra phi1+rho pass sharing the
// pooled sums, rather than J full re-evaluations.
std::vector<double> predict_own_shift(const DeepSetModel& m, const Market& mk,
                                      const PriceShift& shift);

struct TrainHyper {
    double lr = 1e-3;
    size_t epochs = 500;
    size_t batch_markets = 0; // 0 = full batch
    uint64_t seed = 17;
};

struct TrainResult {
    std::vector<double> loss_history; // per-epoch MSE
    std::vector<std::string> warnings;
    size_t n_rows = 0;
};

// MSE over all (product, market) rows; Adam. Throws NumericError naming the
// epoch if the loss goes non-finite.
TrainResult train_deepset(DeepSetModel& m, const std::vector<const Market*>& markets,
                          const TrainHyper& hyper);

void save_deepset(const DeepSetModel& m, const std::string& path);
DeepSetModel load_deepset(const std::string& path);
nlohmann::json deepset_to_json(const DeepSetModel& m);
DeepSetModel deepset_from_json(const nlohmann::json& j);

// ---- batched evaluation internals (shared with the Riesz trainer) ----

// Rows of several markets concatenated, with per-market extents and
// canonical orders precomputed. Build once, reuse across epochs.
struct BatchPlan {
    Matrix x;                        // n x K_in
    std::vector<size_t> offset;      // size T+1, row extent of market t
    std::vector<double> y;           // n targets (empty when unused)
    std::vector<std::vector<size_t>> canon; // per market, global row indices in canonical order

    size_t n_rows() const { return x.rows; }
    size_t n_markets() const { return offset.empty() ? 0 : offset.size() - 1; }
};

BatchPlan build_plan(const std::vector<const Market*>& markets);

struct BatchForward {
    std::shared_ptr<MlpCache> phi2_cache; // shared between base and shifted passes
    MlpCache phi1_cache;
    MlpCache rho_cache;
    Matrix pooled;                    // T x embed, canonical-order sums
    const Matrix& preds() const { return rho_cache.output(); } // n x 1
};

BatchForward deepset_forward(const DeepSetModel& m, const BatchPlan& plan);

// phi1 evaluated on alternative inputs (e.g. price-shifted rows) while the
// competitor pool reuses base's phi2 outputs.
BatchForward deepset_forward_alt(const DeepSetModel& m, const BatchPlan& plan,
                                 const BatchForward& base, const Matrix& alt_rows);

struct DeepSetGrads {
    MlpGrads phi1, phi2, rho;
    void zero();
};
DeepSetGrads make_deepset_grads(const DeepSetModel& m);

// dpred[r] = dLoss/d(prediction of row r); adds parameter gradients into g.
void deepset_backward(const DeepSetModel& m, const BatchPlan& plan, const BatchForward& fwd,
                      const std::vector<double>& dpred, DeepSetGrads& g);

struct DeepSetAdam {
    AdamState phi1, phi2, rho;
};
DeepSetAdam make_deepset_adam(const DeepSetModel& m);
void deepset_adam_step(DeepSetModel& m, const DeepSetGrads& g, DeepSetAdam& st, double lr);

// Flags any 50-epoch window where the loss rose by more than 0.1%.
std::vector<std::string> loss_trend_warnings(const std::vector<double>& history);

} // namespace setchoice

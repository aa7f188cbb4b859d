#pragma once

#include <functional>
#include <string>
#include <vector>

#include "setchoice/matrix.hpp"
#include "setchoice/rng.hpp"

namespace setchoice {

struct Market;

// Every estimator exposes one of these: market in, per-product shares out.
using Predictor = std::function<std::vector<double>(const Market&)>;

// Fixed feature-column layout shared by every estimator:
//   column 0               price
//   columns 1..K           product characteristics x1..xK
//   column K+1 (optional)  first-stage residual mu
inline constexpr size_t kPriceCol = 0;

struct PriceShift {
    enum class Kind { pct, abs };
    Kind kind = Kind::pct;
    double value = 0.01;

    double apply(double p) const {
        return kind == Kind::pct ? p * (1.0 + value) : p + value;
    }
};

// One market: J products with shared feature layout, observed shares and
// optionally instruments. Counterfactual markets may carry an empty y.
struct Market {
    std::string id;
    Matrix x;                // J x K_in
    std::vector<double> y;   // J observed shares, or empty
    int mu_col = -1;         // index of the residual column, -1 if absent
    Matrix z;                // J x n_z instruments, 0x0 if absent

    size_t J() const { return x.rows; }
    size_t k_in() const { return x.cols; }
    double price(size_t j) const { return x(j, kPriceCol); }
};

struct Dataset {
    std::vector<Market> markets;

    size_t n_rows() const {
        size_t n = 0;
        for (const auto& m : markets) n += m.J();
        return n;
    }
    size_t k_in() const { return markets.empty() ? 0 : markets.front().x.cols; }
};

// Checks the share contract: each y_j in (0,1), market sum <= 1 (strictly
// below 1 when require_outside), feature values finite, consistent K_in.
void validate_dataset(const Dataset& ds, bool require_shares = true);

// Deterministic market-level split: the first ceil(frac*M) markets in a
// seeded shuffle go to train, the rest to test. Split is by market so no
// market's products straddle the boundary.
struct Split {
    std::vector<size_t> train; // market indices
    std::vector<size_t> test;
};
Split split_markets(const Dataset& ds, double train_frac, uint64_t seed);

std::vector<const Market*> select_markets(const Dataset& ds, const std::vector<size_t>& idx);

// Per-column affine rescaling to zero mean and unit sd, fitted over all rows
// of a dataset. Constant columns keep sd 1 so they map to plain centering.
// Networks need this on raw-scale data (prices in the tens) or their hidden
// units die; simulated features are already O(1).
struct Standardizer {
    std::vector<double> mean, sd;
};
Standardizer fit_standardizer(const Dataset& ds);
Market standardize(const Market& mk, const Standardizer& s);
Dataset standardize(const Dataset& ds, const Standardizer& s);

// Seeded Fisher-Yates permutation of 0..n-1.
std::vector<size_t> shuffled_indices(size_t n, RngStream& rng);

// Round-robin assignment of a seeded shuffle into `folds` groups, each
// non-empty. Used for cross-validation and cross-fitting.
std::vector<std::vector<size_t>> kfold_indices(size_t n, size_t folds, uint64_t seed);

} // namespace setchoice

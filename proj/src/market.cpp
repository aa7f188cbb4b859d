#include "setchoice/market.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "setchoice/rng.hpp"

namespace setchoice {

void validate_dataset(const Dataset& ds, bool require_shares) {
    if (ds.markets.empty()) throw DataError("dataset has no markets");
    size_t k_in = ds.markets.front().x.cols;
    for (const auto& m : ds.markets) {
        if (m.x.cols != k_in)
            throw DataError("market " + m.id + ": feature width " + std::to_string(m.x.cols) +
                            " differs from " + std::to_string(k_in));
        if (m.J() == 0) throw DataError("market " + m.id + " has no products");
        if (!m.x.all_finite()) throw DataError("market " + m.id + ": non-finite feature value");
        if (!require_shares) continue;
        if (m.y.size() != m.J())
            throw DataError("market " + m.id + ": " + std::to_string(m.y.size()) +
                            " shares for " + std::to_string(m.J()) + " products");
        double total = 0.0;
        for (size_t j = 0; j < m.y.size(); ++j) {
            double s = m.y[j];
            if (!(s > 0.0 && s < 1.0))
                throw DataError("market " + m.id + ", product " + std::to_string(j) +
                                ": share " + std::to_string(s) + " outside (0,1)");
            total += s;
        }
        if (total > 1.0)
            throw DataError("market " + m.id + ": shares sum to " + std::to_string(total) +
                            " > 1");
    }
}

Split split_markets(const Dataset& ds, double train_frac, uint64_t seed) {
    if (!(train_frac > 0.0 && train_frac < 1.0))
        throw ConfigError("train fraction must lie strictly between 0 and 1, got " +
                          std::to_string(train_frac));
    size_t m = ds.markets.size();
    if (m < 2) throw ConfigError("need at least 2 markets to split");

    RngStream rng(seed, 0x5911u); // dedicated split stream
    std::vector<size_t> order = shuffled_indices(m, rng);

    size_t n_train = static_cast<size_t>(train_frac * static_cast<double>(m) + 0.5);
    n_train = std::clamp<size_t>(n_train, 1, m - 1);
    Split sp;
    sp.train.assign(order.begin(), order.begin() + static_cast<long>(n_train));
    sp.test.assign(order.begin() + static_cast<long>(n_train), order.end());
    std::sort(sp.train.begin(), sp.train.end());
    std::sort(sp.test.begin(), sp.test.end());
    return sp;
}

std::vector<const Market*> select_markets(const Dataset& ds, const std::vector<size_t>& idx) {
    std::vector<const Market*> out;
    out.reserve(idx.size());
    for (size_t i : idx) out.push_back(&ds.markets[i]);
    return out;
}

std::vector<size_t> shuffled_indices(size_t n, RngStream& rng) {
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t{0});
    for (size_t i = n; i-- > 1;) {
        size_t j = static_cast<size_t>(rng.next_u64() % (i + 1));
        std::swap(order[i], order[j]);
    }
    return order;
}

Standardizer fit_standardizer(const Dataset& ds) {
    if (ds.markets.empty()) throw DataError("cannot standardize an empty dataset");
    size_t k = ds.k_in();
    Standardizer s;
    s.mean.assign(k, 0.0);
    s.sd.assign(k, 0.0);
    size_t n = 0;
    for (const Market& mk : ds.markets) {
        for (size_t j = 0; j < mk.J(); ++j)
            for (size_t c = 0; c < k; ++c) s.mean[c] += mk.x(j, c);
        n += mk.J();
    }
    for (size_t c = 0; c < k; ++c) s.mean[c] /= static_cast<double>(n);
    for (const Market& mk : ds.markets)
        for (size_t j = 0; j < mk.J(); ++j)
            for (size_t c = 0; c < k; ++c) {
                double d = mk.x(j, c) - s.mean[c];
                s.sd[c] += d * d;
            }
    for (size_t c = 0; c < k; ++c) {
        s.sd[c] = std::sqrt(s.sd[c] / static_cast<double>(n));
        if (s.sd[c] == 0.0) s.sd[c] = 1.0;
    }
    return s;
}

Market standardize(const Market& mk, const Standardizer& s) {
    if (mk.k_in() != s.mean.size())
        throw ShapeError("standardizer has " + std::to_string(s.mean.size()) +
                         " columns, market has " + std::to_string(mk.k_in()));
    Market out = mk;
    for (size_t j = 0; j < mk.J(); ++j)
        for (size_t c = 0; c < mk.k_in(); ++c)
            out.x(j, c) = (mk.x(j, c) - s.mean[c]) / s.sd[c];
    return out;
}

Dataset standardize(const Dataset& ds, const Standardizer& s) {
    Dataset out = ds;
    for (Market& mk : out.markets) mk = standardize(mk, s);
    return out;
}

std::vector<std::vector<size_t>> kfold_indices(size_t n, size_t folds, uint64_t seed) {
    if (folds < 2) throw ConfigError("need at least 2 folds");
    if (n < folds)
        throw ConfigError("cannot make " + std::to_string(folds) + " folds from " +
                          std::to_string(n) + " items");
    RngStream rng(seed, 0xf01d);
    std::vector<size_t> order = shuffled_indices(n, rng);
    std::vector<std::vector<size_t>> out(folds);
    for (size_t i = 0; i < n; ++i) out[i % folds].push_back(order[i]);
    for (auto& f : out) std::sort(f.begin(), f.end());
    return out;
}

} // namespace setchoice

#include "setchoice/simgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

#include "setchoice/kernels.hpp"

namespace setchoice {

namespace {

// Neumaier-compensated accumulator; the N-draw share averages must not lose
// precision to summation order (the degenerate-variance checks compare them
// against closed forms at 1e-12).
struct Kahan {
    double sum = 0.0;
    double c = 0.0;
    void add(double v) {
        double t = sum + v;
        if (std::abs(sum) >= std::abs(v))
            c += (sum - t) + v;
        else
            c += (v - t) + sum;
        sum = t;
    }
    double get() const { return sum + c; }
};

RngStream dataset_stream(const SimConfig& cfg) { return RngStream(cfg.seed, 0x5017); }
RngStream market_stream(const SimConfig& cfg, size_t t) {
    return dataset_stream(cfg).child(1 + t);
}
constexpr uint64_t kFeatTag = 0;
constexpr uint64_t kCoefTag = 1;
constexpr uint64_t kGumbelTag = 2;
constexpr uint64_t kNewProdTag = 3;

// Shares for one coefficient matrix under the dgp's aggregation rule
// (everything except the hard-argmax mnl path).
std::vector<double> mixture_shares(Dgp dgp, const Matrix& x, const Matrix& coefs) {
    if (dgp == Dgp::inattention) {
        size_t jstar = highest_price_index(x);
        double w_att = 1.0 / (1.0 + x(jstar, kPriceCol));
        std::vector<double> full = rcl_mix_shares(x, coefs, Dgp::rcl);
        std::vector<uint8_t> avail(x.rows, 1);
        avail[jstar] = 0;
        std::vector<double> red = rcl_mix_shares(x, coefs, Dgp::rcl, avail);
        std::vector<double> out(x.rows);
        for (size_t j = 0; j < x.rows; ++j) out[j] = w_att * full[j] + (1.0 - w_att) * red[j];
        return out;
    }
    return rcl_mix_shares(x, coefs, dgp);
}

} // namespace

const char* dgp_name(Dgp d) {
    switch (d) {
        case Dgp::mnl: return "mnl";
        case Dgp::rcl: return "rcl";
        case Dgp::rcl_log: return "rcl_log";
        case Dgp::rcl_sin: return "rcl_sin";
        case Dgp::inattention: return "inattention";
    }
    return "?";
}

Dgp dgp_from_name(const std::string& s) {
    if (s == "mnl") return Dgp::mnl;
    if (s == "rcl") return Dgp::rcl;
    if (s == "rcl_log") return Dgp::rcl_log;
    if (s == "rcl_sin") return Dgp::rcl_sin;
    if (s == "inattention") return Dgp::inattention;
    throw ConfigError("unknown dgp: " + s);
}

void validate_config(const SimConfig& cfg) {
    if (cfg.J == 0) throw ConfigError("J must be positive");
    if (cfg.M == 0) throw ConfigError("M must be positive");
    if (cfg.N == 0) throw ConfigError("N must be positive");
    if (cfg.price_lo < 0.0 || cfg.price_hi <= cfg.price_lo)
        throw ConfigError("invalid price range [" + std::to_string(cfg.price_lo) + ", " +
                          std::to_string(cfg.price_hi) + ")");
    if (cfg.alpha_sd < 0.0 || cfg.beta_sd < 0.0)
        throw ConfigError("coefficient sds must be non-negative");
    if (cfg.dgp == Dgp::inattention && cfg.K != 0)
        throw ConfigError("inattention dgp is price-only (K=0)");
}

SimConfig preset_baseline(Dgp dgp, size_t J, size_t M, size_t K, uint64_t seed) {
    SimConfig cfg;
    cfg.dgp = dgp;
    cfg.J = J;
    cfg.M = M;
    cfg.K = K;
    cfg.seed = seed;
    if (dgp == Dgp::mnl) {
        cfg.alpha_mean = -1.0;
        cfg.alpha_sd = 0.0;
        cfg.beta_mean_drawn = false;
        cfg.beta_mean_fixed = 1.0;
        cfg.beta_sd = 0.0;
    } else {
        cfg.alpha_mean = -1.0;
        cfg.alpha_sd = 1.0;
        cfg.beta_mean_drawn = true; // mu_k ~ N(0, 1/(2K))
        cfg.beta_sd = 1.0;
    }
    return cfg;
}

SimConfig preset_coverage_rcl(uint64_t seed) {
    SimConfig cfg;
    cfg.dgp = Dgp::rcl;
    cfg.J = 3;
    cfg.M = 100;
    cfg.K = 5;
    cfg.seed = seed;
    cfg.alpha_mean = -1.0;
    cfg.alpha_sd = std::sqrt(0.5);
    cfg.beta_mean_drawn = false;
    cfg.beta_mean_fixed = 1.0;
    cfg.beta_sd = std::sqrt(0.5);
    return cfg;
}

SimConfig preset_coverage_mnl(uint64_t seed) {
    SimConfig cfg = preset_coverage_rcl(seed);
    cfg.dgp = Dgp::mnl;
    cfg.alpha_sd = 0.0;
    cfg.beta_sd = 0.0;
    return cfg;
}

double apply_nonlinear(Dgp dgp, double x) {
    switch (dgp) {
        case Dgp::rcl_log: {
            double s = x > 0.5 ? 1.0 : (x < 0.5 ? -1.0 : 0.0);
            return std::log(std::abs(16.0 * x - 8.0) + 1.0) * s;
        }
        case Dgp::rcl_sin:
            return std::sin(x);
        default:
            return x;
    }
}

Matrix gen_features(size_t J, size_t K, double price_lo, double price_hi, RngStream& rng) {
    Matrix x(J, 1 + K);
    for (size_t j = 0; j < J; ++j) {
        x(j, kPriceCol) = rng.uniform(price_lo, price_hi);
        for (size_t k = 0; k < K; ++k) x(j, 1 + k) = rng.normal();
    }
    return x;
}

std::vector<double> mnl_choice_probs(const Matrix& x, double alpha,
                                     const std::vector<double>& beta) {
    if (x.cols != 1 + beta.size())
        throw ShapeError("mnl_choice_probs: " + std::to_string(x.cols) +
                         " feature columns vs " + std::to_string(1 + beta.size()) +
                         " coefficients");
    size_t J = x.rows;
    std::vector<double> v(J);
    for (size_t j = 0; j < J; ++j) {
        double u = alpha * x(j, kPriceCol);
        for (size_t k = 0; k < beta.size(); ++k) u += beta[k] * x(j, 1 + k);
        v[j] = u;
    }
    double m = 0.0; // outside option utility
    for (double u : v) m = std::max(m, u);
    double denom = std::exp(-m);
    std::vector<double> e(J);
    for (size_t j = 0; j < J; ++j) {
        e[j] = std::exp(v[j] - m);
        denom += e[j];
    }
    for (size_t j = 0; j < J; ++j) e[j] /= denom;
    return e;
}

std::vector<double> simulate_mnl_shares(const Matrix& x, double alpha,
                                        const std::vector<double>& beta, size_t n,
                                        RngStream& rng) {
    if (n == 0) throw ConfigError("simulate_mnl_shares: need at least one draw");
    size_t J = x.rows;
    std::vector<double> v(J);
    for (size_t j = 0; j < J; ++j) {
        double u = alpha * x(j, kPriceCol);
        for (size_t k = 0; k < beta.size(); ++k) u += beta[k] * x(j, 1 + k);
        v[j] = u;
    }
    std::vector<size_t> count(J, 0);
    for (size_t i = 0; i < n; ++i) {
        // Draw order: outside option first, then products in index order.
        double best = rng.gumbel();
        size_t best_j = J; // J stands for the outside option
        for (size_t j = 0; j < J; ++j) {
            double u = v[j] + rng.gumbel();
            if (u > best) {
                best = u;
                best_j = j;
            }
        }
        if (best_j < J) ++count[best_j];
    }
    // Half a draw is added to every cell, outside option included, so each
    // share stays inside (0,1) and the inside total stays strictly below 1
    // even when no simulated consumer picks the outside option.
    std::vector<double> s(J);
    double denom = static_cast<double>(n) + 0.5 * static_cast<double>(J + 1);
    for (size_t j = 0; j < J; ++j)
        s[j] = (static_cast<double>(count[j]) + 0.5) / denom;
    return s;
}

std::vector<double> rcl_mix_shares(const Matrix& x, const Matrix& coefs, Dgp transform,
                                   const std::vector<uint8_t>& available) {
    size_t J = x.rows, R = coefs.rows;
    if (coefs.cols != x.cols)
        throw ShapeError("rcl_mix_shares: coefficient width " + std::to_string(coefs.cols) +
                         " vs feature width " + std::to_string(x.cols));
    if (!available.empty() && available.size() != J)
        throw ShapeError("rcl_mix_shares: availability mask length mismatch");

    Matrix f(J, x.cols);
    for (size_t j = 0; j < J; ++j)
        for (size_t c = 0; c < x.cols; ++c) f(j, c) = apply_nonlinear(transform, x(j, c));

    Matrix u(R, J);
    kern::gemm_nt(u.ptr(), coefs.ptr(), f.ptr(), R, J, x.cols, nullptr);

    std::vector<Kahan> acc(J);
    std::vector<double> e(J);
    for (size_t i = 0; i < R; ++i) {
        const double* ui = u.row(i);
        double m = 0.0;
        for (size_t j = 0; j < J; ++j)
            if ((available.empty() || available[j]) && ui[j] > m) m = ui[j];
        double denom = std::exp(-m);
        for (size_t j = 0; j < J; ++j) {
            if (!available.empty() && !available[j]) {
                e[j] = 0.0;
                continue;
            }
            e[j] = std::exp(ui[j] - m);
            denom += e[j];
        }
        double inv = 1.0 / denom;
        for (size_t j = 0; j < J; ++j) acc[j].add(e[j] * inv);
    }
    std::vector<double> s(J);
    for (size_t j = 0; j < J; ++j) s[j] = acc[j].get() / static_cast<double>(R);
    return s;
}

size_t highest_price_index(const Matrix& x) {
    size_t best = 0;
    for (size_t j = 1; j < x.rows; ++j)
        if (x(j, kPriceCol) > x(best, kPriceCol)) best = j;
    return best;
}

Matrix TruthModel::coef_draws(size_t market_index) const {
    RngStream rs = market_stream(cfg, market_index).child(kCoefTag);
    Matrix c(cfg.N, 1 + cfg.K);
    for (size_t i = 0; i < cfg.N; ++i) {
        c(i, 0) = rs.normal(cfg.alpha_mean, cfg.alpha_sd);
        for (size_t k = 0; k < cfg.K; ++k) c(i, 1 + k) = rs.normal(beta_means[k], cfg.beta_sd);
    }
    return c;
}

std::vector<double> TruthModel::shares(const Matrix& x, size_t market_index) const {
    if (x.cols != 1 + cfg.K)
        throw ShapeError("truth shares: feature width " + std::to_string(x.cols) +
                         " vs expected " + std::to_string(1 + cfg.K));
    if (cfg.dgp == Dgp::mnl) return mnl_choice_probs(x, cfg.alpha_mean, beta_means);
    return mixture_shares(cfg.dgp, x, coef_draws(market_index));
}

std::function<std::vector<double>(const Market&)> TruthModel::predictor(
    size_t market_index) const {
    if (cfg.dgp == Dgp::mnl) {
        double a = cfg.alpha_mean;
        std::vector<double> b = beta_means;
        return [a, b](const Market& mk) { return mnl_choice_probs(mk.x, a, b); };
    }
    auto coefs = std::make_shared<Matrix>(coef_draws(market_index));
    Dgp dgp = cfg.dgp;
    return [coefs, dgp](const Market& mk) { return mixture_shares(dgp, mk.x, *coefs); };
}

SimOutput simulate_dataset(const SimConfig& cfg) {
    validate_config(cfg);
    SimOutput out;
    out.truth.cfg = cfg;

    RngStream beta_rng = dataset_stream(cfg).child(0);
    double hyper_sd = cfg.beta_mean_hyper_sd >= 0.0
                          ? cfg.beta_mean_hyper_sd
                          : (cfg.K > 0 ? std::sqrt(1.0 / (2.0 * static_cast<double>(cfg.K)))
                                       : 0.0);
    out.truth.beta_means.resize(cfg.K);
    for (size_t k = 0; k < cfg.K; ++k)
        out.truth.beta_means[k] =
            cfg.beta_mean_drawn ? beta_rng.normal(0.0, hyper_sd) : cfg.beta_mean_fixed;

    out.data.markets.reserve(cfg.M);
    for (size_t t = 0; t < cfg.M; ++t) {
        Market mk;
        char buf[16];
        std::snprintf(buf, sizeof buf, "m%05zu", t);
        mk.id = buf;
        RngStream feat_rng = market_stream(cfg, t).child(kFeatTag);
        mk.x = gen_features(cfg.J, cfg.K, cfg.price_lo, cfg.price_hi, feat_rng);
        if (cfg.dgp == Dgp::mnl) {
            RngStream grng = market_stream(cfg, t).child(kGumbelTag);
            mk.y = simulate_mnl_shares(mk.x, cfg.alpha_mean, out.truth.beta_means, cfg.N, grng);
        } else {
            mk.y = out.truth.shares(mk.x, t);
        }
        out.data.markets.push_back(std::move(mk));
    }
    validate_dataset(out.data);
    return out;
}

double true_elasticity(const TruthModel& truth, const Market& mk, size_t market_index,
                       size_t j, size_t k, double pct) {
    if (pct == 0.0) throw ConfigError("true_elasticity: pct step must be non-zero");
    if (j >= mk.J() || k >= mk.J())
        throw ShapeError("true_elasticity: product index out of range");
    std::vector<double> base = truth.shares(mk.x, market_index);
    if (base[j] == 0.0)
        throw NumericError("elasticity undefined: true share of product " + std::to_string(j) +
                           " in market " + mk.id + " is zero");
    Matrix xp = mk.x;
    xp(k, kPriceCol) *= 1.0 + pct;
    std::vector<double> shifted = truth.shares(xp, market_index);
    return (shifted[j] - base[j]) / base[j] / pct;
}

Market add_new_product(const TruthModel& truth, const Market& mk, size_t market_index) {
    RngStream rng = market_stream(truth.cfg, market_index).child(kNewProdTag);
    Market out;
    out.id = mk.id + "+new";
    out.x = Matrix(mk.J() + 1, mk.x.cols);
    std::copy(mk.x.data.begin(), mk.x.data.end(), out.x.data.begin());
    double* row = out.x.row(mk.J());
    row[kPriceCol] = rng.uniform(truth.cfg.price_lo, truth.cfg.price_hi);
    for (size_t k = 0; k < truth.cfg.K; ++k) row[1 + k] = rng.normal();
    out.y = truth.shares(out.x, market_index);
    return out;
}

double true_mean_own_price_effect(const SimConfig& cfg, const PriceShift& shift,
                                  size_t n_samples, uint64_t seed) {
    validate_config(cfg);
    if (cfg.beta_mean_drawn)
        throw ConfigError("population price effect needs fixed characteristic means; "
                          "this config draws them per dataset");
    if (n_samples == 0) throw ConfigError("need at least one sample");

    std::vector<double> beta(cfg.K, cfg.beta_mean_fixed);
    bool deterministic = cfg.alpha_sd == 0.0 && cfg.beta_sd == 0.0;
    RngStream rng(seed, 0x7e7a);
    Kahan acc;
    size_t cnt = 0;
    Matrix coefs(1, 1 + cfg.K);
    for (size_t s = 0; s < n_samples; ++s) {
        Matrix x = gen_features(cfg.J, cfg.K, cfg.price_lo, cfg.price_hi, rng);
        if (!deterministic) {
            coefs(0, 0) = rng.normal(cfg.alpha_mean, cfg.alpha_sd);
            for (size_t k = 0; k < cfg.K; ++k)
                coefs(0, 1 + k) = rng.normal(beta[k], cfg.beta_sd);
        } else {
            coefs(0, 0) = cfg.alpha_mean;
            for (size_t k = 0; k < cfg.K; ++k) coefs(0, 1 + k) = beta[k];
        }
        // With one coefficient draw the mixture equals the per-draw softmax,
        // and averaging it over (features, draw) equals the nested average
        // over features of the N-consumer mixture.
        std::vector<double> base = cfg.dgp == Dgp::mnl && deterministic
                                       ? mnl_choice_probs(x, coefs(0, 0), beta)
                                       : mixture_shares(cfg.dgp, x, coefs);
        for (size_t j = 0; j < cfg.J; ++j) {
            Matrix xp = x;
            xp(j, kPriceCol) = shift.apply(xp(j, kPriceCol));
            std::vector<double> sh = cfg.dgp == Dgp::mnl && deterministic
                                         ? mnl_choice_probs(xp, coefs(0, 0), beta)
                                         : mixture_shares(cfg.dgp, xp, coefs);
            acc.add(sh[j] - base[j]);
            ++cnt;
        }
    }
    return acc.get() / static_cast<double>(cnt);
}

} // namespace setchoice

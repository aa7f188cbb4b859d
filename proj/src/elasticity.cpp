#include "setchoice/elasticity.hpp"

#include <cmath>
#include <limits>
#include <memory>

namespace setchoice {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

double pooled_mae(const std::vector<double>& errs) {
    double s = 0.0;
    for (double e : errs) s += std::abs(e);
    return s / static_cast<double>(errs.size());
}

double pooled_rmse(const std::vector<double>& errs) {
    double s = 0.0;
    for (double e : errs) s += e * e;
    return std::sqrt(s / static_cast<double>(errs.size()));
}

} // namespace

ElasticityMatrix elasticity_matrix(const Predictor& pred, const Market& mk,
                                   const PriceShift& spec) {
    size_t J = mk.J();
    ElasticityMatrix out{Matrix(J, J), {}, spec};
    std::vector<double> base = pred(mk);
    if (base.size() != J)
        throw ShapeError("elasticity_matrix: predictor returned " + std::to_string(base.size()) +
                         " shares for " + std::to_string(J) + " products");
    Market shifted = mk;
    for (size_t k = 0; k < J; ++k) {
        double pk = mk.x(k, kPriceCol);
        double dp_rel = spec.kind == PriceShift::Kind::pct
                            ? spec.value
                            : (pk != 0.0 ? spec.value / pk : kNan);
        bool col_ok = pk != 0.0 && std::isfinite(dp_rel) && dp_rel != 0.0;
        std::vector<double> s;
        if (col_ok) {
            shifted.x(k, kPriceCol) = spec.apply(pk);
            s = pred(shifted);
            shifted.x(k, kPriceCol) = pk;
        }
        for (size_t j = 0; j < J; ++j) {
            if (!col_ok || base[j] == 0.0) {
                out.e(j, k) = kNan;
                out.undefined.emplace_back(j, k);
                continue;
            }
            out.e(j, k) = ((s[j] - base[j]) / base[j]) / dp_rel;
        }
    }
    return out;
}

std::pair<double, double> mae_rmse(const std::vector<double>& pred,
                                   const std::vector<double>& truth) {
    if (pred.size() != truth.size() || pred.empty())
        throw ShapeError("mae_rmse: mismatched or empty inputs");
    double ae = 0.0, se = 0.0;
    for (size_t i = 0; i < pred.size(); ++i) {
        double e = pred[i] - truth[i];
        ae += std::abs(e);
        se += e * e;
    }
    double n = static_cast<double>(pred.size());
    return {ae / n, std::sqrt(se / n)};
}

namespace {

struct ErrPool {
    std::vector<std::string> order; // estimator:metric keys in first-seen order
    std::map<std::string, std::vector<double>> errs;

    void add(const std::string& est, const std::string& metric, double e) {
        std::string key = est + "\t" + metric;
        auto it = errs.find(key);
        if (it == errs.end()) {
            order.push_back(key);
            errs[key].push_back(e);
        } else {
            it->second.push_back(e);
        }
    }
};

std::vector<std::pair<std::string, Predictor>> fit_estimators(
    const BenchmarkConfig& cfg, const std::vector<const Market*>& train, size_t k_in,
    RngStream& seeder, size_t rep, std::vector<std::string>& warnings) {
    std::vector<std::pair<std::string, Predictor>> fitted;
    for (const std::string& est : cfg.estimators) {
        try {
            if (est == "deepset") {
                auto model = std::make_shared<DeepSetModel>(
                    init_deepset(k_in, cfg.deepset_arch, seeder.child(1).next_u64()));
                TrainHyper h = cfg.deepset_hyper;
                h.seed = seeder.child(2).next_u64();
                train_deepset(*model, train, h);
                fitted.emplace_back(est, [model](const Market& mk) {
                    return predict_market(*model, mk);
                });
            } else if (est == "mnl") {
                fitted.emplace_back(est, fit_mnl(train).predictor());
            } else if (est == "rcl") {
                RclFitConfig rc = cfg.rcl_cfg;
                rc.seed = seeder.child(3).next_u64();
                fitted.emplace_back(est, fit_rcl(train, rc).predictor());
            } else if (est == "np") {
                StackedNpGrid g = cfg.np_grid;
                g.seed = seeder.child(4).next_u64();
                fitted.emplace_back(est, fit_stacked_np(train, g).predictor());
            } else if (est == "mean") {
                fitted.emplace_back(est, fit_mean(train).predictor());
            } else {
                throw ConfigError("unknown estimator: " + est);
            }
        } catch (const ConfigError&) {
            throw;
        } catch (const std::exception& e) {
            warnings.push_back("rep " + std::to_string(rep) + ": " + est + " failed: " +
                               e.what());
        }
    }
    return fitted;
}

} // namespace

BenchmarkResult benchmark_run(const BenchmarkConfig& cfg) {
    if (cfg.reps == 0) throw ConfigError("benchmark needs at least one replication");
    validate_config(cfg.sim);
    BenchmarkResult out;
    ErrPool pool;
    size_t elast_skipped = 0;
    PriceShift spec{PriceShift::Kind::pct, cfg.pct};

    RngStream rep_seeder(cfg.sim.seed, 0xbe7c);
    for (size_t rep = 0; rep < cfg.reps; ++rep) {
        RngStream rs = rep_seeder.child(rep);
        SimConfig sc = cfg.sim;
        sc.seed = rs.child(0).next_u64();
        SimOutput sim = simulate_dataset(sc);
        Split sp = split_markets(sim.data, cfg.train_frac, rs.child(5).next_u64());
        std::vector<const Market*> train = select_markets(sim.data, sp.train);

        auto fitted = fit_estimators(cfg, train, sim.data.k_in(), rs, rep, out.warnings);

        for (size_t t : sp.test) {
            const Market& mk = sim.data.markets[t];
            Predictor truth_pred = sim.truth.predictor(t);
            ElasticityMatrix truth_e{Matrix(0, 0), {}, spec};
            if (cfg.elasticities) truth_e = elasticity_matrix(truth_pred, mk, spec);

            Market aug;
            if (cfg.new_product) aug = add_new_product(sim.truth, mk, t);

            for (const auto& [name, pred] : fitted) {
                try {
                    std::vector<double> s = pred(mk);
                    for (size_t j = 0; j < mk.J(); ++j) pool.add(name, "share", s[j] - mk.y[j]);

                    if (cfg.elasticities && name != "mean") {
                        ElasticityMatrix est_e = elasticity_matrix(pred, mk, spec);
                        for (size_t j = 0; j < mk.J(); ++j)
                            for (size_t k = 0; k < mk.J(); ++k) {
                                double a = est_e.e(j, k), b = truth_e.e(j, k);
                                if (std::isnan(a) || std::isnan(b)) {
                                    ++elast_skipped;
                                    continue;
                                }
                                pool.add(name, j == k ? "own_elasticity" : "cross_elasticity",
                                         a - b);
                            }
                    }

                    if (cfg.new_product) {
                        std::vector<double> sa = pred(aug);
                        for (size_t j = 0; j < aug.J(); ++j)
                            pool.add(name, "new_product_share", sa[j] - aug.y[j]);
                    }
                } catch (const std::exception& e) {
                    out.warnings.push_back("rep " + std::to_string(rep) + ", market " + mk.id +
                                           ": " + name + " failed: " + e.what());
                }
            }
        }
    }

    if (elast_skipped > 0)
        out.warnings.push_back(std::to_string(elast_skipped) +
                               " undefined elasticity entries skipped");

    for (const std::string& key : pool.order) {
        const std::vector<double>& errs = pool.errs[key];
        size_t tab = key.find('\t');
        MetricRow row;
        row.dgp = dgp_name(cfg.sim.dgp);
        row.J = cfg.sim.J;
        row.M = cfg.sim.M;
        row.K = cfg.sim.K;
        row.estimator = key.substr(0, tab);
        row.metric = key.substr(tab + 1);
        row.mae = pooled_mae(errs);
        row.rmse = pooled_rmse(errs);
        row.n_obs = errs.size();
        out.rows.push_back(std::move(row));
    }
    return out;
}

std::vector<ElastCurveRow> own_elasticity_curve(
    const std::vector<std::pair<std::string, Predictor>>& predictors, const TruthModel& truth,
    const Dataset& ds, const std::vector<size_t>& market_idx, double pct) {
    PriceShift spec{PriceShift::Kind::pct, pct};
    std::vector<ElastCurveRow> rows;
    for (size_t t : market_idx) {
        const Market& mk = ds.markets.at(t);
        ElasticityMatrix te = elasticity_matrix(truth.predictor(t), mk, spec);
        for (size_t j = 0; j < mk.J(); ++j)
            rows.push_back({"truth", mk.id, j, mk.price(j), te.e(j, j)});
        for (const auto& [name, pred] : predictors) {
            ElasticityMatrix ee = elasticity_matrix(pred, mk, spec);
            for (size_t j = 0; j < mk.J(); ++j)
                rows.push_back({name, mk.id, j, mk.price(j), ee.e(j, j)});
        }
    }
    return rows;
}

} // namespace setchoice

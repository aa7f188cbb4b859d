#include "setchoice/causal.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "setchoice/kernels.hpp"
#include "setchoice/linalg.hpp"
#include "setchoice/parallel.hpp"

namespace setchoice {

const char* first_stage_name(FirstStageSpec s) {
    return s == FirstStageSpec::ols ? "ols" : "mlp";
}

FirstStageSpec first_stage_from_name(const std::string& s) {
    if (s == "ols") return FirstStageSpec::ols;
    if (s == "mlp") return FirstStageSpec::mlp;
    throw ConfigError("unknown first-stage spec: " + s);
}

namespace {

// Design rows for the first stage: intercept, characteristics, instruments.
// Price (column 0) is the target and never a regressor.
void first_stage_design(const Dataset& ds, Matrix& a, std::vector<double>& p,
                        std::vector<std::string>& names) {
    size_t nz = ds.markets.front().z.cols;
    if (nz == 0)
        throw ConfigError("first stage needs instrument columns, dataset has none");
    size_t k = ds.k_in() - 1; // characteristics
    size_t n = ds.n_rows();
    a = Matrix(n, 1 + k + nz);
    p.resize(n);
    names.clear();
    names.push_back("intercept");
    for (size_t c = 0; c < k; ++c) names.push_back("x" + std::to_string(c + 1));
    for (size_t c = 0; c < nz; ++c) names.push_back("z" + std::to_string(c + 1));

    size_t r = 0;
    for (const Market& m : ds.markets) {
        if (m.z.cols != nz || m.z.rows != m.J())
            throw DataError("market " + m.id + ": instrument block is " +
                            std::to_string(m.z.rows) + "x" + std::to_string(m.z.cols) +
                            ", expected " + std::to_string(m.J()) + "x" + std::to_string(nz));
        for (size_t j = 0; j < m.J(); ++j) {
            double* row = a.row(r);
            row[0] = 1.0;
            for (size_t c = 0; c < k; ++c) row[1 + c] = m.x(j, 1 + c);
            for (size_t c = 0; c < nz; ++c) row[1 + k + c] = m.z(j, c);
            p[r] = m.price(j);
            ++r;
        }
    }
}

} // namespace

FirstStageFit fit_first_stage(const Dataset& ds, FirstStageSpec spec,
                              const FirstStageHyper& hyper) {
    validate_dataset(ds, false);
    Matrix a;
    std::vector<double> price;
    std::vector<std::string> names;
    first_stage_design(ds, a, price, names);

    FirstStageFit fit;
    fit.spec = spec;
    for (const Market& m : ds.markets) fit.market_sizes.push_back(m.J());

    std::vector<double> pred(price.size());
    if (spec == FirstStageSpec::ols) {
        try {
            fit.coef = ols(a, price, &names);
        } catch (const NumericError& e) {
            throw NumericError(std::string("first stage: ") + e.what());
        }
        for (size_t r = 0; r < a.rows; ++r)
            pred[r] = kern::dot(a.row(r), fit.coef.data(), a.cols);
    } else {
        // Net input drops the intercept column; layers handle the level.
        Matrix in(a.rows, a.cols - 1);
        for (size_t r = 0; r < a.rows; ++r)
            std::copy(a.row(r) + 1, a.row(r) + a.cols, in.row(r));
        std::vector<size_t> sizes;
        sizes.push_back(in.cols);
        sizes.insert(sizes.end(), hyper.hidden.begin(), hyper.hidden.end());
        sizes.push_back(1);
        RngStream rng(hyper.seed, 0xf57a);
        fit.net = init_params(sizes, Activation::identity, rng);
        AdamState st = make_adam(fit.net);
        MlpGrads g = make_grads(fit.net);
        Matrix dout(in.rows, 1);
        for (size_t e = 0; e < hyper.epochs; ++e) {
            MlpCache cache = mlp_forward(fit.net, in);
            double inv = 2.0 / static_cast<double>(in.rows);
            for (size_t r = 0; r < in.rows; ++r)
                dout(r, 0) = inv * (cache.output()(r, 0) - price[r]);
            g.zero();
            mlp_backward(fit.net, cache, dout, g);
            adam_step(fit.net, g, st, hyper.lr);
        }
        MlpCache cache = mlp_forward(fit.net, in);
        for (size_t r = 0; r < in.rows; ++r) pred[r] = cache.output()(r, 0);
    }

    fit.r2 = r2_score(price, pred);
    size_t r = 0;
    for (const Market& m : ds.markets) {
        std::vector<double> res(m.J());
        for (size_t j = 0; j < m.J(); ++j, ++r) res[j] = price[r] - pred[r];
        fit.residuals.push_back(std::move(res));
    }
    return fit;
}

Dataset augment_with_residuals(const Dataset& ds, const FirstStageFit& fit) {
    if (fit.market_sizes.size() != ds.markets.size())
        throw DataError("first-stage fit covers " + std::to_string(fit.market_sizes.size()) +
                        " markets, dataset has " + std::to_string(ds.markets.size()));
    Dataset out;
    out.markets.reserve(ds.markets.size());
    for (size_t t = 0; t < ds.markets.size(); ++t) {
        const Market& m = ds.markets[t];
        if (fit.market_sizes[t] != m.J())
            throw DataError("first-stage fit is misaligned at market " + m.id + ": fitted " +
                            std::to_string(fit.market_sizes[t]) + " rows, dataset has " +
                            std::to_string(m.J()));
        Market a;
        a.id = m.id;
        a.y = m.y;
        a.z = m.z;
        a.mu_col = static_cast<int>(m.x.cols);
        a.x = Matrix(m.J(), m.x.cols + 1);
        for (size_t j = 0; j < m.J(); ++j) {
            std::copy(m.x.row(j), m.x.row(j) + m.x.cols, a.x.row(j));
            a.x(j, m.x.cols) = fit.residuals[t][j];
        }
        out.markets.push_back(std::move(a));
    }
    return out;
}

double moment_price_change(const Predictor& pred, const Market& mk, size_t j,
                           const PriceShift& shift) {
    if (j >= mk.J()) throw ShapeError("moment_price_change: product index out of range");
    std::vector<double> base = pred(mk);
    Market shifted = mk;
    shifted.x(j, kPriceCol) = shift.apply(shifted.x(j, kPriceCol));
    std::vector<double> alt = pred(shifted);
    return alt[j] - base[j];
}

namespace {

struct RieszBatch {
    BatchPlan plan;
    Matrix alt;            // price-shifted copies of plan.x
    std::vector<double> c; // per-row moment scale
};

std::vector<RieszBatch> riesz_batches(const std::vector<const Market*>& markets,
                                      const PriceShift& shift, const RowScale& scale,
                                      size_t batch_markets, uint64_t seed) {
    std::vector<const Market*> order = markets;
    size_t batch = batch_markets == 0 ? markets.size() : std::min(batch_markets, markets.size());
    if (batch_markets > 0) {
        RngStream rng(seed, 0xba7c);
        for (size_t i = order.size(); i-- > 1;) {
            size_t j = static_cast<size_t>(rng.next_u64() % (i + 1));
            std::swap(order[i], order[j]);
        }
    }
    std::vector<RieszBatch> out;
    for (size_t b = 0; b < order.size(); b += batch) {
        size_t e = std::min(b + batch, order.size());
        std::vector<const Market*> chunk(order.begin() + static_cast<long>(b),
                                         order.begin() + static_cast<long>(e));
        RieszBatch rb;
        rb.plan = build_plan(chunk);
        rb.alt = rb.plan.x;
        for (size_t r = 0; r < rb.alt.rows; ++r)
            rb.alt(r, kPriceCol) = shift.apply(rb.alt(r, kPriceCol));
        rb.c.reserve(rb.plan.n_rows());
        for (const Market* mk : chunk)
            for (size_t j = 0; j < mk->J(); ++j)
                rb.c.push_back(scale ? scale(*mk, j) : 1.0);
        out.push_back(std::move(rb));
    }
    return out;
}

} // namespace

RieszFit fit_riesz(const std::vector<const Market*>& train, const PriceShift& shift,
                   const RieszHyper& hyper, const RowScale& scale) {
    if (train.empty()) throw ConfigError("fit_riesz: no markets");
    if (hyper.epochs == 0) throw ConfigError("fit_riesz: epochs must be positive");
    if (hyper.arch.out_act != Activation::identity)
        throw ConfigError("fit_riesz: the representer net must have identity output");

    RieszFit fit;
    fit.model.shift = shift;
    fit.model.net = init_deepset(train[0]->x.cols, hyper.arch, hyper.seed);

    std::vector<RieszBatch> batches =
        riesz_batches(train, shift, scale, hyper.batch_markets, hyper.seed);
    size_t n_total = 0;
    for (const auto& b : batches) n_total += b.plan.n_rows();

    DeepSetGrads grads = make_deepset_grads(fit.model.net);
    DeepSetAdam adam = make_deepset_adam(fit.model.net);
    std::vector<double> dbase, dalt;

    for (size_t epoch = 0; epoch < hyper.epochs; ++epoch) {
        double total = 0.0;
        for (const RieszBatch& rb : batches) {
            BatchForward base = deepset_forward(fit.model.net, rb.plan);
            BatchForward alt = deepset_forward_alt(fit.model.net, rb.plan, base, rb.alt);
            const Matrix& a = base.preds();
            const Matrix& as = alt.preds();
            size_t nb = rb.plan.n_rows();
            dbase.resize(nb);
            dalt.resize(nb);
            double inv = 1.0 / static_cast<double>(nb);
            for (size_t r = 0; r < nb; ++r) {
                double av = a(r, 0), sv = as(r, 0), c = rb.c[r];
                total += av * av - 2.0 * c * (sv - av);
                dbase[r] = (2.0 * av + 2.0 * c) * inv;
                dalt[r] = -2.0 * c * inv;
            }
            grads.zero();
            deepset_backward(fit.model.net, rb.plan, base, dbase, grads);
            deepset_backward(fit.model.net, rb.plan, alt, dalt, grads);
            deepset_adam_step(fit.model.net, grads, adam, hyper.lr);
        }
        double loss = total / static_cast<double>(n_total);
        if (!std::isfinite(loss))
            throw NumericError("fit_riesz: loss diverged at epoch " + std::to_string(epoch) +
                               " (history length " + std::to_string(fit.loss_history.size()) +
                               ")");
        fit.loss_history.push_back(loss);
    }
    fit.warnings = loss_trend_warnings(fit.loss_history);
    return fit;
}

double riesz_loss(const RieszModel& m, const std::vector<const Market*>& markets,
                  const RowScale& scale) {
    std::vector<RieszBatch> batches = riesz_batches(markets, m.shift, scale, 0, 0);
    const RieszBatch& rb = batches.front();
    BatchForward base = deepset_forward(m.net, rb.plan);
    BatchForward alt = deepset_forward_alt(m.net, rb.plan, base, rb.alt);
    double total = 0.0;
    for (size_t r = 0; r < rb.plan.n_rows(); ++r) {
        double av = base.preds()(r, 0), sv = alt.preds()(r, 0);
        total += av * av - 2.0 * rb.c[r] * (sv - av);
    }
    return total / static_cast<double>(rb.plan.n_rows());
}

std::vector<double> riesz_values(const RieszModel& m, const Market& mk) {
    return predict_market(m.net, mk);
}

namespace {

std::vector<double> own_shift_generic(const Predictor& pred, const Market& mk,
                                      const PriceShift& shift) {
    std::vector<double> out(mk.J());
    Market tmp = mk;
    for (size_t j = 0; j < mk.J(); ++j) {
        double p = mk.x(j, kPriceCol);
        tmp.x(j, kPriceCol) = shift.apply(p);
        out[j] = pred(tmp)[j];
        tmp.x(j, kPriceCol) = p;
    }
    return out;
}

uint64_t fold_content_seed(uint64_t base, const Dataset& ds, const std::vector<size_t>& held) {
    std::vector<std::string> ids;
    ids.reserve(held.size());
    for (size_t idx : held) ids.push_back(ds.markets[idx].id);
    std::sort(ids.begin(), ids.end());
    uint64_t h = base;
    for (const std::string& id : ids) h = mix64(h ^ fnv1a64(id));
    return h;
}

double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

} // namespace

nlohmann::json inference_to_json(const InferenceResult& r) {
    return {{"theta", r.theta},   {"V", r.V},
            {"se", r.se},         {"ci_lo", r.ci_lo},
            {"ci_hi", r.ci_hi},   {"L", r.L},
            {"n", r.n},           {"plugin_theta", r.plugin_theta},
            {"plugin_se", r.plugin_se}};
}

std::vector<InferenceResult> crossfit_debiased_multi(const Dataset& ds,
                                                     const std::vector<MomentSpec>& moments,
                                                     const CrossfitHyper& hyper) {
    validate_dataset(ds);
    if (moments.empty()) throw ConfigError("crossfit_debiased_multi: no moments given");
    if (hyper.folds < 2) throw ConfigError("cross-fitting needs at least 2 folds");
    size_t M = ds.markets.size();
    std::vector<std::vector<size_t>> folds = kfold_indices(M, hyper.folds, hyper.seed);

    std::vector<size_t> fold_of(M);
    for (size_t f = 0; f < folds.size(); ++f) {
        if (folds[f].empty()) throw ConfigError("fold " + std::to_string(f) + " is empty");
        for (size_t idx : folds[f]) fold_of[idx] = f;
    }

    std::vector<InferenceResult> results(moments.size());
    for (InferenceResult& r : results) r.L = folds.size();

    std::vector<std::shared_ptr<DeepSetModel>> pi(folds.size());
    std::vector<std::vector<std::shared_ptr<RieszModel>>> alpha(
        moments.size(), std::vector<std::shared_ptr<RieszModel>>(folds.size()));
    for (size_t f = 0; f < folds.size(); ++f) {
        uint64_t fseed = fold_content_seed(hyper.seed, ds, folds[f]);
        std::vector<const Market*> comp;
        for (size_t t = 0; t < M; ++t)
            if (fold_of[t] != f) comp.push_back(&ds.markets[t]);
        if (!hyper.pi_override) {
            pi[f] = std::make_shared<DeepSetModel>(
                init_deepset(ds.k_in(), hyper.pi_arch, mix64(fseed + 1)));
            if (pi[f]->rho.out_act == Activation::sigmoid) {
                // Start the output level at the fold's mean share; from a
                // mis-leveled start Adam can run the output bias deep into
                // the sigmoid tail, where the fit stops responding to price.
                double ybar = 0.0;
                size_t n = 0;
                for (const Market* mk : comp) {
                    for (double y : mk->y) ybar += y;
                    n += mk->J();
                }
                ybar = std::clamp(ybar / static_cast<double>(n), 1e-6, 1.0 - 1e-6);
                pi[f]->rho.b.back()[0] = std::log(ybar / (1.0 - ybar));
            }
            TrainHyper th = hyper.pi_hyper;
            th.seed = mix64(fseed + 2);
            train_deepset(*pi[f], comp, th);
        }
        if (!hyper.plugin_only) {
            for (size_t m = 0; m < moments.size(); ++m) {
                RieszHyper rh = hyper.riesz_hyper;
                rh.seed = mix64(fseed + 3 + m);
                RieszFit rf = fit_riesz(comp, moments[m].shift, rh, moments[m].scale);
                alpha[m][f] = std::make_shared<RieszModel>(std::move(rf.model));
                for (const std::string& w : rf.warnings)
                    results[m].warnings.push_back("fold " + std::to_string(f) + " riesz: " + w);
            }
        }
    }

    // Scoring runs in dataset order, so neither fold enumeration order nor
    // per-fold row grouping can perturb the sums.
    std::vector<std::vector<double>> scores(moments.size()), m_vals(moments.size());
    for (size_t t = 0; t < M; ++t) {
        const Market& mk = ds.markets[t];
        size_t f = fold_of[t];
        std::vector<double> base =
            hyper.pi_override ? hyper.pi_override(mk) : predict_market(*pi[f], mk);
        for (size_t m = 0; m < moments.size(); ++m) {
            const MomentSpec& moment = moments[m];
            std::vector<double> shifted =
                hyper.pi_override ? own_shift_generic(hyper.pi_override, mk, moment.shift)
                                  : predict_own_shift(*pi[f], mk, moment.shift);
            std::vector<double> av;
            if (!hyper.plugin_only) av = riesz_values(*alpha[m][f], mk);
            for (size_t j = 0; j < mk.J(); ++j) {
                if (moment.score_row && !moment.score_row(mk, j)) continue;
                double c = moment.scale ? moment.scale(mk, j) : 1.0;
                double mv = c * (shifted[j] - base[j]);
                double corr = hyper.plugin_only ? 0.0 : av[j] * (mk.y[j] - base[j]);
                scores[m].push_back(mv + corr);
                m_vals[m].push_back(mv);
            }
        }
    }

    for (size_t m = 0; m < moments.size(); ++m) {
        if (scores[m].empty()) throw DataError("no rows passed the score filter");
        InferenceResult& out = results[m];
        size_t n = scores[m].size();
        out.n = n;
        out.theta = mean_of(scores[m]);
        out.psi.resize(n);
        double v = 0.0;
        for (size_t i = 0; i < n; ++i) {
            out.psi[i] = scores[m][i] - out.theta;
            v += out.psi[i] * out.psi[i];
        }
        out.V = v / static_cast<double>(n);
        out.se = std::sqrt(out.V / static_cast<double>(n));
        out.ci_lo = out.theta - 1.96 * out.se;
        out.ci_hi = out.theta + 1.96 * out.se;

        out.plugin_theta = mean_of(m_vals[m]);
        double pv = 0.0;
        for (double mv : m_vals[m])
            pv += (mv - out.plugin_theta) * (mv - out.plugin_theta);
        out.plugin_se = std::sqrt(pv / static_cast<double>(n) / static_cast<double>(n));
    }
    return results;
}

InferenceResult crossfit_debiased(const Dataset& ds, const MomentSpec& moment,
                                  const CrossfitHyper& hyper) {
    return crossfit_debiased_multi(ds, {moment}, hyper).front();
}

namespace {

double skewness(const std::vector<double>& v) {
    if (v.size() < 3) return 0.0;
    double m = mean_of(v);
    double m2 = 0.0, m3 = 0.0;
    for (double x : v) {
        double d = x - m;
        m2 += d * d;
        m3 += d * d * d;
    }
    m2 /= static_cast<double>(v.size());
    m3 /= static_cast<double>(v.size());
    return m2 > 0.0 ? m3 / std::pow(m2, 1.5) : 0.0;
}

} // namespace

CoverageResult coverage_experiment(const CoverageConfig& cfg) {
    validate_config(cfg.preset);
    CoverageResult out;
    out.theta0 = true_mean_own_price_effect(cfg.preset, cfg.shift, cfg.theta0_samples,
                                            RngStream(cfg.seed, 0x7137).next_u64());

    MomentSpec moment;
    moment.shift = cfg.shift;

    // Each simulation writes only its own slot, so results are identical for
    // any thread count; the reduction below runs in sim order.
    struct Slot {
        bool ok = false;
        CoverageRow row;
        std::string err;
    };
    std::vector<Slot> slots(cfg.n_sims);
    RngStream seeder(cfg.seed, 0xc07);
    parallel_for(cfg.n_sims, cfg.threads, [&](size_t s) {
        RngStream ss = seeder.child(s);
        SimConfig sc = cfg.preset;
        sc.seed = ss.child(0).next_u64();
        try {
            SimOutput sim = simulate_dataset(sc);
            CrossfitHyper h = cfg.hyper;
            h.seed = ss.child(1).next_u64();
            InferenceResult r = crossfit_debiased(sim.data, moment, h);

            CoverageRow row;
            row.sim = s;
            row.theta = r.theta;
            row.se = r.se;
            row.ci_lo = r.ci_lo;
            row.ci_hi = r.ci_hi;
            row.covered = r.ci_lo <= out.theta0 && out.theta0 <= r.ci_hi;
            row.plugin_theta = r.plugin_theta;
            row.plugin_se = r.plugin_se;
            slots[s].row = row;
            slots[s].ok = true;
        } catch (const std::exception& e) {
            slots[s].err = e.what();
        }
    });

    std::vector<double> z_deb, z_plug, biases;
    size_t covered = 0, plug_covered = 0;
    for (size_t s = 0; s < cfg.n_sims; ++s) {
        if (!slots[s].ok) {
            out.warnings.push_back("sim " + std::to_string(s) + " failed: " + slots[s].err);
            continue;
        }
        const CoverageRow& row = slots[s].row;
        out.rows.push_back(row);
        if (row.covered) ++covered;
        if (row.plugin_theta - 1.96 * row.plugin_se <= out.theta0 &&
            out.theta0 <= row.plugin_theta + 1.96 * row.plugin_se)
            ++plug_covered;
        biases.push_back(row.theta - out.theta0);
        if (row.se > 0.0) z_deb.push_back((row.theta - out.theta0) / row.se);
        if (row.plugin_se > 0.0)
            z_plug.push_back((row.plugin_theta - out.theta0) / row.plugin_se);
    }
    if (out.rows.empty()) throw NumericError("coverage experiment: every simulation failed");

    double n_ok = static_cast<double>(out.rows.size());
    out.coverage = static_cast<double>(covered) / n_ok;
    out.plugin_coverage = static_cast<double>(plug_covered) / n_ok;
    out.mean_bias = mean_of(biases);
    out.skew = skewness(z_deb);
    out.plugin_skew = skewness(z_plug);
    return out;
}

} // namespace setchoice

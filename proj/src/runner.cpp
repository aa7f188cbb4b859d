#include "setchoice/runner.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <initializer_list>

#include "setchoice/csv.hpp"
#include "setchoice/deepset.hpp"
#include "setchoice/fsio.hpp"
#include "setchoice/simgen.hpp"

#ifndef SETCHOICE_GIT_REV
#define SETCHOICE_GIT_REV "unknown"
#endif

namespace setchoice {

std::string setchoice_version() { return std::string("0.1.0-") + SETCHOICE_GIT_REV; }

namespace {

using nlohmann::json;

const json* opt(const json& j, const char* key) {
    auto it = j.find(key);
    return it == j.end() ? nullptr : &*it;
}

void check_keys(const json& j, const std::string& where,
                std::initializer_list<const char*> allowed) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* a : allowed)
            if (it.key() == a) {
                ok = true;
                break;
            }
        if (!ok) throw ConfigError("unknown key '" + it.key() + "' in " + where);
    }
}

std::string jstr(const json& j, const char* key, const std::string& dflt) {
    const json* v = opt(j, key);
    if (!v) return dflt;
    if (!v->is_string()) throw ConfigError(std::string("config key '") + key + "' must be a string");
    return v->get<std::string>();
}

double jnum(const json& j, const char* key, double dflt) {
    const json* v = opt(j, key);
    if (!v) return dflt;
    if (!v->is_number()) throw ConfigError(std::string("config key '") + key + "' must be a number");
    return v->get<double>();
}

size_t jsize(const json& j, const char* key, size_t dflt) {
    const json* v = opt(j, key);
    if (!v) return dflt;
    if (!v->is_number_unsigned())
        throw ConfigError(std::string("config key '") + key + "' must be a non-negative integer");
    return v->get<size_t>();
}

uint64_t ju64(const json& j, const char* key, uint64_t dflt) {
    const json* v = opt(j, key);
    if (!v) return dflt;
    if (!v->is_number_unsigned())
        throw ConfigError(std::string("config key '") + key + "' must be a non-negative integer");
    return v->get<uint64_t>();
}

bool jbool(const json& j, const char* key, bool dflt) {
    const json* v = opt(j, key);
    if (!v) return dflt;
    if (!v->is_boolean()) throw ConfigError(std::string("config key '") + key + "' must be a boolean");
    return v->get<bool>();
}

std::vector<size_t> jsizelist(const json& j, const char* key, std::vector<size_t> dflt) {
    const json* v = opt(j, key);
    if (!v) return dflt;
    if (!v->is_array())
        throw ConfigError(std::string("config key '") + key + "' must be an array of integers");
    std::vector<size_t> out;
    for (const auto& e : *v) {
        if (!e.is_number_unsigned() || e.get<size_t>() == 0)
            throw ConfigError(std::string("config key '") + key + "' must hold positive integers");
        out.push_back(e.get<size_t>());
    }
    return out;
}

SimConfig resolve_preset(const std::string& name, uint64_t seed) {
    if (name == "baseline-rcl") return preset_baseline(Dgp::rcl, 10, 100, 10, seed);
    if (name == "baseline-mnl") return preset_baseline(Dgp::mnl, 10, 100, 10, seed);
    if (name == "baseline-log") return preset_baseline(Dgp::rcl_log, 10, 100, 10, seed);
    if (name == "baseline-sin") return preset_baseline(Dgp::rcl_sin, 10, 100, 10, seed);
    if (name == "inattention") return preset_baseline(Dgp::inattention, 2, 1000, 0, seed);
    if (name == "coverage-rcl") return preset_coverage_rcl(seed);
    if (name == "coverage-mnl") return preset_coverage_mnl(seed);
    throw ConfigError("unknown preset '" + name + "'");
}

PriceShift parse_shift(const json& j) {
    check_keys(j, "shift", {"kind", "value"});
    PriceShift s;
    std::string kind = jstr(j, "kind", "pct");
    if (kind == "pct")
        s.kind = PriceShift::Kind::pct;
    else if (kind == "abs")
        s.kind = PriceShift::Kind::abs;
    else
        throw ConfigError("shift kind must be pct or abs");
    s.value = jnum(j, "value", 0.01);
    if (!std::isfinite(s.value)) throw ConfigError("shift value must be finite");
    if (s.kind == PriceShift::Kind::pct && s.value <= -1.0)
        throw ConfigError("pct shift must stay above -1");
    return s;
}

} // namespace

RunnerConfig config_from_json(const json& doc) {
    if (!doc.is_object()) throw ConfigError("config must be a JSON object");
    check_keys(doc, "config",
               {"command",  "out",     "seed",       "preset",           "data",
                "dgp",      "estimators", "reps",    "train_frac",       "new_product",
                "elasticity_curve", "pct", "train",  "arch",             "rcl",
                "shift",    "folds",   "riesz",      "plugin_only",      "sims",
                "theta0_samples",   "threads",       "iv",               "first_stage",
                "synthetic", "categories"});

    RunnerConfig cfg;
    cfg.echo = doc;
    cfg.command = jstr(doc, "command", "");
    static const std::vector<std::string> commands = {"simulate", "train",    "benchmark",
                                                      "infer",    "coverage", "empirical"};
    if (std::find(commands.begin(), commands.end(), cfg.command) == commands.end())
        throw ConfigError("command must be one of simulate|train|benchmark|infer|coverage|empirical");

    cfg.seed = ju64(doc, "seed", 1);
    cfg.out_dir = jstr(doc, "out", "out");
    cfg.data = jstr(doc, "data", "");
    cfg.preset = jstr(doc, "preset", "baseline-rcl");
    cfg.sim = resolve_preset(cfg.preset, cfg.seed);

    if (const json* d = opt(doc, "dgp")) {
        check_keys(*d, "dgp",
                   {"kind", "J", "M", "K", "N", "seed", "alpha_mean", "alpha_sd",
                    "beta_mean_drawn", "beta_mean_fixed", "beta_mean_hyper_sd", "beta_sd",
                    "price_lo", "price_hi"});
        if (opt(*d, "kind")) cfg.sim.dgp = dgp_from_name(jstr(*d, "kind", ""));
        cfg.sim.J = jsize(*d, "J", cfg.sim.J);
        cfg.sim.M = jsize(*d, "M", cfg.sim.M);
        cfg.sim.K = jsize(*d, "K", cfg.sim.K);
        cfg.sim.N = jsize(*d, "N", cfg.sim.N);
        cfg.sim.seed = ju64(*d, "seed", cfg.sim.seed);
        cfg.sim.alpha_mean = jnum(*d, "alpha_mean", cfg.sim.alpha_mean);
        cfg.sim.alpha_sd = jnum(*d, "alpha_sd", cfg.sim.alpha_sd);
        cfg.sim.beta_mean_drawn = jbool(*d, "beta_mean_drawn", cfg.sim.beta_mean_drawn);
        cfg.sim.beta_mean_fixed = jnum(*d, "beta_mean_fixed", cfg.sim.beta_mean_fixed);
        cfg.sim.beta_mean_hyper_sd = jnum(*d, "beta_mean_hyper_sd", cfg.sim.beta_mean_hyper_sd);
        cfg.sim.beta_sd = jnum(*d, "beta_sd", cfg.sim.beta_sd);
        cfg.sim.price_lo = jnum(*d, "price_lo", cfg.sim.price_lo);
        cfg.sim.price_hi = jnum(*d, "price_hi", cfg.sim.price_hi);
    }
    validate_config(cfg.sim);

    if (const json* e = opt(doc, "estimators")) {
        if (!e->is_array()) throw ConfigError("estimators must be an array of names");
        cfg.estimators.clear();
        for (const auto& v : *e) {
            if (!v.is_string()) throw ConfigError("estimators must be an array of names");
            cfg.estimators.push_back(v.get<std::string>());
        }
        if (cfg.estimators.empty()) throw ConfigError("estimators must not be empty");
    }
    static const std::vector<std::string> known_est = {"deepset", "mnl", "rcl", "np", "mean"};
    for (const std::string& e : cfg.estimators)
        if (std::find(known_est.begin(), known_est.end(), e) == known_est.end())
            throw ConfigError("unknown estimator '" + e + "'");

    cfg.reps = jsize(doc, "reps", cfg.reps);
    cfg.train_frac = jnum(doc, "train_frac", cfg.train_frac);
    if (!(cfg.train_frac > 0.0 && cfg.train_frac < 1.0))
        throw ConfigError("train_frac must be in (0,1)");
    cfg.new_product = jbool(doc, "new_product", cfg.new_product);
    cfg.elasticity_curve = jbool(doc, "elasticity_curve", cfg.elasticity_curve);
    cfg.pct = jnum(doc, "pct", cfg.pct);
    if (!(cfg.pct > 0.0)) throw ConfigError("pct must be positive");

    cfg.train_hyper.seed = mix64(cfg.seed ^ 0x7a11);
    if (const json* t = opt(doc, "train")) {
        check_keys(*t, "train", {"lr", "epochs", "batch_markets", "seed"});
        cfg.train_hyper.lr = jnum(*t, "lr", cfg.train_hyper.lr);
        cfg.train_hyper.epochs = jsize(*t, "epochs", cfg.train_hyper.epochs);
        cfg.train_hyper.batch_markets = jsize(*t, "batch_markets", cfg.train_hyper.batch_markets);
        cfg.train_hyper.seed = ju64(*t, "seed", cfg.train_hyper.seed);
        if (!(cfg.train_hyper.lr > 0.0)) throw ConfigError("train lr must be positive");
        if (cfg.train_hyper.epochs == 0) throw ConfigError("train epochs must be positive");
    }
    if (const json* a = opt(doc, "arch")) {
        check_keys(*a, "arch", {"phi_hidden", "embed", "rho_hidden"});
        cfg.arch.phi_hidden = jsizelist(*a, "phi_hidden", cfg.arch.phi_hidden);
        cfg.arch.embed_dim = jsize(*a, "embed", cfg.arch.embed_dim);
        cfg.arch.rho_hidden = jsizelist(*a, "rho_hidden", cfg.arch.rho_hidden);
        if (cfg.arch.embed_dim == 0) throw ConfigError("arch embed must be positive");
    }
    cfg.rcl_cfg.seed = mix64(cfg.seed ^ 0x4c1);
    if (const json* r = opt(doc, "rcl")) {
        check_keys(*r, "rcl", {"draws", "epochs", "lr", "seed"});
        cfg.rcl_cfg.R = jsize(*r, "draws", cfg.rcl_cfg.R);
        cfg.rcl_cfg.epochs = jsize(*r, "epochs", cfg.rcl_cfg.epochs);
        cfg.rcl_cfg.lr = jnum(*r, "lr", cfg.rcl_cfg.lr);
        cfg.rcl_cfg.seed = ju64(*r, "seed", cfg.rcl_cfg.seed);
        if (cfg.rcl_cfg.R == 0 || cfg.rcl_cfg.epochs == 0 || !(cfg.rcl_cfg.lr > 0.0))
            throw ConfigError("rcl draws, epochs and lr must be positive");
    }

    if (const json* s = opt(doc, "shift")) cfg.shift = parse_shift(*s);
    cfg.folds = jsize(doc, "folds", cfg.folds);
    cfg.riesz.seed = mix64(cfg.seed ^ 0x52e5);
    if (const json* r = opt(doc, "riesz")) {
        check_keys(*r, "riesz", {"lr", "epochs", "batch_markets", "seed"});
        cfg.riesz.lr = jnum(*r, "lr", cfg.riesz.lr);
        cfg.riesz.epochs = jsize(*r, "epochs", cfg.riesz.epochs);
        cfg.riesz.batch_markets = jsize(*r, "batch_markets", cfg.riesz.batch_markets);
        cfg.riesz.seed = ju64(*r, "seed", cfg.riesz.seed);
        if (!(cfg.riesz.lr > 0.0) || cfg.riesz.epochs == 0)
            throw ConfigError("riesz lr and epochs must be positive");
    }
    cfg.plugin_only = jbool(doc, "plugin_only", cfg.plugin_only);
    cfg.sims = jsize(doc, "sims", cfg.sims);
    cfg.theta0_samples = jsize(doc, "theta0_samples", cfg.theta0_samples);
    cfg.threads = jsize(doc, "threads", cfg.threads);

    cfg.iv = jstr(doc, "iv", cfg.iv);
    if (cfg.iv != "blp" && cfg.iv != "none") throw ConfigError("iv must be blp or none");
    cfg.first_stage = first_stage_from_name(jstr(doc, "first_stage", "ols"));
    cfg.categories = jbool(doc, "categories", cfg.categories);
    if (const json* s = opt(doc, "synthetic")) {
        check_keys(*s, "synthetic",
                   {"years", "firms", "models_per_firm", "lambda", "price_alpha", "seed"});
        cfg.synthetic_auto = true;
        cfg.auto_cfg.years = jsize(*s, "years", cfg.auto_cfg.years);
        cfg.auto_cfg.firms = jsize(*s, "firms", cfg.auto_cfg.firms);
        cfg.auto_cfg.models_per_firm = jsize(*s, "models_per_firm", cfg.auto_cfg.models_per_firm);
        cfg.auto_cfg.lambda = jnum(*s, "lambda", cfg.auto_cfg.lambda);
        cfg.auto_cfg.price_alpha = jnum(*s, "price_alpha", cfg.auto_cfg.price_alpha);
        cfg.auto_cfg.seed = ju64(*s, "seed", mix64(cfg.seed ^ 0xa07a));
    }
    return cfg;
}

namespace {

std::string join_path(const std::string& dir, const std::string& name) {
    return (std::filesystem::path(dir) / name).string();
}

void emit_csv(RunOutput& out, const std::string& dir, const std::string& name,
              const std::vector<std::string>& header,
              const std::vector<std::vector<std::string>>& rows) {
    write_csv(join_path(dir, name), header, rows);
    out.files.push_back(name);
}

void emit_json(RunOutput& out, const std::string& dir, const std::string& name,
               const json& doc) {
    write_file_atomic(join_path(dir, name), doc.dump(2) + "\n");
    out.files.push_back(name);
}

void write_manifest(const RunnerConfig& cfg, RunOutput& out, const json& seeds) {
    json man{{"version", setchoice_version()},
             {"command", cfg.command},
             {"config", cfg.echo},
             {"seeds", seeds},
             {"outputs", out.files},
             {"warnings", out.warnings}};
    write_file_atomic(join_path(cfg.out_dir, "manifest.json"), man.dump(2) + "\n");
    out.files.push_back("manifest.json");
}

std::vector<const Market*> all_markets(const Dataset& ds) {
    std::vector<const Market*> out;
    out.reserve(ds.markets.size());
    for (const Market& mk : ds.markets) out.push_back(&mk);
    return out;
}

void cmd_simulate(const RunnerConfig& cfg, RunOutput& out) {
    SimOutput sim = simulate_dataset(cfg.sim);
    write_dataset_csv(sim.data, join_path(cfg.out_dir, "dataset.csv"));
    out.files.push_back("dataset.csv");
    write_manifest(cfg, out, {{"root", cfg.seed}, {"sim", cfg.sim.seed}});
}

void cmd_train(const RunnerConfig& cfg, RunOutput& out) {
    if (cfg.data.empty()) throw ConfigError("train needs data: a dataset csv path");
    Dataset ds = load_dataset_csv(cfg.data);
    std::vector<const Market*> train = all_markets(ds);

    for (const std::string& est : cfg.estimators) {
        if (est == "deepset") {
            DeepSetModel net =
                init_deepset(ds.k_in(), cfg.arch, mix64(cfg.train_hyper.seed ^ 0xd5));
            TrainResult tr = train_deepset(net, train, cfg.train_hyper);
            for (const std::string& w : tr.warnings) out.warnings.push_back("deepset: " + w);
            save_deepset(net, join_path(cfg.out_dir, "deepset.json"));
            out.files.push_back("deepset.json");
            std::vector<std::vector<std::string>> rows;
            for (size_t e = 0; e < tr.loss_history.size(); ++e)
                rows.push_back({std::to_string(e), format_double(tr.loss_history[e])});
            emit_csv(out, cfg.out_dir, "deepset_loss.csv", {"epoch", "mse"}, rows);
        } else if (est == "mnl") {
            emit_json(out, cfg.out_dir, "mnl.json", mnl_to_json(fit_mnl(train)));
        } else if (est == "rcl") {
            RclFit fit = fit_rcl(train, cfg.rcl_cfg);
            for (const std::string& w : fit.warnings) out.warnings.push_back("rcl: " + w);
            emit_json(out, cfg.out_dir, "rcl.json", rcl_to_json(fit));
        } else if (est == "np") {
            StackedNpGrid grid = cfg.np_grid;
            grid.seed = mix64(cfg.seed ^ 0x59a9);
            emit_json(out, cfg.out_dir, "np.json", stacked_np_to_json(fit_stacked_np(train, grid)));
        } else if (est == "mean") {
            emit_json(out, cfg.out_dir, "mean.json", mean_to_json(fit_mean(train)));
        }
    }
    write_manifest(cfg, out,
                   {{"root", cfg.seed},
                    {"deepset_train", cfg.train_hyper.seed},
                    {"rcl", cfg.rcl_cfg.seed}});
}

void cmd_benchmark(const RunnerConfig& cfg, RunOutput& out) {
    BenchmarkConfig bc;
    bc.sim = cfg.sim;
    bc.reps = cfg.reps;
    bc.train_frac = cfg.train_frac;
    bc.estimators = cfg.estimators;
    bc.new_product = cfg.new_product;
    bc.pct = cfg.pct;
    bc.deepset_hyper = cfg.train_hyper;
    bc.deepset_arch = cfg.arch;
    bc.rcl_cfg = cfg.rcl_cfg;
    bc.np_grid = cfg.np_grid;
    BenchmarkResult br = benchmark_run(bc);
    out.warnings.insert(out.warnings.end(), br.warnings.begin(), br.warnings.end());

    std::vector<std::vector<std::string>> rows;
    for (const MetricRow& r : br.rows)
        rows.push_back({r.dgp, std::to_string(r.J), std::to_string(r.M), std::to_string(r.K),
                        r.estimator, r.metric, format_double(r.mae), format_double(r.rmse),
                        std::to_string(r.n_obs)});
    emit_csv(out, cfg.out_dir, "metrics.csv",
             {"dgp", "J", "M", "K", "estimator", "metric", "mae", "rmse", "n_obs"}, rows);

    if (cfg.elasticity_curve) {
        SimOutput sim = simulate_dataset(cfg.sim);
        RngStream rs(cfg.seed, 0xcbe);
        Split sp = split_markets(sim.data, cfg.train_frac, rs.child(1).next_u64());
        std::vector<const Market*> train = select_markets(sim.data, sp.train);

        std::vector<std::pair<std::string, Predictor>> preds;
        DeepSetModel net = init_deepset(sim.data.k_in(), cfg.arch, rs.child(2).next_u64());
        TrainHyper th = cfg.train_hyper;
        th.seed = rs.child(3).next_u64();
        TrainResult tr = train_deepset(net, train, th);
        for (const std::string& w : tr.warnings) out.warnings.push_back("curve deepset: " + w);
        preds.emplace_back("deepset",
                           [net](const Market& mk) { return predict_market(net, mk); });
        preds.emplace_back("mnl", fit_mnl(train).predictor());
        RclFitConfig rc = cfg.rcl_cfg;
        rc.seed = rs.child(4).next_u64();
        RclFit rcl = fit_rcl(train, rc);
        for (const std::string& w : rcl.warnings) out.warnings.push_back("curve rcl: " + w);
        preds.emplace_back("rcl", rcl.predictor());

        std::vector<ElastCurveRow> curve =
            own_elasticity_curve(preds, sim.truth, sim.data, sp.test, cfg.pct);
        std::vector<std::vector<std::string>> crows;
        for (const ElastCurveRow& r : curve)
            crows.push_back({r.estimator, r.market_id, std::to_string(r.product),
                             format_double(r.price), format_double(r.elasticity)});
        emit_csv(out, cfg.out_dir, "elasticity_curve.csv",
                 {"estimator", "market_id", "product", "price", "elasticity"}, crows);
    }
    write_manifest(cfg, out, {{"root", cfg.seed}, {"sim", cfg.sim.seed}});
}

CrossfitHyper crossfit_hyper(const RunnerConfig& cfg) {
    CrossfitHyper h;
    h.folds = cfg.folds;
    h.pi_arch = cfg.arch;
    h.pi_hyper = cfg.train_hyper;
    h.riesz_hyper = cfg.riesz;
    h.seed = cfg.seed;
    h.plugin_only = cfg.plugin_only;
    return h;
}

void cmd_infer(const RunnerConfig& cfg, RunOutput& out) {
    Dataset ds = cfg.data.empty() ? simulate_dataset(cfg.sim).data : load_dataset_csv(cfg.data);
    MomentSpec moment;
    moment.shift = cfg.shift;
    InferenceResult r = crossfit_debiased(ds, moment, crossfit_hyper(cfg));
    out.warnings.insert(out.warnings.end(), r.warnings.begin(), r.warnings.end());
    json jr = inference_to_json(r);
    jr["warnings"] = r.warnings;
    emit_json(out, cfg.out_dir, "inference.json", jr);
    write_manifest(cfg, out, {{"root", cfg.seed}, {"sim", cfg.sim.seed}, {"crossfit", cfg.seed}});
}

void cmd_coverage(const RunnerConfig& cfg, RunOutput& out) {
    CoverageConfig cc;
    cc.preset = cfg.sim;
    cc.n_sims = cfg.sims;
    cc.shift = cfg.shift;
    cc.hyper = crossfit_hyper(cfg);
    cc.seed = cfg.seed;
    cc.theta0_samples = cfg.theta0_samples;
    cc.threads = cfg.threads;
    CoverageResult cr = coverage_experiment(cc);
    out.warnings.insert(out.warnings.end(), cr.warnings.begin(), cr.warnings.end());

    std::vector<std::vector<std::string>> rows;
    for (const CoverageRow& r : cr.rows)
        rows.push_back({std::to_string(r.sim), format_double(r.theta), format_double(r.se),
                        format_double(r.ci_lo), format_double(r.ci_hi),
                        r.covered ? "1" : "0", format_double(r.plugin_theta),
                        format_double(r.plugin_se)});
    emit_csv(out, cfg.out_dir, "coverage.csv",
             {"sim", "theta", "se", "ci_lo", "ci_hi", "covered", "plugin_theta", "plugin_se"},
             rows);
    emit_json(out, cfg.out_dir, "coverage_summary.json",
              {{"theta0", cr.theta0},
               {"n_sims", cfg.sims},
               {"n_ok", cr.rows.size()},
               {"coverage", cr.coverage},
               {"mean_bias", cr.mean_bias},
               {"skew", cr.skew},
               {"plugin_coverage", cr.plugin_coverage},
               {"plugin_skew", cr.plugin_skew}});
    write_manifest(cfg, out, {{"root", cfg.seed}, {"sim", cfg.sim.seed}});
}

struct PriceBand {
    std::string name;
    double lo = 0.0;
    double hi = 0.0; // exclusive; inf for the top band
};

void cmd_empirical(const RunnerConfig& cfg, RunOutput& out) {
    std::vector<AutoRecord> records;
    if (cfg.synthetic_auto) {
        records = gen_synthetic_auto(cfg.auto_cfg);
        write_auto_csv(records, join_path(cfg.out_dir, "autos_synthetic.csv"));
        out.files.push_back("autos_synthetic.csv");
    } else {
        if (cfg.data.empty())
            throw ConfigError("empirical needs data: a csv path, or a synthetic block");
        AutoTable table = load_auto_csv(cfg.data);
        out.warnings.insert(out.warnings.end(), table.warnings.begin(), table.warnings.end());
        records = std::move(table.records);
    }

    EmpiricalFit ef =
        run_empirical_fit(records, cfg.iv, cfg.first_stage, cfg.arch, cfg.train_hyper);
    out.warnings.insert(out.warnings.end(), ef.warnings.begin(), ef.warnings.end());

    std::vector<std::vector<std::string>> rows;
    for (size_t t = 0; t < ef.am.data.markets.size(); ++t) {
        const Market& mk = ef.am.data.markets[t];
        for (size_t j = 0; j < mk.J(); ++j)
            rows.push_back({mk.id, ef.am.firms[t][j], ef.am.models[t][j],
                            format_double(mk.price(j)), format_double(mk.y[j]),
                            format_double(ef.elasticity[t][j])});
    }
    emit_csv(out, cfg.out_dir, "elasticities.csv",
             {"year", "firm_id", "model", "price", "share", "own_elasticity"}, rows);

    if (ef.corrected) {
        json fs{{"spec", first_stage_name(ef.first_stage.spec)}, {"r2", ef.first_stage.r2}};
        if (ef.first_stage.spec == FirstStageSpec::ols) fs["coef"] = ef.first_stage.coef;
        emit_json(out, cfg.out_dir, "first_stage.json", fs);
    }

    if (cfg.categories) {
        std::vector<PriceBand> bands{{"low", 0.0, 8.0},
                                     {"medium", 8.0, 20.0},
                                     {"high", 20.0, std::numeric_limits<double>::infinity()}};
        // The crossfit runs on the standardized dataset the net was trained
        // on; band membership and the elasticity scale need raw prices back.
        double p_mean = ef.scaler.mean[kPriceCol], p_sd = ef.scaler.sd[kPriceCol];
        auto raw_price = [p_mean, p_sd](const Market& mk, size_t j) {
            return mk.price(j) * p_sd + p_mean;
        };
        std::vector<MomentSpec> moments;
        std::vector<size_t> band_rows(bands.size(), 0), used;
        for (size_t b = 0; b < bands.size(); ++b) {
            for (const Market& mk : ef.am.data.markets)
                for (size_t j = 0; j < mk.J(); ++j)
                    if (mk.price(j) >= bands[b].lo && mk.price(j) < bands[b].hi) ++band_rows[b];
            if (band_rows[b] == 0) {
                out.warnings.push_back("price band " + bands[b].name + " has no cars, skipped");
                continue;
            }
            MomentSpec m;
            m.shift = PriceShift{PriceShift::Kind::abs, 1.0 / p_sd}; // +$1,000 raw
            double lo = bands[b].lo, hi = bands[b].hi;
            m.score_row = [raw_price, lo, hi](const Market& mk, size_t j) {
                double p = raw_price(mk, j);
                return p >= lo && p < hi;
            };
            // Scales the per-car demand change into an elasticity using the
            // observed share, keeping the moment linear in the share model.
            m.scale = [raw_price](const Market& mk, size_t j) {
                return raw_price(mk, j) / mk.y[j];
            };
            moments.push_back(std::move(m));
            used.push_back(b);
        }
        if (!moments.empty()) {
            std::vector<InferenceResult> res =
                crossfit_debiased_multi(ef.scaled, moments, crossfit_hyper(cfg));
            std::vector<std::vector<std::string>> crows;
            for (size_t i = 0; i < res.size(); ++i) {
                const PriceBand& b = bands[used[i]];
                const InferenceResult& r = res[i];
                for (const std::string& w : r.warnings)
                    out.warnings.push_back(b.name + ": " + w);
                crows.push_back({b.name, format_double(b.lo), format_double(b.hi),
                                 std::to_string(r.n), format_double(r.theta),
                                 format_double(r.se), format_double(r.ci_lo),
                                 format_double(r.ci_hi), format_double(r.plugin_theta),
                                 format_double(r.plugin_se)});
            }
            emit_csv(out, cfg.out_dir, "categories.csv",
                     {"category", "price_lo", "price_hi", "n", "theta", "se", "ci_lo", "ci_hi",
                      "plugin_theta", "plugin_se"},
                     crows);
        }
    }

    json seeds{{"root", cfg.seed}, {"deepset_train", cfg.train_hyper.seed}};
    if (cfg.synthetic_auto) seeds["synthetic"] = cfg.auto_cfg.seed;
    write_manifest(cfg, out, seeds);
}

} // namespace

EmpiricalFit run_empirical_fit(const std::vector<AutoRecord>& records, const std::string& iv,
                               FirstStageSpec first_stage, const DeepSetArch& arch,
                               const TrainHyper& hyper) {
    EmpiricalFit ef;
    ef.am = auto_to_markets(records);
    if (iv == "blp") {
        std::vector<std::string> w = build_blp_instruments(ef.am);
        ef.warnings.insert(ef.warnings.end(), w.begin(), w.end());
        ef.first_stage = fit_first_stage(ef.am.data, first_stage);
        ef.am.data = augment_with_residuals(ef.am.data, ef.first_stage);
        ef.corrected = true;
    } else if (iv != "none") {
        throw ConfigError("iv must be blp or none");
    }

    ef.scaler = fit_standardizer(ef.am.data);
    ef.scaled = standardize(ef.am.data, ef.scaler);
    std::vector<const Market*> train = all_markets(ef.scaled);
    ef.net = init_deepset(ef.scaled.k_in(), arch, mix64(hyper.seed ^ 0xd5));
    // Car shares sit far below sigmoid(0); starting the output bias at the
    // average share's logit keeps early training out of the saturated tail.
    double ybar = 0.0;
    size_t n_rows = 0;
    for (const Market* mk : train) {
        for (double y : mk->y) ybar += y;
        n_rows += mk->J();
    }
    ybar /= static_cast<double>(n_rows);
    ef.net.rho.b.back()[0] = std::log(ybar / (1.0 - ybar));
    TrainResult tr = train_deepset(ef.net, train, hyper);
    for (const std::string& w : tr.warnings) ef.warnings.push_back("deepset: " + w);

    // A +$1,000 raw price step is an additive 1/sd step in standardized
    // units; standardization is affine so this is exact.
    const PriceShift shift{PriceShift::Kind::abs, 1.0 / ef.scaler.sd[kPriceCol]};
    for (size_t t = 0; t < ef.am.data.markets.size(); ++t) {
        const Market& raw = ef.am.data.markets[t];
        const Market& mk = ef.scaled.markets[t];
        std::vector<double> base = predict_market(ef.net, mk);
        std::vector<double> shifted = predict_own_shift(ef.net, mk, shift);
        std::vector<double> el(raw.J());
        for (size_t j = 0; j < raw.J(); ++j)
            el[j] = (shifted[j] - base[j]) / base[j] * raw.price(j);
        ef.elasticity.push_back(std::move(el));
    }
    return ef;
}

RunOutput run_experiment(const RunnerConfig& cfg) {
    std::error_code ec;
    std::filesystem::create_directories(cfg.out_dir, ec);
    if (ec) throw DataError("cannot create output directory " + cfg.out_dir + ": " + ec.message());

    RunOutput out;
    if (cfg.command == "simulate")
        cmd_simulate(cfg, out);
    else if (cfg.command == "train")
        cmd_train(cfg, out);
    else if (cfg.command == "benchmark")
        cmd_benchmark(cfg, out);
    else if (cfg.command == "infer")
        cmd_infer(cfg, out);
    else if (cfg.command == "coverage")
        cmd_coverage(cfg, out);
    else if (cfg.command == "empirical")
        cmd_empirical(cfg, out);
    else
        throw ConfigError("unknown command " + cfg.command);
    return out;
}

} // namespace setchoice

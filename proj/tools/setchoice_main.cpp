#include <cstdio>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "setchoice/fsio.hpp"
#include "setchoice/runner.hpp"

using nlohmann::json;
using namespace setchoice;

namespace {

// Flags override the config file; only flags the user actually passed are
// written into the document.
struct FlagSink {
    json doc = json::object();

    json& sub(const char* key) {
        if (!doc.contains(key)) doc[key] = json::object();
        return doc[key];
    }
};

void add_common(CLI::App* cmd, FlagSink& sink, std::string& config_path) {
    cmd->add_option("--config", config_path, "JSON config file; flags override it");
    cmd->add_option_function<std::string>(
        "--out", [&sink](const std::string& v) { sink.doc["out"] = v; }, "output directory");
    cmd->add_option_function<uint64_t>(
        "--seed", [&sink](uint64_t v) { sink.doc["seed"] = v; }, "root seed");
    cmd->add_option_function<size_t>(
        "--threads", [&sink](size_t v) { sink.doc["threads"] = v; },
        "worker threads (also SETCHOICE_THREADS)");
}

void add_dgp(CLI::App* cmd, FlagSink& sink) {
    cmd->add_option_function<std::string>(
        "--preset", [&sink](const std::string& v) { sink.doc["preset"] = v; },
        "baseline-rcl|baseline-mnl|baseline-log|baseline-sin|inattention|coverage-rcl|coverage-mnl");
    cmd->add_option_function<std::string>(
        "--dgp", [&sink](const std::string& v) { sink.sub("dgp")["kind"] = v; },
        "mnl|rcl|rcl_log|rcl_sin|inattention");
    cmd->add_option_function<size_t>(
        "-J,--products", [&sink](size_t v) { sink.sub("dgp")["J"] = v; }, "products per market");
    cmd->add_option_function<size_t>(
        "-M,--markets", [&sink](size_t v) { sink.sub("dgp")["M"] = v; }, "markets");
    cmd->add_option_function<size_t>(
        "-K,--chars", [&sink](size_t v) { sink.sub("dgp")["K"] = v; },
        "characteristics beyond price");
    cmd->add_option_function<size_t>(
        "-N,--draws", [&sink](size_t v) { sink.sub("dgp")["N"] = v; }, "consumers per market");
}

void add_train(CLI::App* cmd, FlagSink& sink) {
    cmd->add_option_function<size_t>(
        "--epochs", [&sink](size_t v) { sink.sub("train")["epochs"] = v; },
        "demand-model training epochs");
    cmd->add_option_function<double>(
        "--lr", [&sink](double v) { sink.sub("train")["lr"] = v; }, "demand-model learning rate");
    cmd->add_option_function<size_t>(
        "--batch-markets", [&sink](size_t v) { sink.sub("train")["batch_markets"] = v; },
        "markets per minibatch, 0 = full batch");
}

void add_estimators(CLI::App* cmd, FlagSink& sink) {
    cmd->add_option_function<std::vector<std::string>>(
        "--estimators",
        [&sink](const std::vector<std::string>& v) { sink.doc["estimators"] = v; },
        "subset of deepset,mnl,rcl,np,mean");
}

void add_crossfit(CLI::App* cmd, FlagSink& sink) {
    cmd->add_option_function<size_t>(
        "--folds", [&sink](size_t v) { sink.doc["folds"] = v; }, "cross-fitting folds");
    cmd->add_option_function<std::string>(
        "--shift-kind", [&sink](const std::string& v) { sink.sub("shift")["kind"] = v; },
        "pct|abs");
    cmd->add_option_function<double>(
        "--shift-value", [&sink](double v) { sink.sub("shift")["value"] = v; },
        "price shift size");
    cmd->add_flag_function(
        "--plugin-only",
        [&sink](int64_t) { sink.doc["plugin_only"] = true; },
        "skip the debiasing correction");
    cmd->add_option_function<size_t>(
        "--riesz-epochs", [&sink](size_t v) { sink.sub("riesz")["epochs"] = v; },
        "Riesz net training epochs");
    cmd->add_option_function<double>(
        "--riesz-lr", [&sink](double v) { sink.sub("riesz")["lr"] = v; },
        "Riesz net learning rate");
}

int dispatch(const std::string& command, const std::string& config_path, const FlagSink& sink) {
    json doc = json::object();
    if (!config_path.empty()) {
        std::string text = read_file(config_path);
        doc = json::parse(text, nullptr, false);
        if (doc.is_discarded())
            throw ConfigError("config file " + config_path + " is not valid JSON");
        if (!doc.is_object()) throw ConfigError("config file must hold a JSON object");
    }
    // Flags win: merge_patch overwrites scalars and merges nested objects.
    doc.merge_patch(sink.doc);
    doc["command"] = command;

    RunnerConfig cfg = config_from_json(doc);
    RunOutput out = run_experiment(cfg);
    for (const std::string& w : out.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
    for (const std::string& f : out.files) std::printf("%s/%s\n", cfg.out_dir.c_str(), f.c_str());
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Set-pooled neural demand estimation toolkit"};
    app.require_subcommand(1);

    struct Cmd {
        CLI::App* app = nullptr;
        FlagSink sink;
        std::string config_path;
    };
    std::vector<std::string> names = {"simulate", "train",    "benchmark",
                                      "infer",    "coverage", "empirical"};
    std::vector<Cmd> cmds(names.size());

    for (size_t i = 0; i < names.size(); ++i) {
        Cmd& c = cmds[i];
        c.app = app.add_subcommand(names[i]);
        add_common(c.app, c.sink, c.config_path);
        const std::string& n = names[i];
        if (n == "simulate" || n == "benchmark" || n == "coverage" || n == "infer") {
            add_dgp(c.app, c.sink);
        }
        if (n == "train" || n == "infer" || n == "empirical") {
            c.app->add_option_function<std::string>(
                "--data", [&c](const std::string& v) { c.sink.doc["data"] = v; },
                "input CSV path");
        }
        if (n != "simulate") add_train(c.app, c.sink);
        if (n == "train" || n == "benchmark") add_estimators(c.app, c.sink);
        if (n == "benchmark") {
            c.app->add_option_function<size_t>(
                "--reps", [&c](size_t v) { c.sink.doc["reps"] = v; }, "replications");
            c.app->add_option_function<double>(
                "--train-frac", [&c](double v) { c.sink.doc["train_frac"] = v; },
                "train split fraction");
            c.app->add_option_function<double>(
                "--pct", [&c](double v) { c.sink.doc["pct"] = v; },
                "relative price step for elasticities");
            c.app->add_flag_function(
                "--new-product", [&c](int64_t) { c.sink.doc["new_product"] = true; },
                "also score counterfactual J+1 markets");
            c.app->add_flag_function(
                "--elasticity-curve", [&c](int64_t) { c.sink.doc["elasticity_curve"] = true; },
                "emit an own-elasticity-vs-price curve CSV");
        }
        if (n == "infer" || n == "coverage" || n == "empirical") add_crossfit(c.app, c.sink);
        if (n == "coverage") {
            c.app->add_option_function<size_t>(
                "--sims", [&c](size_t v) { c.sink.doc["sims"] = v; }, "simulated datasets");
            c.app->add_option_function<size_t>(
                "--theta0-samples", [&c](size_t v) { c.sink.doc["theta0_samples"] = v; },
                "Monte Carlo samples for the true target");
        }
        if (n == "empirical") {
            c.app->add_option_function<std::string>(
                "--iv", [&c](const std::string& v) { c.sink.doc["iv"] = v; }, "blp|none");
            c.app->add_option_function<std::string>(
                "--first-stage", [&c](const std::string& v) { c.sink.doc["first_stage"] = v; },
                "ols|mlp");
            c.app->add_flag_function(
                "--synthetic", [&c](int64_t) { c.sink.sub("synthetic"); },
                "generate the synthetic-endogenous fixture instead of loading data");
            c.app->add_option_function<double>(
                "--lambda", [&c](double v) { c.sink.sub("synthetic")["lambda"] = v; },
                "synthetic fixture: quality loading on price");
            c.app->add_flag_function(
                "--no-categories", [&c](int64_t) { c.sink.doc["categories"] = false; },
                "skip the price-band CI table");
        }
    }

    CLI11_PARSE(app, argc, argv);

    try {
        for (size_t i = 0; i < names.size(); ++i)
            if (cmds[i].app->parsed())
                return dispatch(names[i], cmds[i].config_path, cmds[i].sink);
        std::fprintf(stderr, "error: no command given\n");
        return 2;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const ShapeError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return 3;
    } catch (const DataError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return 3;
    } catch (const NumericError& e) {
        std::fprintf(stderr, "numeric error: %s\n", e.what());
        return 4;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}

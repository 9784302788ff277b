// mind: dataset generation, training, ablations, sweeps and self-checks.

#include "mind/mind.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

namespace fs = std::filesystem;
using namespace mind;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInvalid = 1;
constexpr int kExitDiverged = 2;

struct Options
{
    std::string config;
    std::string data;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::size_t jobs = 1;
    bool gnuplot = false;
};

ExperimentConfig load(const Options& o)
{
    ExperimentConfig cfg = load_experiment_config(o.config);
    if (o.seed) {
        cfg.data.seed = *o.seed;
        cfg.train.seed = *o.seed;
        if (cfg.sweep)
            cfg.sweep->seeds = {*o.seed};
    }
    if (!o.out.empty())
        cfg.output_dir = o.out;
    return cfg;
}

std::string seconds_since(std::chrono::steady_clock::time_point t0)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    return buf;
}

int cmd_generate(const Options& o)
{
    const ExperimentConfig cfg = load(o);
    const Dataset ds = generate_dataset(cfg.data);
    const fs::path path = o.out.empty() ? fs::path(cfg.output_dir) / "dataset.txt" : fs::path(o.out);
    write_atomically(path, [&](std::ostream& out) { write_dataset(out, ds); });
    std::printf("wrote %s: n=%zu C=%zu K=%zu noise_rate=%.4f\n", path.string().c_str(), ds.instances.size(),
                ds.num_classes, ds.num_modes, noise_rate(ds));
    return kExitOk;
}

Dataset load_dataset(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot read dataset '" + path + "'");
    return read_dataset(in);
}

int cmd_train(const Options& o)
{
    const ExperimentConfig cfg = load(o);
    const Dataset ds = o.data.empty() ? generate_dataset(cfg.data) : load_dataset(o.data);
    if (!o.data.empty() && (ds.num_classes != cfg.data.num_classes || ds.input_dim != cfg.data.input_dim))
        throw ConfigError("dataset: C=" + std::to_string(ds.num_classes) + " d=" + std::to_string(ds.input_dim) +
                          " does not match config C=" + std::to_string(cfg.data.num_classes) +
                          " d=" + std::to_string(cfg.data.input_dim));

    const auto t0 = std::chrono::steady_clock::now();
    const TrainResult res = run_training(ds, cfg.train);
    const std::string elapsed = seconds_since(t0);

    const fs::path dir = cfg.output_dir;
    write_atomically(dir / "history.csv", [&](std::ostream& out) { write_history_csv(out, res.history); });
    write_atomically(dir / "params.txt", [&](std::ostream& out) { write_params(out, res.params); });
    if (res.estimator)
        write_atomically(dir / "estimator.txt", [&](std::ostream& out) { write_state(out, *res.estimator); });

    const EpochRecord& last = res.history.records.back();
    nlohmann::ordered_json summary;
    summary["variant"] = std::string(to_string(cfg.train.variant));
    summary["seed"] = cfg.train.seed;
    summary["epochs"] = res.history.records.size();
    summary["accuracy_final"] = last.acc_clean;
    if (res.estimator) {
        const VariantRun run = summarize_run(ds, cfg.train, res, false);
        summary["e_t_initial"] = *run.e_t_initial;
        summary["e_t_final"] = *run.e_t_final;
        if (!run.per_basis.empty())
            summary["e_t_per_basis"] = run.per_basis;
        summary["e_t_monotone_trend"] = run.trace->monotone_trend;
    }
    summary["clamp_count"] = res.history.clamp_count;
    summary["wall_clock_seconds"] = std::stod(elapsed);
    write_text_atomically(dir / "summary.json", summary.dump(2) + "\n");

    std::printf("trained %s for %zu epochs in %ss: accuracy=%.4f", std::string(to_string(cfg.train.variant)).c_str(),
                res.history.records.size(), elapsed.c_str(), last.acc_clean);
    if (last.e_t)
        std::printf(" e_t=%.4f", *last.e_t);
    std::printf(" -> %s\n", dir.string().c_str());
    return kExitOk;
}

int cmd_ablate(const Options& o)
{
    const ExperimentConfig cfg = load(o);
    SuiteOptions opt;
    opt.data = cfg.data;
    opt.train = cfg.train;
    opt.jobs = o.jobs;
    if (cfg.sweep) {
        opt.seeds = cfg.sweep->seeds;
        opt.variants = cfg.sweep->variants;
    }
    const auto runs = run_variant_suite(opt);
    const fs::path dir = cfg.output_dir;
    write_atomically(dir / "ablation.csv", [&](std::ostream& out) { write_suite_csv(out, runs); });
    const auto j = suite_json(runs, opt.variants);
    write_text_atomically(dir / "ablation.json", j.dump(2) + "\n");

    std::printf("%-14s %-18s %-18s %-18s\n", "variant", "accuracy", "e_t_final", "silhouette");
    for (const auto& row : j["variants"]) {
        auto cell = [&](const char* key) -> std::string {
            if (!row.contains(key))
                return "-";
            char buf[64];
            std::snprintf(buf, sizeof buf, "%.4f +- %.4f", row[key]["mean"].get<double>(),
                          row[key]["std"].get<double>());
            return buf;
        };
        std::printf("%-14s %-18s %-18s %-18s\n", row["variant"].get<std::string>().c_str(), cell("accuracy").c_str(),
                    cell("e_t_final").c_str(), cell("silhouette").c_str());
    }
    return kExitOk;
}

int cmd_sweep(const Options& o)
{
    const ExperimentConfig cfg = load(o);
    if (!cfg.sweep || cfg.sweep->variable.empty())
        throw ConfigError("sweep.variable: required for the sweep command");
    const SweepSpec& s = *cfg.sweep;

    ExperimentResult result;
    bool log_axes = false;
    if (s.variable == "num_modes") {
        KScalingOptions opt;
        opt.data = cfg.data;
        opt.train = cfg.train;
        opt.seeds = s.seeds;
        opt.jobs = o.jobs;
        opt.k_values.clear();
        for (double v : s.values) {
            if (v < 1 || v != std::floor(v))
                throw ConfigError("sweep.values: num_modes values must be positive integers");
            opt.k_values.push_back(static_cast<std::size_t>(v));
        }
        result = k_scaling_experiment(opt);
        log_axes = true;
    } else if (s.variable == "epsilon") {
        EpsilonOptions opt;
        opt.data = cfg.data;
        opt.epsilons = s.values;
        opt.seeds = s.seeds;
        opt.batch_size = s.oracle_batch_size;
        opt.passes = s.oracle_passes;
        opt.alpha = s.oracle_alpha;
        opt.init_diag = cfg.train.init_diag;
        opt.jobs = o.jobs;
        result = epsilon_robustness_experiment(opt);
    } else {
        SweepOptions opt;
        opt.data = cfg.data;
        opt.train = cfg.train;
        opt.variable = s.variable;
        opt.values = s.values;
        opt.seeds = s.seeds;
        opt.jobs = o.jobs;
        result = hyperparameter_sweep(opt);
    }

    const fs::path dir = cfg.output_dir;
    const std::string csv_name = result.name + ".csv";
    write_atomically(dir / csv_name, [&](std::ostream& out) { write_experiment_csv(out, result); });
    write_text_atomically(dir / (result.name + ".json"), experiment_json(result).dump(2) + "\n");
    if (o.gnuplot)
        write_text_atomically(dir / (result.name + ".gp"), gnuplot_script(result, csv_name, log_axes));

    std::printf("%s: %s vs %s\n", result.name.c_str(), result.metric.c_str(), result.variable.c_str());
    for (const auto& p : result.points) {
        std::printf("  %-8g %.4f +- %.4f", p.value, p.metric.mean, p.metric.stddev);
        if (p.predicted)
            std::printf("  (predicted %.4f)", *p.predicted);
        std::printf("\n");
    }
    if (result.fit)
        std::printf("  fit %s: slope=%.4f intercept=%.4f r2=%.4f\n", result.fit_axes.c_str(), result.fit->slope,
                    result.fit->intercept, result.fit->r2);
    for (const auto& c : result.checks)
        std::printf("  [%s] %s: %s\n", c.pass ? "PASS" : "FAIL", c.name.c_str(), c.detail.c_str());
    return kExitOk;
}

int cmd_check()
{
    bool all = true;
    for (const auto& c : run_self_checks()) {
        std::printf("[%s] %s: %s\n", c.pass ? "PASS" : "FAIL", c.name.c_str(), c.detail.c_str());
        all = all && c.pass;
    }
    return all ? kExitOk : kExitInvalid;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Mixture-of-transition-matrices label-noise lab"};
    app.require_subcommand(1);
    Options o;

    auto add_common = [&](CLI::App* sub, bool needs_config) {
        auto* c = sub->add_option("--config", o.config, "JSON experiment config")->check(CLI::ExistingFile);
        if (needs_config)
            c->required();
        sub->add_option("--seed", o.seed, "Override every seed in the config");
        sub->add_option("--jobs", o.jobs, "Parallel runs")->check(CLI::PositiveNumber);
    };

    auto* gen = app.add_subcommand("generate", "Generate a synthetic dataset file");
    add_common(gen, true);
    gen->add_option("--out", o.out, "Dataset file (default <output_dir>/dataset.txt)");

    auto* train = app.add_subcommand("train", "Train one variant and export history, snapshots and summary");
    add_common(train, true);
    train->add_option("--data", o.data, "Dataset file (default: generate from config)")->check(CLI::ExistingFile);
    train->add_option("--out", o.out, "Output directory (overrides output_dir)");

    auto* ablate = app.add_subcommand("ablate", "Run every variant over the configured seeds");
    add_common(ablate, true);
    ablate->add_option("--out", o.out, "Output directory (overrides output_dir)");

    auto* sweep = app.add_subcommand("sweep", "Sweep one variable (num_modes, epsilon or a hyperparameter)");
    add_common(sweep, true);
    sweep->add_option("--out", o.out, "Output directory (overrides output_dir)");
    sweep->add_flag("--emit-gnuplot-script", o.gnuplot, "Also write a gnuplot script next to the CSV");

    auto* check = app.add_subcommand("check", "Run the gradient and invariant self-test suite");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitInvalid;
    }

    try {
        if (*gen)
            return cmd_generate(o);
        if (*train)
            return cmd_train(o);
        if (*ablate)
            return cmd_ablate(o);
        if (*sweep)
            return cmd_sweep(o);
        if (*check)
            return cmd_check();
    } catch (const TrainingDiverged& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitDiverged;
    } catch (const NumericalError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitDiverged;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitInvalid;
    }
    return kExitInvalid;
}

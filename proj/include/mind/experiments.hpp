#pragma once

// Multi-seed experiments: the variant suite, the K-scaling and epsilon
// robustness studies, and plain hyperparameter sweeps.

#include "mind/core.hpp"
#include "mind/estimator.hpp"
#include "mind/metrics.hpp"
#include "mind/synth.hpp"
#include "mind/train.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <numeric>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace mind {

/// Runs fn(0) ... fn(count - 1) on up to `jobs` threads. Every index runs
/// even if another throws; the lowest-index exception is rethrown.
template <typename Fn>
void parallel_for(std::size_t count, std::size_t jobs, Fn&& fn)
{
    std::vector<std::exception_ptr> errors(count);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < count; i = next++) {
            try {
                fn(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const std::size_t threads = std::clamp<std::size_t>(jobs, 1, std::max<std::size_t>(count, 1));
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        pool.reserve(threads);
        for (std::size_t t = 0; t < threads; ++t)
            pool.emplace_back(worker);
    }
    for (auto& e : errors)
        if (e)
            std::rethrow_exception(e);
}

struct CheckResult
{
    std::string name;
    bool pass = false;
    std::string detail;
};

/// One (sweep value, seed) measurement.
struct SweepRun
{
    double value = 0.0;
    std::uint64_t seed = 0;
    double metric = 0.0;
};

struct SweepPoint
{
    double value = 0.0;
    MeanStd metric;
    std::size_t seeds = 0;
    std::optional<double> predicted;
};

struct ExperimentResult
{
    std::string name;
    std::string variable;
    std::string metric;
    std::vector<SweepRun> runs;
    std::vector<SweepPoint> points;
    std::optional<LinearFit> fit;
    std::string fit_axes;
    std::vector<CheckResult> checks;

    bool passed() const
    {
        return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.pass; });
    }
};

namespace detail {

    inline std::vector<SweepPoint> aggregate(const std::vector<double>& values, const std::vector<SweepRun>& runs)
    {
        std::vector<SweepPoint> points;
        for (double v : values) {
            std::vector<double> metrics;
            for (const auto& r : runs)
                if (r.value == v)
                    metrics.push_back(r.metric);
            SweepPoint p;
            p.value = v;
            p.seeds = metrics.size();
            p.metric = mean_std(metrics);
            points.push_back(p);
        }
        return points;
    }

    inline std::string fmt(double v)
    {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.4g", v);
        return buf;
    }

    /// Evaluation rows sorted so feature matrices do not depend on shuffling.
    inline std::vector<std::size_t> sorted(std::vector<std::size_t> rows)
    {
        std::sort(rows.begin(), rows.end());
        return rows;
    }

} // namespace detail

// ---------------------------------------------------------------------------
// Variant suite

struct VariantRun
{
    Variant variant = Variant::Mind;
    std::uint64_t seed = 0;
    double accuracy = 0.0;
    std::optional<double> e_t_initial;
    std::optional<double> e_t_final;
    /// Aligned per-basis errors when the estimate has the true mode count.
    std::vector<double> per_basis;
    /// Silhouette of test-split features under argmax omega* labels.
    std::optional<double> silhouette;
    std::size_t clamp_count = 0;
    std::optional<EtTraceVerdict> trace;
    RunHistory history;
};

struct SuiteOptions
{
    SyntheticConfig data;
    TrainConfig train;
    std::vector<Variant> variants{std::begin(kAllVariants), std::end(kAllVariants)};
    std::vector<std::uint64_t> seeds{1, 2, 3};
    bool compute_silhouette = true;
    std::size_t jobs = 1;
};

inline std::vector<std::size_t> mode_labels(const Dataset& ds, std::span<const std::size_t> rows)
{
    std::vector<std::size_t> out(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        Eigen::Index best = 0;
        ds.instances[rows[r]].true_mode_weights.maxCoeff(&best);
        out[r] = static_cast<std::size_t>(best);
    }
    return out;
}

inline VariantRun summarize_run(const Dataset& ds, const TrainConfig& cfg, const TrainResult& res,
                                bool compute_silhouette)
{
    VariantRun run;
    run.variant = cfg.variant;
    run.seed = cfg.seed;
    run.history = res.history;
    run.clamp_count = res.history.clamp_count;
    run.accuracy = res.history.records.back().acc_clean;
    if (res.estimator) {
        const BasisSet initial = init_bases(res.effective.num_modes, ds.num_classes, cfg.init_diag);
        run.e_t_initial = aligned_error(initial, ds.truth);
        run.e_t_final = res.history.records.back().e_t;
        if (res.estimator->bases.num_modes() == ds.truth.num_modes() &&
            ds.truth.num_modes() <= kMaxAlignmentModes)
            run.per_basis = align_bases(res.estimator->bases, ds.truth).per_basis;
        EtTraceOptions opt;
        opt.warm_up_epochs = cfg.warm_up_epochs;
        opt.initial = run.e_t_initial;
        run.trace = et_trace_check(res.history, opt);
    }
    if (compute_silhouette && ds.num_modes > 1) {
        const auto rows = detail::sorted(res.split.test);
        const ForwardPass fp = forward_batch(res.params, gather_inputs(ds, rows));
        run.silhouette = silhouette(fp.features, mode_labels(ds, rows));
    }
    return run;
}

/// Every variant on every seed; the dataset for a seed is shared by all
/// variants. Output order: seed-major, then variant order.
inline std::vector<VariantRun> run_variant_suite(const SuiteOptions& opt)
{
    std::vector<Dataset> datasets(opt.seeds.size());
    parallel_for(opt.seeds.size(), opt.jobs, [&](std::size_t s) {
        SyntheticConfig dc = opt.data;
        dc.seed = opt.seeds[s];
        datasets[s] = generate_dataset(dc);
    });
    const std::size_t nv = opt.variants.size();
    std::vector<VariantRun> runs(opt.seeds.size() * nv);
    parallel_for(runs.size(), opt.jobs, [&](std::size_t i) {
        const std::size_t s = i / nv;
        TrainConfig tc = opt.train;
        tc.seed = opt.seeds[s];
        tc.variant = opt.variants[i % nv];
        const TrainResult res = run_training(datasets[s], tc);
        runs[i] = summarize_run(datasets[s], tc, res, opt.compute_silhouette);
    });
    return runs;
}

inline const VariantRun* find_run(const std::vector<VariantRun>& runs, Variant v, std::uint64_t seed)
{
    for (const auto& r : runs)
        if (r.variant == v && r.seed == seed)
            return &r;
    return nullptr;
}

// ---------------------------------------------------------------------------
// K-scaling on the Lipschitz manifold

struct KScalingOptions
{
    SyntheticConfig data;
    TrainConfig train;
    std::vector<std::size_t> k_values{1, 2, 3, 4, 6};
    std::vector<std::uint64_t> seeds{1, 2, 3};
    double monotone_slack = 0.02;
    double max_slope = -0.5;
    double min_r2 = 0.7;
    std::size_t jobs = 1;
};

/// Trains the mind variant (global_T at K = 1) for every K and seed and
/// measures the mean Frobenius distance between the learned mixed matrix and
/// the true T(x) on held-out instances; fits log(error) against log(K).
inline ExperimentResult k_scaling_experiment(const KScalingOptions& opt)
{
    if (opt.k_values.size() < 2)
        throw std::invalid_argument("k_scaling_experiment: need at least two K values");
    for (std::size_t k : opt.k_values)
        if (k < 1 || opt.train.feature_dim % k != 0)
            throw ConfigError("k_values: each K must be >= 1 and divide feature_dim");

    std::vector<Dataset> datasets(opt.seeds.size());
    parallel_for(opt.seeds.size(), opt.jobs, [&](std::size_t s) {
        SyntheticConfig dc = opt.data;
        dc.seed = opt.seeds[s];
        datasets[s] = generate_dataset(dc);
    });

    const std::size_t nk = opt.k_values.size();
    std::vector<SweepRun> runs(opt.seeds.size() * nk);
    parallel_for(runs.size(), opt.jobs, [&](std::size_t i) {
        const std::size_t s = i / nk;
        const std::size_t k = opt.k_values[i % nk];
        TrainConfig tc = opt.train;
        tc.seed = opt.seeds[s];
        tc.num_modes = k;
        tc.variant = k == 1 ? Variant::GlobalT : Variant::Mind;
        const TrainResult res = run_training(datasets[s], tc);
        const auto rows = detail::sorted(res.split.test);
        runs[i] = {static_cast<double>(k), opt.seeds[s], mixed_matrix_error(res.params, res.estimator->bases,
                                                                            datasets[s], rows)};
    });

    ExperimentResult out;
    out.name = "k_scaling";
    out.variable = "num_modes";
    out.metric = "mixed_frobenius_error";
    out.runs = runs;
    std::vector<double> values;
    for (std::size_t k : opt.k_values)
        values.push_back(static_cast<double>(k));
    out.points = detail::aggregate(values, runs);

    std::vector<double> lx, ly;
    for (const auto& p : out.points) {
        lx.push_back(std::log(p.value));
        ly.push_back(std::log(std::max(p.metric.mean, 1e-300)));
    }
    out.fit = fit_line(lx, ly);
    out.fit_axes = "log(error) vs log(K)";

    bool monotone = true;
    std::string worst;
    for (std::size_t i = 1; i < out.points.size(); ++i)
        if (out.points[i].metric.mean > out.points[i - 1].metric.mean + opt.monotone_slack) {
            monotone = false;
            worst = "rise at K=" + detail::fmt(out.points[i].value);
        }
    out.checks.push_back({"error non-increasing in K (slack " + detail::fmt(opt.monotone_slack) + ")", monotone,
                          monotone ? "ok" : worst});
    out.checks.push_back({"log-log slope <= " + detail::fmt(opt.max_slope), out.fit->slope <= opt.max_slope,
                          "slope " + detail::fmt(out.fit->slope)});
    out.checks.push_back({"log-log R^2 >= " + detail::fmt(opt.min_r2), out.fit->r2 >= opt.min_r2,
                          "R^2 " + detail::fmt(out.fit->r2) + " (raw " + detail::fmt(out.fit->r2_raw) + ")"});
    return out;
}

// ---------------------------------------------------------------------------
// Epsilon robustness in the oracle setting

struct EpsilonOptions
{
    SyntheticConfig data;
    std::vector<double> epsilons{0.0, 0.05, 0.1, 0.2, 0.3};
    std::vector<std::uint64_t> seeds{1, 2, 3};
    std::size_t batch_size = 1024;
    std::size_t passes = 40;
    double alpha = 0.99;
    double init_diag = 0.9;
    double tolerance = 0.05;
    double min_r2 = 0.95;
    std::size_t jobs = 1;
};

/// eps * ||mean of the other bases - T^(k)||_F, averaged over k.
inline double epsilon_prediction(const BasisSet& truth, double epsilon)
{
    const std::size_t k_modes = truth.num_modes();
    if (k_modes < 2)
        return 0.0;
    double total = 0.0;
    for (std::size_t k = 0; k < k_modes; ++k) {
        Matrix others = Matrix::Zero(truth[k].entries().rows(), truth[k].entries().cols());
        for (std::size_t j = 0; j < k_modes; ++j)
            if (j != k)
                others += truth[j].entries();
        others /= static_cast<double>(k_modes - 1);
        total += frobenius_error(others, truth[k].entries());
    }
    return epsilon * total / static_cast<double>(k_modes);
}

/// Streams the anchor-flagged instances through the estimator with one-hot
/// weights on the dominant mode and clean labels as proxies; returns the mean
/// Frobenius error of the estimated bases.
inline double oracle_estimator_error(const Dataset& ds, const EpsilonOptions& opt, std::uint64_t seed)
{
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < ds.instances.size(); ++i)
        if (ds.instances[i].anchor)
            rows.push_back(i);
    if (rows.empty())
        throw std::invalid_argument("dataset has no anchor instances");
    const auto hard = mode_labels(ds, rows);
    const auto k_modes = static_cast<Eigen::Index>(ds.num_modes);

    EstimatorState state(init_bases(ds.num_modes, ds.num_classes, opt.init_diag), opt.alpha, 0);
    std::vector<std::size_t> order(rows.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng = Rng(seed).derive(0xe5);
    std::vector<std::size_t> proxy, noisy;
    for (std::size_t pass = 0; pass < opt.passes; ++pass) {
        rng.shuffle(std::span<std::size_t>(order));
        for (std::size_t start = 0; start < order.size(); start += opt.batch_size) {
            const std::size_t stop = std::min(order.size(), start + opt.batch_size);
            Matrix omega = Matrix::Zero(static_cast<Eigen::Index>(stop - start), k_modes);
            proxy.clear();
            noisy.clear();
            for (std::size_t r = start; r < stop; ++r) {
                const std::size_t local = order[r];
                const auto& inst = ds.instances[rows[local]];
                omega(static_cast<Eigen::Index>(r - start), static_cast<Eigen::Index>(hard[local])) = 1.0;
                proxy.push_back(inst.clean_label);
                noisy.push_back(inst.noisy_label);
            }
            momentum_update(state, batch_estimate(omega, proxy, noisy, state.bases));
        }
    }
    double total = 0.0;
    for (std::size_t k = 0; k < ds.num_modes; ++k)
        total += frobenius_error(state.bases[k], ds.truth[k]);
    return total / static_cast<double>(ds.num_modes);
}

/// Estimator alone on the anchor instances with ground-truth weights and
/// clean proxies: `updates` momentum steps on batches drawn by reshuffling
/// the anchors each pass. Returns the aligned mean row-l1 error.
inline double oracle_consistency_error(const Dataset& ds, double alpha, std::size_t batch_size, std::size_t updates,
                                       double init_diag, std::uint64_t seed)
{
    std::vector<std::size_t> order;
    for (std::size_t i = 0; i < ds.instances.size(); ++i)
        if (ds.instances[i].anchor)
            order.push_back(i);
    if (order.empty())
        throw std::invalid_argument("dataset has no anchor instances");
    EstimatorState state(init_bases(ds.num_modes, ds.num_classes, init_diag), alpha, 0);
    Rng rng = Rng(seed).derive(0xc0);
    rng.shuffle(std::span<std::size_t>(order));
    const auto k_modes = static_cast<Eigen::Index>(ds.num_modes);
    std::size_t cursor = 0;
    std::vector<std::size_t> proxy, noisy;
    for (std::size_t u = 0; u < updates; ++u) {
        const std::size_t n = std::min(batch_size, order.size());
        Matrix omega(static_cast<Eigen::Index>(n), k_modes);
        proxy.clear();
        noisy.clear();
        for (std::size_t r = 0; r < n; ++r, ++cursor) {
            if (cursor == order.size()) {
                rng.shuffle(std::span<std::size_t>(order));
                cursor = 0;
            }
            const auto& inst = ds.instances[order[cursor]];
            omega.row(static_cast<Eigen::Index>(r)) = inst.true_mode_weights.transpose();
            proxy.push_back(inst.clean_label);
            noisy.push_back(inst.noisy_label);
        }
        momentum_update(state, batch_estimate(omega, proxy, noisy, state.bases));
    }
    return aligned_error(state.bases, ds.truth);
}

inline ExperimentResult epsilon_robustness_experiment(const EpsilonOptions& opt)
{
    if (opt.epsilons.size() < 2)
        throw std::invalid_argument("epsilon_robustness_experiment: need at least two epsilon values");
    const std::size_t ne = opt.epsilons.size();
    std::vector<SweepRun> runs(opt.seeds.size() * ne);
    std::vector<double> predicted(runs.size());
    parallel_for(runs.size(), opt.jobs, [&](std::size_t i) {
        SyntheticConfig dc = opt.data;
        dc.generator = GeneratorKind::Epsilon;
        dc.seed = opt.seeds[i / ne];
        dc.epsilon = opt.epsilons[i % ne];
        const Dataset ds = generate_dataset(dc);
        runs[i] = {dc.epsilon, dc.seed, oracle_estimator_error(ds, opt, dc.seed)};
        predicted[i] = epsilon_prediction(ds.truth, dc.epsilon);
    });

    ExperimentResult out;
    out.name = "epsilon_robustness";
    out.variable = "epsilon";
    out.metric = "basis_frobenius_error";
    out.runs = runs;
    out.points = detail::aggregate(opt.epsilons, runs);
    bool within = true;
    std::string detail_text;
    for (std::size_t e = 0; e < ne; ++e) {
        double pred = 0.0;
        for (std::size_t s = 0; s < opt.seeds.size(); ++s)
            pred += predicted[s * ne + e];
        pred /= static_cast<double>(opt.seeds.size());
        out.points[e].predicted = pred;
        const double gap = std::abs(out.points[e].metric.mean - pred);
        if (gap > opt.tolerance) {
            within = false;
            detail_text += "eps=" + detail::fmt(opt.epsilons[e]) + " off by " + detail::fmt(gap) + "; ";
        }
    }
    std::vector<double> ys;
    for (const auto& p : out.points)
        ys.push_back(p.metric.mean);
    out.fit = fit_line(opt.epsilons, ys);
    out.fit_axes = "error vs epsilon";
    out.checks.push_back({"measured within " + detail::fmt(opt.tolerance) + " of prediction at every epsilon",
                          within, within ? "ok" : detail_text});
    out.checks.push_back({"linear fit R^2 >= " + detail::fmt(opt.min_r2), out.fit->r2 >= opt.min_r2,
                          "R^2 " + detail::fmt(out.fit->r2)});
    return out;
}

// ---------------------------------------------------------------------------
// Generic hyperparameter sweep

inline const std::vector<std::string>& sweepable_variables()
{
    static const std::vector<std::string> names{"lambda", "temperature", "alpha", "learning_rate", "diag_mass",
                                                "num_modes", "epsilon"};
    return names;
}

struct SweepOptions
{
    SyntheticConfig data;
    TrainConfig train;
    std::string variable;
    std::vector<double> values;
    std::vector<std::uint64_t> seeds{1, 2, 3};
    std::size_t jobs = 1;
};

/// Final aligned E_T of the configured variant as one training or data
/// setting varies. No pass/fail checks.
inline ExperimentResult hyperparameter_sweep(const SweepOptions& opt)
{
    const auto& names = sweepable_variables();
    if (std::find(names.begin(), names.end(), opt.variable) == names.end())
        throw ConfigError("sweep.variable: unknown variable '" + opt.variable + "'");
    if (opt.values.empty())
        throw ConfigError("sweep.values: must not be empty");
    const std::size_t nv = opt.values.size();
    std::vector<SweepRun> runs(opt.seeds.size() * nv);
    parallel_for(runs.size(), opt.jobs, [&](std::size_t i) {
        const double v = opt.values[i % nv];
        SyntheticConfig dc = opt.data;
        TrainConfig tc = opt.train;
        dc.seed = tc.seed = opt.seeds[i / nv];
        if (opt.variable == "lambda")
            tc.lambda = v;
        else if (opt.variable == "temperature")
            tc.temperature = v;
        else if (opt.variable == "alpha")
            tc.alpha = v;
        else if (opt.variable == "learning_rate")
            tc.learning_rate = v;
        else if (opt.variable == "diag_mass")
            dc.diag_mass = v;
        else if (opt.variable == "num_modes")
            tc.num_modes = static_cast<std::size_t>(std::llround(v));
        else if (opt.variable == "epsilon") {
            dc.generator = GeneratorKind::Epsilon;
            dc.epsilon = v;
        }
        const Dataset ds = generate_dataset(dc);
        const TrainResult res = run_training(ds, tc);
        const auto& last = res.history.records.back();
        if (!last.e_t)
            throw ConfigError("variant: " + std::string(to_string(tc.variant)) + " has no estimator to sweep");
        runs[i] = {v, dc.seed, *last.e_t};
    });
    ExperimentResult out;
    out.name = "sweep_" + opt.variable;
    out.variable = opt.variable;
    out.metric = "final_e_t_aligned";
    out.runs = runs;
    out.points = detail::aggregate(opt.values, runs);
    if (nv >= 2) {
        std::vector<double> ys;
        for (const auto& p : out.points)
            ys.push_back(p.metric.mean);
        try {
            out.fit = fit_line(opt.values, ys);
            out.fit_axes = "error vs " + opt.variable;
        } catch (const std::invalid_argument&) {
        }
    }
    return out;
}

} // namespace mind

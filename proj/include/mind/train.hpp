#pragma once

// The noise-corrected training loop and its ablation variants.

#include "mind/core.hpp"
#include "mind/estimator.hpp"
#include "mind/net.hpp"
#include "mind/rng.hpp"
#include "mind/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace mind {

enum class Variant { Mind, CeOnly, GlobalT, NoDec, NoMomentum, OracleOmega };

inline constexpr Variant kAllVariants[] = {Variant::Mind,  Variant::CeOnly,     Variant::GlobalT,
                                           Variant::NoDec, Variant::NoMomentum, Variant::OracleOmega};

inline std::string_view to_string(Variant v)
{
    switch (v) {
    case Variant::Mind: return "mind";
    case Variant::CeOnly: return "ce_only";
    case Variant::GlobalT: return "global_T";
    case Variant::NoDec: return "no_dec";
    case Variant::NoMomentum: return "no_momentum";
    case Variant::OracleOmega: return "oracle_omega";
    }
    return "mind";
}

inline Variant parse_variant(std::string_view name)
{
    for (Variant v : kAllVariants)
        if (to_string(v) == name)
            return v;
    throw ConfigError("variant: unknown variant '" + std::string(name) +
                      "' (mind, ce_only, global_T, no_dec, no_momentum, oracle_omega)");
}

struct TrainConfig
{
    std::size_t epochs = 60;
    std::size_t batch_size = 128;
    double learning_rate = 0.05;
    double lambda = 0.001;
    std::size_t num_modes = 3;
    double alpha = 0.99;
    std::size_t warm_up_epochs = 5;
    double temperature = 0.1;
    std::uint64_t seed = 7;
    Variant variant = Variant::Mind;
    std::size_t hidden_dim = 32;
    std::size_t feature_dim = 24;
    double init_diag = 0.9;
    double test_fraction = 0.2;
    bool detach_omega = false;
    /// Use clean labels as the proxy for confusion counting.
    bool oracle_proxy = false;

    void validate() const
    {
        auto fail = [](const std::string& msg) { throw ConfigError(msg); };
        if (epochs < 1)
            fail("epochs: must be >= 1");
        if (batch_size < 1)
            fail("batch_size: must be >= 1");
        if (!(learning_rate > 0.0))
            fail("learning_rate: must be > 0");
        if (!(lambda >= 0.0))
            fail("lambda: must be >= 0");
        if (num_modes < 1)
            fail("num_modes: must be >= 1");
        if (!(alpha >= 0.0 && alpha < 1.0))
            fail("alpha: must lie in [0, 1)");
        if (!(temperature > 0.0))
            fail("temperature: must be > 0");
        if (hidden_dim < 1)
            fail("hidden_dim: must be >= 1");
        if (!(test_fraction > 0.0 && test_fraction < 1.0))
            fail("test_fraction: must lie in (0, 1)");
        if (!(init_diag > 0.0 && init_diag <= 1.0))
            fail("init_diag: must lie in (1/C, 1]");
    }
};

/// Settings after applying the variant's overrides.
struct EffectiveConfig
{
    std::size_t num_modes;
    double lambda;
    double alpha;
    bool correct;
    bool estimate;
    bool oracle_omega;
};

inline EffectiveConfig resolve(const TrainConfig& cfg, const Dataset& ds)
{
    EffectiveConfig e{cfg.num_modes, cfg.lambda, cfg.alpha, true, true, false};
    switch (cfg.variant) {
    case Variant::Mind: break;
    case Variant::CeOnly:
        e.lambda = 0.0;
        e.correct = false;
        e.estimate = false;
        break;
    case Variant::GlobalT: e.num_modes = 1; break;
    case Variant::NoDec: e.lambda = 0.0; break;
    case Variant::NoMomentum: e.alpha = 0.0; break;
    case Variant::OracleOmega:
        e.num_modes = ds.num_modes;
        e.oracle_omega = true;
        break;
    }
    // A single subspace has no inter-subspace term; its decoupling loss is
    // excluded from the objective.
    if (e.num_modes == 1)
        e.lambda = 0.0;
    return e;
}

struct EpochRecord
{
    std::size_t epoch = 0;
    double loss_total = 0.0;
    double loss_ce = 0.0;
    double loss_dec = 0.0;
    double acc_clean = 0.0;
    std::optional<double> e_t;
    double omega_entropy = 0.0;
};

struct RunHistory
{
    std::vector<EpochRecord> records;
    std::size_t clamp_count = 0;
};

struct DataSplit
{
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

inline DataSplit split_dataset(std::size_t n, double test_fraction, std::uint64_t seed)
{
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng = Rng(seed).derive(0x5117);
    rng.shuffle(std::span<std::size_t>(order));
    const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(n)));
    DataSplit split;
    split.train.assign(order.begin(), order.end() - static_cast<std::ptrdiff_t>(n_test));
    split.test.assign(order.end() - static_cast<std::ptrdiff_t>(n_test), order.end());
    return split;
}

struct TrainResult
{
    RunHistory history;
    NetworkParams params;
    std::optional<EstimatorState> estimator;
    EffectiveConfig effective;
    DataSplit split;
};

struct TrainingDiverged : std::runtime_error
{
    TrainingDiverged(std::size_t epoch_index, const std::string& what)
        : std::runtime_error("training diverged at epoch " + std::to_string(epoch_index) + ": " + what),
          epoch(epoch_index)
    {
    }
    std::size_t epoch;
};

inline Matrix gather_inputs(const Dataset& ds, std::span<const std::size_t> rows)
{
    Matrix x(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(ds.input_dim));
    for (std::size_t r = 0; r < rows.size(); ++r)
        x.row(static_cast<Eigen::Index>(r)) = ds.instances[rows[r]].features.transpose();
    return x;
}

inline Matrix gather_true_omega(const Dataset& ds, std::span<const std::size_t> rows)
{
    Matrix w(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(ds.num_modes));
    for (std::size_t r = 0; r < rows.size(); ++r)
        w.row(static_cast<Eigen::Index>(r)) = ds.instances[rows[r]].true_mode_weights.transpose();
    return w;
}

/// Argmax per row, ties to the lowest index.
inline std::vector<std::size_t> argmax_rows(const Matrix& m)
{
    std::vector<std::size_t> out(static_cast<std::size_t>(m.rows()));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        Eigen::Index best = 0;
        for (Eigen::Index c = 1; c < m.cols(); ++c)
            if (m(r, c) > m(r, best))
                best = c;
        out[static_cast<std::size_t>(r)] = static_cast<std::size_t>(best);
    }
    return out;
}

inline double mean_entropy(const Matrix& omega)
{
    double total = 0.0;
    for (Eigen::Index r = 0; r < omega.rows(); ++r)
        for (Eigen::Index k = 0; k < omega.cols(); ++k) {
            const double p = omega(r, k);
            if (p > 0.0)
                total -= p * std::log(p);
        }
    return omega.rows() ? total / static_cast<double>(omega.rows()) : 0.0;
}

/// Corrected posterior q_j = sum_i p_i T_ij with T = sum_k omega_k T^(k).
inline Vector corrected_posterior(const Vector& posterior, const Vector& omega, const BasisSet& bases)
{
    if (static_cast<std::size_t>(omega.size()) != bases.num_modes() ||
        static_cast<std::size_t>(posterior.size()) != bases.num_classes())
        throw DimensionMismatch("posterior / omega do not match the bases");
    return (posterior.transpose() * mix_entries(bases, omega)).transpose();
}

struct TotalLoss
{
    double value = 0.0;
    bool clamped = false;
};

/// -log q[noisy] + lambda * dec_loss_value, with q[noisy] floored at 1e-12.
inline TotalLoss total_loss(const Vector& posterior, const Vector& omega, const BasisSet& bases,
                            std::size_t noisy_label, double lambda, double dec_loss_value)
{
    const Vector q = corrected_posterior(posterior, omega, bases);
    if (noisy_label >= static_cast<std::size_t>(q.size()))
        throw std::out_of_range("noisy label outside [0, C)");
    double target = q(static_cast<Eigen::Index>(noisy_label));
    TotalLoss out;
    if (target < kProbabilityFloor) {
        target = kProbabilityFloor;
        out.clamped = true;
    }
    out.value = -std::log(target) + (lambda != 0.0 ? lambda * dec_loss_value : 0.0);
    return out;
}

/// Network outputs on a set of rows, for evaluation.
struct Evaluation
{
    ForwardPass pass;
    Matrix omega;
    std::vector<std::size_t> predictions;
};

inline Evaluation evaluate(const NetworkParams& params, const Dataset& ds, std::span<const std::size_t> rows)
{
    Evaluation ev;
    ev.pass = forward_batch(params, gather_inputs(ds, rows));
    ev.omega = assignment_batch(ev.pass.features, params.partition());
    ev.predictions = argmax_rows(ev.pass.posterior);
    return ev;
}

/// Mean over rows of ||T*(x) - sum_k omega_k(x) T^(k)||_F with learned omega.
inline double mixed_matrix_error(const NetworkParams& params, const BasisSet& bases, const Dataset& ds,
                                 std::span<const std::size_t> rows)
{
    const Evaluation ev = evaluate(params, ds, rows);
    double total = 0.0;
    for (std::size_t r = 0; r < rows.size(); ++r)
        total += frobenius_error(mix_entries(bases, ev.omega.row(static_cast<Eigen::Index>(r)).transpose()),
                                 ds.true_transition(rows[r]));
    return rows.empty() ? 0.0 : total / static_cast<double>(rows.size());
}

inline double clean_accuracy(const std::vector<std::size_t>& predictions, const Dataset& ds,
                             std::span<const std::size_t> rows)
{
    std::size_t hits = 0;
    for (std::size_t r = 0; r < rows.size(); ++r)
        hits += predictions[r] == ds.instances[rows[r]].clean_label;
    return rows.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(rows.size());
}

/// Shuffle, forward, assignment, proxy labels, estimator update (after
/// warm-up), corrected-loss gradient, SGD step; then evaluate on the
/// held-out split. Deterministic for a given (dataset, cfg).
inline TrainResult run_training(const Dataset& ds, const TrainConfig& cfg)
{
    cfg.validate();
    if (ds.instances.empty())
        throw std::invalid_argument("dataset is empty");
    const EffectiveConfig eff = resolve(cfg, ds);
    if (cfg.feature_dim % eff.num_modes != 0)
        throw ConfigError("feature_dim: must be divisible by K = " + std::to_string(eff.num_modes));
    if (eff.oracle_omega && ds.num_modes > kMaxAlignmentModes)
        throw ConfigError("oracle_omega: dataset has too many modes");

    TrainResult result;
    result.effective = eff;
    result.split = split_dataset(ds.instances.size(), cfg.test_fraction, cfg.seed);
    const auto& train_rows = result.split.train;
    const auto& test_rows = result.split.test;
    if (train_rows.empty() || test_rows.empty())
        throw ConfigError("test_fraction: leaves an empty train or test split");

    Rng root(cfg.seed);
    Rng init_rng = root.derive(1);
    Rng shuffle_rng = root.derive(2);
    const NetworkShape shape{ds.input_dim, cfg.hidden_dim, cfg.feature_dim, ds.num_classes, eff.num_modes};
    result.params = NetworkParams::init(shape, cfg.temperature, init_rng);
    NetworkParams& params = result.params;

    const BasisSet identity_channel =
        BasisSet(std::vector<TransitionMatrix>(eff.num_modes, TransitionMatrix::identity(ds.num_classes)));
    if (eff.estimate)
        result.estimator.emplace(init_bases(eff.num_modes, ds.num_classes, cfg.init_diag), eff.alpha,
                                 cfg.warm_up_epochs);

    LossSpec spec;
    spec.ce_weight = 1.0;
    spec.dec_weight = eff.lambda;
    spec.correct = eff.correct;
    spec.detach_omega = cfg.detach_omega;

    std::vector<std::size_t> order = train_rows;
    std::vector<std::size_t> proxy;
    std::vector<std::size_t> noisy;
    std::vector<std::size_t> clean;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        shuffle_rng.shuffle(std::span<std::size_t>(order));
        const bool estimating = result.estimator && warm_up_gate(*result.estimator, epoch);
        double sum_total = 0.0, sum_ce = 0.0, sum_dec = 0.0;
        std::size_t batches = 0;
        try {
            for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
                const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
                const std::span<const std::size_t> rows(order.data() + start, stop - start);
                Batch batch;
                batch.inputs = gather_inputs(ds, rows);
                noisy.resize(rows.size());
                clean.resize(rows.size());
                for (std::size_t r = 0; r < rows.size(); ++r) {
                    noisy[r] = ds.instances[rows[r]].noisy_label;
                    clean[r] = ds.instances[rows[r]].clean_label;
                }
                batch.noisy = noisy;
                if (eff.oracle_omega)
                    batch.omega_override = gather_true_omega(ds, rows);

                if (estimating) {
                    const ForwardPass fp = forward_batch(params, batch.inputs);
                    const Matrix omega = eff.oracle_omega ? *batch.omega_override
                                                          : assignment_batch(fp.features, params.partition());
                    proxy = cfg.oracle_proxy ? clean : argmax_rows(fp.posterior);
                    auto estimate = batch_estimate(omega, proxy, noisy, result.estimator->bases);
                    momentum_update(*result.estimator, estimate);
                }
                const BasisSet& channel = result.estimator ? result.estimator->bases : identity_channel;
                const GradientResult g = compute_gradients(params, batch, channel, spec);
                sgd_step(params, g.grad, cfg.learning_rate);
                if (!params.weights.all_finite())
                    throw NumericalError("weights became non-finite");
                sum_total += g.loss.total;
                sum_ce += g.loss.ce;
                sum_dec += g.loss.dec;
                result.history.clamp_count += g.loss.clamped;
                ++batches;
            }
        } catch (const NumericalError& e) {
            throw TrainingDiverged(epoch, e.what());
        }
        if (result.estimator)
            ++result.estimator->epochs_seen;

        EpochRecord rec;
        rec.epoch = epoch;
        rec.loss_total = sum_total / static_cast<double>(batches);
        rec.loss_ce = sum_ce / static_cast<double>(batches);
        rec.loss_dec = sum_dec / static_cast<double>(batches);
        const Evaluation ev = evaluate(params, ds, test_rows);
        rec.acc_clean = clean_accuracy(ev.predictions, ds, test_rows);
        rec.omega_entropy = mean_entropy(ev.omega);
        if (result.estimator)
            rec.e_t = aligned_error(result.estimator->bases, ds.truth);
        if (!std::isfinite(rec.loss_total))
            throw TrainingDiverged(epoch, "non-finite epoch loss");
        result.history.records.push_back(rec);
    }
    return result;
}

inline void write_history_csv(std::ostream& out, const RunHistory& history)
{
    out << "epoch,loss_total,loss_ce,loss_dec,acc_clean,e_t_aligned,omega_entropy\n";
    char buf[256];
    for (const auto& r : history.records) {
        std::string e_t;
        if (r.e_t) {
            std::snprintf(buf, sizeof buf, "%.10f", *r.e_t);
            e_t = buf;
        }
        std::snprintf(buf, sizeof buf, "%zu,%.10f,%.10f,%.10f,%.10f,%s,%.10f\n", r.epoch + 1, r.loss_total,
                      r.loss_ce, r.loss_dec, r.acc_clean, e_t.c_str(), r.omega_entropy);
        out << buf;
    }
}

} // namespace mind

#pragma once

// Structural self-test suite behind the `check` subcommand: finite-difference
// gradients, stochasticity and simplex invariants, partition coverage,
// sampling bands and run determinism.

#include "mind/core.hpp"
#include "mind/estimator.hpp"
#include "mind/experiments.hpp"
#include "mind/net.hpp"
#include "mind/rng.hpp"
#include "mind/synth.hpp"
#include "mind/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace mind {

// ---------------------------------------------------------------------------
// Finite-difference gradient check

inline constexpr double kGradientStep = 1e-5;
/// Denominator floor for coordinates whose gradient is essentially zero.
inline constexpr double kRelativeErrorFloor = 1e-6;

inline double relative_error(double analytic, double numeric)
{
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), kRelativeErrorFloor});
}

struct GradientProblem
{
    NetworkParams params;
    Batch batch;
    BasisSet bases;
};

/// Random row-stochastic matrix with entries bounded away from zero.
inline TransitionMatrix random_transition(std::size_t num_classes, Rng& rng)
{
    const auto c = static_cast<Eigen::Index>(num_classes);
    Matrix m(c, c);
    for (Eigen::Index i = 0; i < c; ++i) {
        for (Eigen::Index j = 0; j < c; ++j)
            m(i, j) = 0.05 + rng.uniform();
        m.row(i) /= m.row(i).sum();
    }
    return TransitionMatrix(std::move(m));
}

/// Network (d, H, D, K, C) with uniform init, standard normal inputs and
/// random noisy labels and bases.
inline GradientProblem make_gradient_problem(std::uint64_t seed, const NetworkShape& shape, std::size_t batch_size,
                                             double temperature = 0.1)
{
    Rng rng(seed);
    Rng init = rng.derive(1);
    Rng data = rng.derive(2);
    GradientProblem p{NetworkParams::init(shape, temperature, init), {}, {}};
    p.batch.inputs.resize(static_cast<Eigen::Index>(batch_size), static_cast<Eigen::Index>(shape.input_dim));
    for (Eigen::Index r = 0; r < p.batch.inputs.rows(); ++r)
        for (Eigen::Index j = 0; j < p.batch.inputs.cols(); ++j)
            p.batch.inputs(r, j) = data.normal();
    for (std::size_t r = 0; r < batch_size; ++r)
        p.batch.noisy.push_back(static_cast<std::size_t>(data.below(shape.num_classes)));
    std::vector<TransitionMatrix> bases;
    for (std::size_t k = 0; k < shape.num_modes; ++k)
        bases.push_back(random_transition(shape.num_classes, data));
    p.bases = BasisSet(std::move(bases));
    return p;
}

/// Largest relative error over every parameter coordinate between the
/// analytic gradient and central differences of the same loss.
inline double max_gradient_error(const GradientProblem& p, const LossSpec& spec, double step = kGradientStep)
{
    const GradientResult analytic = compute_gradients(p.params, p.batch, p.bases, spec);
    NetworkParams probe = p.params;
    std::vector<const double*> grads;
    analytic.grad.for_each([&](const char*, const auto& g) { grads.push_back(g.data()); });
    std::vector<std::pair<double*, Eigen::Index>> tensors;
    probe.weights.for_each([&](const char*, auto& t) { tensors.emplace_back(t.data(), t.size()); });

    double worst = 0.0;
    for (std::size_t t = 0; t < tensors.size(); ++t) {
        auto [data, size] = tensors[t];
        for (Eigen::Index i = 0; i < size; ++i) {
            const double saved = data[i];
            data[i] = saved + step;
            const double up = compute_gradients(probe, p.batch, p.bases, spec).loss.total;
            data[i] = saved - step;
            const double down = compute_gradients(probe, p.batch, p.bases, spec).loss.total;
            data[i] = saved;
            worst = std::max(worst, relative_error(grads[t][i], (up - down) / (2.0 * step)));
        }
    }
    return worst;
}

struct GradientCheckRow
{
    std::uint64_t seed = 0;
    double ce = 0.0;
    double dec = 0.0;
    double total = 0.0;
};

inline constexpr NetworkShape kGradientCheckShape{3, 4, 4, 3, 2};

inline std::vector<GradientCheckRow> gradient_check(std::size_t seeds, std::size_t batch_size = 5,
                                                    double lambda = 1.0)
{
    std::vector<GradientCheckRow> rows;
    for (std::uint64_t s = 1; s <= seeds; ++s) {
        const GradientProblem p = make_gradient_problem(s, kGradientCheckShape, batch_size);
        rows.push_back({s, max_gradient_error(p, LossSpec::corrected_ce()),
                        max_gradient_error(p, LossSpec::decoupling()),
                        max_gradient_error(p, LossSpec::total(lambda))});
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Invariant checks

inline Vector random_simplex(std::size_t k, Rng& rng)
{
    Vector w(static_cast<Eigen::Index>(k));
    for (Eigen::Index i = 0; i < w.size(); ++i)
        w(i) = -std::log(1.0 - rng.uniform());
    return w / w.sum();
}

inline CheckResult check_gradients(std::size_t seeds = 10, double tolerance = 1e-4)
{
    double worst = 0.0;
    for (const auto& row : gradient_check(seeds))
        worst = std::max({worst, row.ce, row.dec, row.total});
    return {"finite-difference gradients (" + std::to_string(seeds) + " seeds)", worst < tolerance,
            "max relative error " + detail::fmt(worst)};
}

inline CheckResult check_stochasticity(std::uint64_t seed = 11, std::size_t trials = 500)
{
    Rng rng(seed);
    for (std::size_t t = 0; t < trials; ++t) {
        const std::size_t c = 2 + rng.below(6);
        const std::size_t k = 1 + rng.below(6);
        std::vector<TransitionMatrix> bases;
        for (std::size_t j = 0; j < k; ++j)
            bases.push_back(random_transition(c, rng));
        const BasisSet set(std::move(bases));
        const Matrix mixed = mix_entries(set, random_simplex(k, rng));
        if (auto v = validate_transition(mixed))
            return {"stochasticity through mix and momentum", false, "mix: " + v->describe()};

        EstimatorState state(set, rng.uniform(0.0, 0.999), 0);
        for (std::size_t step = 0; step < 20; ++step) {
            const std::size_t n = 1 + rng.below(40);
            Matrix omega(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k));
            std::vector<std::size_t> proxy(n), noisy(n);
            for (std::size_t r = 0; r < n; ++r) {
                omega.row(static_cast<Eigen::Index>(r)) = random_simplex(k, rng).transpose();
                proxy[r] = static_cast<std::size_t>(rng.below(c));
                noisy[r] = static_cast<std::size_t>(rng.below(c));
            }
            momentum_update(state, batch_estimate(omega, proxy, noisy, state.bases));
            for (const auto& b : state.bases)
                if (auto v = validate_transition(b.entries()))
                    return {"stochasticity through mix and momentum", false, "momentum: " + v->describe()};
        }
    }
    return {"stochasticity through mix and momentum", true, std::to_string(trials) + " random trials"};
}

inline CheckResult check_simplex_outputs(std::uint64_t seed = 12, std::size_t trials = 200)
{
    Rng rng(seed);
    for (std::size_t t = 0; t < trials; ++t) {
        const std::size_t k = 1 + rng.below(4);
        const std::size_t c = 2 + rng.below(5);
        const NetworkShape shape{1 + static_cast<std::size_t>(rng.below(6)), 2 + static_cast<std::size_t>(rng.below(8)),
                                 k * (2 + static_cast<std::size_t>(rng.below(3))), c, k};
        Rng init = rng.derive(t);
        const NetworkParams params = NetworkParams::init(shape, 0.1, init);
        // Inputs span ordinary to very large magnitudes.
        const double scale = std::pow(10.0, rng.uniform(-2.0, 4.0));
        Matrix x(8, static_cast<Eigen::Index>(shape.input_dim));
        for (Eigen::Index r = 0; r < x.rows(); ++r)
            for (Eigen::Index j = 0; j < x.cols(); ++j)
                x(r, j) = scale * rng.normal();
        const ForwardPass fp = forward_batch(params, x);
        const Matrix omega = assignment_batch(fp.features, params.partition());
        std::vector<TransitionMatrix> bases;
        for (std::size_t j = 0; j < k; ++j)
            bases.push_back(random_transition(c, rng));
        const BasisSet set(std::move(bases));
        for (Eigen::Index r = 0; r < x.rows(); ++r) {
            if (!is_simplex(omega.row(r).transpose()))
                return {"simplex outputs", false, "assignment row is not a probability vector"};
            if (!is_simplex(fp.posterior.row(r).transpose()))
                return {"simplex outputs", false, "posterior row is not a probability vector"};
            if (!is_simplex(corrected_posterior(fp.posterior.row(r).transpose(), omega.row(r).transpose(), set)))
                return {"simplex outputs", false, "corrected posterior is not a probability vector"};
        }
    }
    return {"simplex outputs", true, std::to_string(trials) + " random networks"};
}

inline CheckResult check_partitions(std::size_t max_dim = 64)
{
    for (std::size_t d = 1; d <= max_dim; ++d)
        for (std::size_t k = 1; k <= d; ++k) {
            if (d % k != 0)
                continue;
            const SubspacePartition part = partition_subspaces(d, k);
            std::vector<int> hits(d, 0);
            for (std::size_t m = 0; m < k; ++m)
                for (std::size_t u = part.begin(m); u < part.end(m); ++u) {
                    ++hits[u];
                    if (part.owner(u) != m)
                        return {"partition coverage", false, "owner mismatch at D=" + std::to_string(d)};
                }
            if (std::any_of(hits.begin(), hits.end(), [](int h) { return h != 1; }))
                return {"partition coverage", false,
                        "D=" + std::to_string(d) + " K=" + std::to_string(k) + " not an exact cover"};
        }
    return {"partition coverage", true, "all divisible (D, K) with D <= " + std::to_string(max_dim)};
}

/// Empirical class frequencies of sample_noisy_label against each row,
/// within `sigmas` binomial standard deviations.
inline CheckResult check_sampling_bands(std::uint64_t seed = 13, std::size_t draws = 100000, double sigmas = 4.0)
{
    Rng rng(seed);
    const TransitionMatrix t = random_transition(5, rng);
    for (std::size_t y = 0; y < t.num_classes(); ++y) {
        std::vector<std::size_t> counts(t.num_classes(), 0);
        for (std::size_t i = 0; i < draws; ++i)
            ++counts[sample_noisy_label(t, y, rng)];
        for (std::size_t j = 0; j < t.num_classes(); ++j) {
            const double p = t(y, j);
            const double n = static_cast<double>(draws);
            const double sd = std::sqrt(n * p * (1.0 - p));
            if (std::abs(static_cast<double>(counts[j]) - n * p) > sigmas * sd)
                return {"Monte-Carlo sampling bands", false,
                        "row " + std::to_string(y) + " class " + std::to_string(j) + " outside band"};
        }
    }
    return {"Monte-Carlo sampling bands", true,
            std::to_string(draws) + " draws per row within " + detail::fmt(sigmas) + " sigma"};
}

inline std::string history_csv(const Dataset& ds, const TrainConfig& cfg)
{
    std::ostringstream out;
    write_history_csv(out, run_training(ds, cfg).history);
    return out.str();
}

inline CheckResult check_determinism()
{
    SyntheticConfig dc;
    dc.samples_per_mode = 200;
    dc.seed = 5;
    TrainConfig tc;
    tc.epochs = 4;
    tc.warm_up_epochs = 1;
    tc.batch_size = 32;
    std::ostringstream a, b;
    write_dataset(a, generate_dataset(dc));
    write_dataset(b, generate_dataset(dc));
    if (a.str() != b.str())
        return {"determinism", false, "dataset files differ"};
    const Dataset ds = generate_dataset(dc);
    if (history_csv(ds, tc) != history_csv(ds, tc))
        return {"determinism", false, "history CSVs differ"};
    return {"determinism", true, "identical dataset and history CSV bytes"};
}

inline std::vector<CheckResult> run_self_checks()
{
    return {check_gradients(), check_stochasticity(), check_simplex_outputs(), check_partitions(),
            check_sampling_bands(), check_determinism()};
}

} // namespace mind

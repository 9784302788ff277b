#pragma once

// Online estimation of the basis transition matrices: weighted confusion
// counts per mini-batch, smoothed into the global bases by an exponential
// moving average once warm-up has passed.

#include "mind/core.hpp"

#include <cstddef>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mind {

inline constexpr double kEstimatorStabilizer = 1e-8;

/// Every basis set to `init_diag` on the diagonal, the rest uniform.
inline BasisSet init_bases(std::size_t num_modes, std::size_t num_classes, double init_diag = 0.9)
{
    if (num_modes < 1 || num_classes < 2)
        throw std::invalid_argument("init_bases needs K >= 1 and C >= 2");
    if (!(init_diag > 1.0 / static_cast<double>(num_classes) && init_diag <= 1.0))
        throw std::invalid_argument("init_diag must lie in (1/C, 1]");
    std::vector<TransitionMatrix> bases(num_modes, TransitionMatrix::uniform_off_diagonal(num_classes, init_diag));
    return BasisSet(std::move(bases));
}

struct EstimatorState
{
    BasisSet bases;
    double alpha = 0.99;
    std::size_t warm_up_epochs = 5;
    std::size_t epochs_seen = 0;
    double stabilizer = kEstimatorStabilizer;

    EstimatorState(BasisSet initial, double momentum, std::size_t warm_up)
        : bases(std::move(initial)), alpha(momentum), warm_up_epochs(warm_up)
    {
        if (!(alpha >= 0.0 && alpha < 1.0))
            throw std::invalid_argument("momentum alpha must lie in [0, 1)");
    }
};

/// True once `epoch` (zero-based) has reached the warm-up length.
inline bool warm_up_gate(const EstimatorState& state, std::size_t epoch) noexcept
{
    return epoch >= state.warm_up_epochs;
}

/// Weighted confusion estimate per mode:
///   T_k[i][j] = sum_x omega_k(x) [yhat=i, ytilde=j] / (sum_x omega_k(x) [yhat=i] + eps).
/// Rows without proxy mass keep the corresponding row of `fallback`;
/// every row is renormalized to sum to one.
///
/// `omega` is n x K, one row per instance.
inline std::vector<TransitionMatrix> batch_estimate(const Matrix& omega, std::span<const std::size_t> proxy,
                                                    std::span<const std::size_t> noisy, const BasisSet& fallback,
                                                    double stabilizer = kEstimatorStabilizer)
{
    const auto n = static_cast<std::size_t>(omega.rows());
    if (n == 0 || proxy.size() != n || noisy.size() != n)
        throw DimensionMismatch("omega, proxy labels and noisy labels must have the same non-zero length");
    const std::size_t k_modes = fallback.num_modes();
    const std::size_t c = fallback.num_classes();
    if (static_cast<std::size_t>(omega.cols()) != k_modes)
        throw DimensionMismatch("omega width differs from K");
    for (std::size_t r = 0; r < n; ++r)
        if (proxy[r] >= c || noisy[r] >= c)
            throw std::out_of_range("label outside [0, C) at batch position " + std::to_string(r));

    const auto ci = static_cast<Eigen::Index>(c);
    std::vector<TransitionMatrix> out;
    out.reserve(k_modes);
    for (std::size_t k = 0; k < k_modes; ++k) {
        const auto kk = static_cast<Eigen::Index>(k);
        Matrix counts = Matrix::Zero(ci, ci);
        for (std::size_t r = 0; r < n; ++r)
            counts(static_cast<Eigen::Index>(proxy[r]), static_cast<Eigen::Index>(noisy[r])) +=
                omega(static_cast<Eigen::Index>(r), kk);
        Matrix est(ci, ci);
        for (Eigen::Index i = 0; i < ci; ++i) {
            const double mass = counts.row(i).sum();
            if (mass <= 0.0) {
                est.row(i) = fallback[k].entries().row(i);
                continue;
            }
            est.row(i) = counts.row(i) / (mass + stabilizer);
            est.row(i) /= est.row(i).sum();
        }
        out.emplace_back(std::move(est));
    }
    return out;
}

/// T_t = alpha T_{t-1} + (1 - alpha) T_batch, per mode.
inline void momentum_update(EstimatorState& state, const std::vector<TransitionMatrix>& batch)
{
    if (state.epochs_seen < state.warm_up_epochs)
        throw std::logic_error("momentum_update called during warm-up");
    if (batch.size() != state.bases.num_modes())
        throw DimensionMismatch("batch estimate has the wrong number of modes");
    std::vector<TransitionMatrix> next;
    next.reserve(batch.size());
    for (std::size_t k = 0; k < batch.size(); ++k) {
        if (batch[k].num_classes() != state.bases.num_classes())
            throw DimensionMismatch("batch estimate has the wrong class count");
        Matrix m = state.alpha * state.bases[k].entries() + (1.0 - state.alpha) * batch[k].entries();
        // Rounding can leave a row a few ulp off one.
        for (Eigen::Index i = 0; i < m.rows(); ++i)
            m.row(i) /= m.row(i).sum();
        next.emplace_back(std::move(m));
    }
    state.bases = BasisSet(std::move(next));
}

/// Same plain-text block format as network snapshots.
inline void write_state(std::ostream& out, const EstimatorState& state)
{
    const auto old_precision = out.precision(17);
    out << "# mind-estimator v1 alpha=" << state.alpha << " warm_up=" << state.warm_up_epochs
        << " epochs_seen=" << state.epochs_seen << " K=" << state.bases.num_modes() << '\n';
    for (std::size_t k = 0; k < state.bases.num_modes(); ++k) {
        const Matrix& m = state.bases[k].entries();
        out << "layer basis_" << k << ' ' << m.rows() << ' ' << m.cols() << '\n';
        for (Eigen::Index i = 0; i < m.rows(); ++i) {
            for (Eigen::Index j = 0; j < m.cols(); ++j)
                out << (j ? " " : "") << m(i, j);
            out << '\n';
        }
    }
    out.precision(old_precision);
}

} // namespace mind

#pragma once

// Transition-matrix algebra shared by every other module: validation,
// mixing, sampling, error metrics and permutation alignment of basis sets.

#include "mind/rng.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace mind {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct DimensionMismatch : std::invalid_argument
{
    using std::invalid_argument::invalid_argument;
};

inline constexpr double kRowSumTolerance = 1e-9;
// Convex combinations of entries equal to 1 can land one ulp above it.
inline constexpr double kEntryRangeSlack = 1e-12;

struct TransitionViolation
{
    enum class Kind { NonStochasticRow, OutOfRangeEntry };
    Kind kind;
    std::size_t row;
    std::size_t col; // unused for NonStochasticRow
    double value;    // offending entry or row sum

    std::string describe() const
    {
        std::ostringstream out;
        if (kind == Kind::NonStochasticRow)
            out << "NonStochasticRow(" << row << ", " << value << ")";
        else
            out << "OutOfRangeEntry(" << row << ", " << col << ", " << value << ")";
        return out.str();
    }
};

/// First violation in row-major scan order; each row is checked for entry
/// range before its sum.
inline std::optional<TransitionViolation> validate_transition(const Matrix& m)
{
    if (m.rows() != m.cols() || m.rows() < 1)
        throw DimensionMismatch("transition matrix must be square and non-empty");
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        double sum = 0.0;
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            const double v = m(i, j);
            if (!(v >= -kEntryRangeSlack && v <= 1.0 + kEntryRangeSlack))
                return TransitionViolation{TransitionViolation::Kind::OutOfRangeEntry, static_cast<std::size_t>(i),
                                           static_cast<std::size_t>(j), v};
            sum += v;
        }
        if (!(std::abs(sum - 1.0) <= kRowSumTolerance))
            return TransitionViolation{TransitionViolation::Kind::NonStochasticRow, static_cast<std::size_t>(i), 0,
                                       sum};
    }
    return std::nullopt;
}

/// Row-stochastic C x C matrix; entry (i, j) = P(noisy = j | clean = i).
class TransitionMatrix
{
public:
    explicit TransitionMatrix(Matrix entries) : m_entries(std::move(entries))
    {
        if (auto violation = validate_transition(m_entries))
            throw std::invalid_argument("invalid transition matrix: " + violation->describe());
    }

    static TransitionMatrix identity(std::size_t num_classes)
    {
        const auto c = static_cast<Eigen::Index>(num_classes);
        return TransitionMatrix(Matrix::Identity(c, c));
    }

    /// `diag` on the diagonal, the rest spread evenly over the row.
    static TransitionMatrix uniform_off_diagonal(std::size_t num_classes, double diag)
    {
        const auto c = static_cast<Eigen::Index>(num_classes);
        if (num_classes == 1)
            return identity(1);
        Matrix m = Matrix::Constant(c, c, (1.0 - diag) / static_cast<double>(num_classes - 1));
        m.diagonal().setConstant(diag);
        return TransitionMatrix(std::move(m));
    }

    std::size_t num_classes() const noexcept { return static_cast<std::size_t>(m_entries.rows()); }
    const Matrix& entries() const noexcept { return m_entries; }
    double operator()(std::size_t i, std::size_t j) const
    {
        return m_entries(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    }

    bool operator==(const TransitionMatrix& other) const { return m_entries == other.m_entries; }

private:
    Matrix m_entries;
};

class BasisSet
{
public:
    BasisSet() = default;
    explicit BasisSet(std::vector<TransitionMatrix> bases) : m_bases(std::move(bases))
    {
        if (m_bases.empty())
            throw std::invalid_argument("basis set needs at least one basis");
        for (const auto& b : m_bases)
            if (b.num_classes() != m_bases.front().num_classes())
                throw DimensionMismatch("all bases must share the class count");
    }

    std::size_t num_modes() const noexcept { return m_bases.size(); }
    std::size_t num_classes() const noexcept { return m_bases.empty() ? 0 : m_bases.front().num_classes(); }
    const TransitionMatrix& operator[](std::size_t k) const { return m_bases.at(k); }
    const std::vector<TransitionMatrix>& bases() const noexcept { return m_bases; }
    auto begin() const noexcept { return m_bases.begin(); }
    auto end() const noexcept { return m_bases.end(); }

    bool operator==(const BasisSet& other) const { return m_bases == other.m_bases; }

private:
    std::vector<TransitionMatrix> m_bases;
};

inline constexpr double kSimplexTolerance = 1e-9;

inline bool is_simplex(const Vector& w, double tol = kSimplexTolerance)
{
    if (w.size() == 0)
        return false;
    for (Eigen::Index k = 0; k < w.size(); ++k)
        if (!(w(k) >= 0.0) || !std::isfinite(w(k)))
            return false;
    return std::abs(w.sum() - 1.0) <= tol;
}

/// Per-instance mode membership probabilities, omega(x).
class AssignmentWeights
{
public:
    explicit AssignmentWeights(Vector weights) : m_weights(std::move(weights))
    {
        if (!is_simplex(m_weights))
            throw std::invalid_argument("assignment weights must be a probability vector");
    }

    static AssignmentWeights one_hot(std::size_t num_modes, std::size_t k)
    {
        Vector w = Vector::Zero(static_cast<Eigen::Index>(num_modes));
        w(static_cast<Eigen::Index>(k)) = 1.0;
        return AssignmentWeights(std::move(w));
    }

    std::size_t size() const noexcept { return static_cast<std::size_t>(m_weights.size()); }
    const Vector& values() const noexcept { return m_weights; }
    double operator[](std::size_t k) const { return m_weights(static_cast<Eigen::Index>(k)); }

    std::size_t argmax() const
    {
        Eigen::Index best = 0;
        m_weights.maxCoeff(&best);
        return static_cast<std::size_t>(best);
    }

private:
    Vector m_weights;
};

/// sum_k w_k T^(k) without validation; hot-path helper for training.
inline Matrix mix_entries(const BasisSet& bases, const Vector& w)
{
    Matrix out = Matrix::Zero(static_cast<Eigen::Index>(bases.num_classes()),
                              static_cast<Eigen::Index>(bases.num_classes()));
    for (std::size_t k = 0; k < bases.num_modes(); ++k)
        out.noalias() += w(static_cast<Eigen::Index>(k)) * bases[k].entries();
    return out;
}

inline TransitionMatrix mix_transition(const BasisSet& bases, const AssignmentWeights& w)
{
    if (w.size() != bases.num_modes())
        throw DimensionMismatch("assignment weight count differs from basis count");
    return TransitionMatrix(mix_entries(bases, w.values()));
}

/// Inverse-CDF draw from row `clean_label`, scanning classes in ascending order.
inline std::size_t sample_noisy_label(const TransitionMatrix& t, std::size_t clean_label, Rng& rng)
{
    if (clean_label >= t.num_classes())
        throw std::out_of_range("clean label outside [0, C)");
    const double u = rng.uniform();
    double cumulative = 0.0;
    std::size_t last_positive = clean_label;
    for (std::size_t j = 0; j < t.num_classes(); ++j) {
        const double p = t(clean_label, j);
        if (p <= 0.0)
            continue;
        cumulative += p;
        last_positive = j;
        if (u < cumulative)
            return j;
    }
    // u landed in the rounding gap above the cumulative sum.
    return last_positive;
}

inline void require_same_shape(const Matrix& a, const Matrix& b)
{
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw DimensionMismatch("matrix shapes differ");
}

/// E_T: mean over rows of the row-wise l1 distance. Lies in [0, 2].
inline double l1_error(const Matrix& estimated, const Matrix& truth)
{
    require_same_shape(estimated, truth);
    return (estimated - truth).cwiseAbs().rowwise().sum().mean();
}

inline double l1_error(const TransitionMatrix& estimated, const TransitionMatrix& truth)
{
    return l1_error(estimated.entries(), truth.entries());
}

inline double frobenius_error(const Matrix& estimated, const Matrix& truth)
{
    require_same_shape(estimated, truth);
    return (estimated - truth).norm();
}

inline double frobenius_error(const TransitionMatrix& estimated, const TransitionMatrix& truth)
{
    return frobenius_error(estimated.entries(), truth.entries());
}

struct Alignment
{
    /// estimated[permutation[k]] is matched to truth[k].
    std::vector<std::size_t> permutation;
    /// Mean l1_error over matched pairs.
    double error = 0.0;
    std::vector<double> per_basis;
};

inline constexpr std::size_t kMaxAlignmentModes = 8;

/// Exhaustive search over K! permutations; ties resolve to the
/// lexicographically smallest permutation.
inline Alignment align_bases(const BasisSet& estimated, const BasisSet& truth)
{
    const std::size_t k = truth.num_modes();
    if (estimated.num_modes() != k)
        throw DimensionMismatch("basis sets differ in mode count");
    if (estimated.num_classes() != truth.num_classes())
        throw DimensionMismatch("basis sets differ in class count");
    if (k > kMaxAlignmentModes)
        throw std::invalid_argument("exhaustive alignment supports at most 8 modes");

    // cost[e][t] = l1_error(estimated[e], truth[t])
    std::vector<std::vector<double>> cost(k, std::vector<double>(k));
    for (std::size_t e = 0; e < k; ++e)
        for (std::size_t t = 0; t < k; ++t)
            cost[e][t] = l1_error(estimated[e], truth[t]);

    std::vector<std::size_t> perm(k);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    Alignment best;
    best.error = std::numeric_limits<double>::infinity();
    do {
        double total = 0.0;
        for (std::size_t t = 0; t < k; ++t)
            total += cost[perm[t]][t];
        const double mean = total / static_cast<double>(k);
        if (mean < best.error) {
            best.error = mean;
            best.permutation = perm;
        }
    } while (std::next_permutation(perm.begin(), perm.end()));

    best.per_basis.resize(k);
    for (std::size_t t = 0; t < k; ++t)
        best.per_basis[t] = cost[best.permutation[t]][t];
    return best;
}

/// Estimation error for basis sets of possibly different size. Equal sizes
/// use align_bases; otherwise every true basis is matched to its nearest
/// estimated basis (so a single global estimate is compared to each mode).
inline double aligned_error(const BasisSet& estimated, const BasisSet& truth)
{
    if (estimated.num_modes() == truth.num_modes() && truth.num_modes() <= kMaxAlignmentModes)
        return align_bases(estimated, truth).error;
    double total = 0.0;
    for (const auto& t : truth) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& e : estimated)
            best = std::min(best, l1_error(e, t));
        total += best;
    }
    return total / static_cast<double>(truth.num_modes());
}

} // namespace mind

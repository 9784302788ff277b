#pragma once

// Encoder + classifier with the latent decoupling estimator (LDE):
// contiguous subspace partition of the feature layer, cosine-affinity
// decoupling loss over feature-layer columns, and activation-magnitude
// gating. All derivatives are written out by hand.

#include "mind/core.hpp"
#include "mind/rng.hpp"

#include <cmath>
#include <cstddef>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

namespace mind {

using RowVector = Eigen::RowVectorXd;

struct NumericalError : std::runtime_error
{
    using std::runtime_error::runtime_error;
};

struct SubspacePartition
{
    std::size_t feature_dim = 0;
    std::size_t num_modes = 0;

    std::size_t chunk() const noexcept { return feature_dim / num_modes; }
    std::size_t begin(std::size_t k) const noexcept { return k * chunk(); }
    std::size_t end(std::size_t k) const noexcept { return (k + 1) * chunk(); }
    std::size_t owner(std::size_t dim) const noexcept { return dim / chunk(); }
};

/// K equal contiguous chunks [k D/K, (k+1) D/K).
inline SubspacePartition partition_subspaces(std::size_t feature_dim, std::size_t num_modes)
{
    if (num_modes < 1)
        throw std::invalid_argument("partition needs K >= 1");
    if (feature_dim == 0 || feature_dim % num_modes != 0)
        throw std::invalid_argument("feature dimension " + std::to_string(feature_dim) +
                                    " is not divisible by K = " + std::to_string(num_modes));
    return SubspacePartition{feature_dim, num_modes};
}

struct NetworkShape
{
    std::size_t input_dim = 16;
    std::size_t hidden_dim = 32;
    std::size_t feature_dim = 24;
    std::size_t num_classes = 4;
    std::size_t num_modes = 3;
};

/// Trainable tensors. Also used as the gradient record.
struct ParamTensors
{
    Matrix w_in;     // d x H
    RowVector b_in;  // H
    Matrix w_feat;   // H x D; column u is the basis vector of feature dim u
    RowVector b_feat;
    Matrix w_cls; // D x C
    RowVector b_cls;

    template <typename Fn>
    void for_each(Fn&& fn)
    {
        fn("w_in", w_in);
        fn("b_in", b_in);
        fn("w_feat", w_feat);
        fn("b_feat", b_feat);
        fn("w_cls", w_cls);
        fn("b_cls", b_cls);
    }

    template <typename Fn>
    void for_each(Fn&& fn) const
    {
        fn("w_in", w_in);
        fn("b_in", b_in);
        fn("w_feat", w_feat);
        fn("b_feat", b_feat);
        fn("w_cls", w_cls);
        fn("b_cls", b_cls);
    }

    static ParamTensors zeros(const NetworkShape& s)
    {
        const auto d = static_cast<Eigen::Index>(s.input_dim);
        const auto h = static_cast<Eigen::Index>(s.hidden_dim);
        const auto f = static_cast<Eigen::Index>(s.feature_dim);
        const auto c = static_cast<Eigen::Index>(s.num_classes);
        return ParamTensors{Matrix::Zero(d, h), RowVector::Zero(h), Matrix::Zero(h, f),
                            RowVector::Zero(f), Matrix::Zero(f, c), RowVector::Zero(c)};
    }

    bool all_finite() const
    {
        bool finite = true;
        for_each([&](const char*, const auto& t) { finite = finite && t.allFinite(); });
        return finite;
    }
};

struct NetworkParams
{
    ParamTensors weights;
    double temperature = 0.1;
    std::size_t num_modes = 1;

    std::size_t input_dim() const noexcept { return static_cast<std::size_t>(weights.w_in.rows()); }
    std::size_t hidden_dim() const noexcept { return static_cast<std::size_t>(weights.w_in.cols()); }
    std::size_t feature_dim() const noexcept { return static_cast<std::size_t>(weights.w_feat.cols()); }
    std::size_t num_classes() const noexcept { return static_cast<std::size_t>(weights.w_cls.cols()); }
    SubspacePartition partition() const { return partition_subspaces(feature_dim(), num_modes); }

    void validate() const
    {
        if (!(temperature > 0.0))
            throw std::invalid_argument("temperature must be > 0");
        partition_subspaces(feature_dim(), num_modes);
        if (!weights.all_finite())
            throw NumericalError("network weights are not finite");
    }

    static NetworkParams zeros(const NetworkShape& s, double temperature)
    {
        NetworkParams p{ParamTensors::zeros(s), temperature, s.num_modes};
        p.validate();
        return p;
    }

    /// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)] for weights and biases.
    static NetworkParams init(const NetworkShape& s, double temperature, Rng& rng)
    {
        NetworkParams p = zeros(s, temperature);
        auto fill = [&](auto& t, std::size_t fan_in) {
            const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
            for (Eigen::Index i = 0; i < t.size(); ++i)
                t.data()[i] = rng.uniform(-bound, bound);
        };
        fill(p.weights.w_in, s.input_dim);
        fill(p.weights.b_in, s.input_dim);
        fill(p.weights.w_feat, s.hidden_dim);
        fill(p.weights.b_feat, s.hidden_dim);
        fill(p.weights.w_cls, s.feature_dim);
        fill(p.weights.b_cls, s.feature_dim);
        return p;
    }
};

/// Row-wise softmax with the row max subtracted first.
inline Matrix softmax_rows(const Matrix& logits)
{
    Matrix out(logits.rows(), logits.cols());
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
        const double top = logits.row(r).maxCoeff();
        out.row(r) = (logits.row(r).array() - top).exp().matrix();
        out.row(r) /= out.row(r).sum();
    }
    return out;
}

inline Vector softmax(const Vector& scores)
{
    return softmax_rows(scores.transpose()).transpose();
}

/// Batched activations; row n belongs to input row n.
struct ForwardPass
{
    Matrix pre_hidden; // n x H
    Matrix hidden;     // n x H, max(0, pre_hidden)
    Matrix features;   // n x D, h(x)
    Matrix logits;     // n x C
    Matrix posterior;  // n x C
};

inline ForwardPass forward_batch(const NetworkParams& params, const Matrix& inputs)
{
    if (static_cast<std::size_t>(inputs.cols()) != params.input_dim())
        throw DimensionMismatch("input width differs from network input_dim");
    const auto& w = params.weights;
    ForwardPass fp;
    fp.pre_hidden = inputs * w.w_in;
    fp.pre_hidden.rowwise() += w.b_in;
    fp.hidden = fp.pre_hidden.cwiseMax(0.0);
    fp.features = fp.hidden * w.w_feat;
    fp.features.rowwise() += w.b_feat;
    fp.logits = fp.features * w.w_cls;
    fp.logits.rowwise() += w.b_cls;
    fp.posterior = softmax_rows(fp.logits);
    if (!fp.posterior.allFinite() || !fp.features.allFinite())
        throw NumericalError("forward pass produced non-finite values");
    return fp;
}

struct ForwardResult
{
    Vector features;
    Vector logits;
    Vector posterior;
};

inline ForwardResult forward(const NetworkParams& params, const Vector& x)
{
    if (static_cast<std::size_t>(x.size()) != params.input_dim())
        throw DimensionMismatch("input length differs from network input_dim");
    ForwardPass fp = forward_batch(params, x.transpose());
    return ForwardResult{fp.features.row(0).transpose(), fp.logits.row(0).transpose(),
                         fp.posterior.row(0).transpose()};
}

/// Mean |h_d| over each subspace, one column per mode.
inline Matrix subspace_scores(const Matrix& features, const SubspacePartition& part)
{
    if (static_cast<std::size_t>(features.cols()) != part.feature_dim)
        throw DimensionMismatch("feature width differs from partition");
    Matrix scores(features.rows(), static_cast<Eigen::Index>(part.num_modes));
    const auto width = static_cast<Eigen::Index>(part.chunk());
    for (std::size_t k = 0; k < part.num_modes; ++k)
        scores.col(static_cast<Eigen::Index>(k)) =
            features.middleCols(static_cast<Eigen::Index>(part.begin(k)), width).cwiseAbs().rowwise().mean();
    return scores;
}

/// omega(x) = softmax over subspaces of the mean activation magnitude.
inline Matrix assignment_batch(const Matrix& features, const SubspacePartition& part)
{
    return softmax_rows(subspace_scores(features, part));
}

inline AssignmentWeights assignment(const Vector& features, const SubspacePartition& part)
{
    return AssignmentWeights(assignment_batch(features.transpose(), part).row(0).transpose());
}

inline constexpr double kDecouplingStabilizer = 1e-8;

struct DecouplingResult
{
    double value = 0.0;
    Matrix gradient; // same shape as the feature-layer weights
};

/// Cosine-affinity decoupling loss over the columns of `feature_weights`:
///   -1/K sum_k log( sum_{u != v in S_k} e^{s_uv/tau}
///                   / (sum_{u in S_k, w not in S_k} e^{s_uw/tau} + stab) ).
/// With K = 1 the inter-subspace sum is empty and the denominator is `stab`.
inline DecouplingResult decoupling_loss_with_gradient(const Matrix& feature_weights, const SubspacePartition& part,
                                                      double temperature,
                                                      double stabilizer = kDecouplingStabilizer)
{
    const auto dims = feature_weights.cols();
    if (static_cast<std::size_t>(dims) != part.feature_dim)
        throw DimensionMismatch("feature weights differ from partition width");
    if (part.chunk() < 2)
        throw std::invalid_argument("decoupling loss needs at least two dimensions per subspace");
    if (!(temperature > 0.0))
        throw std::invalid_argument("temperature must be > 0");

    const Vector norms = feature_weights.colwise().norm().transpose();
    for (Eigen::Index u = 0; u < dims; ++u)
        if (!(norms(u) >= 1e-12))
            throw NumericalError("basis vector " + std::to_string(u) + " has zero norm");
    Matrix unit = feature_weights;
    for (Eigen::Index u = 0; u < dims; ++u)
        unit.col(u) /= norms(u);
    const Matrix cosine = unit.transpose() * unit;
    const Matrix affinity = (cosine.array() / temperature).exp().matrix();

    const std::size_t k_modes = part.num_modes;
    std::vector<double> intra(k_modes, 0.0);
    std::vector<double> inter(k_modes, 0.0);
    for (Eigen::Index u = 0; u < dims; ++u) {
        const std::size_t ku = part.owner(static_cast<std::size_t>(u));
        for (Eigen::Index v = 0; v < dims; ++v) {
            if (u == v)
                continue;
            if (part.owner(static_cast<std::size_t>(v)) == ku)
                intra[ku] += affinity(u, v);
            else
                inter[ku] += affinity(u, v);
        }
    }

    DecouplingResult out;
    const double scale = 1.0 / static_cast<double>(k_modes);
    for (std::size_t k = 0; k < k_modes; ++k)
        out.value -= scale * (std::log(intra[k]) - std::log(inter[k] + stabilizer));

    // d loss / d s_uv for the ordered term (u, v), u owning the subspace sum.
    Matrix ds = Matrix::Zero(dims, dims);
    for (Eigen::Index u = 0; u < dims; ++u) {
        const std::size_t ku = part.owner(static_cast<std::size_t>(u));
        for (Eigen::Index v = 0; v < dims; ++v) {
            if (u == v)
                continue;
            const double a = affinity(u, v) / temperature;
            if (part.owner(static_cast<std::size_t>(v)) == ku)
                ds(u, v) = -scale * a / intra[ku];
            else
                ds(u, v) = scale * a / (inter[ku] + stabilizer);
        }
    }
    const Matrix d_unit = unit * (ds + ds.transpose());
    out.gradient.resize(feature_weights.rows(), dims);
    for (Eigen::Index u = 0; u < dims; ++u) {
        const Vector g = d_unit.col(u);
        const Vector n = unit.col(u);
        out.gradient.col(u) = (g - n * n.dot(g)) / norms(u);
    }
    if (!std::isfinite(out.value) || !out.gradient.allFinite())
        throw NumericalError("decoupling loss is not finite");
    return out;
}

inline double decoupling_loss(const Matrix& feature_weights, const SubspacePartition& part, double temperature,
                              double stabilizer = kDecouplingStabilizer)
{
    return decoupling_loss_with_gradient(feature_weights, part, temperature, stabilizer).value;
}

inline constexpr double kProbabilityFloor = 1e-12;

/// Which scalar to differentiate. The corrected cross-entropy pushes the
/// clean posterior through sum_k omega_k T^(k) (or the identity when
/// `correct` is false) and scores the noisy label.
struct LossSpec
{
    double ce_weight = 1.0;
    double dec_weight = 0.0;
    bool correct = true;
    /// Stop gradients from the corrected CE into omega.
    bool detach_omega = false;

    static LossSpec corrected_ce() { return {1.0, 0.0, true, false}; }
    static LossSpec decoupling() { return {0.0, 1.0, true, false}; }
    static LossSpec total(double lambda) { return {1.0, lambda, true, false}; }
};

struct Batch
{
    Matrix inputs;                       // n x d
    std::vector<std::size_t> noisy;      // n
    std::optional<Matrix> omega_override; // n x K, ground-truth weights
};

struct LossValues
{
    double total = 0.0;
    double ce = 0.0;
    double dec = 0.0;
    std::size_t clamped = 0;
};

struct GradientResult
{
    LossValues loss;
    ParamTensors grad;
    ForwardPass pass;
    Matrix omega; // n x K actually used in the channel
};

/// Loss and exact gradient of
///   ce_weight * mean_n -log q_n[noisy_n] + dec_weight * L_dec,
/// q_n = p_n^T (sum_k omega_nk T^(k)). Bases are constants.
inline GradientResult compute_gradients(const NetworkParams& params, const Batch& batch, const BasisSet& bases,
                                        const LossSpec& spec)
{
    const auto n = batch.inputs.rows();
    if (n == 0 || static_cast<std::size_t>(n) != batch.noisy.size())
        throw DimensionMismatch("batch inputs and labels differ in length");
    const auto part = params.partition();
    const std::size_t k_modes = params.num_modes;
    const auto c = static_cast<Eigen::Index>(params.num_classes());
    if (spec.correct && (bases.num_modes() != k_modes || bases.num_classes() != params.num_classes()))
        throw DimensionMismatch("bases do not match network K / C");

    const auto& w = params.weights;
    GradientResult res;
    res.pass = forward_batch(params, batch.inputs);
    const ForwardPass& fp = res.pass;
    const bool learned_omega = !batch.omega_override.has_value();
    if (learned_omega) {
        res.omega = assignment_batch(fp.features, part);
    } else {
        res.omega = *batch.omega_override;
        if (res.omega.rows() != n || static_cast<std::size_t>(res.omega.cols()) != k_modes)
            throw DimensionMismatch("omega override has the wrong shape");
    }

    res.grad = ParamTensors::zeros(NetworkShape{params.input_dim(), params.hidden_dim(), params.feature_dim(),
                                                params.num_classes(), k_modes});
    const auto k_idx = static_cast<Eigen::Index>(k_modes);
    Matrix d_logits = Matrix::Zero(n, c);
    Matrix d_features = Matrix::Zero(n, fp.features.cols());

    if (spec.ce_weight != 0.0) {
        const double inv_n = 1.0 / static_cast<double>(n);
        for (Eigen::Index r = 0; r < n; ++r) {
            const auto target = static_cast<Eigen::Index>(batch.noisy[static_cast<std::size_t>(r)]);
            if (target >= c)
                throw std::out_of_range("noisy label outside [0, C)");
            const RowVector p = fp.posterior.row(r);
            RowVector d_post;
            RowVector d_omega;
            double q_target = 0.0;
            if (spec.correct) {
                const Matrix channel = mix_entries(bases, res.omega.row(r).transpose());
                q_target = p.dot(channel.col(target).transpose());
                if (q_target < kProbabilityFloor) {
                    ++res.loss.clamped;
                    res.loss.ce += -std::log(kProbabilityFloor) * inv_n;
                    continue;
                }
                const double g = -spec.ce_weight * inv_n / q_target;
                d_post = g * channel.col(target).transpose();
                d_omega.resize(k_idx);
                for (Eigen::Index k = 0; k < k_idx; ++k)
                    d_omega(k) = g * p.dot(bases[static_cast<std::size_t>(k)].entries().col(target).transpose());
            } else {
                q_target = p(target);
                if (q_target < kProbabilityFloor) {
                    ++res.loss.clamped;
                    res.loss.ce += -std::log(kProbabilityFloor) * inv_n;
                    continue;
                }
                d_post = RowVector::Zero(c);
                d_post(target) = -spec.ce_weight * inv_n / q_target;
            }
            res.loss.ce += -std::log(q_target) * inv_n;
            d_logits.row(r) = p.cwiseProduct((d_post.array() - p.dot(d_post)).matrix());

            if (spec.correct && learned_omega && !spec.detach_omega) {
                const RowVector om = res.omega.row(r);
                const RowVector d_scores = om.cwiseProduct((d_omega.array() - om.dot(d_omega)).matrix());
                const double inv_width = 1.0 / static_cast<double>(part.chunk());
                for (Eigen::Index u = 0; u < fp.features.cols(); ++u) {
                    const double h = fp.features(r, u);
                    const double sign = (h > 0.0) - (h < 0.0);
                    d_features(r, u) +=
                        d_scores(static_cast<Eigen::Index>(part.owner(static_cast<std::size_t>(u)))) * sign *
                        inv_width;
                }
            }
        }
    }

    d_features.noalias() += d_logits * w.w_cls.transpose();
    res.grad.w_cls.noalias() = fp.features.transpose() * d_logits;
    res.grad.b_cls = d_logits.colwise().sum();
    res.grad.w_feat.noalias() = fp.hidden.transpose() * d_features;
    res.grad.b_feat = d_features.colwise().sum();
    Matrix d_pre = d_features * w.w_feat.transpose();
    d_pre.array() *= (fp.pre_hidden.array() > 0.0).cast<double>();
    res.grad.w_in.noalias() = batch.inputs.transpose() * d_pre;
    res.grad.b_in = d_pre.colwise().sum();

    if (spec.dec_weight != 0.0) {
        const auto dec = decoupling_loss_with_gradient(w.w_feat, part, params.temperature);
        res.loss.dec = dec.value;
        res.grad.w_feat.noalias() += spec.dec_weight * dec.gradient;
    }
    res.loss.total = spec.ce_weight * res.loss.ce + spec.dec_weight * res.loss.dec;
    if (!std::isfinite(res.loss.total) || !res.grad.all_finite())
        throw NumericalError("non-finite loss or gradient");
    return res;
}

inline void sgd_step(NetworkParams& params, const ParamTensors& grad, double learning_rate)
{
    params.weights.w_in.noalias() -= learning_rate * grad.w_in;
    params.weights.b_in.noalias() -= learning_rate * grad.b_in;
    params.weights.w_feat.noalias() -= learning_rate * grad.w_feat;
    params.weights.b_feat.noalias() -= learning_rate * grad.b_feat;
    params.weights.w_cls.noalias() -= learning_rate * grad.w_cls;
    params.weights.b_cls.noalias() -= learning_rate * grad.b_cls;
}

// ---------------------------------------------------------------------------
// Plain-text snapshots: one "layer <name> <rows> <cols>" line per tensor
// followed by its rows of decimal values.

inline void write_matrix_block(std::ostream& out, const std::string& name, const Matrix& m)
{
    out << "layer " << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j)
            out << (j ? " " : "") << m(i, j);
        out << '\n';
    }
}

inline void write_params(std::ostream& out, const NetworkParams& params)
{
    const auto old_precision = out.precision(17);
    out << "# mind-params v1 temperature=" << params.temperature << " K=" << params.num_modes << '\n';
    params.weights.for_each([&](const char* name, const auto& t) { write_matrix_block(out, name, Matrix(t)); });
    out.precision(old_precision);
}

inline Matrix read_matrix_block(std::istream& in, const std::string& expected_name)
{
    std::string tag, name;
    Eigen::Index rows = 0, cols = 0;
    if (!(in >> tag >> name >> rows >> cols) || tag != "layer" || name != expected_name || rows < 0 || cols < 0)
        throw std::runtime_error("snapshot: expected layer '" + expected_name + "'");
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j)
            if (!(in >> m(i, j)))
                throw std::runtime_error("snapshot: layer '" + expected_name + "' is truncated");
    return m;
}

inline NetworkParams read_params(std::istream& in)
{
    std::string header;
    std::getline(in, header);
    if (header.rfind("# mind-params v1", 0) != 0)
        throw std::runtime_error("snapshot: missing '# mind-params v1' header");
    NetworkParams p;
    std::istringstream fields(header.substr(16));
    for (std::string kv; fields >> kv;) {
        if (kv.rfind("temperature=", 0) == 0)
            p.temperature = std::stod(kv.substr(12));
        else if (kv.rfind("K=", 0) == 0)
            p.num_modes = std::stoul(kv.substr(2));
    }
    p.weights.for_each([&](const char* name, auto& t) {
        const Matrix m = read_matrix_block(in, name);
        if constexpr (std::is_same_v<std::decay_t<decltype(t)>, RowVector>) {
            if (m.rows() != 1)
                throw std::runtime_error(std::string("snapshot: bias '") + name + "' must have one row");
            t = m.row(0);
        } else {
            t = m;
        }
    });
    p.validate();
    return p;
}

} // namespace mind

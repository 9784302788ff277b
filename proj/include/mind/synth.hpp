#pragma once

// Synthetic datasets whose instance-dependent noise has known ground truth.
//
// Feature layout: the first half of the d dimensions carries the noise-mode
// geometry (Gaussian cluster cores, boundary bands, or a 1-D curve), the
// second half carries the clean class (one prototype per class plus
// isotropic Gaussian noise). Clean labels are uniform over classes.

#include "mind/core.hpp"
#include "mind/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <iomanip>
#include <istream>
#include <limits>
#include <numbers>
#include <numeric>
#include <ostream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace mind {

struct ConfigError : std::invalid_argument
{
    using std::invalid_argument::invalid_argument;
};

enum class GeneratorKind { Anchor, Epsilon, Manifold };

inline std::string_view to_string(GeneratorKind kind)
{
    switch (kind) {
    case GeneratorKind::Anchor: return "anchor";
    case GeneratorKind::Epsilon: return "epsilon";
    case GeneratorKind::Manifold: return "manifold";
    }
    return "anchor";
}

inline GeneratorKind parse_generator(std::string_view name)
{
    if (name == "anchor")
        return GeneratorKind::Anchor;
    if (name == "epsilon")
        return GeneratorKind::Epsilon;
    if (name == "manifold")
        return GeneratorKind::Manifold;
    throw ConfigError("generator: unknown generator '" + std::string(name) + "' (anchor, epsilon, manifold)");
}

struct SyntheticConfig
{
    GeneratorKind generator = GeneratorKind::Anchor;
    std::size_t num_modes = 3;
    std::size_t num_classes = 4;
    std::size_t input_dim = 16;
    std::size_t samples_per_mode = 5000;
    double anchor_fraction = 0.9;
    double diag_mass = 0.8;
    double cluster_spread = 1.0;
    double epsilon = 0.0;
    double manifold_lipschitz = 1.0;
    /// Distance between mode cluster centers, in units of cluster_spread.
    double center_separation = 20.0;
    /// Radius of the manifold generator's curve, in units of cluster_spread.
    double curve_radius = 10.0;
    /// Distance between class prototypes, in units of cluster_spread.
    double class_separation = 5.0;
    std::uint64_t seed = 42;

    void validate() const
    {
        auto fail = [](const std::string& msg) { throw ConfigError(msg); };
        if (num_modes < 1)
            fail("num_modes: must be >= 1");
        if (num_classes < 2)
            fail("num_classes: must be >= 2");
        if (input_dim < 2)
            fail("input_dim: must be >= 2 to place cluster centers");
        if (samples_per_mode < 1)
            fail("samples_per_mode: must be >= 1");
        if (!(anchor_fraction >= 0.0 && anchor_fraction <= 1.0))
            fail("anchor_fraction: must lie in [0, 1]");
        if (!(diag_mass > 0.5 && diag_mass <= 1.0))
            fail("diag_mass: must lie in (0.5, 1] for diagonal dominance");
        if (!(cluster_spread > 0.0))
            fail("cluster_spread: must be > 0");
        if (!(epsilon >= 0.0 && epsilon <= 0.5))
            fail("epsilon: must lie in [0, 0.5]");
        if (!(manifold_lipschitz >= 0.0))
            fail("manifold_lipschitz: must be >= 0");
        if (!(center_separation >= 6.0))
            fail("center_separation: must be >= 6 (cluster spreads)");
        if (!(curve_radius > 0.0))
            fail("curve_radius: must be > 0");
        if (!(class_separation >= 0.0))
            fail("class_separation: must be >= 0");
        if (generator == GeneratorKind::Manifold) {
            if (num_modes < 2)
                fail("num_modes: manifold generator needs >= 2 bases");
            if (!(manifold_lipschitz > 0.0))
                fail("manifold_lipschitz: must be > 0 for the manifold generator");
        }
    }
};

struct Instance
{
    Vector features;
    std::size_t clean_label = 0;
    std::size_t noisy_label = 0;
    Vector true_mode_weights;
    bool anchor = false;
};

struct Dataset
{
    GeneratorKind generator = GeneratorKind::Anchor;
    std::size_t num_classes = 0;
    std::size_t num_modes = 0;
    std::size_t input_dim = 0;
    std::uint64_t seed = 0;
    BasisSet truth;
    std::vector<Instance> instances;

    /// Ground-truth T*(x) for instance i.
    Matrix true_transition(std::size_t i) const { return mix_entries(truth, instances.at(i).true_mode_weights); }
};

namespace detail {

    inline std::size_t mode_dims(std::size_t input_dim) { return input_dim / 2; }

    /// `count` points in `dim` dimensions with pairwise distance >= min_dist.
    /// Uses scaled axis vectors (exactly equidistant) when count <= dim.
    inline std::vector<Vector> place_points(std::size_t count, std::size_t dim, double min_dist, Rng& rng)
    {
        const auto d = static_cast<Eigen::Index>(dim);
        std::vector<Vector> points;
        if (count == 1) {
            points.push_back(Vector::Zero(d));
            return points;
        }
        if (count <= dim) {
            for (std::size_t k = 0; k < count; ++k) {
                Vector p = Vector::Zero(d);
                p(static_cast<Eigen::Index>(k)) = min_dist / std::numbers::sqrt2;
                points.push_back(std::move(p));
            }
            return points;
        }
        double box = min_dist * std::pow(static_cast<double>(count), 1.0 / static_cast<double>(dim));
        for (int attempt = 0; points.size() < count; ++attempt) {
            if (attempt > 0 && attempt % 10000 == 0)
                box *= 1.5;
            Vector p(d);
            for (Eigen::Index j = 0; j < d; ++j)
                p(j) = rng.uniform(-box, box);
            bool ok = true;
            for (const auto& q : points)
                ok = ok && (p - q).norm() >= min_dist;
            if (ok)
                points.push_back(std::move(p));
        }
        return points;
    }

    inline Vector unit_direction(std::size_t dim, Rng& rng)
    {
        Vector v(static_cast<Eigen::Index>(dim));
        do {
            for (Eigen::Index j = 0; j < v.size(); ++j)
                v(j) = rng.normal();
        } while (v.norm() < 1e-12);
        return v.normalized();
    }

    /// Uniform draw from the ball of radius `radius`.
    inline Vector ball_point(std::size_t dim, double radius, Rng& rng)
    {
        const double r = radius * std::pow(rng.uniform(), 1.0 / static_cast<double>(dim));
        return r * unit_direction(dim, rng);
    }

    /// Normalized inverse squared distance to the two nearest centers.
    inline Vector inverse_distance_weights(const Vector& point, const std::vector<Vector>& centers)
    {
        const std::size_t k = centers.size();
        Vector w = Vector::Zero(static_cast<Eigen::Index>(k));
        if (k == 1) {
            w(0) = 1.0;
            return w;
        }
        std::size_t first = 0;
        std::size_t second = 1;
        std::vector<double> dist2(k);
        for (std::size_t c = 0; c < k; ++c)
            dist2[c] = (point - centers[c]).squaredNorm();
        if (dist2[second] < dist2[first])
            std::swap(first, second);
        for (std::size_t c = 2; c < k; ++c) {
            if (dist2[c] < dist2[first]) {
                second = first;
                first = c;
            } else if (dist2[c] < dist2[second]) {
                second = c;
            }
        }
        if (dist2[first] == 0.0) {
            w(static_cast<Eigen::Index>(first)) = 1.0;
            return w;
        }
        const double a = 1.0 / dist2[first];
        const double b = 1.0 / dist2[second];
        w(static_cast<Eigen::Index>(first)) = a / (a + b);
        w(static_cast<Eigen::Index>(second)) = b / (a + b);
        return w;
    }

    struct ClassGeometry
    {
        std::vector<Vector> prototypes;
        std::size_t offset = 0;
        std::size_t dims = 0;
    };

    inline ClassGeometry class_geometry(const SyntheticConfig& cfg, Rng& rng)
    {
        ClassGeometry g;
        g.offset = mode_dims(cfg.input_dim);
        g.dims = cfg.input_dim - g.offset;
        g.prototypes = place_points(cfg.num_classes, g.dims, cfg.class_separation * cfg.cluster_spread, rng);
        return g;
    }

    inline void write_class_part(Vector& x, const ClassGeometry& g, std::size_t label, double spread, Rng& rng)
    {
        for (std::size_t j = 0; j < g.dims; ++j)
            x(static_cast<Eigen::Index>(g.offset + j)) =
                g.prototypes[label](static_cast<Eigen::Index>(j)) + spread * rng.normal();
    }

    inline Dataset empty_dataset(const SyntheticConfig& cfg, BasisSet truth)
    {
        Dataset ds;
        ds.generator = cfg.generator;
        ds.num_classes = cfg.num_classes;
        ds.num_modes = truth.num_modes();
        ds.input_dim = cfg.input_dim;
        ds.seed = cfg.seed;
        ds.truth = std::move(truth);
        return ds;
    }

    inline void check_bases(const SyntheticConfig& cfg, const BasisSet& bases)
    {
        if (bases.num_modes() != cfg.num_modes || bases.num_classes() != cfg.num_classes)
            throw DimensionMismatch("basis set does not match num_modes / num_classes");
    }

} // namespace detail

/// Diagonally dominant ground-truth bases, pairwise l1_error >= 0.05.
///
/// With K <= C-1 every mode sends all off-diagonal mass of row i to the
/// class (i + s_k) mod C for a distinct shift s_k; otherwise off-diagonal
/// mass follows a random simplex draw per row.
inline BasisSet make_ground_truth_bases(std::size_t num_classes, std::size_t num_modes, double diag_mass, Rng& rng)
{
    if (!(diag_mass > 0.5 && diag_mass <= 1.0))
        throw ConfigError("diag_mass: must lie in (0.5, 1]");
    if (num_classes < 2 || num_modes < 1)
        throw ConfigError("need C >= 2 and K >= 1");
    const auto c = static_cast<Eigen::Index>(num_classes);
    const double off = 1.0 - diag_mass;
    constexpr double kMinSeparation = 0.05;

    for (int attempt = 0; attempt < 100; ++attempt) {
        std::vector<TransitionMatrix> bases;
        if (num_modes <= num_classes - 1) {
            std::vector<std::size_t> shifts(num_classes - 1);
            std::iota(shifts.begin(), shifts.end(), std::size_t{1});
            rng.shuffle(std::span<std::size_t>(shifts));
            for (std::size_t k = 0; k < num_modes; ++k) {
                Matrix m = Matrix::Zero(c, c);
                for (Eigen::Index i = 0; i < c; ++i) {
                    m(i, i) = diag_mass;
                    m(i, (i + static_cast<Eigen::Index>(shifts[k])) % c) += off;
                }
                bases.emplace_back(std::move(m));
            }
        } else {
            for (std::size_t k = 0; k < num_modes; ++k) {
                Matrix m = Matrix::Zero(c, c);
                for (Eigen::Index i = 0; i < c; ++i) {
                    Vector draw(c - 1);
                    for (Eigen::Index j = 0; j < c - 1; ++j) {
                        double u = rng.uniform();
                        while (u <= 0.0)
                            u = rng.uniform();
                        draw(j) = -std::log(u);
                    }
                    draw /= draw.sum();
                    Eigen::Index slot = 0;
                    for (Eigen::Index j = 0; j < c; ++j)
                        m(i, j) = (j == i) ? diag_mass : off * draw(slot++);
                    m.row(i) /= m.row(i).sum();
                }
                bases.emplace_back(std::move(m));
            }
        }
        bool distinct = true;
        for (std::size_t a = 0; a < bases.size() && distinct; ++a)
            for (std::size_t b = a + 1; b < bases.size() && distinct; ++b)
                distinct = l1_error(bases[a], bases[b]) >= kMinSeparation;
        if (distinct)
            return BasisSet(std::move(bases));
    }
    throw ConfigError("could not draw pairwise-distinct bases in 100 attempts (degenerate configuration)");
}

/// Fills noisy_label from row clean_label of mix(bases, omega*), instance by
/// instance in order. Same stream state gives the same labels.
inline void corrupt_labels(std::vector<Instance>& instances, const BasisSet& bases, Rng& rng)
{
    for (auto& inst : instances) {
        if (static_cast<std::size_t>(inst.true_mode_weights.size()) != bases.num_modes() ||
            !is_simplex(inst.true_mode_weights))
            throw std::invalid_argument("instance carries invalid mode weights");
        const TransitionMatrix t(mix_entries(bases, inst.true_mode_weights));
        inst.noisy_label = sample_noisy_label(t, inst.clean_label, rng);
    }
}

namespace detail {

    inline Dataset make_cluster_dataset(const SyntheticConfig& cfg, const BasisSet& bases, double epsilon, Rng& rng)
    {
        check_bases(cfg, bases);
        const std::size_t k_modes = cfg.num_modes;
        const std::size_t mdims = mode_dims(cfg.input_dim);
        const double sigma = cfg.cluster_spread;

        Rng geometry_rng = rng.derive(0);
        const auto centers = place_points(k_modes, mdims, cfg.center_separation * sigma, geometry_rng);
        const auto classes = class_geometry(cfg, geometry_rng);

        Dataset ds = empty_dataset(cfg, bases);
        ds.instances.reserve(k_modes * cfg.samples_per_mode);
        const auto n_anchor = static_cast<std::size_t>(
            std::llround(cfg.anchor_fraction * static_cast<double>(cfg.samples_per_mode)));

        for (std::size_t k = 0; k < k_modes; ++k) {
            Rng mode_rng = rng.derive(100 + k);
            const std::size_t partner = (k + 1) % k_modes;
            for (std::size_t s = 0; s < cfg.samples_per_mode; ++s) {
                Instance inst;
                inst.clean_label = static_cast<std::size_t>(mode_rng.below(cfg.num_classes));
                inst.features = Vector::Zero(static_cast<Eigen::Index>(cfg.input_dim));
                Vector mode_part;
                if (s < n_anchor || k_modes == 1) {
                    mode_part = centers[k] + ball_point(mdims, sigma, mode_rng);
                    inst.anchor = true;
                    Vector w = Vector::Constant(static_cast<Eigen::Index>(k_modes),
                                                k_modes > 1 ? epsilon / static_cast<double>(k_modes - 1) : 0.0);
                    w(static_cast<Eigen::Index>(k)) = k_modes > 1 ? 1.0 - epsilon : 1.0;
                    inst.true_mode_weights = std::move(w);
                } else {
                    const Vector span = centers[partner] - centers[k];
                    const double start = sigma / span.norm();
                    const double along = mode_rng.uniform(start, 0.5);
                    mode_part = centers[k] + along * span;
                    for (Eigen::Index j = 0; j < mode_part.size(); ++j)
                        mode_part(j) += 0.1 * sigma * mode_rng.normal();
                    inst.true_mode_weights = inverse_distance_weights(mode_part, centers);
                }
                inst.features.head(static_cast<Eigen::Index>(mdims)) = mode_part;
                write_class_part(inst.features, classes, inst.clean_label, sigma, mode_rng);
                ds.instances.push_back(std::move(inst));
            }
        }
        Rng label_rng = rng.derive(1);
        corrupt_labels(ds.instances, ds.truth, label_rng);
        return ds;
    }

} // namespace detail

/// Gaussian cluster cores (one-hot omega*) plus boundary bands between
/// neighbouring centers; centers sit center_separation sigma apart.
inline Dataset make_anchor_dataset(const SyntheticConfig& cfg, const BasisSet& bases, Rng& rng)
{
    cfg.validate();
    if (cfg.input_dim < 2)
        throw ConfigError("input_dim: need d >= 2");
    return detail::make_cluster_dataset(cfg, bases, 0.0, rng);
}

/// As make_anchor_dataset, but anchor weights are (1 - eps) on the owning
/// mode and eps spread evenly over the others.
inline Dataset make_epsilon_contaminated(const SyntheticConfig& cfg, const BasisSet& bases, Rng& rng)
{
    cfg.validate();
    if (!(cfg.epsilon >= 0.0 && cfg.epsilon < 0.5))
        throw ConfigError("epsilon: must lie in [0, 0.5) for the contaminated generator");
    Dataset ds = detail::make_cluster_dataset(cfg, bases, cfg.epsilon, rng);
    ds.generator = GeneratorKind::Epsilon;
    return ds;
}

/// Largest Frobenius speed of the piecewise-linear path through `bases`
/// parametrised on t in [0, 1].
inline double path_lipschitz(const BasisSet& bases)
{
    const std::size_t k = bases.num_modes();
    if (k < 2)
        return 0.0;
    double worst = 0.0;
    for (std::size_t j = 0; j + 1 < k; ++j)
        worst = std::max(worst, frobenius_error(bases[j + 1], bases[j]));
    return worst * static_cast<double>(k - 1);
}

/// Contracts bases toward their mean until the path speed is <= limit.
inline BasisSet limit_path_lipschitz(const BasisSet& bases, double limit)
{
    const double measured = path_lipschitz(bases);
    if (measured <= limit)
        return bases;
    // One ulp of headroom so the measured speed lands strictly under the limit.
    const double factor = limit / measured * (1.0 - 1e-12);
    Matrix mean = Matrix::Zero(static_cast<Eigen::Index>(bases.num_classes()),
                               static_cast<Eigen::Index>(bases.num_classes()));
    for (const auto& b : bases)
        mean += b.entries();
    mean /= static_cast<double>(bases.num_modes());
    std::vector<TransitionMatrix> out;
    for (const auto& b : bases) {
        Matrix m = mean + factor * (b.entries() - mean);
        for (Eigen::Index i = 0; i < m.rows(); ++i)
            m.row(i) /= m.row(i).sum();
        out.emplace_back(std::move(m));
    }
    return BasisSet(std::move(out));
}

/// Interpolation weights over K path nodes at latent position t.
inline Vector manifold_weights(std::size_t num_modes, double t)
{
    Vector w = Vector::Zero(static_cast<Eigen::Index>(num_modes));
    const double pos = std::clamp(t, 0.0, 1.0) * static_cast<double>(num_modes - 1);
    auto seg = static_cast<std::size_t>(std::floor(pos));
    if (seg >= num_modes - 1)
        seg = num_modes - 2;
    const double u = pos - static_cast<double>(seg);
    w(static_cast<Eigen::Index>(seg)) = 1.0 - u;
    w(static_cast<Eigen::Index>(seg + 1)) += u;
    return w;
}

/// Smooth injective curve used to embed the latent t in the mode half of
/// feature space: a half circle followed by faster, smaller harmonics.
inline Vector manifold_curve(double t, std::size_t dims, double radius)
{
    Vector p = Vector::Zero(static_cast<Eigen::Index>(dims));
    for (std::size_t pair = 0; 2 * pair < dims; ++pair) {
        const double freq = 0.5 * static_cast<double>(pair + 1);
        const double amp = radius / static_cast<double>(pair + 1);
        const double angle = 2.0 * std::numbers::pi * freq * t;
        p(static_cast<Eigen::Index>(2 * pair)) = amp * std::cos(angle);
        if (2 * pair + 1 < dims)
            p(static_cast<Eigen::Index>(2 * pair + 1)) = amp * std::sin(angle);
    }
    return p;
}

/// Ground truth T*(t) moves linearly between consecutive bases; the bases
/// are contracted toward their mean if needed so the path is L-Lipschitz
/// in Frobenius norm. The stored truth is the contracted set.
inline Dataset make_lipschitz_manifold(const SyntheticConfig& cfg, const BasisSet& bases, Rng& rng)
{
    cfg.validate();
    if (cfg.num_modes < 2)
        throw ConfigError("num_modes: manifold generator needs K >= 2");
    detail::check_bases(cfg, bases);
    const double sigma = cfg.cluster_spread;
    const std::size_t mdims = detail::mode_dims(cfg.input_dim);

    Rng geometry_rng = rng.derive(0);
    const auto classes = detail::class_geometry(cfg, geometry_rng);
    Dataset ds = detail::empty_dataset(cfg, limit_path_lipschitz(bases, cfg.manifold_lipschitz));
    ds.generator = GeneratorKind::Manifold;

    const std::size_t total = cfg.num_modes * cfg.samples_per_mode;
    ds.instances.reserve(total);
    Rng sample_rng = rng.derive(100);
    const double radius = cfg.curve_radius * sigma;
    for (std::size_t s = 0; s < total; ++s) {
        Instance inst;
        inst.clean_label = static_cast<std::size_t>(sample_rng.below(cfg.num_classes));
        const double t = sample_rng.uniform();
        inst.features = Vector::Zero(static_cast<Eigen::Index>(cfg.input_dim));
        Vector mode_part = manifold_curve(t, mdims, radius);
        for (Eigen::Index j = 0; j < mode_part.size(); ++j)
            mode_part(j) += 0.1 * sigma * sample_rng.normal();
        inst.features.head(static_cast<Eigen::Index>(mdims)) = mode_part;
        detail::write_class_part(inst.features, classes, inst.clean_label, sigma, sample_rng);
        inst.true_mode_weights = manifold_weights(cfg.num_modes, t);
        inst.anchor = false;
        ds.instances.push_back(std::move(inst));
    }
    Rng label_rng = rng.derive(1);
    corrupt_labels(ds.instances, ds.truth, label_rng);
    return ds;
}

/// Bases and dataset from cfg.seed, dispatched on cfg.generator.
inline Dataset generate_dataset(const SyntheticConfig& cfg)
{
    cfg.validate();
    Rng root(cfg.seed);
    Rng basis_rng = root.derive(0xba5e);
    const BasisSet bases = make_ground_truth_bases(cfg.num_classes, cfg.num_modes, cfg.diag_mass, basis_rng);
    Rng data_rng = root.derive(0xda7a);
    switch (cfg.generator) {
    case GeneratorKind::Anchor: return make_anchor_dataset(cfg, bases, data_rng);
    case GeneratorKind::Epsilon: return make_epsilon_contaminated(cfg, bases, data_rng);
    case GeneratorKind::Manifold: return make_lipschitz_manifold(cfg, bases, data_rng);
    }
    throw ConfigError("generator: unsupported");
}

inline double noise_rate(const Dataset& ds)
{
    if (ds.instances.empty())
        return 0.0;
    std::size_t flipped = 0;
    for (const auto& inst : ds.instances)
        flipped += inst.noisy_label != inst.clean_label;
    return static_cast<double>(flipped) / static_cast<double>(ds.instances.size());
}

// ---------------------------------------------------------------------------
// Line-delimited text format.
//
//   # mind-dataset v1 generator=<name> C=<C> K=<K> d=<d> seed=<seed> n=<n>
//   # basis <k> <C*C row-major entries>          (K lines)
//   <d features> <clean> <noisy> <K weights> <anchor 0|1>   (n lines)

struct DatasetParseError : std::runtime_error
{
    DatasetParseError(std::size_t line, const std::string& what)
        : std::runtime_error("dataset line " + std::to_string(line) + ": " + what), line_number(line)
    {
    }
    std::size_t line_number;
};

inline void write_dataset(std::ostream& out, const Dataset& ds)
{
    out << "# mind-dataset v1 generator=" << to_string(ds.generator) << " C=" << ds.num_classes
        << " K=" << ds.num_modes << " d=" << ds.input_dim << " seed=" << ds.seed << " n=" << ds.instances.size()
        << '\n';
    out << std::setprecision(17);
    for (std::size_t k = 0; k < ds.truth.num_modes(); ++k) {
        out << "# basis " << k;
        const Matrix& m = ds.truth[k].entries();
        for (Eigen::Index i = 0; i < m.rows(); ++i)
            for (Eigen::Index j = 0; j < m.cols(); ++j)
                out << ' ' << m(i, j);
        out << '\n';
    }
    char buf[64];
    for (const auto& inst : ds.instances) {
        std::string line;
        for (Eigen::Index j = 0; j < inst.features.size(); ++j) {
            std::snprintf(buf, sizeof buf, "%.9f ", inst.features(j));
            line += buf;
        }
        line += std::to_string(inst.clean_label) + ' ' + std::to_string(inst.noisy_label);
        for (Eigen::Index k = 0; k < inst.true_mode_weights.size(); ++k) {
            std::snprintf(buf, sizeof buf, " %.12f", inst.true_mode_weights(k));
            line += buf;
        }
        line += inst.anchor ? " 1\n" : " 0\n";
        out << line;
    }
}

namespace detail {

    inline std::string header_field(const std::string& header, const std::string& key, std::size_t line)
    {
        const std::string needle = " " + key + "=";
        const auto pos = header.find(needle);
        if (pos == std::string::npos)
            throw DatasetParseError(line, "header missing '" + key + "'");
        const auto start = pos + needle.size();
        const auto end = header.find(' ', start);
        return header.substr(start, end == std::string::npos ? std::string::npos : end - start);
    }

    inline std::uint64_t header_uint(const std::string& header, const std::string& key, std::size_t line)
    {
        const std::string text = header_field(header, key, line);
        try {
            std::size_t used = 0;
            const auto v = std::stoull(text, &used);
            if (used != text.size())
                throw std::invalid_argument(text);
            return v;
        } catch (const std::exception&) {
            throw DatasetParseError(line, "header field '" + key + "' is not an integer");
        }
    }

} // namespace detail

inline Dataset read_dataset(std::istream& in)
{
    Dataset ds;
    std::string line;
    std::size_t line_no = 0;
    if (!std::getline(in, line))
        throw DatasetParseError(1, "empty input");
    ++line_no;
    if (line.rfind("# mind-dataset v1", 0) != 0)
        throw DatasetParseError(line_no, "missing '# mind-dataset v1' header");
    ds.generator = parse_generator(detail::header_field(line, "generator", line_no));
    ds.num_classes = detail::header_uint(line, "C", line_no);
    ds.num_modes = detail::header_uint(line, "K", line_no);
    ds.input_dim = detail::header_uint(line, "d", line_no);
    ds.seed = detail::header_uint(line, "seed", line_no);
    const std::size_t n = detail::header_uint(line, "n", line_no);
    if (ds.num_classes < 2 || ds.num_modes < 1 || ds.input_dim < 1)
        throw DatasetParseError(line_no, "header dimensions out of range");

    const auto c = static_cast<Eigen::Index>(ds.num_classes);
    std::vector<TransitionMatrix> bases;
    for (std::size_t k = 0; k < ds.num_modes; ++k) {
        if (!std::getline(in, line))
            throw DatasetParseError(line_no + 1, "missing basis line");
        ++line_no;
        std::istringstream fields(line);
        std::string hash, tag;
        std::size_t index = 0;
        if (!(fields >> hash >> tag >> index) || hash != "#" || tag != "basis" || index != k)
            throw DatasetParseError(line_no, "expected '# basis " + std::to_string(k) + "'");
        Matrix m(c, c);
        for (Eigen::Index i = 0; i < c; ++i)
            for (Eigen::Index j = 0; j < c; ++j)
                if (!(fields >> m(i, j)))
                    throw DatasetParseError(line_no, "basis has too few entries");
        try {
            bases.emplace_back(std::move(m));
        } catch (const std::invalid_argument& e) {
            throw DatasetParseError(line_no, e.what());
        }
    }
    ds.truth = BasisSet(std::move(bases));

    ds.instances.reserve(n);
    const std::size_t expected_fields = ds.input_dim + 2 + ds.num_modes + 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty())
            continue;
        std::istringstream fields(line);
        std::vector<std::string> tokens;
        for (std::string tok; fields >> tok;)
            tokens.push_back(std::move(tok));
        if (tokens.size() != expected_fields)
            throw DatasetParseError(line_no, "expected " + std::to_string(expected_fields) + " fields, found " +
                                                 std::to_string(tokens.size()));
        auto to_double = [&](const std::string& s) {
            try {
                std::size_t used = 0;
                const double v = std::stod(s, &used);
                if (used != s.size() || !std::isfinite(v))
                    throw std::invalid_argument(s);
                return v;
            } catch (const std::exception&) {
                throw DatasetParseError(line_no, "malformed number '" + s + "'");
            }
        };
        auto to_label = [&](const std::string& s) {
            const double v = to_double(s);
            if (v < 0 || v >= static_cast<double>(ds.num_classes) || v != std::floor(v))
                throw DatasetParseError(line_no, "label '" + s + "' outside [0, C)");
            return static_cast<std::size_t>(v);
        };
        Instance inst;
        std::size_t pos = 0;
        inst.features.resize(static_cast<Eigen::Index>(ds.input_dim));
        for (std::size_t j = 0; j < ds.input_dim; ++j)
            inst.features(static_cast<Eigen::Index>(j)) = to_double(tokens[pos++]);
        inst.clean_label = to_label(tokens[pos++]);
        inst.noisy_label = to_label(tokens[pos++]);
        inst.true_mode_weights.resize(static_cast<Eigen::Index>(ds.num_modes));
        for (std::size_t k = 0; k < ds.num_modes; ++k)
            inst.true_mode_weights(static_cast<Eigen::Index>(k)) = to_double(tokens[pos++]);
        if (!is_simplex(inst.true_mode_weights, 1e-8))
            throw DatasetParseError(line_no, "mode weights do not form a probability vector");
        const std::string& flag = tokens[pos];
        if (flag != "0" && flag != "1")
            throw DatasetParseError(line_no, "anchor flag must be 0 or 1");
        inst.anchor = flag == "1";
        ds.instances.push_back(std::move(inst));
    }
    if (ds.instances.size() != n)
        throw DatasetParseError(line_no, "header announced " + std::to_string(n) + " instances, found " +
                                             std::to_string(ds.instances.size()));
    return ds;
}

} // namespace mind

#pragma once

// Scalar metrics over predictions, features and training histories.

#include "mind/core.hpp"
#include "mind/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

namespace mind {

inline double accuracy(std::span<const std::size_t> predictions, std::span<const std::size_t> labels)
{
    if (predictions.size() != labels.size())
        throw DimensionMismatch("predictions and labels differ in length");
    if (predictions.empty())
        throw std::invalid_argument("accuracy of an empty set");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < labels.size(); ++i)
        hits += predictions[i] == labels[i];
    return static_cast<double>(hits) / static_cast<double>(labels.size());
}

/// Mean silhouette over all points, Euclidean distance, one point per row.
inline double silhouette(const Matrix& points, std::span<const std::size_t> labels)
{
    const auto n = static_cast<std::size_t>(points.rows());
    if (labels.size() != n)
        throw DimensionMismatch("one label per point required");

    std::size_t num_clusters = 0;
    for (std::size_t l : labels)
        num_clusters = std::max(num_clusters, l + 1);
    std::vector<std::size_t> sizes(num_clusters, 0);
    for (std::size_t l : labels)
        ++sizes[l];
    std::size_t non_empty = 0;
    for (std::size_t s : sizes) {
        if (s == 1)
            throw std::invalid_argument("silhouette: singleton cluster");
        non_empty += s > 0;
    }
    if (non_empty < 2)
        throw std::invalid_argument("silhouette: need at least two clusters");

    // Row-wise squared norms let each distance be one dot product.
    const Vector sq = points.rowwise().squaredNorm();
    std::vector<double> sums(num_clusters);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        std::fill(sums.begin(), sums.end(), 0.0);
        const auto ii = static_cast<Eigen::Index>(i);
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i)
                continue;
            const auto jj = static_cast<Eigen::Index>(j);
            const double d2 = sq(ii) + sq(jj) - 2.0 * points.row(ii).dot(points.row(jj));
            sums[labels[j]] += std::sqrt(std::max(d2, 0.0));
        }
        const std::size_t own = labels[i];
        const double a = sums[own] / static_cast<double>(sizes[own] - 1);
        double b = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < num_clusters; ++c)
            if (c != own && sizes[c] > 0)
                b = std::min(b, sums[c] / static_cast<double>(sizes[c]));
        const double denom = std::max(a, b);
        total += denom > 0.0 ? (b - a) / denom : 0.0;
    }
    return total / static_cast<double>(n);
}

struct LinearFit
{
    double slope = 0.0;
    double intercept = 0.0;
    /// max(0, r2_raw), so always in [0, 1].
    double r2 = 0.0;
    double r2_raw = 0.0;
};

/// Ordinary least squares y = slope * x + intercept.
inline LinearFit fit_line(std::span<const double> x, std::span<const double> y)
{
    if (x.size() != y.size())
        throw DimensionMismatch("fit_line: x and y differ in length");
    if (x.size() < 2)
        throw std::invalid_argument("fit_line: need at least two points");
    const auto n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (!(sxx > 0.0))
        throw std::invalid_argument("fit_line: x values are all equal");
    LinearFit fit;
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    double ss_res = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double r = y[i] - (fit.slope * x[i] + fit.intercept);
        ss_res += r * r;
    }
    fit.r2_raw = syy > 0.0 ? 1.0 - ss_res / syy : 1.0;
    fit.r2 = std::clamp(fit.r2_raw, 0.0, 1.0);
    return fit;
}

struct MeanStd
{
    double mean = 0.0;
    /// Sample standard deviation (n - 1); zero for a single value.
    double stddev = 0.0;
};

inline MeanStd mean_std(std::span<const double> values)
{
    if (values.empty())
        throw std::invalid_argument("mean_std of an empty set");
    MeanStd out;
    for (double v : values)
        out.mean += v;
    out.mean /= static_cast<double>(values.size());
    if (values.size() > 1) {
        double ss = 0.0;
        for (double v : values)
            ss += (v - out.mean) * (v - out.mean);
        out.stddev = std::sqrt(ss / static_cast<double>(values.size() - 1));
    }
    return out;
}

struct EtTraceVerdict
{
    bool monotone_trend = true;
    /// Final raw E_T over the initial value.
    double ratio = 1.0;
    /// The smoothed trace never fell below the initial value by more than
    /// the allowance.
    bool no_progress = false;
    /// Largest single-step rise of the smoothed trace after warm-up.
    double worst_rise = 0.0;
    std::vector<double> smoothed;
};

struct EtTraceOptions
{
    std::size_t window = 5;
    double allowance = 0.01;
    std::size_t warm_up_epochs = 5;
    /// E_T of the initial bases; defaults to the first recorded value.
    std::optional<double> initial;
};

/// Trailing moving average of the E_T trace, checked for a non-increasing
/// trend after warm-up with single-step rises up to `allowance` tolerated.
inline EtTraceVerdict et_trace_check(const RunHistory& history, const EtTraceOptions& opt = {})
{
    if (history.records.empty())
        throw std::invalid_argument("et_trace_check: empty history");
    if (opt.window < 1)
        throw std::invalid_argument("et_trace_check: window must be >= 1");
    std::vector<double> trace;
    std::vector<std::size_t> epochs;
    for (const auto& r : history.records)
        if (r.e_t) {
            trace.push_back(*r.e_t);
            epochs.push_back(r.epoch);
        }
    EtTraceVerdict v;
    if (trace.empty()) {
        v.no_progress = true;
        return v;
    }
    v.smoothed.resize(trace.size());
    double running = 0.0;
    for (std::size_t i = 0; i < trace.size(); ++i) {
        running += trace[i];
        if (i >= opt.window)
            running -= trace[i - opt.window];
        v.smoothed[i] = running / static_cast<double>(std::min(i + 1, opt.window));
    }
    const double initial = opt.initial.value_or(trace.front());
    v.ratio = initial > 0.0 ? trace.back() / initial : 1.0;
    double lowest = initial;
    for (std::size_t i = 0; i < trace.size(); ++i) {
        lowest = std::min(lowest, v.smoothed[i]);
        if (i == 0 || epochs[i] < opt.warm_up_epochs)
            continue;
        const double rise = v.smoothed[i] - v.smoothed[i - 1];
        v.worst_rise = std::max(v.worst_rise, rise);
        if (rise > opt.allowance)
            v.monotone_trend = false;
    }
    v.no_progress = lowest > initial - opt.allowance;
    return v;
}

} // namespace mind

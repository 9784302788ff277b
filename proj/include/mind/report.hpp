#pragma once

// Result export: atomic file writes, CSV tables and JSON summaries.

#include "mind/experiments.hpp"
#include "mind/train.hpp"

#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace mind {

struct IoError : std::runtime_error
{
    using std::runtime_error::runtime_error;
};

/// Writes through `fill` into `<path>.tmp` and renames it over `path`, so a
/// reader never sees a partial file.
inline void write_atomically(const std::filesystem::path& path, const std::function<void(std::ostream&)>& fill)
{
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out)
            throw IoError("cannot open '" + tmp.string() + "' for writing");
        fill(out);
        out.flush();
        if (!out)
            throw IoError("write to '" + tmp.string() + "' failed");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp);
        throw IoError("cannot move '" + tmp.string() + "' to '" + path.string() + "': " + ec.message());
    }
}

inline void write_text_atomically(const std::filesystem::path& path, const std::string& text)
{
    write_atomically(path, [&](std::ostream& out) { out << text; });
}

namespace detail {

    inline std::string num(double v)
    {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.10g", v);
        return buf;
    }

    inline nlohmann::ordered_json fit_json(const LinearFit& fit, const std::string& axes)
    {
        return {{"axes", axes}, {"slope", fit.slope}, {"intercept", fit.intercept}, {"r2", fit.r2},
                {"r2_raw", fit.r2_raw}};
    }

} // namespace detail

/// value,seed,metric
inline void write_experiment_csv(std::ostream& out, const ExperimentResult& r)
{
    out << r.variable << ",seed," << r.metric << '\n';
    for (const auto& run : r.runs)
        out << detail::num(run.value) << ',' << run.seed << ',' << detail::num(run.metric) << '\n';
}

inline nlohmann::ordered_json experiment_json(const ExperimentResult& r)
{
    nlohmann::ordered_json j;
    j["experiment"] = r.name;
    j["variable"] = r.variable;
    j["metric"] = r.metric;
    auto points = nlohmann::ordered_json::array();
    for (const auto& p : r.points) {
        nlohmann::ordered_json pj{{"value", p.value}, {"mean", p.metric.mean}, {"std", p.metric.stddev},
                                  {"seeds", p.seeds}};
        if (p.predicted)
            pj["predicted"] = *p.predicted;
        points.push_back(pj);
    }
    j["points"] = points;
    if (r.fit)
        j["fit"] = detail::fit_json(*r.fit, r.fit_axes);
    auto checks = nlohmann::ordered_json::array();
    for (const auto& c : r.checks)
        checks.push_back({{"name", c.name}, {"pass", c.pass}, {"detail", c.detail}});
    j["checks"] = checks;
    j["pass"] = r.passed();
    return j;
}

/// variant,seed,accuracy,e_t_initial,e_t_final,silhouette,monotone_trend,clamps
inline void write_suite_csv(std::ostream& out, const std::vector<VariantRun>& runs)
{
    out << "variant,seed,accuracy,e_t_initial,e_t_final,silhouette,monotone_trend,clamps\n";
    auto opt = [](const std::optional<double>& v) { return v ? detail::num(*v) : std::string(); };
    for (const auto& r : runs)
        out << to_string(r.variant) << ',' << r.seed << ',' << detail::num(r.accuracy) << ',' << opt(r.e_t_initial)
            << ',' << opt(r.e_t_final) << ',' << opt(r.silhouette) << ','
            << (r.trace ? (r.trace->monotone_trend ? "true" : "false") : "") << ',' << r.clamp_count << '\n';
}

/// Mean and standard deviation per variant over seeds.
inline nlohmann::ordered_json suite_json(const std::vector<VariantRun>& runs, const std::vector<Variant>& variants)
{
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (Variant v : variants) {
        std::vector<double> acc, et, sil;
        for (const auto& r : runs) {
            if (r.variant != v)
                continue;
            acc.push_back(r.accuracy);
            if (r.e_t_final)
                et.push_back(*r.e_t_final);
            if (r.silhouette)
                sil.push_back(*r.silhouette);
        }
        if (acc.empty())
            continue;
        nlohmann::ordered_json row{{"variant", std::string(to_string(v))}, {"seeds", acc.size()}};
        const MeanStd a = mean_std(acc);
        row["accuracy"] = {{"mean", a.mean}, {"std", a.stddev}};
        if (!et.empty()) {
            const MeanStd e = mean_std(et);
            row["e_t_final"] = {{"mean", e.mean}, {"std", e.stddev}};
        }
        if (!sil.empty()) {
            const MeanStd s = mean_std(sil);
            row["silhouette"] = {{"mean", s.mean}, {"std", s.stddev}};
        }
        rows.push_back(row);
    }
    return {{"experiment", "variant_suite"}, {"variants", rows}};
}

/// gnuplot script plotting `metric` against the sweep variable from `csv_name`.
inline std::string gnuplot_script(const ExperimentResult& r, const std::string& csv_name, bool log_axes)
{
    std::ostringstream s;
    s << "set datafile separator ','\n";
    s << "set key autotitle columnhead\n";
    s << "set xlabel '" << r.variable << "'\n";
    s << "set ylabel '" << r.metric << "'\n";
    if (log_axes)
        s << "set logscale xy\n";
    s << "set terminal pngcairo size 800,600\n";
    s << "set output '" << r.name << ".png'\n";
    s << "plot '" << csv_name << "' using 1:3 with points pt 7\n";
    return s.str();
}

} // namespace mind

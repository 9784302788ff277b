// Acceptance gate: one PASS/FAIL line per criterion, exit status 1 if any fail.
//
//   acceptance [--jobs N] [--only 1,2,...]

#include "mind/mind.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <set>
#include <sstream>
#include <string>
#include <vector>

using namespace mind;

namespace {

const std::vector<std::uint64_t> kSeeds{1, 2, 3};

struct Verdict
{
    int id;
    std::string name;
    bool pass;
    std::string detail;
    double seconds;
};

std::string f4(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
}

class Clock
{
public:
    double seconds() const
    {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

SyntheticConfig anchor_data(double diag_mass)
{
    SyntheticConfig c;
    c.generator = GeneratorKind::Anchor;
    c.num_classes = 4;
    c.num_modes = 3;
    c.samples_per_mode = 5000;
    c.diag_mass = diag_mass;
    return c;
}

TrainConfig anchor_train()
{
    TrainConfig t;
    t.epochs = 60;
    t.warm_up_epochs = 5;
    t.num_modes = 3;
    return t;
}

SyntheticConfig manifold_data()
{
    SyntheticConfig c;
    c.generator = GeneratorKind::Manifold;
    c.num_classes = 4;
    c.num_modes = 3;
    c.samples_per_mode = 10000;
    c.diag_mass = 0.7;
    c.manifold_lipschitz = 100.0;
    return c;
}

TrainConfig manifold_train()
{
    TrainConfig t;
    t.epochs = 100;
    return t;
}

Verdict c1_gradients()
{
    Clock clock;
    double worst = 0.0;
    const auto rows = gradient_check(10, 5);
    for (const auto& r : rows)
        worst = std::max({worst, r.ce, r.dec, r.total});
    const double s = clock.seconds();
    const bool pass = worst < 1e-4 && s < 10.0;
    return {1, "gradient correctness", pass,
            "10 seeds, max relative error " + detail::fmt(worst) + " (< 1e-4), " + f4(s) + " s (< 10 s)", s};
}

Verdict c2_estimator(std::size_t jobs)
{
    Clock clock;
    std::vector<double> errors(kSeeds.size());
    parallel_for(kSeeds.size(), jobs, [&](std::size_t i) {
        SyntheticConfig c = anchor_data(0.8);
        c.seed = kSeeds[i];
        errors[i] = oracle_consistency_error(generate_dataset(c), 0.9, 128, 200, 0.9, kSeeds[i]);
    });
    const MeanStd m = mean_std(errors);
    const double s = clock.seconds();
    std::string per;
    for (double e : errors)
        per += (per.empty() ? "" : " ") + f4(e);
    return {2, "estimator consistency", m.mean < 0.05 && s < 30.0,
            "mean aligned E_T " + f4(m.mean) + " (< 0.05) over seeds [" + per + "], " + f4(s) + " s", s};
}

struct AblationRuns
{
    std::vector<VariantRun> anchor;
    std::vector<VariantRun> low_diag;
    double anchor_seconds = 0.0;
    double low_diag_seconds = 0.0;
};

AblationRuns run_ablations(std::size_t jobs)
{
    AblationRuns out;
    Clock a;
    SuiteOptions opt;
    opt.data = anchor_data(0.8);
    opt.train = anchor_train();
    opt.variants = {Variant::Mind, Variant::CeOnly, Variant::NoDec, Variant::OracleOmega, Variant::GlobalT};
    opt.seeds = kSeeds;
    opt.jobs = jobs;
    out.anchor = run_variant_suite(opt);
    out.anchor_seconds = a.seconds();

    Clock b;
    opt.data = anchor_data(0.65);
    opt.variants = {Variant::Mind, Variant::CeOnly};
    opt.compute_silhouette = false;
    out.low_diag = run_variant_suite(opt);
    out.low_diag_seconds = b.seconds();
    return out;
}

template <typename Pred>
std::size_t count_seeds(Pred&& pred)
{
    std::size_t n = 0;
    for (std::uint64_t s : kSeeds)
        n += pred(s) ? 1 : 0;
    return n;
}

Verdict c3_identifiability(const AblationRuns& r)
{
    std::ostringstream d;
    const std::size_t ok = count_seeds([&](std::uint64_t s) {
        const VariantRun& m = *find_run(r.anchor, Variant::Mind, s);
        const double worst = *std::max_element(m.per_basis.begin(), m.per_basis.end());
        const bool pass = *m.e_t_final < 0.5 * *m.e_t_initial && worst < 0.15;
        d << " s" << s << ": " << f4(*m.e_t_final) << "/" << f4(*m.e_t_initial) << " max-basis " << f4(worst)
          << (pass ? " ok;" : " miss;");
        return pass;
    });
    const double per_seed = r.anchor_seconds / static_cast<double>(kSeeds.size() * 5);
    return {3, "end-to-end identifiability", ok >= 2 && per_seed < 300.0,
            std::to_string(ok) + "/3 seeds with final < 0.5 x initial and per-basis < 0.15 (" + d.str() +
                " ~" + f4(per_seed) + " s per run)",
            r.anchor_seconds};
}

Verdict c4_dynamics(const AblationRuns& r)
{
    std::ostringstream d;
    const std::size_t ok = count_seeds([&](std::uint64_t s) {
        const VariantRun& m = *find_run(r.anchor, Variant::Mind, s);
        d << " s" << s << ": " << (m.trace->monotone_trend ? "monotone" : "not monotone") << " worst rise "
          << f4(m.trace->worst_rise) << ";";
        return m.trace->monotone_trend;
    });
    return {4, "E_T dynamics", ok == kSeeds.size(),
            std::to_string(ok) + "/3 criterion-3 runs monotone after warm-up (" + d.str() + ")", 0.0};
}

Verdict c5_ablations(const AblationRuns& r)
{
    auto et = [&](Variant v, std::uint64_t s) { return *find_run(r.anchor, v, s)->e_t_final; };
    auto acc = [&](Variant v, std::uint64_t s) { return find_run(r.low_diag, v, s)->accuracy; };
    const std::size_t oracle = count_seeds([&](auto s) { return et(Variant::OracleOmega, s) <= et(Variant::Mind, s); });
    const std::size_t no_dec = count_seeds([&](auto s) { return et(Variant::Mind, s) < et(Variant::NoDec, s); });
    const std::size_t global = count_seeds([&](auto s) { return et(Variant::Mind, s) < et(Variant::GlobalT, s); });
    const std::size_t ce = count_seeds([&](auto s) { return acc(Variant::Mind, s) > acc(Variant::CeOnly, s); });

    std::ostringstream d;
    d << "oracle<=mind " << oracle << "/3, mind<no_dec " << no_dec << "/3, mind<global_T " << global
      << "/3, acc mind>ce_only@0.65 " << ce << "/3 |";
    for (std::uint64_t s : kSeeds)
        d << " s" << s << ": oracle " << f4(et(Variant::OracleOmega, s)) << " mind " << f4(et(Variant::Mind, s))
          << " no_dec " << f4(et(Variant::NoDec, s)) << " global_T " << f4(et(Variant::GlobalT, s)) << " acc "
          << f4(acc(Variant::Mind, s)) << " vs " << f4(acc(Variant::CeOnly, s)) << ";";
    return {5, "ablation directions", oracle >= 2 && no_dec >= 2 && global >= 2 && ce >= 2, d.str(),
            r.low_diag_seconds};
}

Verdict c6_epsilon(std::size_t jobs)
{
    Clock clock;
    EpsilonOptions opt;
    opt.data = anchor_data(0.8);
    opt.seeds = kSeeds;
    opt.jobs = jobs;
    const ExperimentResult res = epsilon_robustness_experiment(opt);
    const double s = clock.seconds();
    std::ostringstream d;
    for (const auto& p : res.points)
        d << "eps " << p.value << ": " << f4(p.metric.mean) << " vs " << f4(*p.predicted) << "; ";
    d << "R^2 " << f4(res.fit->r2) << ", " << f4(s) << " s";
    return {6, "epsilon robustness", res.passed() && s < 120.0, d.str(), s};
}

Verdict c7_k_scaling(std::size_t jobs)
{
    Clock clock;
    KScalingOptions opt;
    opt.data = manifold_data();
    opt.train = manifold_train();
    opt.seeds = kSeeds;
    opt.jobs = jobs;
    const ExperimentResult res = k_scaling_experiment(opt);
    const double s = clock.seconds();
    std::ostringstream d;
    for (const auto& p : res.points)
        d << "K=" << p.value << ": " << f4(p.metric.mean) << "; ";
    d << "slope " << f4(res.fit->slope) << " R^2 " << f4(res.fit->r2);
    for (const auto& c : res.checks)
        if (!c.pass)
            d << "; failed: " << c.name;
    d << ", " << f4(s) << " s";
    return {7, "K-scaling", res.passed() && s < 900.0, d.str(), s};
}

Verdict c8_silhouette(const AblationRuns& r)
{
    std::ostringstream d;
    const std::size_t ok = count_seeds([&](std::uint64_t s) {
        const double m = *find_run(r.anchor, Variant::Mind, s)->silhouette;
        const double c = *find_run(r.anchor, Variant::CeOnly, s)->silhouette;
        d << " s" << s << ": " << f4(m) << " vs " << f4(c) << ";";
        return m > c;
    });
    return {8, "feature-space separation", ok >= 2,
            std::to_string(ok) + "/3 seeds with mind silhouette > ce_only (" + d.str() + ")", 0.0};
}

Verdict c9_invariants()
{
    Clock clock;
    bool all = true;
    std::string failed;
    for (const auto& c : run_self_checks()) {
        all = all && c.pass;
        if (!c.pass)
            failed += " " + c.name + ": " + c.detail + ";";
    }
    const double s = clock.seconds();
    return {9, "structural invariants", all && s < 60.0,
            (all ? std::string("all self-checks pass") : "failed:" + failed) + ", " + f4(s) + " s", s};
}

void print(const Verdict& v)
{
    std::printf("[%s] criterion %d %s: %s\n", v.pass ? "PASS" : "FAIL", v.id, v.name.c_str(), v.detail.c_str());
    std::fflush(stdout);
}

} // namespace

int main(int argc, char** argv)
{
    std::size_t jobs = 1;
    std::set<int> only;
    for (int i = 1; i < argc; ++i) {
        const std::string arg = argv[i];
        if (arg == "--jobs" && i + 1 < argc) {
            jobs = std::stoul(argv[++i]);
        } else if (arg == "--only" && i + 1 < argc) {
            std::stringstream list(argv[++i]);
            for (std::string item; std::getline(list, item, ',');)
                only.insert(std::stoi(item));
        } else {
            std::fprintf(stderr, "usage: acceptance [--jobs N] [--only 1,2,...]\n");
            return 2;
        }
    }
    auto want = [&](int id) { return only.empty() || only.count(id) > 0; };

    std::vector<Verdict> verdicts;
    auto record = [&](Verdict v) {
        print(v);
        verdicts.push_back(std::move(v));
    };

    if (want(1))
        record(c1_gradients());
    if (want(2))
        record(c2_estimator(jobs));
    if (want(3) || want(4) || want(5) || want(8)) {
        const AblationRuns runs = run_ablations(jobs);
        if (want(3))
            record(c3_identifiability(runs));
        if (want(4))
            record(c4_dynamics(runs));
        if (want(5))
            record(c5_ablations(runs));
        if (want(8))
            record(c8_silhouette(runs));
    }
    if (want(6))
        record(c6_epsilon(jobs));
    if (want(7))
        record(c7_k_scaling(jobs));
    if (want(9))
        record(c9_invariants());

    std::size_t passed = 0;
    for (const auto& v : verdicts)
        passed += v.pass ? 1 : 0;
    std::printf("%zu/%zu criteria passed\n", passed, verdicts.size());
    return passed == verdicts.size() ? 0 : 1;
}

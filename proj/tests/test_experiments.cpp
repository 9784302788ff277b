#include "mind/experiments.hpp"
#include "mind/report.hpp"

#include <gtest/gtest.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace mind;

namespace {

SyntheticConfig tiny_data()
{
    SyntheticConfig c;
    c.samples_per_mode = 200;
    return c;
}

TrainConfig tiny_train()
{
    TrainConfig t;
    t.epochs = 3;
    t.warm_up_epochs = 1;
    t.batch_size = 64;
    return t;
}

} // namespace

TEST(ParallelFor, RunsEveryIndexOnce)
{
    std::vector<std::atomic<int>> hits(50);
    parallel_for(hits.size(), 4, [&](std::size_t i) { ++hits[i]; });
    for (const auto& h : hits)
        EXPECT_EQ(h.load(), 1);
}

TEST(ParallelFor, RethrowsLowestIndexAfterAllRun)
{
    std::atomic<int> ran{0};
    try {
        parallel_for(10, 3, [&](std::size_t i) {
            ++ran;
            if (i == 7 || i == 4)
                throw std::runtime_error(std::to_string(i));
        });
        FAIL();
    } catch (const std::runtime_error& e) {
        EXPECT_STREQ(e.what(), "4");
    }
    EXPECT_EQ(ran.load(), 10);
}

TEST(EpsilonPrediction, HandComputed)
{
    Matrix a = Matrix::Identity(2, 2), b(2, 2);
    b << 0.5, 0.5, 0.5, 0.5;
    const BasisSet truth({TransitionMatrix(a), TransitionMatrix(b)});
    const double gap = (a - b).norm();
    EXPECT_NEAR(epsilon_prediction(truth, 0.2), 0.2 * gap, 1e-15);
    EXPECT_EQ(epsilon_prediction(truth, 0.0), 0.0);
    EXPECT_EQ(epsilon_prediction(BasisSet({TransitionMatrix(a)}), 0.3), 0.0);
}

TEST(EpsilonExperiment, DeterministicAndShaped)
{
    EpsilonOptions opt;
    opt.data = tiny_data();
    opt.epsilons = {0.0, 0.2};
    opt.seeds = {1, 2};
    opt.passes = 3;
    opt.batch_size = 128;
    const auto a = epsilon_robustness_experiment(opt);
    opt.jobs = 3;
    const auto b = epsilon_robustness_experiment(opt);
    ASSERT_EQ(a.runs.size(), 4u);
    ASSERT_EQ(a.points.size(), 2u);
    for (std::size_t i = 0; i < a.runs.size(); ++i)
        EXPECT_EQ(a.runs[i].metric, b.runs[i].metric);
    EXPECT_TRUE(a.points[1].predicted.has_value());
    EXPECT_EQ(a.checks.size(), 2u);
    EXPECT_LT(a.points[0].metric.mean, a.points[1].metric.mean);
}

TEST(KScaling, OnePointPerK)
{
    KScalingOptions opt;
    opt.data = tiny_data();
    opt.data.generator = GeneratorKind::Manifold;
    opt.train = tiny_train();
    opt.k_values = {1, 2};
    opt.seeds = {1};
    const auto r = k_scaling_experiment(opt);
    ASSERT_EQ(r.points.size(), 2u);
    EXPECT_EQ(r.points[0].value, 1.0);
    EXPECT_TRUE(r.fit.has_value());
    EXPECT_EQ(r.checks.size(), 3u);

    opt.k_values = {1, 5};
    EXPECT_THROW(k_scaling_experiment(opt), ConfigError);
}

TEST(VariantSuite, AllVariantsSeedMajor)
{
    SuiteOptions opt;
    opt.data = tiny_data();
    opt.train = tiny_train();
    opt.seeds = {4};
    const auto runs = run_variant_suite(opt);
    ASSERT_EQ(runs.size(), std::size(kAllVariants));
    for (std::size_t i = 0; i < runs.size(); ++i)
        EXPECT_EQ(runs[i].variant, kAllVariants[i]);
    const VariantRun* mind = find_run(runs, Variant::Mind, 4);
    ASSERT_NE(mind, nullptr);
    EXPECT_TRUE(mind->e_t_final.has_value());
    EXPECT_EQ(mind->per_basis.size(), 3u);
    EXPECT_TRUE(mind->silhouette.has_value());
    EXPECT_FALSE(find_run(runs, Variant::CeOnly, 4)->e_t_final.has_value());
    EXPECT_EQ(find_run(runs, Variant::Mind, 5), nullptr);

    std::ostringstream csv;
    write_suite_csv(csv, runs);
    EXPECT_EQ(csv.str().rfind("variant,seed,accuracy,e_t_initial,e_t_final,silhouette,monotone_trend,clamps\nmind,4,", 0),
              0u);
    const auto j = suite_json(runs, opt.variants);
    EXPECT_EQ(j["variants"].size(), runs.size());
    EXPECT_FALSE(j["variants"][1].contains("e_t_final"));
}

TEST(Sweep, RejectsUnknownVariableAndEstimatorlessVariant)
{
    SweepOptions opt;
    opt.data = tiny_data();
    opt.train = tiny_train();
    opt.variable = "momentum";
    opt.values = {0.9};
    EXPECT_THROW(hyperparameter_sweep(opt), ConfigError);
    opt.variable = "alpha";
    opt.seeds = {1};
    opt.train.variant = Variant::CeOnly;
    EXPECT_THROW(hyperparameter_sweep(opt), ConfigError);
}

TEST(Sweep, TwoValues)
{
    SweepOptions opt;
    opt.data = tiny_data();
    opt.train = tiny_train();
    opt.variable = "temperature";
    opt.values = {0.1, 1.0};
    opt.seeds = {1};
    const auto r = hyperparameter_sweep(opt);
    EXPECT_EQ(r.name, "sweep_temperature");
    EXPECT_EQ(r.points.size(), 2u);
    EXPECT_TRUE(r.passed());
}

TEST(Report, ExperimentCsvAndJson)
{
    ExperimentResult r;
    r.name = "demo";
    r.variable = "x";
    r.metric = "err";
    r.runs = {{1.0, 7, 0.25}, {2.0, 7, 0.125}};
    r.points = detail::aggregate({1.0, 2.0}, r.runs);
    r.checks = {{"ok", true, "fine"}};
    std::ostringstream csv;
    write_experiment_csv(csv, r);
    EXPECT_EQ(csv.str(), "x,seed,err\n1,7,0.25\n2,7,0.125\n");
    const auto j = experiment_json(r);
    EXPECT_EQ(j["experiment"], "demo");
    EXPECT_EQ(j["points"].size(), 2u);
    EXPECT_EQ(j["pass"], true);
    EXPECT_FALSE(j.contains("fit"));
    EXPECT_NE(gnuplot_script(r, "demo.csv", true).find("logscale"), std::string::npos);
}

TEST(Report, AtomicWriteLeavesNoTemporary)
{
    const auto dir = std::filesystem::temp_directory_path() / "mind_report_test";
    std::filesystem::remove_all(dir);
    const auto path = dir / "sub" / "a.txt";
    write_text_atomically(path, "hello\n");
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "hello");
    EXPECT_FALSE(std::filesystem::exists(dir / "sub" / "a.txt.tmp"));
    EXPECT_THROW(write_atomically(path, [](std::ostream&) { throw std::runtime_error("boom"); }), std::runtime_error);
    std::filesystem::remove_all(dir);
}

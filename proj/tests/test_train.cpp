#include "mind/train.hpp"

#include <gtest/gtest.h>

#include <set>
#include <sstream>

using namespace mind;

namespace {

SyntheticConfig small_data(std::size_t n = 300, double diag = 0.8)
{
    SyntheticConfig c;
    c.samples_per_mode = n;
    c.diag_mass = diag;
    return c;
}

TrainConfig quick(Variant v, std::size_t epochs = 4)
{
    TrainConfig t;
    t.epochs = epochs;
    t.warm_up_epochs = 1;
    t.batch_size = 64;
    t.variant = v;
    return t;
}

std::string history_csv(const RunHistory& h)
{
    std::ostringstream out;
    write_history_csv(out, h);
    return out.str();
}

} // namespace

TEST(TotalLoss, IdentityChannelIsPlainCrossEntropy)
{
    Vector p(3);
    p << 0.2, 0.5, 0.3;
    const BasisSet ident({TransitionMatrix::identity(3), TransitionMatrix::identity(3)});
    Vector w(2);
    w << 0.4, 0.6;
    EXPECT_NEAR(total_loss(p, w, ident, 1, 0.0, 123.0).value, -std::log(0.5), 1e-15);
}

TEST(TotalLoss, HandComputedChannel)
{
    Vector p(2);
    p << 0.8, 0.2;
    Matrix t(2, 2);
    t << 0.9, 0.1, 0.2, 0.8;
    const BasisSet b({TransitionMatrix(t), TransitionMatrix::identity(2)});
    Vector w(2);
    w << 1.0, 0.0;
    const Vector q = corrected_posterior(p, w, b);
    EXPECT_NEAR(q(0), 0.76, 1e-15);
    EXPECT_NEAR(q(1), 0.24, 1e-15);
    EXPECT_NEAR(total_loss(p, w, b, 0, 0.0, 0.0).value, -std::log(0.76), 1e-15);
    EXPECT_NEAR(total_loss(p, w, b, 0, 0.5, 2.0).value, -std::log(0.76) + 1.0, 1e-15);
}

TEST(TotalLoss, LambdaZeroIgnoresDecoupling)
{
    Vector p(2);
    p << 0.6, 0.4;
    const BasisSet b({TransitionMatrix::identity(2)});
    const Vector w = Vector::Ones(1);
    EXPECT_EQ(total_loss(p, w, b, 0, 0.0, 1.0).value, total_loss(p, w, b, 0, 0.0, -1e300).value);
}

TEST(TotalLoss, ClampsImpossibleLabel)
{
    Vector p(2);
    p << 1.0, 0.0;
    const BasisSet b({TransitionMatrix::identity(2)});
    const auto l = total_loss(p, Vector::Ones(1), b, 1, 0.0, 0.0);
    EXPECT_TRUE(l.clamped);
    EXPECT_NEAR(l.value, -std::log(1e-12), 1e-9);
}

TEST(TotalLoss, PropertyCorrectedPosteriorIsSimplex)
{
    Rng rng(5);
    for (int trial = 0; trial < 200; ++trial) {
        const auto c = static_cast<Eigen::Index>(2 + rng.below(5));
        const std::size_t k = 1 + rng.below(4);
        std::vector<TransitionMatrix> bases;
        for (std::size_t j = 0; j < k; ++j) {
            Matrix m(c, c);
            for (Eigen::Index i = 0; i < m.size(); ++i)
                m.data()[i] = rng.uniform();
            for (Eigen::Index i = 0; i < c; ++i)
                m.row(i) /= m.row(i).sum();
            bases.emplace_back(m);
        }
        Vector p(c), w(static_cast<Eigen::Index>(k));
        for (Eigen::Index i = 0; i < c; ++i)
            p(i) = rng.uniform() + 1e-3;
        for (Eigen::Index i = 0; i < w.size(); ++i)
            w(i) = rng.uniform() + 1e-3;
        EXPECT_TRUE(is_simplex(corrected_posterior(p / p.sum(), w / w.sum(), BasisSet(bases))));
    }
}

TEST(Resolve, VariantOverrides)
{
    const Dataset ds = generate_dataset(small_data(10));
    TrainConfig cfg;
    cfg.variant = Variant::GlobalT;
    EXPECT_EQ(resolve(cfg, ds).num_modes, 1u);
    EXPECT_EQ(resolve(cfg, ds).lambda, 0.0);
    cfg.variant = Variant::NoDec;
    EXPECT_EQ(resolve(cfg, ds).lambda, 0.0);
    cfg.variant = Variant::NoMomentum;
    EXPECT_EQ(resolve(cfg, ds).alpha, 0.0);
    cfg.variant = Variant::CeOnly;
    EXPECT_FALSE(resolve(cfg, ds).estimate);
    EXPECT_FALSE(resolve(cfg, ds).correct);
    cfg.variant = Variant::OracleOmega;
    EXPECT_TRUE(resolve(cfg, ds).oracle_omega);
    EXPECT_EQ(resolve(cfg, ds).num_modes, 3u);
}

TEST(Variant, NamesRoundTrip)
{
    for (Variant v : kAllVariants)
        EXPECT_EQ(parse_variant(to_string(v)), v);
    EXPECT_THROW(parse_variant("bogus"), ConfigError);
}

TEST(Split, DisjointCoverOfRows)
{
    const auto s = split_dataset(1000, 0.2, 3);
    EXPECT_EQ(s.test.size(), 200u);
    std::set<std::size_t> all(s.train.begin(), s.train.end());
    all.insert(s.test.begin(), s.test.end());
    EXPECT_EQ(all.size(), 1000u);
}

TEST(RunTraining, HistoryLengthAndFiniteness)
{
    const Dataset ds = generate_dataset(small_data());
    for (Variant v : kAllVariants) {
        const auto res = run_training(ds, quick(v, 3));
        ASSERT_EQ(res.history.records.size(), 3u) << to_string(v);
        for (const auto& r : res.history.records) {
            EXPECT_TRUE(std::isfinite(r.loss_total));
            EXPECT_GE(r.acc_clean, 0.0);
            EXPECT_LE(r.acc_clean, 1.0);
            EXPECT_EQ(r.e_t.has_value(), v != Variant::CeOnly);
        }
        EXPECT_EQ(res.estimator.has_value(), v != Variant::CeOnly);
        if (v == Variant::GlobalT) {
            EXPECT_EQ(res.estimator->bases.num_modes(), 1u);
        }
    }
}

TEST(RunTraining, DeterministicPerSeed)
{
    const Dataset ds = generate_dataset(small_data());
    TrainConfig cfg = quick(Variant::Mind);
    const std::string a = history_csv(run_training(ds, cfg).history);
    EXPECT_EQ(a, history_csv(run_training(ds, cfg).history));
    cfg.seed = 8;
    EXPECT_NE(a, history_csv(run_training(ds, cfg).history));
}

TEST(RunTraining, BasesFrozenDuringWarmUp)
{
    const Dataset ds = generate_dataset(small_data());
    TrainConfig cfg = quick(Variant::Mind, 3);
    cfg.warm_up_epochs = 3;
    const auto res = run_training(ds, cfg);
    EXPECT_EQ(res.estimator->bases, init_bases(3, 4, cfg.init_diag));
    for (const auto& r : res.history.records)
        EXPECT_EQ(*r.e_t, res.history.records.front().e_t.value());
}

TEST(RunTraining, CeOnlyLearnsNoiselessClusters)
{
    SyntheticConfig c = small_data(3000, 1.0);
    c.num_modes = 1;
    const Dataset ds = generate_dataset(c);
    TrainConfig cfg = quick(Variant::CeOnly, 10);
    EXPECT_GE(run_training(ds, cfg).history.records.back().acc_clean, 0.95);
}

TEST(RunTraining, MindReducesEstimationError)
{
    const Dataset ds = generate_dataset(small_data(5000));
    TrainConfig cfg;
    cfg.epochs = 60;
    const auto res = run_training(ds, cfg);
    const double initial = aligned_error(init_bases(3, 4, cfg.init_diag), ds.truth);
    EXPECT_LT(*res.history.records.back().e_t, 0.5 * initial);
}

TEST(RunTraining, RejectsIndivisibleFeatureDim)
{
    const Dataset ds = generate_dataset(small_data(10));
    TrainConfig cfg = quick(Variant::Mind);
    cfg.feature_dim = 25;
    EXPECT_THROW(run_training(ds, cfg), ConfigError);
}

TEST(RunTraining, HugeStepDiverges)
{
    const Dataset ds = generate_dataset(small_data());
    TrainConfig cfg = quick(Variant::CeOnly, 20);
    cfg.learning_rate = 1e200;
    EXPECT_THROW(run_training(ds, cfg), TrainingDiverged);
}

TEST(HistoryCsv, HeaderAndEmptyEstimatorColumn)
{
    const Dataset ds = generate_dataset(small_data());
    const std::string csv = history_csv(run_training(ds, quick(Variant::CeOnly, 2)).history);
    EXPECT_EQ(csv.rfind("epoch,loss_total,loss_ce,loss_dec,acc_clean,e_t_aligned,omega_entropy\n1,", 0), 0u);
    EXPECT_NE(csv.find(",,"), std::string::npos);
}

#include "mind/estimator.hpp"
#include "mind/experiments.hpp"
#include "mind/synth.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace mind;

namespace {

Matrix mat2(double a, double b, double c, double d)
{
    Matrix m(2, 2);
    m << a, b, c, d;
    return m;
}

} // namespace

TEST(InitBases, FormulaAndValidity)
{
    const BasisSet ident = init_bases(3, 4, 1.0);
    for (const auto& b : ident)
        EXPECT_EQ(b.entries(), Matrix::Identity(4, 4));
    const BasisSet two = init_bases(2, 2, 0.9);
    for (const auto& b : two)
        EXPECT_TRUE(b.entries().isApprox(mat2(0.9, 0.1, 0.1, 0.9)));
    const BasisSet many = init_bases(4, 5, 0.6);
    for (const auto& b : many) {
        EXPECT_FALSE(validate_transition(b.entries()).has_value());
        EXPECT_NEAR(b(0, 1), 0.1, 1e-15);
    }
    EXPECT_THROW(init_bases(2, 4, 0.2), std::invalid_argument);
}

TEST(BatchEstimate, HandCountedSingleMode)
{
    const BasisSet prior = init_bases(1, 2, 0.9);
    const Matrix omega = Matrix::Ones(4, 1);
    const std::vector<std::size_t> proxy{0, 0, 1, 1}, noisy{0, 1, 1, 1};
    const auto est = batch_estimate(omega, proxy, noisy, prior);
    ASSERT_EQ(est.size(), 1u);
    EXPECT_NEAR(est[0](0, 0), 0.5, 1e-6);
    EXPECT_NEAR(est[0](0, 1), 0.5, 1e-6);
    EXPECT_NEAR(est[0](1, 0), 0.0, 1e-6);
    EXPECT_NEAR(est[0](1, 1), 1.0, 1e-6);
}

TEST(BatchEstimate, OneHotWeightsPartitionCounts)
{
    Rng rng(3);
    const std::size_t n = 60;
    Matrix omega = Matrix::Zero(n, 2);
    std::vector<std::size_t> proxy(n), noisy(n);
    for (std::size_t r = 0; r < n; ++r) {
        omega(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(r % 2)) = 1.0;
        proxy[r] = rng.below(3);
        noisy[r] = rng.below(3);
    }
    const auto joint = batch_estimate(omega, proxy, noisy, init_bases(2, 3, 0.9));
    for (std::size_t k = 0; k < 2; ++k) {
        std::vector<std::size_t> p, y;
        for (std::size_t r = k; r < n; r += 2) {
            p.push_back(proxy[r]);
            y.push_back(noisy[r]);
        }
        const auto alone = batch_estimate(Matrix::Ones(static_cast<Eigen::Index>(p.size()), 1), p, y,
                                          init_bases(1, 3, 0.9));
        EXPECT_TRUE(joint[k].entries().isApprox(alone[0].entries(), 1e-12));
    }
}

TEST(BatchEstimate, MissingProxyRowFallsBack)
{
    Matrix prior_m = mat2(0.7, 0.3, 0.4, 0.6);
    const BasisSet prior({TransitionMatrix(prior_m)});
    const std::vector<std::size_t> proxy{0, 0}, noisy{0, 1};
    const auto est = batch_estimate(Matrix::Ones(2, 1), proxy, noisy, prior);
    EXPECT_DOUBLE_EQ(est[0](1, 0), 0.4);
    EXPECT_DOUBLE_EQ(est[0](1, 1), 0.6);
}

TEST(BatchEstimate, Errors)
{
    const BasisSet prior = init_bases(1, 2, 0.9);
    const std::vector<std::size_t> two{0, 1}, one{0}, bad{0, 2};
    EXPECT_THROW(batch_estimate(Matrix::Ones(2, 1), two, one, prior), DimensionMismatch);
    EXPECT_THROW(batch_estimate(Matrix::Ones(2, 1), two, bad, prior), std::out_of_range);
    EXPECT_THROW(batch_estimate(Matrix::Ones(2, 2), two, two, prior), DimensionMismatch);
}

TEST(MomentumUpdate, AlphaZeroReplaces)
{
    EstimatorState s(init_bases(1, 2, 0.9), 0.0, 0);
    const std::vector<TransitionMatrix> batch{TransitionMatrix(mat2(0.5, 0.5, 0.2, 0.8))};
    momentum_update(s, batch);
    EXPECT_TRUE(s.bases[0].entries().isApprox(batch[0].entries()));
}

TEST(MomentumUpdate, HandArithmetic)
{
    EstimatorState s(init_bases(1, 2, 1.0), 0.99, 0);
    momentum_update(s, {TransitionMatrix(mat2(0.5, 0.5, 0.5, 0.5))});
    EXPECT_NEAR(s.bases[0](0, 0), 0.995, 1e-15);
    EXPECT_NEAR(s.bases[0](0, 1), 0.005, 1e-15);
    EXPECT_NEAR(s.bases[0](1, 1), 0.995, 1e-15);
}

TEST(MomentumUpdate, AlphaOneRejected)
{
    EXPECT_THROW(EstimatorState(init_bases(1, 2, 0.9), 1.0, 0), std::invalid_argument);
}

TEST(MomentumUpdate, DuringWarmUpIsCallerBug)
{
    EstimatorState s(init_bases(1, 2, 0.9), 0.9, 5);
    s.epochs_seen = 4;
    EXPECT_THROW(momentum_update(s, {TransitionMatrix::identity(2)}), std::logic_error);
    s.epochs_seen = 5;
    EXPECT_NO_THROW(momentum_update(s, {TransitionMatrix::identity(2)}));
}

TEST(MomentumUpdate, PropertyContractionTowardBatch)
{
    Rng rng(4);
    for (int trial = 0; trial < 100; ++trial) {
        const double alpha = rng.uniform(0.0, 0.999);
        EstimatorState s(init_bases(2, 3, rng.uniform(0.5, 1.0)), alpha, 0);
        std::vector<TransitionMatrix> batch;
        for (int k = 0; k < 2; ++k) {
            Matrix m(3, 3);
            for (Eigen::Index i = 0; i < 9; ++i)
                m.data()[i] = rng.uniform() + 0.01;
            for (Eigen::Index i = 0; i < 3; ++i)
                m.row(i) /= m.row(i).sum();
            batch.emplace_back(m);
        }
        const BasisSet before = s.bases;
        momentum_update(s, batch);
        for (std::size_t k = 0; k < 2; ++k)
            EXPECT_NEAR(frobenius_error(s.bases[k], batch[k]), alpha * frobenius_error(before[k], batch[k]), 1e-12);
    }
}

TEST(WarmUpGate, Boundaries)
{
    EstimatorState five(init_bases(1, 2, 0.9), 0.9, 5);
    EXPECT_FALSE(warm_up_gate(five, 4));
    EXPECT_TRUE(warm_up_gate(five, 5));
    EstimatorState none(init_bases(1, 2, 0.9), 0.9, 0);
    EXPECT_TRUE(warm_up_gate(none, 0));
}

TEST(OracleConsistency, ErrorShrinksWithSlowerMomentum)
{
    // At alpha 0.9 the moving average spans ~19 batches, which leaves a
    // sampling floor near 0.05 (see the acceptance gate); a slower average
    // over more updates must land well below it.
    SyntheticConfig c;
    c.diag_mass = 0.8;
    const Dataset ds = generate_dataset(c);
    const double fast = oracle_consistency_error(ds, 0.9, 128, 200, 0.9, 1);
    const double slow = oracle_consistency_error(ds, 0.99, 128, 2000, 0.9, 1);
    EXPECT_LT(fast, 0.08);
    EXPECT_LT(slow, 0.03);
    EXPECT_LT(slow, fast);
}

TEST(Snapshot, StateHeader)
{
    EstimatorState s(init_bases(2, 2, 0.9), 0.99, 5);
    std::ostringstream out;
    write_state(out, s);
    EXPECT_EQ(out.str().rfind("# mind-estimator v1 alpha=0.98999999999999999 warm_up=5 epochs_seen=0 K=2\n", 0), 0u);
    EXPECT_NE(out.str().find("layer basis_1 2 2"), std::string::npos);
}

#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "mfs/model.hpp"
#include "mfs/solver.hpp"
#include "oracles.hpp"

using namespace mfs;

namespace {

Dataset one_point(double x, int y) {
  Dataset d(1);
  d.add(Vector{{x}}, y);
  return d;
}

Dataset antisymmetric_pair() {
  Dataset d(1);
  d.add(Vector{{1.0}}, 1);
  d.add(Vector{{-1.0}}, 0);
  return d;
}

ModelParams params(std::initializer_list<double> theta, double alpha = 0.0) {
  Vector t(static_cast<Eigen::Index>(theta.size()));
  Eigen::Index i = 0;
  for (double v : theta) t[i++] = v;
  return {t, alpha};
}

}  // namespace

TEST(TotalLoss, ZeroParamsGiveLogTwo) {
  EXPECT_NEAR(total_loss(one_point(0.0, 1), params({0, 0})), std::log(2.0), 1e-15);
}

TEST(TotalLoss, AntisymmetricPair) {
  EXPECT_NEAR(total_loss(antisymmetric_pair(), params({2, 0})),
              std::log1p(std::exp(-2.0)), 1e-15);
}

TEST(TotalLoss, MatchesExtendedPrecisionOracle) {
  const Dataset data = oracle::random_dataset(40, 3, 11);
  std::mt19937_64 rng(5);
  for (int k = 0; k < 10; ++k) {
    const Vector theta = oracle::random_vector(4, rng, 2.0);
    EXPECT_NEAR(total_loss(data, {theta, 0.3}), oracle::mean_loss(data, theta, 0.3),
                1e-13);
  }
}

TEST(TotalLoss, InterceptIsNotRegularized) {
  const Dataset data = one_point(0.0, 1);
  EXPECT_DOUBLE_EQ(total_loss(data, params({0, 3}, 10.0)),
                   total_loss(data, params({0, 3}, 0.0)));
}

TEST(TotalLoss, TrainedOptimumIsNoWorseThanPerturbations) {
  const Dataset data = oracle::random_dataset(60, 2, 3);
  const ModelParams opt = train(data, 0.05);
  const double best = total_loss(data, opt);
  std::mt19937_64 rng(9);
  for (int k = 0; k < 50; ++k) {
    ModelParams p = opt;
    p.theta += oracle::random_vector(3, rng, 0.1);
    EXPECT_LE(best, total_loss(data, p));
  }
}

TEST(TotalLoss, EmptyDatasetRejected) {
  try {
    total_loss(Dataset(2), params({0, 0, 0}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::empty_dataset);
  }
}

TEST(TotalLoss, DimensionMismatchRejected) {
  try {
    total_loss(one_point(1.0, 1), params({0, 0, 0}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::shape);
  }
}

TEST(PerSampleLoss, ZeroLogit) {
  const Instance z{0, Vector{{0.0}}, 1};
  EXPECT_NEAR(per_sample_loss(z, params({5, 0})), std::log(2.0), 1e-15);
}

TEST(PerSampleLoss, SaturatesToZero) {
  const Instance z{0, Vector{{1.0}}, 1};
  EXPECT_LT(per_sample_loss(z, params({50, 0})), 1e-20);
  EXPECT_EQ(per_sample_loss(z, params({1000, 0})), 0.0);
}

TEST(PerSampleLoss, WrongSideOfBoundary) {
  const Instance z{0, Vector{{1.0}}, 0};
  EXPECT_NEAR(per_sample_loss(z, params({2, 0})), 2.0 + std::log1p(std::exp(-2.0)),
              1e-14);
}

TEST(PerSampleLoss, ExtremeLogitsStayFinite) {
  const Instance z{0, Vector{{1.0}}, 0};
  EXPECT_DOUBLE_EQ(per_sample_loss(z, params({800, 0})), 800.0);
  EXPECT_TRUE(gradient(z, params({800, 0})).allFinite());
  EXPECT_TRUE(gradient(z, params({-800, 0})).allFinite());
}

TEST(Gradient, VanishesAtOptimum) {
  const Dataset data = oracle::random_dataset(50, 3, 4);
  EXPECT_LE(gradient(data, train(data, 0.1)).norm(), 1e-10);
}

TEST(Gradient, ZeroLogitExample) {
  const Vector g = gradient(Instance{0, Vector{{0.0}}, 1}, params({0, 0}));
  EXPECT_DOUBLE_EQ(g[0], 0.0);
  EXPECT_DOUBLE_EQ(g[1], -0.5);
}

TEST(Gradient, MatchesFiniteDifferences) {
  const Dataset data = oracle::random_dataset(30, 3, 21);
  std::mt19937_64 rng(17);
  for (int k = 0; k < 10; ++k) {
    const Vector theta = oracle::random_vector(4, rng);
    const double alpha = 0.2;
    const Vector fd = oracle::fd_gradient(
        [&](const Vector& t) { return oracle::mean_loss(data, t, alpha); }, theta);
    EXPECT_LE(oracle::relative_error(gradient(data, {theta, alpha}), fd), 1e-5);

    const Instance& z = data[static_cast<InstanceId>(k)];
    const Vector fd1 = oracle::fd_gradient(
        [&](const Vector& t) {
          return static_cast<double>(oracle::cross_entropy(z.features, z.label, t));
        },
        theta);
    EXPECT_LE(oracle::relative_error(gradient(z, {theta, alpha}), fd1), 1e-5);
  }
}

TEST(Hessian, SinglePointExample) {
  const Matrix h = hessian(one_point(0.0, 1), params({0, 0}, 0.3));
  EXPECT_DOUBLE_EQ(h(0, 0), 0.3);
  EXPECT_DOUBLE_EQ(h(0, 1), 0.0);
  EXPECT_DOUBLE_EQ(h(1, 0), 0.0);
  EXPECT_DOUBLE_EQ(h(1, 1), 0.25);
}

TEST(Hessian, RidgeShiftsWeightBlock) {
  const Dataset data = oracle::random_dataset(25, 4, 8);
  std::mt19937_64 rng(2);
  const Matrix h = hessian(data, {oracle::random_vector(5, rng), 1.0});
  const Matrix block = h.topLeftCorner(4, 4);
  EXPECT_GE(Eigen::SelfAdjointEigenSolver<Matrix>(block).eigenvalues().minCoeff(),
            1.0 - 1e-12);
}

TEST(Hessian, MatchesFiniteDifferencesAndIsSymmetric) {
  const Dataset data = oracle::random_dataset(30, 3, 31);
  std::mt19937_64 rng(23);
  for (int k = 0; k < 10; ++k) {
    const Vector theta = oracle::random_vector(4, rng);
    const double alpha = 0.05;
    const Matrix h = hessian(data, {theta, alpha});
    const Matrix fd = oracle::fd_jacobian(
        [&](const Vector& t) {
          return oracle::fd_gradient(
              [&](const Vector& u) { return oracle::mean_loss(data, u, alpha); }, t, 1e-5);
        },
        theta, 1e-4);
    EXPECT_LE(oracle::relative_error(h, fd), 1e-4);
    EXPECT_EQ((h - h.transpose()).cwiseAbs().maxCoeff(), 0.0);
  }
}

TEST(TotalLoss, ConvexAlongRandomSegments) {
  const Dataset data = oracle::random_dataset(40, 3, 41);
  std::mt19937_64 rng(43);
  for (int k = 0; k < 200; ++k) {
    const Vector a = oracle::random_vector(4, rng, 3.0);
    const Vector b = oracle::random_vector(4, rng, 3.0);
    const double mid = total_loss(data, {0.5 * (a + b), 0.01});
    EXPECT_LE(mid, 0.5 * (total_loss(data, {a, 0.01}) + total_loss(data, {b, 0.01})) + 1e-12);
  }
}

TEST(LogOdds, ZeroParams) {
  const Claim c{Vector{{3.0}}, 1, 0.0};
  EXPECT_EQ(log_odds(c, params({0, 0})).value, 0.0);
}

TEST(LogOdds, TowardClassOne) {
  const Claim c{Vector{{2.0}}, 0, 0.0};
  const LogOdds lo = log_odds(c, params({1, 0}));
  EXPECT_DOUBLE_EQ(lo.value, 2.0);
  EXPECT_DOUBLE_EQ(lo.grad_theta[0], 2.0);
  EXPECT_DOUBLE_EQ(lo.grad_theta[1], 1.0);
}

TEST(LogOdds, TowardClassZero) {
  const Claim c{Vector{{2.0}}, 1, 0.0};
  const LogOdds lo = log_odds(c, params({1, 0}));
  EXPECT_DOUBLE_EQ(lo.value, -2.0);
  EXPECT_DOUBLE_EQ(lo.grad_theta[0], -2.0);
  EXPECT_DOUBLE_EQ(lo.grad_theta[1], -1.0);
}

TEST(LogOdds, ConsistentWithPredictedProbability) {
  std::mt19937_64 rng(47);
  for (int k = 0; k < 100; ++k) {
    const Vector x = oracle::random_vector(3, rng, 2.0);
    const ModelParams p{oracle::random_vector(4, rng, 2.0), 0.0};
    const Claim toward_one{x, 0, 0.0};
    EXPECT_NEAR(sigmoid(log_odds(toward_one, p).value), predict_proba(x, p), 1e-12);
    const double p1 = predict_proba(x, p);
    EXPECT_NEAR(std::log(p1) - std::log1p(-p1), log_odds(toward_one, p).value, 1e-9);
  }
}

TEST(LogOdds, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(53);
  const Claim c{oracle::random_vector(2, rng), 1, 0.1};
  const Vector theta = oracle::random_vector(3, rng);
  const Vector fd = oracle::fd_gradient(
      [&](const Vector& t) { return log_odds(c, {t, 0.0}).value; }, theta);
  EXPECT_LE(oracle::relative_error(log_odds(c, {theta, 0.0}).grad_theta, fd), 1e-8);
}

TEST(Claim, MakeClaimRecordsPredictionAndRejectsNegativeSlack) {
  const ModelParams p = params({1, 0});
  EXPECT_EQ(make_claim(Vector{{2.0}}, p, 0.1).decided_class, 1);
  EXPECT_EQ(make_claim(Vector{{-2.0}}, p, 0.1).decided_class, 0);
  EXPECT_THROW(make_claim(Vector{{2.0}}, p, -0.5), Error);
}

TEST(DatasetTest, IdsAreStableUnderRemoval) {
  Dataset d(1);
  for (int i = 0; i < 4; ++i) d.add(Vector{{double(i)}}, i % 2);
  d.deactivate(1);
  EXPECT_EQ(d.active_count(), 3u);
  EXPECT_EQ(d[2].id, 2u);
  EXPECT_EQ(d.active_ids(), (std::vector<InstanceId>{0, 2, 3}));
  EXPECT_THROW(d.deactivate(1), Error);
  EXPECT_THROW(d.deactivate(9), Error);
}

TEST(DatasetTest, RejectsBadInstances) {
  Dataset d(2);
  EXPECT_THROW(d.add(Vector{{1.0}}, 0), Error);
  EXPECT_THROW(d.add(Vector{{1.0, 2.0}}, 2), Error);
  d.add(Vector{{1.0, 2.0}}, 1);
  EXPECT_THROW(d.deactivate(0), Error);  // last active instance
}

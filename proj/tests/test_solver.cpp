#include <cmath>
#include <limits>
#include <random>

#include <gtest/gtest.h>

#include "mfs/data.hpp"
#include "mfs/harness.hpp"
#include "mfs/solver.hpp"
#include "oracles.hpp"

using namespace mfs;

namespace {

Dataset labels_only(std::initializer_list<int> labels) {
  Dataset d(0);
  for (int y : labels) d.add(Vector(0), y);
  return d;
}

QuadraticSurrogate identity_surrogate(const Vector& center) {
  const auto n = center.size();
  return QuadraticSurrogate({center, 0.0}, 0.0, Vector::Zero(n), Matrix::Identity(n, n));
}

}  // namespace

TEST(Train, AntisymmetricPair) {
  Dataset d(1);
  d.add(Vector{{1.0}}, 1);
  d.add(Vector{{-1.0}}, 0);
  const ModelParams p = train(d, 0.1);
  EXPECT_GT(p.theta[0], 0.0);
  EXPECT_NEAR(p.intercept(), 0.0, 1e-10);
}

TEST(Train, AllOneLabelsConverge) {
  Dataset d(2);
  std::mt19937_64 rng(1);
  for (int i = 0; i < 20; ++i) d.add(oracle::random_vector(2, rng), 1);
  const ModelParams p = train(d, 1.0, 1e-10, 100);
  EXPECT_LE(gradient(d, p).norm(), 1e-10);
}

TEST(Train, HalfmoonMatchesReferenceOptimizer) {
  const Dataset d = gen_halfmoon(100, 0.2, 0);
  const ModelParams p = train(d, 0.01);
  EXPECT_GE(accuracy(d, p), 0.80);
  const Vector reference = oracle::gradient_descent(d, 0.01, 1e-10);
  EXPECT_LE((p.theta - reference).norm(), 1e-6);
  EXPECT_LE(oracle::mean_gradient(d, p.theta, 0.01).norm(), 1e-9);
}

TEST(Train, WarmStartReachesSameOptimum) {
  const Dataset d = oracle::random_dataset(50, 3, 12);
  const ModelParams cold = train(d, 0.1);
  TrainOptions opts;
  opts.warm_start = Vector::Constant(4, 2.0);
  EXPECT_LE((train(d, 0.1, opts).theta - cold.theta).norm(), 1e-9);
}

TEST(Train, NonConvergenceCarriesGradientNorm) {
  const Dataset d = gen_halfmoon(100, 0.2, 0);
  try {
    train(d, 0.01, 1e-10, 1);
    FAIL();
  } catch (const TrainingError& e) {
    EXPECT_EQ(e.kind(), ErrorKind::not_converged);
    EXPECT_GT(e.grad_norm(), 1e-10);
    EXPECT_NE(std::string(e.what()).find("did not converge"), std::string::npos);
  }
}

TEST(Train, SingularWithoutRegularization) {
  Dataset d(1);
  d.add(Vector{{0.0}}, 1);
  d.add(Vector{{0.0}}, 0);
  d.add(Vector{{0.0}}, 1);
  try {
    train(d, 0.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::singular_system);
  }
}

TEST(Train, RejectsBadArguments) {
  const Dataset d = oracle::random_dataset(10, 2, 1);
  EXPECT_THROW(train(d, -1.0), Error);
  EXPECT_THROW(train(d, 0.1, 0.0, 10), Error);
  EXPECT_THROW(train(Dataset(2), 0.1), Error);
}

TEST(Surrogate, ExactAtCenter) {
  const Dataset d = oracle::random_dataset(30, 2, 5);
  std::mt19937_64 rng(3);
  const ModelParams p{oracle::random_vector(3, rng), 0.1};
  const auto s = build_surrogate(d, p);
  EXPECT_EQ(s.evaluate(p.theta), total_loss(d, p));
  EXPECT_EQ(s.gradient_at(p.theta), gradient(d, p));
}

TEST(Surrogate, TaylorRemainderIsCubic) {
  const Dataset d = oracle::random_dataset(30, 2, 6);
  std::mt19937_64 rng(4);
  const ModelParams p{oracle::random_vector(3, rng), 0.1};
  const Vector v = oracle::random_vector(3, rng).normalized();
  const auto s = build_surrogate(d, p);
  const auto remainder = [&](double step) {
    ModelParams q = p;
    q.theta += step * v;
    return std::abs(total_loss(d, q) - s.evaluate(q.theta));
  };
  for (double step : {0.1, 0.05, 0.025}) {
    const double ratio = remainder(step) / remainder(step / 2);
    EXPECT_GT(ratio, 6.0) << step;
    EXPECT_LT(ratio, 10.0) << step;
  }
}

TEST(SolveConstrained, ProjectsOntoHalfSpace) {
  const auto sol = solve_constrained(identity_surrogate(Vector::Zero(2)), Vector{{1.0, 0.0}}, 0.5);
  EXPECT_TRUE(sol.constraint_active);
  EXPECT_DOUBLE_EQ(sol.multiplier, 0.5);
  EXPECT_DOUBLE_EQ(sol.theta_prime[0], 0.5);
  EXPECT_DOUBLE_EQ(sol.theta_prime[1], 0.0);
}

TEST(SolveConstrained, AlreadyFeasible) {
  const auto sol =
      solve_constrained(identity_surrogate(Vector{{1.0, 0.0}}), Vector{{1.0, 0.0}}, 0.5);
  EXPECT_FALSE(sol.constraint_active);
  EXPECT_EQ(sol.multiplier, 0.0);
  EXPECT_EQ(sol.theta_prime, (Vector{{1.0, 0.0}}));
}

TEST(SolveConstrained, MinusInfinityReturnsNewtonPoint) {
  std::mt19937_64 rng(7);
  const Matrix h = oracle::random_spd(4, rng);
  const QuadraticSurrogate s({oracle::random_vector(4, rng), 0.0}, 1.0,
                             oracle::random_vector(4, rng), h);
  const auto sol = solve_constrained(s, oracle::random_vector(4, rng),
                                     -std::numeric_limits<double>::infinity());
  EXPECT_FALSE(sol.constraint_active);
  EXPECT_EQ(sol.theta_prime, s.unconstrained_minimizer());
  EXPECT_TRUE(kkt_residuals(s, Vector::Ones(4), -std::numeric_limits<double>::infinity(), sol)
                  .within(1e-8));
}

TEST(SolveConstrained, MatchesBruteForceOracle) {
  std::mt19937_64 rng(8);
  std::uniform_int_distribution<int> dim(1, 10);
  for (int k = 0; k < 300; ++k) {
    const Eigen::Index n = k < 100 ? 3 : dim(rng);
    const Matrix h = oracle::random_spd(n, rng);
    const Vector c = oracle::random_vector(n, rng);
    const Vector g = oracle::random_vector(n, rng);
    const Vector a = oracle::random_vector(n, rng);
    const double b = oracle::random_vector(1, rng, 2.0)[0];
    const QuadraticSurrogate s({c, 0.0}, 0.0, g, h);
    const auto sol = solve_constrained(s, a, b);
    const auto want = oracle::brute_force_qp(h, g, c, a, b);
    EXPECT_LE((sol.theta_prime - want.theta).norm(), 1e-6 * (1.0 + want.theta.norm()));
    EXPECT_EQ(sol.constraint_active, want.active);
    EXPECT_NEAR(sol.multiplier, want.multiplier, 1e-6 * (1.0 + std::abs(want.multiplier)));
    const auto r = kkt_residuals(s, a, b, sol);
    EXPECT_TRUE(r.within(1e-8)) << r.stationarity << ' ' << r.primal << ' '
                                << r.complementarity;
  }
}

TEST(SolveConstrained, DegenerateConstraint) {
  try {
    solve_constrained(identity_surrogate(Vector::Zero(2)), Vector::Zero(2), 1.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::degenerate_constraint);
  }
}

TEST(SolveConstrained, ShapeMismatch) {
  EXPECT_THROW(solve_constrained(identity_surrogate(Vector::Zero(2)), Vector::Zero(3), 1.0),
               Error);
}

TEST(CounterfactualParams, FeasibleStartBarelyMoves) {
  const Dataset d = gen_halfmoon(100, 0.2, 1);
  const ModelParams p = train(d, 0.01);
  // A claim that the model decides class 0 at a point it actually assigns
  // to class 1: the constraint toward class 1 already holds with ε = 0.
  Vector x;
  for (const auto& z : d.instances())
    if (predict(z.features, p) == 1 && logit(z.features, p) > 1.0) {
      x = z.features;
      break;
    }
  ASSERT_GT(x.size(), 0);
  const Claim c{x, 0, 0.0};
  EXPECT_LE((counterfactual_params(d, p, c).theta - p.theta).norm(), 1e-8);
}

TEST(CounterfactualParams, ConfidentTargetGetsFlipped) {
  const Dataset d = gen_halfmoon(100, 0.2, 2);
  const ModelParams p = train(d, 0.01);
  Vector x;
  for (const auto& z : d.instances())
    if (std::abs(logit(z.features, p)) > 2.0) {
      x = z.features;
      break;
    }
  ASSERT_GT(x.size(), 0);
  const Claim c = make_claim(x, p, 0.1);
  const ModelParams cf = counterfactual_params(d, p, c);
  EXPECT_GE(log_odds(c, cf).value, c.epsilon - 1e-6);
  EXPECT_EQ(predict(x, cf), c.counter_class());
  EXPECT_GE(total_loss(d, cf), total_loss(d, p) - 1e-10);
}

TEST(CounterfactualParams, RejectsZeroRounds) {
  const Dataset d = gen_halfmoon(20, 0.2, 2);
  const ModelParams p = train(d, 0.01);
  EXPECT_THROW(counterfactual_params(d, p, make_claim(d[0].features, p, 0.1), 0), Error);
}

TEST(NewtonRemoval, ZeroGradientLeavesParamsUnchanged) {
  const Dataset d = labels_only({1, 1, 1});
  const ModelParams p = train<SquaredLoss>(d, 0.0);
  EXPECT_EQ(one_step_newton_remove<SquaredLoss>(d, p, d[0]).theta, p.theta);
}

TEST(NewtonRemoval, MeanEstimationToy) {
  const Dataset d = labels_only({0, 1, 1});
  const ModelParams p = train<SquaredLoss>(d, 0.0);
  EXPECT_NEAR(p.theta[0], 2.0 / 3.0, 1e-15);

  EXPECT_NEAR(one_step_newton_remove<SquaredLoss>(d, p, d[0]).theta[0], 8.0 / 9.0, 1e-12);
  Dataset reduced = d;
  reduced.deactivate(0);
  EXPECT_NEAR(train<SquaredLoss>(reduced, 0.0).theta[0], 1.0, 1e-12);

  EXPECT_NEAR(one_step_newton_remove<SquaredLoss>(d, p, d[1]).theta[0], 5.0 / 9.0, 1e-12);
  reduced = d;
  reduced.deactivate(1);
  EXPECT_NEAR(train<SquaredLoss>(reduced, 0.0).theta[0], 0.5, 1e-12);
}

TEST(NewtonRemoval, ErrorShrinksWithRegularization) {
  const Dataset d = gen_halfmoon(50, 0.2, 3);
  double previous = std::numeric_limits<double>::infinity();
  for (double alpha : {0.1, 1.0, 10.0}) {
    const ModelParams p = train(d, alpha);
    double worst = 0.0;
    for (InstanceId id : d.active_ids()) {
      Dataset reduced = d;
      reduced.deactivate(id);
      const Vector exact = train(reduced, alpha).theta;
      worst = std::max(worst, (one_step_newton_remove(d, p, d[id]).theta - exact).norm());
    }
    EXPECT_LT(worst, previous) << alpha;
    previous = worst;
  }
}

TEST(NewtonRemoval, RejectsInactiveInstance) {
  Dataset d = oracle::random_dataset(10, 2, 2);
  const ModelParams p = train(d, 0.1);
  d.deactivate(3);
  EXPECT_THROW(one_step_newton_remove(d, p, d[3]), Error);
}

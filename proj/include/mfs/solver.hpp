#ifndef MFS_SOLVER_HPP
#define MFS_SOLVER_HPP

#include <cmath>
#include <limits>
#include <optional>

#include "mfs/dataset.hpp"
#include "mfs/error.hpp"
#include "mfs/model.hpp"

namespace mfs {

struct TrainOptions {
  double tol = 1e-10;
  int max_iter = 100;
  std::optional<Vector> warm_start;
};

namespace detail {

inline Eigen::LDLT<Matrix> factorize(const Matrix& h) {
  Eigen::LDLT<Matrix> ldlt(h);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
    throw Error(ErrorKind::singular_system, "singular system");
  const auto diag = ldlt.vectorD();
  const double scale = std::max(1.0, diag.cwiseAbs().maxCoeff());
  if (!diag.allFinite() || diag.minCoeff() <= 1e-14 * scale)
    throw Error(ErrorKind::singular_system, "singular system");
  return ldlt;
}

inline Vector checked_solve(const Eigen::LDLT<Matrix>& ldlt, const Vector& rhs) {
  Vector x = ldlt.solve(rhs);
  if (!x.allFinite())
    throw Error(ErrorKind::numerical_failure, "numerical failure");
  return x;
}

}  // namespace detail

/// Damped Newton with Armijo backtracking (c = 1e-4, step halving) on the
/// regularized mean loss. Returns θ̂ with ‖∇L(θ̂)‖ ≤ tol.
template <MarginLoss Loss = LogisticLoss>
ModelParams train(const Dataset& data, double alpha,
                  const TrainOptions& opts = {}) {
  detail::check_nonempty(data);
  detail::require_arg(alpha >= 0.0 && std::isfinite(alpha),
                      "alpha must be nonnegative");
  detail::require_arg(opts.tol > 0.0, "tol must be positive");
  constexpr double armijo_c = 1e-4;
  constexpr int max_halvings = 60;

  ModelParams params{Vector::Zero(static_cast<Eigen::Index>(data.dim()) + 1),
                     alpha};
  if (opts.warm_start) {
    detail::check_params(ModelParams{*opts.warm_start, alpha}, data.dim());
    params.theta = *opts.warm_start;
  }

  Vector g = gradient<Loss>(data, params);
  double f = total_loss<Loss>(data, params);
  for (int iter = 0; iter < opts.max_iter; ++iter) {
    const double gnorm = g.norm();
    if (gnorm <= opts.tol) return params;
    const auto ldlt = detail::factorize(hessian<Loss>(data, params));
    const Vector step = -detail::checked_solve(ldlt, g);
    const double slope = g.dot(step);

    ModelParams trial = params;
    if (-slope <= 1e-12 * (1.0 + std::abs(f))) {
      // The Newton decrement is at rounding level, so the Armijo test can no
      // longer tell steps apart; the full step is well inside the quadratic
      // convergence region.
      trial.theta = params.theta + step;
      f = total_loss<Loss>(data, trial);
    } else {
      double t = 1.0;
      bool accepted = false;
      for (int k = 0; k < max_halvings; ++k, t *= 0.5) {
        trial.theta = params.theta + t * step;
        const double ft = total_loss<Loss>(data, trial);
        if (ft <= f + armijo_c * t * slope) {
          f = ft;
          accepted = true;
          break;
        }
      }
      if (!accepted) throw TrainingError(gnorm);
    }
    params = trial;
    g = gradient<Loss>(data, params);
  }
  const double gnorm = g.norm();
  if (gnorm <= opts.tol) return params;
  throw TrainingError(gnorm);
}

template <MarginLoss Loss = LogisticLoss>
ModelParams train(const Dataset& data, double alpha, double tol,
                  int max_iter) {
  TrainOptions opts;
  opts.tol = tol;
  opts.max_iter = max_iter;
  return train<Loss>(data, alpha, opts);
}

/// Second-order Taylor model of the training loss around `center`:
///   f(θ) = L(c) + (θ−c)ᵀg + ½(θ−c)ᵀH(θ−c).
class QuadraticSurrogate {
 public:
  QuadraticSurrogate(ModelParams center, double value, Vector grad,
                     Matrix hess)
      : center_(std::move(center)),
        value_(value),
        grad_(std::move(grad)),
        hess_(std::move(hess)),
        ldlt_(detail::factorize(hess_)) {
    detail::require_shape(grad_.size() == center_.theta.size() &&
                              hess_.rows() == grad_.size() &&
                              hess_.cols() == grad_.size(),
                          "surrogate components disagree in size");
  }

  const ModelParams& center() const noexcept { return center_; }
  double value() const noexcept { return value_; }
  const Vector& grad() const noexcept { return grad_; }
  const Matrix& hess() const noexcept { return hess_; }

  double evaluate(const Vector& theta) const {
    const Vector d = theta - center_.theta;
    return value_ + d.dot(grad_) + 0.5 * d.dot(hess_ * d);
  }

  Vector gradient_at(const Vector& theta) const {
    return grad_ + hess_ * (theta - center_.theta);
  }

  /// H⁻¹v using the cached factorization.
  Vector solve(const Vector& v) const { return detail::checked_solve(ldlt_, v); }

  Vector unconstrained_minimizer() const { return center_.theta - solve(grad_); }

 private:
  ModelParams center_;
  double value_;
  Vector grad_;
  Matrix hess_;
  Eigen::LDLT<Matrix> ldlt_;
};

template <MarginLoss Loss = LogisticLoss>
QuadraticSurrogate build_surrogate(const Dataset& data,
                                   const ModelParams& params) {
  detail::require_arg(params.theta.allFinite(), "parameters must be finite");
  return QuadraticSurrogate(params, total_loss<Loss>(data, params),
                            gradient<Loss>(data, params),
                            hessian<Loss>(data, params));
}

struct KktSolution {
  Vector theta_prime;
  double multiplier = 0.0;
  bool constraint_active = false;
};

/// Exact minimizer of the surrogate over the half-space aᵀθ ≥ b.
inline KktSolution solve_constrained(const QuadraticSurrogate& surrogate,
                                     const Vector& a, double b) {
  detail::require_shape(a.size() == surrogate.grad().size(),
                        "constraint normal has wrong length");
  KktSolution sol;
  sol.theta_prime = surrogate.unconstrained_minimizer();
  const double slack = a.dot(sol.theta_prime) - b;
  if (slack >= 0.0) return sol;

  const Vector hinv_a = surrogate.solve(a);
  const double q = a.dot(hinv_a);
  if (!(q > 1e-14))
    throw Error(ErrorKind::degenerate_constraint, "degenerate constraint");
  sol.multiplier = -slack / q;
  sol.theta_prime += sol.multiplier * hinv_a;
  sol.constraint_active = true;
  if (!sol.theta_prime.allFinite() || !std::isfinite(sol.multiplier))
    throw Error(ErrorKind::numerical_failure, "numerical failure");
  return sol;
}

/// The counterfactual constraint is log-odds toward the counter class at the target ≥ ε, which is
/// linear in θ for the logistic model.
inline KktSolution solve_constrained(const QuadraticSurrogate& surrogate,
                                     const Claim& claim) {
  const LogOdds lo = log_odds(claim, surrogate.center());
  return solve_constrained(surrogate, lo.grad_theta, claim.epsilon);
}

struct KktResiduals {
  double stationarity = 0.0;     // ‖∇f(θ′) − λa‖∞
  double primal = 0.0;           // max(0, b − aᵀθ′)
  double dual = 0.0;             // max(0, −λ)
  double complementarity = 0.0;  // |λ(aᵀθ′ − b)|

  bool within(double tol) const {
    return stationarity <= tol && primal <= tol && dual <= tol &&
           complementarity <= tol;
  }
};

inline KktResiduals kkt_residuals(const QuadraticSurrogate& surrogate,
                                  const Vector& a, double b,
                                  const KktSolution& sol) {
  KktResiduals r;
  r.stationarity = (surrogate.gradient_at(sol.theta_prime) - sol.multiplier * a)
                       .cwiseAbs()
                       .maxCoeff();
  const double slack = std::isinf(b) ? std::numeric_limits<double>::infinity()
                                     : a.dot(sol.theta_prime) - b;
  r.primal = std::max(0.0, -slack);
  r.dual = std::max(0.0, -sol.multiplier);
  r.complementarity = sol.multiplier == 0.0 ? 0.0 : std::abs(sol.multiplier * slack);
  return r;
}

inline constexpr int default_inner_iters = 20;

/// Approximately solves min L(θ) s.t. log-odds toward the counter class ≥ ε by repeatedly
/// re-centering the surrogate and solving its constrained QP. Once the iterate
/// is feasible, steps are backtracked on the true loss; every iterate after
/// the first round stays feasible because the constraint is linear.
template <MarginLoss Loss = LogisticLoss>
ModelParams counterfactual_params(const Dataset& data,
                                  const ModelParams& params,
                                  const Claim& claim,
                                  int inner_iters = default_inner_iters) {
  detail::require_arg(inner_iters >= 1, "inner_iters must be at least 1");
  constexpr double step_tol = 1e-8;
  constexpr double feas_tol = 1e-12;
  ModelParams current = params;
  for (int round = 0; round < inner_iters; ++round) {
    const auto surrogate = build_surrogate<Loss>(data, current);
    const KktSolution sol = solve_constrained(surrogate, claim);
    const Vector step = sol.theta_prime - current.theta;

    const bool feasible = log_odds(claim, current).value >= claim.epsilon - feas_tol;
    double t = 1.0;
    if (feasible) {
      const double f0 = surrogate.value();
      const double slope = surrogate.grad().dot(step);
      ModelParams trial = current;
      for (int k = 0; k < 40; ++k, t *= 0.5) {
        trial.theta = current.theta + t * step;
        if (total_loss<Loss>(data, trial) <= f0 + 1e-4 * t * slope) break;
      }
    }
    current.theta += t * step;
    if (t * step.norm() <= step_tol) break;
  }
  return current;
}

/// One-step Newton estimate of the optimum after removing `removed`:
///   θ̂ + (1/n′) H⁻¹ ∇l(z, θ̂)
/// with n′ and H taken over the current active set (which still contains z).
template <MarginLoss Loss = LogisticLoss>
ModelParams one_step_newton_remove(const Dataset& data,
                                   const ModelParams& params,
                                   const Instance& removed) {
  detail::require_arg(removed.id < data.size() && data.is_active(removed.id),
                      "removed instance must be active");
  const auto ldlt = detail::factorize(hessian<Loss>(data, params));
  const Vector g = gradient<Loss>(removed, params);
  ModelParams out = params;
  out.theta += detail::checked_solve(ldlt, g) /
               static_cast<double>(data.active_count());
  return out;
}

}  // namespace mfs

#endif  // MFS_SOLVER_HPP

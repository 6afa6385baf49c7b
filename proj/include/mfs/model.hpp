#ifndef MFS_MODEL_HPP
#define MFS_MODEL_HPP

#include <cmath>
#include <concepts>
#include <numbers>
#include <string>

#include "mfs/dataset.hpp"
#include "mfs/error.hpp"

namespace mfs {

/// Linear-model parameters: weights followed by the intercept, plus the L2
/// strength applied to the weights only.
struct ModelParams {
  Vector theta;
  double alpha = 0.0;

  std::size_t dim() const noexcept {
    return theta.size() == 0 ? 0 : static_cast<std::size_t>(theta.size() - 1);
  }
  auto weights() const { return theta.head(theta.size() - 1); }
  double intercept() const { return theta[theta.size() - 1]; }
};

inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

/// log(1 + e^z) without overflow.
inline double softplus(double z) {
  return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z)));
}

/// Per-sample loss as a function of the linear predictor z = θᵀ[x;1].
/// A policy provides the value and first two derivatives in z, plus a
/// Lipschitz constant of the second derivative.
template <class L>
concept MarginLoss = requires(double z, int y) {
  { L::value(z, y) } -> std::convertible_to<double>;
  { L::d1(z, y) } -> std::convertible_to<double>;
  { L::d2(z, y) } -> std::convertible_to<double>;
  { L::d2_lipschitz } -> std::convertible_to<double>;
};

/// Binary cross-entropy on the logit.
struct LogisticLoss {
  static double value(double z, int y) { return softplus(z) - y * z; }
  static double d1(double z, int y) { return sigmoid(z) - y; }
  static double d2(double z, int) {
    const double p = sigmoid(z);
    return p * (1.0 - p);
  }
  // sup |d/dz σ(1−σ)| = 1/(6√3)
  static constexpr double d2_lipschitz = 1.0 / (6.0 * std::numbers::sqrt3);
};

/// Half squared error; used for closed-form leave-one-out checks.
struct SquaredLoss {
  static double value(double z, int y) { return 0.5 * (z - y) * (z - y); }
  static double d1(double z, int y) { return z - y; }
  static double d2(double, int) { return 1.0; }
  static constexpr double d2_lipschitz = 0.0;
};

namespace detail {

inline void check_params(const ModelParams& params, std::size_t dim) {
  require_shape(static_cast<std::size_t>(params.theta.size()) == dim + 1,
                "theta has " + std::to_string(params.theta.size()) +
                    " components, expected " + std::to_string(dim + 1));
}

inline void check_nonempty(const Dataset& data) {
  if (data.empty()) throw Error(ErrorKind::empty_dataset, "empty dataset");
}

inline double linear_predictor(const Vector& x, const Vector& theta) {
  const auto d = x.size();
  return theta.head(d).dot(x) + theta[d];
}

}  // namespace detail

/// θᵀ[x;1]
inline double logit(const Vector& x, const ModelParams& params) {
  detail::check_params(params, static_cast<std::size_t>(x.size()));
  return detail::linear_predictor(x, params.theta);
}

/// p(class 1 | x)
inline double predict_proba(const Vector& x, const ModelParams& params) {
  return sigmoid(logit(x, params));
}

inline int predict(const Vector& x, const ModelParams& params) {
  return logit(x, params) > 0.0 ? 1 : 0;
}

inline Vector augmented(const Vector& x) {
  Vector out(x.size() + 1);
  out.head(x.size()) = x;
  out[x.size()] = 1.0;
  return out;
}

template <MarginLoss Loss = LogisticLoss>
double per_sample_loss(const Instance& z, const ModelParams& params) {
  detail::check_params(params, static_cast<std::size_t>(z.features.size()));
  return Loss::value(detail::linear_predictor(z.features, params.theta),
                     z.label);
}

/// ∇θ l(z, θ); excludes regularization.
template <MarginLoss Loss = LogisticLoss>
Vector gradient(const Instance& z, const ModelParams& params) {
  detail::check_params(params, static_cast<std::size_t>(z.features.size()));
  const double r =
      Loss::d1(detail::linear_predictor(z.features, params.theta), z.label);
  return r * augmented(z.features);
}

/// Mean sample loss over the active set plus (α/2)‖w‖².
template <MarginLoss Loss = LogisticLoss>
double total_loss(const Dataset& data, const ModelParams& params) {
  detail::check_nonempty(data);
  detail::check_params(params, data.dim());
  double sum = 0.0;
  data.for_each_active([&](const Instance& z) {
    sum += Loss::value(detail::linear_predictor(z.features, params.theta),
                       z.label);
  });
  const auto w = params.weights();
  return sum / static_cast<double>(data.active_count()) +
         0.5 * params.alpha * w.squaredNorm();
}

template <MarginLoss Loss = LogisticLoss>
Vector gradient(const Dataset& data, const ModelParams& params) {
  detail::check_nonempty(data);
  detail::check_params(params, data.dim());
  const auto d = static_cast<Eigen::Index>(data.dim());
  Vector g = Vector::Zero(d + 1);
  data.for_each_active([&](const Instance& z) {
    const double r = Loss::d1(
        detail::linear_predictor(z.features, params.theta), z.label);
    g.head(d) += r * z.features;
    g[d] += r;
  });
  g /= static_cast<double>(data.active_count());
  g.head(d) += params.alpha * params.weights();
  return g;
}

/// Mean Hessian over the active set without the ridge term.
template <MarginLoss Loss = LogisticLoss>
Matrix data_hessian(const Dataset& data, const ModelParams& params) {
  detail::check_nonempty(data);
  detail::check_params(params, data.dim());
  const auto d = static_cast<Eigen::Index>(data.dim());
  Matrix h = Matrix::Zero(d + 1, d + 1);
  Vector xa(d + 1);
  xa[d] = 1.0;
  data.for_each_active([&](const Instance& z) {
    const double c = Loss::d2(
        detail::linear_predictor(z.features, params.theta), z.label);
    xa.head(d) = z.features;
    h.selfadjointView<Eigen::Lower>().rankUpdate(xa, c);
  });
  h = h.selfadjointView<Eigen::Lower>();
  h /= static_cast<double>(data.active_count());
  return h;
}

template <MarginLoss Loss = LogisticLoss>
Matrix hessian(const Dataset& data, const ModelParams& params) {
  Matrix h = data_hessian<Loss>(data, params);
  const auto d = static_cast<Eigen::Index>(data.dim());
  h.diagonal().head(d).array() += params.alpha;
  return h;
}

/// The claim under explanation: at x_star the model decides decided_class,
/// and the counterfactual asks for log-odds toward the other class ≥ epsilon.
struct Claim {
  Vector x_star;
  int decided_class = 0;
  double epsilon = 0.0;

  int counter_class() const noexcept { return 1 - decided_class; }
};

inline Claim make_claim(const Vector& x_star, const ModelParams& params,
                        double epsilon) {
  detail::require_arg(epsilon >= 0.0 && std::isfinite(epsilon),
                      "epsilon must be a nonnegative finite number");
  return Claim{x_star, predict(x_star, params), epsilon};
}

struct LogOdds {
  double value = 0.0;
  Vector grad_theta;
};

/// log-odds toward the counter class at the target and its gradient in θ; linear for a logistic
/// model.
inline LogOdds log_odds(const Claim& claim, const ModelParams& params) {
  const double s = claim.counter_class() == 1 ? 1.0 : -1.0;
  LogOdds out;
  out.value = s * logit(claim.x_star, params);
  out.grad_theta = s * augmented(claim.x_star);
  return out;
}

/// p(decided class | x*)
inline double confidence(const Claim& claim, const ModelParams& params) {
  const double p1 = predict_proba(claim.x_star, params);
  return claim.decided_class == 1 ? p1 : 1.0 - p1;
}

}  // namespace mfs

#endif  // MFS_MODEL_HPP

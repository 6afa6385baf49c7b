#ifndef MFS_FORCING_SET_HPP
#define MFS_FORCING_SET_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mfs/dataset.hpp"
#include "mfs/error.hpp"
#include "mfs/model.hpp"
#include "mfs/solver.hpp"

namespace mfs {

enum class UpdateMode { newton_approx, exact_retrain };

enum class ExitReason {
  loss_gap_closed,
  decision_flipped,
  cap_reached,
  no_positive_score,
};

inline std::string_view to_string(UpdateMode m) {
  return m == UpdateMode::newton_approx ? "newton-approx" : "exact-retrain";
}

inline std::optional<UpdateMode> parse_update_mode(std::string_view s) {
  if (s == "newton-approx" || s == "newton") return UpdateMode::newton_approx;
  if (s == "exact-retrain" || s == "retrain") return UpdateMode::exact_retrain;
  return std::nullopt;
}

inline std::string_view to_string(ExitReason r) {
  switch (r) {
    case ExitReason::loss_gap_closed: return "loss-gap-closed";
    case ExitReason::decision_flipped: return "decision-flipped";
    case ExitReason::cap_reached: return "cap-reached";
    case ExitReason::no_positive_score: return "no-positive-score";
  }
  return "unknown";
}

struct MfsConfig {
  double epsilon = 0.25;
  double delta = 1e-4;
  /// 0 selects the default cap of n/4.
  std::size_t max_set_size = 0;
  UpdateMode update_mode = UpdateMode::newton_approx;
  int inner_iters = default_inner_iters;
  double alpha = 0.01;
  double train_tol = 1e-10;
  int train_max_iter = 100;
  /// In newton-approx mode, replace the Newton-updated parameters by the
  /// unconstrained minimizer of the surrogate built on the reduced set before
  /// they are used. Without it the chain of removal updates drifts away from
  /// stationarity and the loss gap stops being meaningful.
  bool refine_with_surrogate = true;

  std::size_t cap_for(std::size_t n) const {
    return max_set_size == 0 ? std::max<std::size_t>(1, n / 4) : max_set_size;
  }

  void validate(std::size_t n) const {
    detail::require_arg(epsilon >= 0.0 && std::isfinite(epsilon),
                        "epsilon must be nonnegative");
    detail::require_arg(delta > 0.0 && std::isfinite(delta),
                        "delta must be positive");
    detail::require_arg(inner_iters >= 1, "inner_iters must be at least 1");
    detail::require_arg(alpha > 0.0 && std::isfinite(alpha),
                        "alpha must be positive");
    detail::require_arg(n >= 2, "need at least two training instances");
    detail::require_arg(cap_for(n) <= n - 1,
                        "max_set_size must not exceed n - 1");
  }
};

struct MfsStep {
  InstanceId selected_id = 0;
  double score = 0.0;
  double loss_unconstrained = 0.0;
  double loss_constrained = 0.0;
  /// p(decided class | x*) after this removal, under the updated parameters.
  double confidence_at_target = 0.0;
};

struct MfsResult {
  MfsConfig config;
  std::uint64_t seed = 0;
  Claim claim;
  std::vector<MfsStep> steps;
  ExitReason exit_reason = ExitReason::no_positive_score;
  /// Constrained minus unconstrained loss at the iteration that ended the loop, when computed.
  std::optional<double> final_gap;
  double initial_confidence = 0.0;
  bool flipped_on_retrain = false;
  /// Log-odds toward the counter class at the target after retraining without the subset.
  double retrain_log_odds = 0.0;

  std::vector<InstanceId> selected_ids() const {
    std::vector<InstanceId> ids;
    ids.reserve(steps.size());
    for (const auto& s : steps) ids.push_back(s.selected_id);
    return ids;
  }
};

struct ScoredInstance {
  InstanceId id = 0;
  double score = 0.0;
};

/// max[l(z, θ_c) − l(z, θ), 0] for every active instance, in id order.
template <MarginLoss Loss = LogisticLoss>
std::vector<ScoredInstance> score_instances(const Dataset& data,
                                            const ModelParams& unconstrained,
                                            const ModelParams& constrained) {
  detail::check_nonempty(data);
  detail::require_arg(unconstrained.theta.allFinite() &&
                          constrained.theta.allFinite(),
                      "parameters must be finite");
  std::vector<ScoredInstance> out;
  out.reserve(data.active_count());
  data.for_each_active([&](const Instance& z) {
    const double diff = per_sample_loss<Loss>(z, constrained) -
                        per_sample_loss<Loss>(z, unconstrained);
    out.push_back({z.id, std::max(diff, 0.0)});
  });
  return out;
}

namespace detail {

/// Highest score, lowest id on ties.
inline std::optional<ScoredInstance> most_responsible(
    const std::vector<ScoredInstance>& scores) {
  std::optional<ScoredInstance> best;
  for (const auto& s : scores)
    if (!best || s.score > best->score) best = s;
  return best;
}

inline ModelParams retrain(const Dataset& data, const MfsConfig& config,
                           std::optional<Vector> warm = std::nullopt) {
  TrainOptions opts;
  opts.tol = config.train_tol;
  opts.max_iter = config.train_max_iter;
  opts.warm_start = std::move(warm);
  return train(data, config.alpha, opts);
}

}  // namespace detail

/// Runs the selection loop from given starting parameters without checking
/// that the claim matches them. `active` is consumed: on return it holds
/// D \ S.
inline MfsResult iterate_mfs(Dataset& active, ModelParams params,
                             const Claim& claim, const MfsConfig& config,
                             std::uint64_t seed = 0) {
  config.validate(active.active_count());
  detail::require_shape(static_cast<std::size_t>(claim.x_star.size()) ==
                            active.dim(),
                        "test point dimension differs from the dataset");
  const std::size_t cap = config.cap_for(active.active_count());

  MfsResult result;
  result.config = config;
  result.seed = seed;
  result.claim = claim;
  result.initial_confidence = confidence(claim, params);

  while (true) {
    if (result.steps.size() >= cap) {
      result.exit_reason = ExitReason::cap_reached;
      break;
    }
    const ModelParams constrained =
        counterfactual_params(active, params, claim, config.inner_iters);
    const double loss_u = total_loss(active, params);
    const double loss_c = total_loss(active, constrained);
    result.final_gap = loss_c - loss_u;
    if (loss_c - loss_u < config.delta) {
      result.exit_reason = ExitReason::loss_gap_closed;
      break;
    }
    if (predict(claim.x_star, params) != claim.decided_class) {
      result.exit_reason = ExitReason::decision_flipped;
      break;
    }
    const auto best =
        detail::most_responsible(score_instances(active, params, constrained));
    if (!best || best->score <= 0.0) {
      result.exit_reason = ExitReason::no_positive_score;
      break;
    }

    const Instance& chosen = active[best->id];
    if (config.update_mode == UpdateMode::newton_approx) {
      params = one_step_newton_remove(active, params, chosen);
      active.deactivate(best->id);
      if (config.refine_with_surrogate)
        params.theta = build_surrogate(active, params).unconstrained_minimizer();
    } else {
      active.deactivate(best->id);
      params = detail::retrain(active, config, params.theta);
    }
    result.steps.push_back(MfsStep{best->id, best->score, loss_u, loss_c,
                                   confidence(claim, params)});
  }

  const ModelParams retrained = detail::retrain(active, config);
  result.retrain_log_odds = log_odds(claim, retrained).value;
  result.flipped_on_retrain = predict(claim.x_star, retrained) != claim.decided_class;
  return result;
}

/// Builds the minimal forcing subset for `claim`: trains on `data`, then
/// alternates the counterfactual solve, selection of the most responsible
/// instance, and its removal until one of the exit conditions holds.
inline MfsResult construct_mfs(const Dataset& data, const Claim& claim,
                               const MfsConfig& config,
                               std::uint64_t rng_seed = 0) {
  config.validate(data.active_count());
  const ModelParams params = detail::retrain(data, config);
  if (predict(claim.x_star, params) != claim.decided_class)
    throw Error(ErrorKind::stale_claim,
                "stale claim: the trained model does not predict the claimed class");
  Dataset active = data;
  return iterate_mfs(active, params, claim, config, rng_seed);
}

/// Confidence in the decided class before any removal, then after each step.
inline std::vector<double> confidence_trajectory(const MfsResult& result) {
  std::vector<double> out;
  out.reserve(result.steps.size() + 1);
  out.push_back(result.initial_confidence);
  for (const auto& s : result.steps) out.push_back(s.confidence_at_target);
  return out;
}

}  // namespace mfs

#endif  // MFS_FORCING_SET_HPP

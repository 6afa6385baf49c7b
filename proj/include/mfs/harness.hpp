#ifndef MFS_HARNESS_HPP
#define MFS_HARNESS_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iterator>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <tuple>
#include <string>
#include <vector>

#include "mfs/data.hpp"
#include "mfs/dataset.hpp"
#include "mfs/forcing_set.hpp"
#include "mfs/model.hpp"
#include "mfs/solver.hpp"

namespace mfs {

// ---------------------------------------------------------------------------
// Target selection

struct TargetPolicy {
  enum class Kind { first_misclassified, misclassified_nearest, row };
  Kind kind = Kind::misclassified_nearest;
  /// Confidence in the (wrong) decided class to aim for; 0.74 in the
  /// half-moon illustration.
  double confidence = 0.74;
  std::size_t row = 0;
};

/// Index of the test row to explain, or nothing when the policy finds none.
inline std::optional<InstanceId> select_target(const Dataset& test,
                                               const ModelParams& params,
                                               const TargetPolicy& policy) {
  if (policy.kind == TargetPolicy::Kind::row) {
    if (policy.row >= test.size()) return std::nullopt;
    return policy.row;
  }
  std::optional<InstanceId> best;
  double best_dist = 0.0;
  for (const auto& z : test.instances()) {
    const int pred = predict(z.features, params);
    if (pred == z.label) continue;
    if (policy.kind == TargetPolicy::Kind::first_misclassified) return z.id;
    const double p1 = predict_proba(z.features, params);
    const double conf = pred == 1 ? p1 : 1.0 - p1;
    const double dist = std::abs(conf - policy.confidence);
    if (!best || dist < best_dist) {
      best = z.id;
      best_dist = dist;
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// Forcing-set verification by exact retraining

struct ForcingCheck {
  /// Retraining on D \ S flips the decision, or lands within
  /// `boundary_tol` log-odds of the boundary.
  bool forcing = false;
  /// No strict prefix of S flips the decision under retraining.
  bool quasi_minimal = false;
  double final_log_odds = 0.0;
  /// Length of the shortest flipping strict prefix, if any.
  std::optional<std::size_t> flipping_prefix;
};

inline ForcingCheck check_forcing(const Dataset& data, const MfsResult& result,
                                  double boundary_tol = 1e-3) {
  const auto ids = result.selected_ids();
  const auto retrain_lo = [&](std::size_t k) {
    const Dataset reduced = data.without(std::span(ids.data(), k));
    return log_odds(result.claim, detail::retrain(reduced, result.config)).value;
  };
  ForcingCheck out;
  out.final_log_odds = retrain_lo(ids.size());
  out.forcing = out.final_log_odds > 0.0 ||
                std::abs(out.final_log_odds) <= boundary_tol;
  out.quasi_minimal = true;
  for (std::size_t k = 0; k < ids.size(); ++k) {
    if (retrain_lo(k) > 0.0) {
      out.quasi_minimal = false;
      out.flipping_prefix = k;
      break;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Half-moon walks

struct HalfmoonSetup {
  std::size_t n = 100;
  double noise = 0.2;
  TargetPolicy target;
  MfsConfig mfs;
  /// Test points come from the same generator under seed + test_seed_offset.
  std::uint64_t test_seed_offset = 1000;
};

struct HalfmoonRun {
  std::uint64_t seed = 0;
  std::optional<InstanceId> target_row;
  std::optional<MfsResult> result;
};

inline HalfmoonRun run_halfmoon(const HalfmoonSetup& setup, std::uint64_t seed) {
  HalfmoonRun run;
  run.seed = seed;
  const Dataset train_set = gen_halfmoon(setup.n, setup.noise, seed);
  const Dataset test = gen_halfmoon(setup.n, setup.noise, seed + setup.test_seed_offset);
  const ModelParams params = detail::retrain(train_set, setup.mfs);
  run.target_row = select_target(test, params, setup.target);
  if (!run.target_row) return run;
  const Claim claim =
      make_claim(test[*run.target_row].features, params, setup.mfs.epsilon);
  run.result = construct_mfs(train_set, claim, setup.mfs, seed);
  return run;
}

// ---------------------------------------------------------------------------
// Training-set debugging

struct MethodReport {
  std::vector<InstanceId> selected;
  double precision = 0.0;
  double recall = 0.0;
  std::size_t top_k = 0;
  double post_fix_test_accuracy = 0.0;
};

struct DebugReport {
  double flip_fraction = 0.0;
  std::uint64_t seed = 0;
  bool no_target = false;
  std::size_t n_targets = 0;
  std::vector<InstanceId> bugs;
  double noisy_test_accuracy = 0.0;
  MethodReport mfs;
  MethodReport random;
};

struct DebugSetup {
  std::size_t n_train = 300;
  std::size_t n_val = 200;
  std::size_t n_test = 1000;
  std::size_t vocab = 50;
  double confidence_threshold = 0.7;
  std::size_t max_targets = 10;
  MfsConfig mfs;
};

/// |B ∩ S| / |S| and |B ∩ S| / |B|. An empty S has precision 0; an empty B
/// has recall 1.
inline std::pair<double, double> precision_recall(
    const std::vector<InstanceId>& selected, const std::vector<InstanceId>& bugs) {
  const std::set<InstanceId> b(bugs.begin(), bugs.end());
  std::size_t hit = 0;
  for (InstanceId id : selected) hit += b.count(id);
  const double precision =
      selected.empty() ? 0.0 : static_cast<double>(hit) / static_cast<double>(selected.size());
  const double recall =
      b.empty() ? 1.0 : static_cast<double>(hit) / static_cast<double>(b.size());
  return {precision, recall};
}

inline double accuracy(const Dataset& data, const ModelParams& params) {
  std::size_t correct = 0;
  for (const auto& z : data.instances())
    correct += predict(z.features, params) == z.label;
  return data.size() == 0 ? 0.0
                          : static_cast<double>(correct) / static_cast<double>(data.size());
}

/// Merges per-target selections by step rank: every target's first pick,
/// then every target's second pick, and so on, skipping duplicates.
inline std::vector<InstanceId> pool_round_robin(
    const std::vector<std::vector<InstanceId>>& per_target) {
  std::vector<InstanceId> pooled;
  std::set<InstanceId> seen;
  std::size_t longest = 0;
  for (const auto& s : per_target) longest = std::max(longest, s.size());
  for (std::size_t r = 0; r < longest; ++r)
    for (const auto& s : per_target)
      if (r < s.size() && seen.insert(s[r]).second) pooled.push_back(s[r]);
  return pooled;
}

namespace detail {

inline MethodReport evaluate_selection(std::vector<InstanceId> selected,
                                       const Dataset& noisy,
                                       const CorruptionLog& log,
                                       const std::vector<InstanceId>& bugs,
                                       const Dataset& test, double alpha) {
  MethodReport rep;
  std::tie(rep.precision, rep.recall) = precision_recall(selected, bugs);
  rep.top_k = selected.size();
  Dataset fixed = noisy;
  for (InstanceId id : selected)
    if (log.flipped_ids.count(id)) fixed.set_label(id, 1 - noisy[id].label);
  rep.post_fix_test_accuracy = accuracy(test, train(fixed, alpha));
  rep.selected = std::move(selected);
  return rep;
}

}  // namespace detail

inline DebugReport run_debug_cell(const DebugSetup& setup, double fraction,
                                  std::uint64_t seed) {
  detail::require_arg(fraction > 0.0 && fraction <= 0.5,
                      "flip fraction must lie in (0, 0.5]");
  const std::uint64_t base = seed * 7919 + 17;
  const Dataset clean = gen_bow_spamlike(setup.n_train, setup.vocab, base);
  const Dataset val = gen_bow_spamlike(setup.n_val, setup.vocab, base + 1);
  const Dataset test = gen_bow_spamlike(setup.n_test, setup.vocab, base + 2);
  auto [noisy, log] = flip_labels(clean, fraction, base + 3);

  DebugReport rep;
  rep.flip_fraction = fraction;
  rep.seed = seed;
  rep.bugs.assign(log.flipped_ids.begin(), log.flipped_ids.end());
  const ModelParams params = detail::retrain(noisy, setup.mfs);
  rep.noisy_test_accuracy = accuracy(test, params);

  struct Candidate { double conf; InstanceId id; };
  std::vector<Candidate> wrong;
  for (const auto& z : val.instances()) {
    const int pred = predict(z.features, params);
    if (pred == z.label) continue;
    const double p1 = predict_proba(z.features, params);
    const double conf = pred == 1 ? p1 : 1.0 - p1;
    if (conf >= setup.confidence_threshold) wrong.push_back({conf, z.id});
  }
  std::stable_sort(wrong.begin(), wrong.end(),
                   [](const Candidate& a, const Candidate& b) { return a.conf > b.conf; });
  if (wrong.size() > setup.max_targets) wrong.resize(setup.max_targets);
  rep.n_targets = wrong.size();
  if (wrong.empty()) {
    rep.no_target = true;
    return rep;
  }

  std::vector<std::vector<InstanceId>> per_target;
  for (const auto& c : wrong) {
    const Claim claim = make_claim(val[c.id].features, params, setup.mfs.epsilon);
    per_target.push_back(construct_mfs(noisy, claim, setup.mfs, seed).selected_ids());
  }
  auto pooled = pool_round_robin(per_target);
  const std::size_t k = pooled.size();
  rep.mfs = detail::evaluate_selection(std::move(pooled), noisy, log, rep.bugs,
                                       test, setup.mfs.alpha);

  std::vector<InstanceId> all(noisy.size());
  std::iota(all.begin(), all.end(), InstanceId{0});
  std::vector<InstanceId> random_pick;
  Rng rng(base + 4);
  std::sample(all.begin(), all.end(), std::back_inserter(random_pick), k, rng);
  rep.random = detail::evaluate_selection(std::move(random_pick), noisy, log,
                                          rep.bugs, test, setup.mfs.alpha);
  return rep;
}

/// One report per (fraction, seed), fraction-major.
inline std::vector<DebugReport> run_debug_experiment(
    const DebugSetup& setup, const std::vector<double>& fractions,
    const std::vector<std::uint64_t>& seeds) {
  std::vector<DebugReport> out;
  for (double f : fractions)
    for (std::uint64_t s : seeds) out.push_back(run_debug_cell(setup, f, s));
  return out;
}

// ---------------------------------------------------------------------------
// Poisoning

struct PoisonSetup {
  std::size_t n = 60;
  std::size_t dim = 40;
  double separation = 3.0;
  double radius = 1e-3;
  /// Targets are correctly classified test points whose confidence lies in
  /// [min_confidence, max_confidence].
  double min_confidence = 0.55;
  double max_confidence = 0.9;
  std::size_t n_test = 200;
  MfsConfig mfs = strongly_regularized();

  static MfsConfig strongly_regularized() {
    MfsConfig c;
    c.alpha = 0.1;
    return c;
  }
};

struct PoisonEntry {
  InstanceId target_id = 0;
  bool attack_failed = false;
  std::size_t size_clean = 0;
  std::size_t size_poisoned = 0;
  /// 1-based position of the poison in the poisoned selection order; 0 when
  /// it was not selected.
  std::size_t poison_rank = 0;
};

inline std::vector<PoisonEntry> run_poison_experiment(std::size_t n_targets,
                                                      const PoisonSetup& setup,
                                                      std::uint64_t seed) {
  std::vector<PoisonEntry> out;
  if (n_targets == 0) return out;
  const std::uint64_t base = seed * 104729 + 5;
  const Dataset clean = gen_blobs(setup.n, setup.dim, setup.separation, base);
  const Dataset test = gen_blobs(setup.n_test, setup.dim, setup.separation, base + 1);
  const ModelParams params = detail::retrain(clean, setup.mfs);

  for (const auto& z : test.instances()) {
    if (out.size() >= n_targets) break;
    const int pred = predict(z.features, params);
    if (pred != z.label) continue;
    const double p1 = predict_proba(z.features, params);
    const double conf = pred == 1 ? p1 : 1.0 - p1;
    if (conf < setup.min_confidence || conf > setup.max_confidence) continue;

    PoisonEntry e;
    e.target_id = z.id;
    const Claim clean_claim = make_claim(z.features, params, setup.mfs.epsilon);
    e.size_clean = construct_mfs(clean, clean_claim, setup.mfs, seed).steps.size();

    auto [poisoned, record] = inject_poison(clean, z.features, setup.radius,
                                            base + 2 + z.id, setup.mfs.alpha);
    const ModelParams pp = detail::retrain(poisoned, setup.mfs);
    if (predict(z.features, pp) == pred) {
      e.attack_failed = true;
      out.push_back(e);
      continue;
    }
    const Claim claim = make_claim(z.features, pp, setup.mfs.epsilon);
    const MfsResult r = construct_mfs(poisoned, claim, setup.mfs, seed);
    e.size_poisoned = r.steps.size();
    for (std::size_t k = 0; k < r.steps.size(); ++k)
      if (r.steps[k].selected_id == record.poison_id) {
        e.poison_rank = k + 1;
        break;
      }
    out.push_back(e);
  }
  return out;
}

// ---------------------------------------------------------------------------
// One-step Newton error bound

struct BoundCell {
  InstanceId removed_id = 0;
  double observed_error = 0.0;
  bool within_bound = false;
};

struct BoundEstimate {
  std::size_t n = 0;
  double lambda_min = 0.0;
  double alpha = 0.0;
  double N_g = 0.0;
  double L_F = 0.0;
  double L_H = 0.0;
  double bound_value = 0.0;
  /// Maximum over single removals.
  double observed_error = 0.0;
  std::vector<BoundCell> cells;

  bool holds() const {
    return std::all_of(cells.begin(), cells.end(),
                       [](const BoundCell& c) { return c.within_bound; });
  }
};

inline double bound_formula(std::size_t n, double L_F, double L_H, double N_g,
                            double lambda_min, double alpha) {
  return static_cast<double>(n) * L_F * L_H * N_g * N_g /
         std::pow(lambda_min + alpha, 3);
}

/// For each α: train to 1e-10, then for every single removal compare exact
/// retraining with the one-step Newton estimate through F(θ) = θᵀ[probe;1].
/// λ_min is the smallest eigenvalue of the unregularized mean Hessian's
/// weight block (the full matrix when there are no weights). L_H bounds the
/// Lipschitz constant of the per-sample Hessian: sup|ℓ'''|·max‖[x;1]‖³.
template <MarginLoss Loss = LogisticLoss>
std::vector<BoundEstimate> check_bound(const Dataset& data,
                                       const std::vector<double>& alphas,
                                       const Vector& probe) {
  detail::require_shape(static_cast<std::size_t>(probe.size()) == data.dim(),
                        "probe dimension differs from the dataset");
  const Vector probe_aug = augmented(probe);
  double max_norm = 0.0;
  data.for_each_active([&](const Instance& z) {
    max_norm = std::max(max_norm, augmented(z.features).norm());
  });

  TrainOptions opts;
  opts.tol = 1e-10;
  std::vector<BoundEstimate> out;
  for (double alpha : alphas) {
    detail::require_arg(alpha > 0.0 || Loss::d2_lipschitz == 0.0,
                        "alpha must be positive");
    BoundEstimate est;
    est.n = data.active_count();
    est.alpha = alpha;
    const ModelParams opt = train<Loss>(data, alpha, opts);

    const Matrix h = data_hessian<Loss>(data, opt);
    const auto d = static_cast<Eigen::Index>(data.dim());
    const Matrix block = d > 0 ? Matrix(h.topLeftCorner(d, d)) : h;
    est.lambda_min = Eigen::SelfAdjointEigenSolver<Matrix>(block).eigenvalues().minCoeff();

    data.for_each_active([&](const Instance& z) {
      est.N_g = std::max(est.N_g, gradient<Loss>(z, opt).norm());
    });
    est.L_F = probe_aug.norm();
    est.L_H = Loss::d2_lipschitz * max_norm * max_norm * max_norm;
    est.bound_value =
        bound_formula(est.n, est.L_F, est.L_H, est.N_g, est.lambda_min, alpha);

    for (InstanceId id : data.active_ids()) {
      const ModelParams newton = one_step_newton_remove<Loss>(data, opt, data[id]);
      Dataset reduced = data;
      reduced.deactivate(id);
      TrainOptions warm = opts;
      warm.warm_start = opt.theta;
      const ModelParams exact = train<Loss>(reduced, alpha, warm);
      BoundCell cell;
      cell.removed_id = id;
      cell.observed_error = std::abs(probe_aug.dot(exact.theta - newton.theta));
      cell.within_bound = cell.observed_error <= est.bound_value;
      est.observed_error = std::max(est.observed_error, cell.observed_error);
      est.cells.push_back(cell);
    }
    out.push_back(std::move(est));
  }
  return out;
}

}  // namespace mfs

#endif  // MFS_HARNESS_HPP

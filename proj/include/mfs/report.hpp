#ifndef MFS_REPORT_HPP
#define MFS_REPORT_HPP

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "mfs/forcing_set.hpp"
#include "mfs/harness.hpp"

namespace mfs {

inline constexpr int report_schema_version = 1;
inline constexpr const char* tool_version = "0.1.0";

using Json = nlohmann::ordered_json;

inline Json to_json(const Vector& v) {
  Json out = Json::array();
  for (double x : v) out.push_back(x);
  return out;
}

inline Json to_json(const MfsConfig& c) {
  return Json{{"epsilon", c.epsilon},
              {"delta", c.delta},
              {"max_set_size", c.max_set_size},
              {"update_mode", std::string(to_string(c.update_mode))},
              {"inner_iters", c.inner_iters},
              {"alpha", c.alpha},
              {"train_tol", c.train_tol},
              {"train_max_iter", c.train_max_iter},
              {"refine_with_surrogate", c.refine_with_surrogate}};
}

inline Json to_json(const MfsResult& r) {
  Json steps = Json::array();
  for (const auto& s : r.steps)
    steps.push_back({{"selected_id", s.selected_id},
                     {"score", s.score},
                     {"loss_unconstrained", s.loss_unconstrained},
                     {"loss_constrained", s.loss_constrained},
                     {"confidence_at_target", s.confidence_at_target}});
  Json j{{"schema", "mfs-result"},
         {"schema_version", report_schema_version},
         {"config", to_json(r.config)},
         {"seed", r.seed},
         {"claim",
          {{"x_star", to_json(r.claim.x_star)},
           {"decided_class", r.claim.decided_class},
           {"epsilon", r.claim.epsilon}}},
         {"steps", std::move(steps)},
         {"exit_reason", std::string(to_string(r.exit_reason))},
         {"final_gap", r.final_gap ? Json(*r.final_gap) : Json(nullptr)},
         {"initial_confidence", r.initial_confidence},
         {"flipped_on_retrain", r.flipped_on_retrain},
         {"retrain_log_odds", r.retrain_log_odds}};
  j["trajectory"] = confidence_trajectory(r);
  return j;
}

inline Json to_json(const MethodReport& m) {
  return Json{{"selected", m.selected},
              {"precision", m.precision},
              {"recall", m.recall},
              {"top_k", m.top_k},
              {"post_fix_test_accuracy", m.post_fix_test_accuracy}};
}

inline Json to_json(const DebugReport& r) {
  Json j{{"flip_fraction", r.flip_fraction},
         {"seed", r.seed},
         {"status", r.no_target ? "no-target" : "ok"},
         {"n_targets", r.n_targets},
         {"bugs", r.bugs},
         {"noisy_test_accuracy", r.noisy_test_accuracy}};
  if (!r.no_target) {
    j["mfs"] = to_json(r.mfs);
    j["random"] = to_json(r.random);
  }
  return j;
}

inline Json to_json(const PoisonEntry& e) {
  return Json{{"target_id", e.target_id},
              {"status", e.attack_failed ? "attack-failed" : "ok"},
              {"size_clean", e.size_clean},
              {"size_poisoned", e.size_poisoned},
              {"poison_rank", e.poison_rank}};
}

inline Json to_json(const BoundEstimate& b) {
  Json cells = Json::array();
  for (const auto& c : b.cells)
    cells.push_back({{"removed_id", c.removed_id},
                     {"observed_error", c.observed_error},
                     {"within_bound", c.within_bound}});
  return Json{{"n", b.n},
              {"alpha", b.alpha},
              {"lambda_min", b.lambda_min},
              {"N_g", b.N_g},
              {"L_F", b.L_F},
              {"L_H", b.L_H},
              {"bound_value", b.bound_value},
              {"observed_error", b.observed_error},
              {"holds", b.holds()},
              {"cells", std::move(cells)}};
}

/// Wraps a payload in the versioned report envelope.
inline Json report_document(const std::string& kind, Json payload) {
  return Json{{"schema", kind},
              {"schema_version", report_schema_version},
              {"entries", std::move(payload)}};
}

/// Shortest round-trip form used for every number written to CSV.
inline std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header)
      : out_(path) {
    if (!out_) throw Error(ErrorKind::parse, "cannot write " + path.string());
    row(header);
  }

  void row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out_ << ',';
      out_ << cells[i];
    }
    out_ << '\n';
  }

 private:
  std::ofstream out_;
};

inline void write_json(const std::filesystem::path& path, const Json& j) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::parse, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace mfs

#endif  // MFS_REPORT_HPP

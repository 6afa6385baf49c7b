#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "mfs/mfs.hpp"

namespace fs = std::filesystem;
using mfs::Json;

namespace {

enum ExitCode : int {
  exit_ok = 0,
  exit_usage = 2,
  exit_no_flip = 3,
  exit_numeric = 4,
  exit_assertion = 5,
};

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct AssertionFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

constexpr const char* out_dir_env = "MFS_OUT_DIR";
constexpr const char* default_out_dir = "mfs_out";

std::vector<double> parse_number_list(const std::string& text,
                                      const std::string& flag) {
  std::vector<double> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size() || !std::isfinite(v))
      throw UsageError("--" + flag + ": '" + item + "' is not a number");
    out.push_back(v);
  }
  if (out.empty()) throw UsageError("--" + flag + " needs at least one value");
  return out;
}

/// Registers options on a subcommand and remembers how to echo their values,
/// so the manifest can carry the fully resolved configuration.
class FlagSet {
 public:
  explicit FlagSet(CLI::App* app) : app_(app) {}

  template <class T>
  CLI::Option* add(const std::string& name, T& var, const std::string& desc) {
    echo_.emplace_back(name, [&var] { return Json(var); });
    return app_->add_option("--" + name, var, desc)->capture_default_str();
  }

  Json resolved() const {
    Json j = Json::object();
    for (const auto& [name, get] : echo_) j[name] = get();
    return j;
  }

  CLI::App* app() const { return app_; }

 private:
  CLI::App* app_;
  std::vector<std::pair<std::string, std::function<Json()>>> echo_;
};

struct CommonOptions {
  std::uint64_t seed = 0;
  std::string out_dir;
  bool dry_run = false;
};

void add_common(FlagSet& flags, CommonOptions& opts) {
  flags.add("seed", opts.seed, "Random seed");
  const char* env = std::getenv(out_dir_env);
  opts.out_dir = env && *env ? env : default_out_dir;
  flags.app()
      ->add_option("--out-dir", opts.out_dir,
                   std::string("Output directory (default from ") + out_dir_env + ")")
      ->capture_default_str();
  flags.app()->add_flag("--dry-run", opts.dry_run,
                        "Validate flags and print the resolved configuration");
}

struct SolverOptions {
  double epsilon = 0.25;
  double delta = 1e-4;
  std::string mode = "newton-approx";
  double alpha = 0.01;
  std::size_t max_set_size = 0;
  int inner_iters = mfs::default_inner_iters;

  mfs::MfsConfig config() const {
    mfs::MfsConfig c;
    c.epsilon = epsilon;
    c.delta = delta;
    c.alpha = alpha;
    c.max_set_size = max_set_size;
    c.inner_iters = inner_iters;
    const auto m = mfs::parse_update_mode(mode);
    if (!m) throw UsageError("--mode must be newton-approx or exact-retrain");
    c.update_mode = *m;
    return c;
  }
};

void add_solver(FlagSet& flags, SolverOptions& opts) {
  flags.add("epsilon", opts.epsilon, "Required log-odds margin for the counter class");
  flags.add("delta", opts.delta, "Exit threshold on the loss gap");
  flags.add("mode", opts.mode, "Update after a removal: newton-approx or exact-retrain");
  flags.add("alpha", opts.alpha, "L2 regularization strength");
  flags.add("max-set-size", opts.max_set_size, "Cap on the subset size (0 = n/4)");
  flags.add("inner-iters", opts.inner_iters, "Rounds of the constrained solve");
}

struct DataOptions {
  std::string gen = "halfmoon";
  std::string data;
  std::string test_data;
  std::string label_column = "label";
  std::string negative = "0";
  std::string positive = "1";
  std::size_t n = 100;
  double noise = 0.2;
  std::size_t dim = 2;
  double separation = 2.0;
  std::size_t vocab = 50;

  mfs::CsvSchema schema() const { return {label_column, negative, positive}; }

  mfs::Dataset generate(std::size_t count, std::uint64_t seed) const {
    if (gen == "halfmoon") return mfs::gen_halfmoon(count, noise, seed);
    if (gen == "blobs") return mfs::gen_blobs(count, dim, separation, seed);
    if (gen == "bow") return mfs::gen_bow_spamlike(count, vocab, seed);
    throw UsageError("--gen must be halfmoon, blobs or bow");
  }

  mfs::Dataset training(std::uint64_t seed) const {
    return data.empty() ? generate(n, seed) : mfs::load_csv(data, schema());
  }

  /// Generated test points use the training seed plus a fixed offset.
  mfs::Dataset testing(const mfs::Dataset& train_set, std::uint64_t seed) const {
    if (!test_data.empty()) return mfs::load_csv(test_data, schema());
    if (!data.empty()) return train_set;
    return generate(n, seed + mfs::HalfmoonSetup{}.test_seed_offset);
  }
};

void add_data(FlagSet& flags, DataOptions& opts, std::size_t default_n) {
  opts.n = default_n;
  flags.add("gen", opts.gen, "Generator: halfmoon, blobs or bow");
  flags.add("data", opts.data, "Training CSV (overrides --gen)");
  flags.add("label-column", opts.label_column, "Label column name in CSV input");
  flags.add("negative", opts.negative, "CSV label value for class 0");
  flags.add("positive", opts.positive, "CSV label value for class 1");
  flags.add("n", opts.n, "Generated dataset size");
  flags.add("noise", opts.noise, "Half-moon jitter scale");
  flags.add("dim", opts.dim, "Blob dimension");
  flags.add("separation", opts.separation, "Blob center distance");
  flags.add("vocab", opts.vocab, "Bag-of-words vocabulary size");
}

class Outputs {
 public:
  explicit Outputs(const std::string& dir) : dir_(dir) {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec) throw UsageError("cannot create output directory " + dir + ": " + ec.message());
  }

  fs::path path(const std::string& name) {
    names_.push_back(name);
    return dir_ / name;
  }

  void write_manifest(const std::string& command, const Json& resolved,
                      std::uint64_t seed) {
    names_.push_back("manifest.json");
    Json m{{"schema", "mfs-manifest"},
           {"schema_version", mfs::report_schema_version},
           {"command", command},
           {"resolved_config", resolved},
           {"seed", seed},
           {"artifact_paths", names_},
           {"tool_version", mfs::tool_version}};
    mfs::write_json(dir_ / "manifest.json", m);
  }

 private:
  fs::path dir_;
  std::vector<std::string> names_;
};

void print_dry_run(const std::string& command, const Json& resolved,
                   std::uint64_t seed) {
  Json j{{"command", command}, {"resolved_config", resolved}, {"seed", seed}};
  std::cout << j.dump(2) << '\n';
}

std::string num(double v) { return mfs::format_number(v); }

// ---------------------------------------------------------------------------
// explain

struct TargetChoice {
  mfs::TargetPolicy policy;
  std::optional<std::vector<double>> point;
};

TargetChoice parse_target(const std::string& text) {
  TargetChoice choice;
  const auto colon = text.find(':');
  const std::string kind = text.substr(0, colon);
  const std::string arg = colon == std::string::npos ? "" : text.substr(colon + 1);
  if (kind == "row") {
    std::size_t used = 0;
    unsigned long long row = 0;
    try {
      row = std::stoull(arg, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != arg.size() || arg.front() == '-')
      throw UsageError("--target row:K needs a nonnegative row index");
    choice.policy.kind = mfs::TargetPolicy::Kind::row;
    choice.policy.row = static_cast<std::size_t>(row);
  } else if (kind == "misclassified" && arg == "first") {
    choice.policy.kind = mfs::TargetPolicy::Kind::first_misclassified;
  } else if (kind == "misclassified" && arg.rfind("nearest", 0) == 0) {
    choice.policy.kind = mfs::TargetPolicy::Kind::misclassified_nearest;
    if (arg.size() > 7) {
      if (arg[7] != '=') throw UsageError("--target misclassified:nearest=P");
      const double p = parse_number_list(arg.substr(8), "target").at(0);
      if (!(p >= 0.5 && p <= 1.0))
        throw UsageError("--target nearest confidence must lie in [0.5, 1]");
      choice.policy.confidence = p;
    }
  } else if (kind == "point") {
    choice.point = parse_number_list(arg, "target");
  } else {
    throw UsageError(
        "--target must be row:K, misclassified:first, "
        "misclassified:nearest[=P] or point:x1,x2,...");
  }
  return choice;
}

struct ExplainOptions {
  CommonOptions common;
  DataOptions data;
  SolverOptions solver;
  std::string target = "misclassified:first";
  std::size_t grid = 41;
};

void write_boundary_grid(const fs::path& path, const mfs::Dataset& data,
                         const mfs::ModelParams& full,
                         const mfs::ModelParams& reduced, std::size_t steps) {
  Eigen::Vector2d lo = Eigen::Vector2d::Constant(std::numeric_limits<double>::infinity());
  Eigen::Vector2d hi = -lo;
  for (const auto& z : data.instances()) {
    lo = lo.cwiseMin(z.features.head<2>());
    hi = hi.cwiseMax(z.features.head<2>());
  }
  lo.array() -= 0.5;
  hi.array() += 0.5;
  mfs::CsvWriter csv(path, {"x0", "x1", "p1_full", "p1_without_subset"});
  for (std::size_t i = 0; i < steps; ++i) {
    for (std::size_t j = 0; j < steps; ++j) {
      const double u = steps == 1 ? 0.5 : static_cast<double>(i) / static_cast<double>(steps - 1);
      const double v = steps == 1 ? 0.5 : static_cast<double>(j) / static_cast<double>(steps - 1);
      const mfs::Vector x{{lo[0] + u * (hi[0] - lo[0]), lo[1] + v * (hi[1] - lo[1])}};
      csv.row({num(x[0]), num(x[1]), num(mfs::predict_proba(x, full)),
               num(mfs::predict_proba(x, reduced))});
    }
  }
}

int run_explain(const ExplainOptions& o, const Json& resolved) {
  const mfs::MfsConfig config = o.solver.config();
  const mfs::Dataset train_set = o.data.training(o.common.seed);
  config.validate(train_set.size());
  const TargetChoice choice = parse_target(o.target);
  if (choice.point && choice.point->size() != train_set.dim())
    throw UsageError("--target point has " + std::to_string(choice.point->size()) +
                     " coordinates, the data has " + std::to_string(train_set.dim()));
  if (o.grid < 2) throw UsageError("--grid must be at least 2");
  if (o.common.dry_run) {
    print_dry_run("explain", resolved, o.common.seed);
    return exit_ok;
  }

  const mfs::ModelParams params = mfs::detail::retrain(train_set, config);
  mfs::Vector x_star;
  if (choice.point) {
    x_star = Eigen::Map<const mfs::Vector>(choice.point->data(),
                                           static_cast<Eigen::Index>(choice.point->size()));
  } else {
    const mfs::Dataset test = o.data.testing(train_set, o.common.seed);
    const auto row = mfs::select_target(test, params, choice.policy);
    if (!row) {
      if (choice.policy.kind == mfs::TargetPolicy::Kind::row)
        throw UsageError("--target row " + std::to_string(choice.policy.row) +
                         " is out of range (test set has " +
                         std::to_string(test.size()) + " rows)");
      throw UsageError("--target: no misclassified test point");
    }
    x_star = test[*row].features;
  }
  const mfs::Claim claim = mfs::make_claim(x_star, params, config.epsilon);
  const mfs::MfsResult result = mfs::construct_mfs(train_set, claim, config, o.common.seed);

  Outputs out(o.common.out_dir);
  mfs::write_json(out.path("mfs_result.json"), mfs::to_json(result));
  {
    mfs::CsvWriter csv(out.path("trajectory.csv"),
                       {"step", "removed_id", "removed_label", "score", "confidence"});
    csv.row({"0", "", "", "", num(result.initial_confidence)});
    for (std::size_t k = 0; k < result.steps.size(); ++k) {
      const auto& s = result.steps[k];
      csv.row({std::to_string(k + 1), std::to_string(s.selected_id),
               std::to_string(train_set[s.selected_id].label), num(s.score),
               num(s.confidence_at_target)});
    }
  }
  if (train_set.dim() == 2) {
    const auto ids = result.selected_ids();
    const mfs::ModelParams reduced =
        mfs::detail::retrain(train_set.without(std::span(ids)), config);
    write_boundary_grid(out.path("boundary_grid.csv"), train_set, params, reduced, o.grid);
  }
  out.write_manifest("explain", resolved, o.common.seed);

  std::cout << "subset size " << result.steps.size() << ", exit "
            << mfs::to_string(result.exit_reason) << ", flipped on retrain "
            << (result.flipped_on_retrain ? "yes" : "no") << '\n';
  return result.flipped_on_retrain ? exit_ok : exit_no_flip;
}

// ---------------------------------------------------------------------------
// debug

struct DebugOptions {
  CommonOptions common;
  SolverOptions solver;
  std::string flip = "0.1,0.2,0.3,0.4";
  std::size_t seeds = 5;
  std::size_t n_train = 300;
  std::size_t n_val = 200;
  std::size_t n_test = 1000;
  std::size_t vocab = 50;
  double confidence_threshold = 0.7;
  std::size_t max_targets = 10;
};

/// Recomputes precision and recall from the id lists stored in a written
/// report entry.
void verify_debug_entry(const Json& entry) {
  if (entry["status"] != "ok") return;
  std::set<std::uint64_t> bugs;
  for (const auto& id : entry["bugs"]) bugs.insert(id.get<std::uint64_t>());
  for (const char* method : {"mfs", "random"}) {
    const Json& m = entry[method];
    std::size_t hit = 0, count = 0;
    for (const auto& id : m["selected"]) {
      hit += bugs.count(id.get<std::uint64_t>());
      ++count;
    }
    const double precision = count == 0 ? 0.0 : static_cast<double>(hit) / static_cast<double>(count);
    const double recall = bugs.empty() ? 1.0 : static_cast<double>(hit) / static_cast<double>(bugs.size());
    if (m["precision"].get<double>() != precision || m["recall"].get<double>() != recall ||
        m["top_k"].get<std::size_t>() != count)
      throw AssertionFailure(std::string("stored ") + method +
                             " metrics disagree with the selected ids");
  }
  if (entry["mfs"]["top_k"] != entry["random"]["top_k"])
    throw AssertionFailure("random baseline size differs from the subset size");
}

int run_debug(const DebugOptions& o, const Json& resolved) {
  mfs::DebugSetup setup;
  setup.mfs = o.solver.config();
  setup.n_train = o.n_train;
  setup.n_val = o.n_val;
  setup.n_test = o.n_test;
  setup.vocab = o.vocab;
  setup.confidence_threshold = o.confidence_threshold;
  setup.max_targets = o.max_targets;
  const auto fractions = parse_number_list(o.flip, "flip");
  for (double f : fractions)
    if (!(f > 0.0 && f <= 0.5)) throw UsageError("--flip fractions must lie in (0, 0.5]");
  if (o.seeds == 0) throw UsageError("--seeds must be at least 1");
  if (o.n_val == 0 || o.n_test == 0) throw UsageError("--n-val and --n-test must be positive");
  setup.mfs.validate(o.n_train);
  if (o.common.dry_run) {
    print_dry_run("debug", resolved, o.common.seed);
    return exit_ok;
  }

  std::vector<std::uint64_t> seeds(o.seeds);
  for (std::size_t i = 0; i < o.seeds; ++i) seeds[i] = o.common.seed + i;
  const auto reports = mfs::run_debug_experiment(setup, fractions, seeds);

  Outputs out(o.common.out_dir);
  Json entries = Json::array();
  for (const auto& r : reports) entries.push_back(mfs::to_json(r));
  const fs::path report_path = out.path("debug_report.json");
  mfs::write_json(report_path, mfs::report_document("mfs-debug-report", entries));
  {
    mfs::CsvWriter csv(out.path("debug_table.csv"),
                       {"flip_fraction", "seed", "status", "n_targets", "n_bugs",
                        "noisy_test_accuracy", "method", "top_k", "precision",
                        "recall", "post_fix_test_accuracy"});
    for (const auto& r : reports) {
      if (r.no_target) {
        csv.row({num(r.flip_fraction), std::to_string(r.seed), "no-target", "0",
                 std::to_string(r.bugs.size()), num(r.noisy_test_accuracy), "", "",
                 "", "", ""});
        continue;
      }
      for (const auto& [name, m] : {std::pair{"mfs", &r.mfs}, std::pair{"random", &r.random}})
        csv.row({num(r.flip_fraction), std::to_string(r.seed), "ok",
                 std::to_string(r.n_targets), std::to_string(r.bugs.size()),
                 num(r.noisy_test_accuracy), name, std::to_string(m->top_k),
                 num(m->precision), num(m->recall), num(m->post_fix_test_accuracy)});
    }
  }
  out.write_manifest("debug", resolved, o.common.seed);

  std::ifstream in(report_path);
  const Json stored = Json::parse(in);
  for (const auto& entry : stored["entries"]) verify_debug_entry(entry);

  std::size_t wins = 0, cells = 0;
  for (const auto& r : reports) {
    if (r.no_target) continue;
    ++cells;
    wins += r.mfs.precision > r.random.precision;
  }
  std::cout << "subset precision above random in " << wins << " of " << cells
            << " cells\n";
  return exit_ok;
}

// ---------------------------------------------------------------------------
// poison

struct PoisonOptions {
  CommonOptions common;
  SolverOptions solver;
  std::size_t targets = 3;
  std::size_t n = 60;
  std::size_t dim = 40;
  double separation = 3.0;
  double radius = 1e-3;
  double min_confidence = 0.55;
  double max_confidence = 0.9;
  std::size_t n_test = 200;
};

int run_poison(const PoisonOptions& o, const Json& resolved) {
  mfs::PoisonSetup setup;
  setup.mfs = o.solver.config();
  setup.n = o.n;
  setup.dim = o.dim;
  setup.separation = o.separation;
  setup.radius = o.radius;
  setup.min_confidence = o.min_confidence;
  setup.max_confidence = o.max_confidence;
  setup.n_test = o.n_test;
  if (o.targets == 0) throw UsageError("--targets must be at least 1");
  if (!(o.radius > 0.0)) throw UsageError("--radius must be positive");
  if (!(o.min_confidence <= o.max_confidence))
    throw UsageError("--min-confidence exceeds --max-confidence");
  if (o.n % 2 || o.n_test % 2 || o.n == 0 || o.n_test == 0 || o.dim == 0)
    throw UsageError("--n and --n-test must be even and positive, --dim positive");
  setup.mfs.validate(o.n + 1);
  if (o.common.dry_run) {
    print_dry_run("poison", resolved, o.common.seed);
    return exit_ok;
  }

  const auto entries = mfs::run_poison_experiment(o.targets, setup, o.common.seed);

  Outputs out(o.common.out_dir);
  Json arr = Json::array();
  for (const auto& e : entries) arr.push_back(mfs::to_json(e));
  mfs::write_json(out.path("poison_report.json"),
                  mfs::report_document("mfs-poison-report", arr));
  {
    mfs::CsvWriter csv(out.path("poison_table.csv"),
                       {"seed", "target_id", "status", "size_clean", "size_poisoned",
                        "poison_rank"});
    for (const auto& e : entries)
      csv.row({std::to_string(o.common.seed), std::to_string(e.target_id),
               e.attack_failed ? "attack-failed" : "ok", std::to_string(e.size_clean),
               std::to_string(e.size_poisoned), std::to_string(e.poison_rank)});
  }
  out.write_manifest("poison", resolved, o.common.seed);

  if (entries.size() > o.targets)
    throw AssertionFailure("more report entries than requested targets");
  double clean_sum = 0.0, poisoned_sum = 0.0;
  std::size_t ok = 0;
  for (const auto& e : entries) {
    if (e.attack_failed) continue;
    if (e.poison_rank > e.size_poisoned)
      throw AssertionFailure("poison rank exceeds the subset size for target " +
                             std::to_string(e.target_id));
    clean_sum += static_cast<double>(e.size_clean);
    poisoned_sum += static_cast<double>(e.size_poisoned);
    ++ok;
  }
  std::cout << entries.size() << " targets, " << ok << " successful attacks\n";
  if (ok > 0 && !(poisoned_sum < clean_sum))
    throw AssertionFailure("mean poisoned subset size is not below the clean size");
  return exit_ok;
}

// ---------------------------------------------------------------------------
// bound

struct BoundOptions {
  CommonOptions common;
  DataOptions data;
  std::string alphas = "0.1,1,10";
  std::string probe;
};

int run_bound(const BoundOptions& o, const Json& resolved) {
  std::vector<double> alphas = parse_number_list(o.alphas, "alphas");
  for (double a : alphas)
    if (!(a > 0.0)) throw UsageError("--alphas must all be positive");
  const mfs::Dataset data = o.data.training(o.common.seed);
  if (data.size() < 2) throw UsageError("the bound check needs at least two instances");
  mfs::Vector probe;
  if (o.probe.empty()) {
    probe = mfs::Vector::Zero(static_cast<Eigen::Index>(data.dim()));
    for (const auto& z : data.instances()) probe += z.features;
    probe /= static_cast<double>(data.size());
  } else {
    const auto p = parse_number_list(o.probe, "probe");
    if (p.size() != data.dim())
      throw UsageError("--probe has " + std::to_string(p.size()) +
                       " coordinates, the data has " + std::to_string(data.dim()));
    probe = Eigen::Map<const mfs::Vector>(p.data(), static_cast<Eigen::Index>(p.size()));
  }
  if (o.common.dry_run) {
    print_dry_run("bound", resolved, o.common.seed);
    return exit_ok;
  }

  const auto estimates = mfs::check_bound(data, alphas, probe);

  Outputs out(o.common.out_dir);
  Json arr = Json::array();
  for (const auto& e : estimates) arr.push_back(mfs::to_json(e));
  Json doc = mfs::report_document("mfs-bound-report", arr);
  doc["probe"] = mfs::to_json(probe);
  mfs::write_json(out.path("bound_report.json"), doc);
  {
    mfs::CsvWriter csv(out.path("bound_table.csv"),
                       {"alpha", "n", "lambda_min", "N_g", "L_F", "L_H", "bound_value",
                        "observed_error", "holds"});
    for (const auto& e : estimates)
      csv.row({num(e.alpha), std::to_string(e.n), num(e.lambda_min), num(e.N_g),
               num(e.L_F), num(e.L_H), num(e.bound_value), num(e.observed_error),
               e.holds() ? "true" : "false"});
  }
  {
    mfs::CsvWriter csv(out.path("bound_cells.csv"),
                       {"alpha", "removed_id", "observed_error", "within_bound"});
    for (const auto& e : estimates)
      for (const auto& c : e.cells)
        csv.row({num(e.alpha), std::to_string(c.removed_id), num(c.observed_error),
                 c.within_bound ? "true" : "false"});
  }
  out.write_manifest("bound", resolved, o.common.seed);

  for (const auto& e : estimates) {
    std::cout << "alpha " << num(e.alpha) << ": observed " << num(e.observed_error)
              << ", bound " << num(e.bound_value) << '\n';
    for (const auto& c : e.cells)
      if (!c.within_bound)
        throw AssertionFailure("bound violated at alpha " + num(e.alpha) +
                               " when removing instance " + std::to_string(c.removed_id));
  }
  std::vector<const mfs::BoundEstimate*> sorted;
  for (const auto& e : estimates) sorted.push_back(&e);
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](auto* a, auto* b) { return a->alpha < b->alpha; });
  for (std::size_t i = 1; i < sorted.size(); ++i)
    if (sorted[i]->observed_error > sorted[i - 1]->observed_error)
      throw AssertionFailure("observed error grows from alpha " + num(sorted[i - 1]->alpha) +
                             " to " + num(sorted[i]->alpha));
  return exit_ok;
}

// ---------------------------------------------------------------------------

int exit_for(const mfs::Error& e) {
  switch (e.kind()) {
    case mfs::ErrorKind::invalid_argument:
    case mfs::ErrorKind::parse:
    case mfs::ErrorKind::shape:
    case mfs::ErrorKind::empty_dataset:
      return exit_usage;
    default:
      return exit_numeric;
  }
}

/// Turns a manifest's resolved configuration back into an argument list.
std::vector<std::string> replay_args(const Json& manifest) {
  if (!manifest.contains("command") || !manifest.contains("resolved_config"))
    throw UsageError("manifest lacks command or resolved_config");
  std::vector<std::string> args{manifest["command"].get<std::string>()};
  for (const auto& [key, value] : manifest["resolved_config"].items()) {
    std::string text;
    if (value.is_string())
      text = value.get<std::string>();
    else if (value.is_number_unsigned())
      text = std::to_string(value.get<std::uint64_t>());
    else if (value.is_number_integer())
      text = std::to_string(value.get<std::int64_t>());
    else if (value.is_number_float())
      text = num(value.get<double>());
    else
      throw UsageError("manifest value for '" + key + "' has an unsupported type");
    args.push_back("--" + key);
    args.push_back(text);
  }
  return args;
}

int run(std::vector<std::string> args);

int run_replay(const std::string& manifest_path, const std::string& out_dir) {
  std::ifstream in(manifest_path);
  if (!in) throw UsageError("cannot open manifest " + manifest_path);
  Json manifest;
  try {
    manifest = Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw UsageError("manifest " + manifest_path + ": " + e.what());
  }
  auto args = replay_args(manifest);
  if (args.front() == "replay") throw UsageError("a manifest cannot replay itself");
  args.push_back("--out-dir");
  args.push_back(out_dir);
  return run(std::move(args));
}

int run(std::vector<std::string> args) {
  CLI::App app{"Minimal forcing subsets for logistic regression decisions", "mfs"};
  app.set_version_flag("--version", mfs::tool_version);
  app.require_subcommand(1);

  ExplainOptions explain;
  auto* explain_cmd = app.add_subcommand("explain", "Build the subset for one test point");
  FlagSet explain_flags(explain_cmd);
  add_data(explain_flags, explain.data, 100);
  explain_flags.add("test-data", explain.data.test_data,
                    "CSV of test points for row/misclassified targets");
  explain_flags.add("target", explain.target,
                    "row:K, misclassified:first, misclassified:nearest[=P] or point:x1,x2,...");
  explain_flags.add("grid", explain.grid, "Boundary grid resolution per axis (2-D data)");
  add_solver(explain_flags, explain.solver);
  add_common(explain_flags, explain.common);

  DebugOptions debug;
  auto* debug_cmd = app.add_subcommand("debug", "Find flipped labels in a bag-of-words set");
  FlagSet debug_flags(debug_cmd);
  debug_flags.add("flip", debug.flip, "Comma-separated flip fractions in (0, 0.5]");
  debug_flags.add("seeds", debug.seeds, "Number of consecutive seeds starting at --seed");
  debug_flags.add("n-train", debug.n_train, "Training set size");
  debug_flags.add("n-val", debug.n_val, "Validation set size");
  debug_flags.add("n-test", debug.n_test, "Test set size");
  debug_flags.add("vocab", debug.vocab, "Vocabulary size");
  debug_flags.add("confidence-threshold", debug.confidence_threshold,
                  "Minimum confidence of a wrong validation prediction");
  debug_flags.add("max-targets", debug.max_targets, "Targets explained per cell");
  add_solver(debug_flags, debug.solver);
  add_common(debug_flags, debug.common);

  PoisonOptions poison;
  poison.solver.alpha = mfs::PoisonSetup{}.mfs.alpha;
  auto* poison_cmd = app.add_subcommand("poison", "Compare subsets before and after poisoning");
  FlagSet poison_flags(poison_cmd);
  poison_flags.add("targets", poison.targets, "Number of test points to attack");
  poison_flags.add("n", poison.n, "Training set size");
  poison_flags.add("dim", poison.dim, "Blob dimension");
  poison_flags.add("separation", poison.separation, "Blob center distance");
  poison_flags.add("radius", poison.radius, "Poison placement radius around the target");
  poison_flags.add("min-confidence", poison.min_confidence, "Lowest target confidence");
  poison_flags.add("max-confidence", poison.max_confidence, "Highest target confidence");
  poison_flags.add("n-test", poison.n_test, "Candidate target pool size");
  add_solver(poison_flags, poison.solver);
  add_common(poison_flags, poison.common);

  BoundOptions bound;
  auto* bound_cmd = app.add_subcommand("bound", "Check the one-step Newton error bound");
  FlagSet bound_flags(bound_cmd);
  add_data(bound_flags, bound.data, 50);
  bound_flags.add("alphas", bound.alphas, "Comma-separated regularization strengths");
  bound_flags.add("probe", bound.probe, "Probe point x1,x2,... (default: data mean)");
  add_common(bound_flags, bound.common);

  std::string manifest_path;
  std::string replay_out;
  auto* replay_cmd = app.add_subcommand("replay", "Re-run the command recorded in a manifest");
  replay_cmd->add_option("manifest", manifest_path, "manifest.json to replay")->required();
  {
    const char* env = std::getenv(out_dir_env);
    replay_out = env && *env ? env : default_out_dir;
  }
  replay_cmd->add_option("--out-dir", replay_out, "Output directory")->capture_default_str();

  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? exit_ok : exit_usage;
  }

  try {
    if (explain_cmd->parsed()) return run_explain(explain, explain_flags.resolved());
    if (debug_cmd->parsed()) return run_debug(debug, debug_flags.resolved());
    if (poison_cmd->parsed()) return run_poison(poison, poison_flags.resolved());
    if (bound_cmd->parsed()) return run_bound(bound, bound_flags.resolved());
    if (replay_cmd->parsed()) return run_replay(manifest_path, replay_out);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_usage;
  } catch (const AssertionFailure& e) {
    std::cerr << "assertion failed: " << e.what() << '\n';
    return exit_assertion;
  } catch (const mfs::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_numeric;
  }
  return exit_usage;
}

}  // namespace

int main(int argc, char** argv) {
  return run(std::vector<std::string>(argv + 1, argv + argc));
}

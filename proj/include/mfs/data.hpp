#ifndef MFS_DATA_HPP
#define MFS_DATA_HPP

#include <algorithm>
#include <cstdio>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "mfs/dataset.hpp"
#include "mfs/error.hpp"
#include "mfs/model.hpp"
#include "mfs/solver.hpp"

namespace mfs {

using Rng = std::mt19937_64;

/// Two interleaving half circles: class 0 on the upper unit semicircle,
/// class 1 on the lower semicircle shifted by (1, 0.5). Positions along each
/// arc are evenly spaced; Gaussian jitter of scale `noise` is added and the
/// rows are shuffled.
inline Dataset gen_halfmoon(std::size_t n, double noise, std::uint64_t seed) {
  detail::require_shape(n % 2 == 0 && n > 0, "half-moon size must be even");
  detail::require_arg(noise >= 0.0, "noise must be nonnegative");
  Rng rng(seed);
  std::normal_distribution<double> jitter(0.0, 1.0);
  const std::size_t half = n / 2;

  struct Row { double x, y; int label; };
  std::vector<Row> rows;
  rows.reserve(n);
  for (std::size_t i = 0; i < half; ++i) {
    const double t = half == 1 ? 0.0
                               : std::numbers::pi * static_cast<double>(i) /
                                     static_cast<double>(half - 1);
    rows.push_back({std::cos(t), std::sin(t), 0});
    rows.push_back({1.0 - std::cos(t), 0.5 - std::sin(t), 1});
  }
  if (noise > 0.0) {
    for (auto& r : rows) {
      r.x += noise * jitter(rng);
      r.y += noise * jitter(rng);
    }
  }
  std::shuffle(rows.begin(), rows.end(), rng);

  Dataset data(2);
  for (const auto& r : rows) data.add(Vector{{r.x, r.y}}, r.label);
  return data;
}

/// Two isotropic Gaussian blobs in `dim` dimensions, centered at ∓separation/2
/// along the first axis, n/2 points each.
inline Dataset gen_blobs(std::size_t n, std::size_t dim, double separation,
                         std::uint64_t seed) {
  detail::require_shape(n % 2 == 0 && n > 0, "blob dataset size must be even");
  detail::require_arg(dim >= 1, "dimension must be positive");
  Rng rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i % 2);
  std::shuffle(labels.begin(), labels.end(), rng);

  Dataset data(dim);
  for (int label : labels) {
    Vector x(static_cast<Eigen::Index>(dim));
    for (auto& v : x) v = gauss(rng);
    x[0] += (label == 1 ? 0.5 : -0.5) * separation;
    data.add(std::move(x), label);
  }
  return data;
}

/// Spam-like bag-of-words counts. Each class draws words from its own
/// Zipf-weighted block of the vocabulary; the two blocks overlap in the
/// middle, and a share of every document comes from a common background
/// distribution over the full vocabulary.
inline Dataset gen_bow_spamlike(std::size_t n, std::size_t vocab,
                                std::uint64_t seed) {
  detail::require_arg(n >= 1, "n must be positive");
  detail::require_arg(vocab >= 2, "vocabulary must have at least two words");
  Rng rng(seed);

  const std::size_t block = std::max<std::size_t>(1, (vocab * 3) / 5);
  auto class_weights = [&](int label) {
    std::vector<double> w(vocab, 0.0);
    for (std::size_t r = 0; r < block; ++r) {
      const std::size_t word = label == 0 ? r : vocab - 1 - r;
      w[word] = 1.0 / (1.0 + 0.15 * static_cast<double>(r));
    }
    return w;
  };
  const auto w0 = class_weights(0);
  const auto w1 = class_weights(1);
  std::discrete_distribution<std::size_t> topic0(w0.begin(), w0.end());
  std::discrete_distribution<std::size_t> topic1(w1.begin(), w1.end());
  std::uniform_int_distribution<std::size_t> background(0, vocab - 1);
  std::uniform_int_distribution<int> length(8, 24);
  std::bernoulli_distribution from_topic(0.35);
  std::bernoulli_distribution coin(0.5);

  Dataset data(vocab);
  for (std::size_t i = 0; i < n; ++i) {
    const int label = coin(rng) ? 1 : 0;
    Vector counts = Vector::Zero(static_cast<Eigen::Index>(vocab));
    const int len = length(rng);
    for (int k = 0; k < len; ++k) {
      std::size_t word;
      if (from_topic(rng))
        word = label == 0 ? topic0(rng) : topic1(rng);
      else
        word = background(rng);
      counts[static_cast<Eigen::Index>(word)] += 1.0;
    }
    data.add(std::move(counts), label);
  }
  return data;
}

struct CsvSchema {
  std::string label_column = "label";
  std::string negative = "0";
  std::string positive = "1";
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) {
    const auto b = cell.find_first_not_of(" \t\r");
    const auto e = cell.find_last_not_of(" \t\r");
    cells.push_back(b == std::string::npos ? "" : cell.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

[[noreturn]] inline void parse_fail(const std::string& what) {
  throw Error(ErrorKind::parse, what);
}

}  // namespace detail

/// Reads a header-first CSV; every column except the label column is a
/// feature, in file order. Row numbers in errors count data rows from 1.
inline Dataset load_csv(const std::filesystem::path& path,
                        const CsvSchema& schema = {}) {
  std::ifstream in(path);
  if (!in) detail::parse_fail("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) detail::parse_fail(path.string() + ": missing header row");
  const auto header = detail::split_csv_line(line);
  const auto label_it =
      std::find(header.begin(), header.end(), schema.label_column);
  if (label_it == header.end())
    detail::parse_fail(path.string() + ": no label column '" +
                       schema.label_column + "'");
  const auto label_col = static_cast<std::size_t>(label_it - header.begin());

  Dataset data(header.size() - 1);
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    ++row;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != header.size())
      detail::parse_fail(path.string() + ": row " + std::to_string(row) +
                         " has " + std::to_string(cells.size()) +
                         " cells, expected " + std::to_string(header.size()));
    int label;
    if (cells[label_col] == schema.positive)
      label = 1;
    else if (cells[label_col] == schema.negative)
      label = 0;
    else
      detail::parse_fail(path.string() + ": row " + std::to_string(row) +
                         " has unknown label '" + cells[label_col] + "'");
    Vector x(static_cast<Eigen::Index>(header.size() - 1));
    Eigen::Index k = 0;
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (c == label_col) continue;
      double v = 0.0;
      std::size_t used = 0;
      try {
        v = std::stod(cells[c], &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == 0 || used != cells[c].size() || !std::isfinite(v))
        detail::parse_fail(path.string() + ": row " + std::to_string(row) +
                           " column '" + header[c] + "' is not a finite number");
      x[k++] = v;
    }
    data.add(std::move(x), label);
  }
  return data;
}

/// Writes all instances (active or not) with columns x0..x{d-1},label.
inline void save_csv(const Dataset& data, const std::filesystem::path& path,
                     const CsvSchema& schema = {}) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::parse, "cannot write " + path.string());
  for (std::size_t j = 0; j < data.dim(); ++j) out << 'x' << j << ',';
  out << schema.label_column << '\n';
  char buf[32];
  for (const auto& z : data.instances()) {
    for (Eigen::Index j = 0; j < z.features.size(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", z.features[j]);
      out << buf << ',';
    }
    out << (z.label == 1 ? schema.positive : schema.negative) << '\n';
  }
}

struct CorruptionLog {
  std::set<InstanceId> flipped_ids;
  double flip_fraction = 0.0;
  std::uint64_t seed = 0;
};

/// Inverts the labels of round(fraction·n) distinct, uniformly chosen
/// instances. Applying it twice with the same seed restores the labels.
inline std::pair<Dataset, CorruptionLog> flip_labels(const Dataset& data,
                                                     double fraction,
                                                     std::uint64_t seed) {
  detail::require_arg(fraction > 0.0 && fraction < 1.0,
                      "flip fraction must lie in (0, 1)");
  const auto count = static_cast<std::size_t>(
      std::llround(fraction * static_cast<double>(data.size())));
  std::vector<InstanceId> ids(data.size());
  std::iota(ids.begin(), ids.end(), InstanceId{0});
  Rng rng(seed);
  std::shuffle(ids.begin(), ids.end(), rng);

  CorruptionLog log{{ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(count)},
                    fraction, seed};
  Dataset out = data;
  for (InstanceId id : log.flipped_ids) out.set_label(id, 1 - data[id].label);
  return {std::move(out), std::move(log)};
}

struct PoisonRecord {
  InstanceId poison_id = 0;
  Vector target_x;
  /// Clean-model prediction at target_x; the poison carries the other label.
  int base_label = 0;
};

/// Appends one instance drawn uniformly from the radius ball around target_x,
/// labelled opposite to the clean model's prediction there.
inline std::pair<Dataset, PoisonRecord> inject_poison(const Dataset& data,
                                                      const Vector& target_x,
                                                      double radius,
                                                      std::uint64_t seed,
                                                      double alpha = 0.01) {
  detail::require_arg(radius > 0.0, "radius must be positive");
  detail::require_shape(static_cast<std::size_t>(target_x.size()) == data.dim(),
                        "target dimension differs from the dataset");
  const ModelParams clean = train(data, alpha);
  const int base = predict(target_x, clean);

  Rng rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Vector dir(target_x.size());
  for (auto& v : dir) v = gauss(rng);
  const double norm = dir.norm();
  const double r =
      radius * std::pow(unif(rng), 1.0 / static_cast<double>(target_x.size()));
  Vector x = target_x;
  if (norm > 0.0) x += (r / norm) * dir;

  Dataset out = data;
  const InstanceId id = out.add(std::move(x), 1 - base);
  return {std::move(out), PoisonRecord{id, target_x, base}};
}

}  // namespace mfs

#endif  // MFS_DATA_HPP

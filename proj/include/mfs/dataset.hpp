#ifndef MFS_DATASET_HPP
#define MFS_DATASET_HPP

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "mfs/error.hpp"

namespace mfs {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using InstanceId = std::size_t;

struct Instance {
  InstanceId id = 0;
  Vector features;
  int label = 0;
};

/// Training instances with logical removal. An instance's id is its insertion
/// index and never changes; removal only clears its active flag.
class Dataset {
 public:
  explicit Dataset(std::size_t dim = 0) : dim_(dim) {}

  InstanceId add(Vector features, int label) {
    detail::require_shape(static_cast<std::size_t>(features.size()) == dim_,
                          "instance has " + std::to_string(features.size()) +
                              " features, dataset dimension is " +
                              std::to_string(dim_));
    detail::require_arg(label == 0 || label == 1, "label must be 0 or 1");
    const InstanceId id = instances_.size();
    instances_.push_back(Instance{id, std::move(features), label});
    active_.push_back(true);
    ++active_count_;
    return id;
  }

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return instances_.size(); }
  std::size_t active_count() const noexcept { return active_count_; }
  bool empty() const noexcept { return active_count_ == 0; }

  const Instance& operator[](InstanceId id) const { return instances_.at(id); }
  std::span<const Instance> instances() const noexcept { return instances_; }

  bool is_active(InstanceId id) const { return active_.at(id); }

  /// Ids of the active instances in increasing order.
  std::vector<InstanceId> active_ids() const {
    std::vector<InstanceId> ids;
    ids.reserve(active_count_);
    for (InstanceId i = 0; i < instances_.size(); ++i)
      if (active_[i]) ids.push_back(i);
    return ids;
  }

  void deactivate(InstanceId id) {
    detail::require_arg(id < instances_.size(),
                        "unknown instance id " + std::to_string(id));
    detail::require_arg(active_[id], "instance " + std::to_string(id) +
                                         " is already removed");
    detail::require_arg(active_count_ > 1,
                        "cannot remove the last active instance");
    active_[id] = false;
    --active_count_;
  }

  void set_label(InstanceId id, int label) {
    detail::require_arg(label == 0 || label == 1, "label must be 0 or 1");
    instances_.at(id).label = label;
  }

  /// Copy with the given ids removed.
  Dataset without(std::span<const InstanceId> ids) const {
    Dataset out = *this;
    for (InstanceId id : ids) out.deactivate(id);
    return out;
  }

  template <class Fn>
  void for_each_active(Fn&& fn) const {
    for (InstanceId i = 0; i < instances_.size(); ++i)
      if (active_[i]) fn(instances_[i]);
  }

 private:
  std::size_t dim_;
  std::vector<Instance> instances_;
  std::vector<bool> active_;
  std::size_t active_count_ = 0;
};

}  // namespace mfs

#endif  // MFS_DATASET_HPP

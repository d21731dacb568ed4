#pragma once

#include <cstddef>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "tcal/core/error.hpp"
#include "tcal/core/rng.hpp"

namespace tcal {

/// Partition of observational row indices into K folds. Fold ids are 0-based.
class FoldAssignment {
 public:
  FoldAssignment() = default;

  FoldAssignment(std::vector<int> fold_of, int k) : fold_of_(std::move(fold_of)), k_(k) {
    members_.assign(static_cast<std::size_t>(k_), {});
    for (std::size_t i = 0; i < fold_of_.size(); ++i) {
      const int f = fold_of_[i];
      if (f < 0 || f >= k_) throw invalid_argument("fold id out of range");
      members_[static_cast<std::size_t>(f)].push_back(i);
    }
  }

  int k() const noexcept { return k_; }
  std::size_t size() const noexcept { return fold_of_.size(); }
  int fold_of(std::size_t i) const { return fold_of_.at(i); }
  const std::vector<int>& fold_ids() const noexcept { return fold_of_; }
  const std::vector<std::size_t>& members(int fold) const {
    return members_.at(static_cast<std::size_t>(fold));
  }

  /// Indices used to train the learner for `fold`: every row outside it, or
  /// every row when K = 1 (no cross-fitting).
  std::vector<std::size_t> training_rows(int fold) const {
    std::vector<std::size_t> out;
    out.reserve(fold_of_.size());
    for (std::size_t i = 0; i < fold_of_.size(); ++i) {
      if (k_ == 1 || fold_of_[i] != fold) out.push_back(i);
    }
    return out;
  }

 private:
  std::vector<int> fold_of_;
  int k_ = 0;
  std::vector<std::vector<std::size_t>> members_;
};

/// Shuffles 0..n_obs-1 uniformly and deals them round-robin into k folds, so
/// fold sizes differ by at most one.
inline FoldAssignment partition_folds(std::size_t n_obs, int k, RngStream& rng) {
  if (k <= 0) throw invalid_argument("partition_folds: k must be >= 1");
  if (static_cast<std::size_t>(k) > n_obs) {
    throw invalid_argument("partition_folds: k=" + std::to_string(k) + " exceeds n_obs=" +
                           std::to_string(n_obs));
  }
  std::vector<std::size_t> perm(n_obs);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  for (std::size_t i = n_obs; i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.below(i));
    std::swap(perm[i - 1], perm[j]);
  }
  std::vector<int> fold_of(n_obs);
  for (std::size_t pos = 0; pos < n_obs; ++pos) {
    fold_of[perm[pos]] = static_cast<int>(pos % static_cast<std::size_t>(k));
  }
  return FoldAssignment(std::move(fold_of), k);
}

}  // namespace tcal

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "tsed/numerics/random.hpp"

namespace tsed::data {

/// Where a batch entry comes from. The third slot holds unlabeled clips,
/// which in the second stage carry pseudo-weak labels.
enum class Source { Strong = 0, Weak = 1, Unlabeled = 2 };

struct BatchPlan {
  std::size_t n_strong = 0;
  std::size_t n_weak = 0;
  std::size_t n_unlabeled = 0;

  std::size_t total() const { return n_strong + n_weak + n_unlabeled; }
  std::size_t count(Source s) const;

  /// 1/4 strong, 1/4 weak, remainder unlabeled.
  static BatchPlan for_batch(std::size_t batch_size);

  /// Moves the share of every empty source onto the non-empty ones,
  /// proportionally to their own shares (ties broken toward the earlier
  /// source). Total batch size is preserved.
  BatchPlan redistributed(const std::array<std::size_t, 3>& source_sizes) const;

  bool operator==(const BatchPlan&) const = default;
};

struct BatchItem {
  Source source;
  std::size_t index;  // position inside its source dataset
};

/// Draws batches following a plan. Each source is walked through its own
/// shuffled order and reshuffled once exhausted, so within one pass over a
/// source no clip repeats.
class BatchSampler {
 public:
  BatchSampler(const std::array<std::size_t, 3>& source_sizes, BatchPlan plan, std::uint64_t seed);

  const BatchPlan& plan() const { return plan_; }

  /// Number of batches needed to visit every clip of the largest
  /// (relative to its quota) source once.
  std::size_t batches_per_epoch() const;

  std::vector<BatchItem> next();

 private:
  std::array<std::size_t, 3> sizes_;
  BatchPlan plan_;
  Rng rng_;
  std::array<std::vector<std::size_t>, 3> order_;
  std::array<std::size_t, 3> cursor_{};
};

}  // namespace tsed::data

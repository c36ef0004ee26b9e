// SPDX-License-Identifier: Apache-2.0
#include "tsed/data/batching.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace tsed::data {

std::size_t BatchPlan::count(Source s) const {
  switch (s) {
    case Source::Strong:
      return n_strong;
    case Source::Weak:
      return n_weak;
    default:
      return n_unlabeled;
  }
}

BatchPlan BatchPlan::for_batch(std::size_t batch_size) {
  if (batch_size == 0) throw std::invalid_argument("batch size must be positive");
  BatchPlan p;
  p.n_strong = batch_size / 4;
  p.n_weak = batch_size / 4;
  p.n_unlabeled = batch_size - p.n_strong - p.n_weak;
  return p;
}

BatchPlan BatchPlan::redistributed(const std::array<std::size_t, 3>& source_sizes) const {
  std::array<std::size_t, 3> share{n_strong, n_weak, n_unlabeled};
  std::size_t freed = 0, kept = 0;
  for (int i = 0; i < 3; ++i) {
    if (source_sizes[i] == 0) {
      freed += share[i];
      share[i] = 0;
    } else {
      kept += share[i];
    }
  }
  const std::size_t total_size = total();
  if (freed > 0) {
    if (std::all_of(source_sizes.begin(), source_sizes.end(), [](std::size_t s) { return s == 0; })) {
      throw std::invalid_argument("cannot compose batches: every source is empty");
    }
    std::array<std::size_t, 3> base = share;
    if (kept == 0) {
      // surviving sources had no quota: split evenly
      for (int i = 0; i < 3; ++i) base[i] = source_sizes[i] > 0 ? 1 : 0;
      kept = static_cast<std::size_t>(std::count_if(base.begin(), base.end(), [](std::size_t b) { return b > 0; }));
    }
    std::size_t assigned = 0;
    for (int i = 0; i < 3; ++i) {
      share[i] = total_size * base[i] / kept;
      assigned += share[i];
    }
    for (int i = 0; assigned < total_size; i = (i + 1) % 3) {
      if (source_sizes[i] > 0) {
        ++share[i];
        ++assigned;
      }
    }
  }
  return BatchPlan{share[0], share[1], share[2]};
}

BatchSampler::BatchSampler(const std::array<std::size_t, 3>& source_sizes, BatchPlan plan, std::uint64_t seed)
    : sizes_(source_sizes), plan_(plan), rng_(seed) {
  if (plan_.total() == 0) throw std::invalid_argument("batch plan is empty");
  for (int i = 0; i < 3; ++i) {
    if (plan_.count(static_cast<Source>(i)) > 0 && sizes_[i] == 0) {
      throw std::invalid_argument("batch plan draws from an empty source; call BatchPlan::redistributed first");
    }
    order_[i].resize(sizes_[i]);
    std::iota(order_[i].begin(), order_[i].end(), 0);
    std::shuffle(order_[i].begin(), order_[i].end(), rng_);
  }
}

std::size_t BatchSampler::batches_per_epoch() const {
  std::size_t n = 1;
  for (int i = 0; i < 3; ++i) {
    std::size_t q = plan_.count(static_cast<Source>(i));
    if (q > 0) n = std::max(n, (sizes_[i] + q - 1) / q);
  }
  return n;
}

std::vector<BatchItem> BatchSampler::next() {
  std::vector<BatchItem> batch;
  batch.reserve(plan_.total());
  for (int i = 0; i < 3; ++i) {
    const auto src = static_cast<Source>(i);
    for (std::size_t k = 0; k < plan_.count(src); ++k) {
      if (cursor_[i] == order_[i].size()) {
        std::shuffle(order_[i].begin(), order_[i].end(), rng_);
        cursor_[i] = 0;
      }
      batch.push_back({src, order_[i][cursor_[i]++]});
    }
  }
  return batch;
}

}  // namespace tsed::data

#pragma once

#include <algorithm>
#include <cstdint>
#include <mutex>
#include <optional>
#include <random>
#include <stdexcept>
#include <vector>

namespace meshswap {

/// In-process stand-in for point-to-point messaging between R logical ranks.
/// Every posted batch is delivered exactly once by drain(); delivery order
/// is unspecified and can be shuffled deterministically from a seed.
template <typename Batch>
class Mailbox {
 public:
  explicit Mailbox(int ranks, std::optional<std::uint64_t> shuffle_seed = std::nullopt)
      : boxes_(ranks), drains_(ranks, 0), shuffle_seed_(shuffle_seed) {
    if (ranks < 1) throw std::invalid_argument("mailbox needs at least one rank");
  }

  int rank_count() const { return static_cast<int>(boxes_.size()); }

  void post(int dest, Batch batch) {
    std::lock_guard lock(mutex_);
    boxes_.at(dest).push_back(std::move(batch));
    ++posted_;
  }

  std::vector<Batch> drain(int rank) {
    std::vector<Batch> out;
    std::uint64_t round = 0;
    {
      std::lock_guard lock(mutex_);
      out.swap(boxes_.at(rank));
      delivered_ += out.size();
      round = drains_[rank]++;
    }
    if (shuffle_seed_) {
      // Depends only on (seed, rank, per-rank drain count).
      std::seed_seq seq{*shuffle_seed_ & 0xffffffffu, *shuffle_seed_ >> 32, static_cast<std::uint64_t>(rank), round};
      std::mt19937_64 rng(seq);
      std::shuffle(out.begin(), out.end(), rng);
    }
    return out;
  }

  std::uint64_t posted() const {
    std::lock_guard lock(mutex_);
    return posted_;
  }

  std::uint64_t delivered() const {
    std::lock_guard lock(mutex_);
    return delivered_;
  }

  /// Throws if a posted batch was never drained.
  void check_quiescent() const {
    std::lock_guard lock(mutex_);
    if (posted_ != delivered_) throw std::runtime_error("transport lost or undelivered batches");
    for (const auto& b : boxes_) {
      if (!b.empty()) throw std::runtime_error("transport lost or undelivered batches");
    }
  }

 private:
  std::vector<std::vector<Batch>> boxes_;
  std::vector<std::uint64_t> drains_;
  std::optional<std::uint64_t> shuffle_seed_;
  mutable std::mutex mutex_;
  std::uint64_t posted_ = 0;
  std::uint64_t delivered_ = 0;
};

}  // namespace meshswap

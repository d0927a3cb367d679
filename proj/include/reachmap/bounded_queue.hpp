#pragma once

// Bounded blocking queue that releases items in ticket order.

#include <condition_variable>
#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <utility>

namespace reachmap {

/// Producers push items tagged with unique tickets 0, 1, 2, ...; pop() returns
/// them strictly in ticket order. A push blocks while its ticket lies `capacity`
/// or more past the next ticket to pop, so at most `capacity` items are held.
template <typename T>
class OrderedBoundedQueue {
 public:
  explicit OrderedBoundedQueue(std::size_t capacity) : capacity_(capacity == 0 ? 1 : capacity) {}

  /// False if the queue was closed before the item could be admitted.
  bool push(std::uint64_t ticket, T item) {
    std::unique_lock lk(mu_);
    space_.wait(lk, [&] { return closed_ || ticket < next_ + capacity_; });
    if (closed_) return false;
    items_.emplace(ticket, std::move(item));
    if (ticket == next_) ready_.notify_one();
    return true;
  }

  /// Next item in ticket order; nullopt once closed and the next ticket is absent.
  std::optional<T> pop() {
    std::unique_lock lk(mu_);
    ready_.wait(lk, [&] { return closed_ || (!items_.empty() && items_.begin()->first == next_); });
    auto it = items_.find(next_);
    if (it == items_.end()) return std::nullopt;
    T out = std::move(it->second);
    items_.erase(it);
    ++next_;
    space_.notify_all();
    return out;
  }

  /// Wakes every waiter; pending and future pushes are discarded.
  void close() {
    std::lock_guard lk(mu_);
    closed_ = true;
    items_.clear();
    space_.notify_all();
    ready_.notify_all();
  }

  std::size_t size() const {
    std::lock_guard lk(mu_);
    return items_.size();
  }

 private:
  std::size_t capacity_;
  mutable std::mutex mu_;
  std::condition_variable space_;
  std::condition_variable ready_;
  std::map<std::uint64_t, T> items_;
  std::uint64_t next_ = 0;
  bool closed_ = false;
};

}  // namespace reachmap

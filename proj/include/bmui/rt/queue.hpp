#pragma once

#include <condition_variable>
#include <deque>
#include <mutex>
#include <optional>

namespace bmui::rt {

/// Bounded multi-producer/multi-consumer queue.
template <class T>
class BoundedQueue {
 public:
  explicit BoundedQueue(std::size_t capacity) : cap_(capacity) {}

  // Blocks while full. False once closed.
  bool push_wait(T v) {
    std::unique_lock lk(m_);
    not_full_.wait(lk, [&] { return closed_ || q_.size() < cap_; });
    if (closed_) return false;
    q_.push_back(std::move(v));
    not_empty_.notify_one();
    return true;
  }

  // Never blocks; evicts the oldest element when full. Returns true if one was evicted.
  bool push_drop_oldest(T v) {
    std::lock_guard lk(m_);
    if (closed_) return false;
    bool dropped = false;
    if (q_.size() == cap_) {
      q_.pop_front();
      dropped = true;
    }
    q_.push_back(std::move(v));
    not_empty_.notify_one();
    return dropped;
  }

  // Blocks until an element arrives; nullopt when closed and drained.
  std::optional<T> pop() {
    std::unique_lock lk(m_);
    not_empty_.wait(lk, [&] { return closed_ || !q_.empty(); });
    if (q_.empty()) return std::nullopt;
    T v = std::move(q_.front());
    q_.pop_front();
    not_full_.notify_one();
    return v;
  }

  void close() {
    std::lock_guard lk(m_);
    closed_ = true;
    not_empty_.notify_all();
    not_full_.notify_all();
  }

  std::size_t size() const {
    std::lock_guard lk(m_);
    return q_.size();
  }
  std::size_t capacity() const noexcept { return cap_; }

 private:
  std::size_t cap_;
  mutable std::mutex m_;
  std::condition_variable not_empty_, not_full_;
  std::deque<T> q_;
  bool closed_ = false;
};

}  // namespace bmui::rt

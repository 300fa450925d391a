#pragma once

#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <deque>
#include <list>
#include <memory>
#include <mutex>
#include <optional>

namespace gestop {

/// FIFO with a fixed capacity. push() blocks while full; pop() blocks while
/// empty. After close(), pushes fail and pops drain what is left.
template <class T>
class BoundedQueue {
 public:
  explicit BoundedQueue(std::size_t capacity) : capacity_(capacity) {}

  bool push(T value) {
    std::unique_lock lock(mu_);
    not_full_.wait(lock, [&] { return closed_ || items_.size() < capacity_; });
    if (closed_) return false;
    items_.push_back(std::move(value));
    not_empty_.notify_one();
    return true;
  }

  /// Non-blocking; false if full or closed.
  bool try_push(T& value) {
    std::lock_guard lock(mu_);
    if (closed_ || items_.size() >= capacity_) return false;
    items_.push_back(std::move(value));
    not_empty_.notify_one();
    return true;
  }

  std::optional<T> pop() {
    std::unique_lock lock(mu_);
    not_empty_.wait(lock, [&] { return closed_ || !items_.empty(); });
    return take(lock);
  }

  template <class Rep, class Period>
  std::optional<T> pop_for(std::chrono::duration<Rep, Period> timeout) {
    std::unique_lock lock(mu_);
    not_empty_.wait_for(lock, timeout, [&] { return closed_ || !items_.empty(); });
    return take(lock);
  }

  void close() {
    std::lock_guard lock(mu_);
    closed_ = true;
    not_full_.notify_all();
    not_empty_.notify_all();
  }

  bool closed() const {
    std::lock_guard lock(mu_);
    return closed_;
  }

  std::size_t size() const {
    std::lock_guard lock(mu_);
    return items_.size();
  }

  std::size_t capacity() const { return capacity_; }

 private:
  std::optional<T> take(std::unique_lock<std::mutex>&) {
    if (items_.empty()) return std::nullopt;
    T value = std::move(items_.front());
    items_.pop_front();
    not_full_.notify_one();
    return value;
  }

  const std::size_t capacity_;
  mutable std::mutex mu_;
  std::condition_variable not_full_;
  std::condition_variable not_empty_;
  std::deque<T> items_;
  bool closed_ = false;
};

/// Ordered fan-out to any number of subscribers. publish() never blocks on a
/// subscriber: a full subscriber queue drops its oldest item and counts it.
template <class T>
class Broadcast {
 public:
  class Subscription {
   public:
    std::optional<T> pop_for(std::chrono::milliseconds timeout) {
      std::unique_lock lock(mu_);
      cv_.wait_for(lock, timeout, [&] { return closed_ || !items_.empty(); });
      if (items_.empty()) return std::nullopt;
      T value = std::move(items_.front());
      items_.pop_front();
      return value;
    }

    std::size_t dropped() const {
      std::lock_guard lock(mu_);
      return dropped_;
    }

    std::size_t pending() const {
      std::lock_guard lock(mu_);
      return items_.size();
    }

    bool closed() const {
      std::lock_guard lock(mu_);
      return closed_;
    }

   private:
    friend class Broadcast;

    explicit Subscription(std::size_t capacity) : capacity_(capacity) {}

    void offer(const T& value) {
      std::lock_guard lock(mu_);
      if (items_.size() >= capacity_) {
        items_.pop_front();
        ++dropped_;
      }
      items_.push_back(value);
      cv_.notify_one();
    }

    void close() {
      std::lock_guard lock(mu_);
      closed_ = true;
      cv_.notify_all();
    }

    const std::size_t capacity_;
    mutable std::mutex mu_;
    std::condition_variable cv_;
    std::deque<T> items_;
    std::size_t dropped_ = 0;
    bool closed_ = false;
  };

  explicit Broadcast(std::size_t per_subscriber_capacity = 1024)
      : capacity_(per_subscriber_capacity) {}

  std::shared_ptr<Subscription> subscribe() {
    auto sub = std::shared_ptr<Subscription>(new Subscription(capacity_));
    std::lock_guard lock(mu_);
    subs_.push_back(sub);
    return sub;
  }

  void unsubscribe(const std::shared_ptr<Subscription>& sub) {
    std::lock_guard lock(mu_);
    subs_.remove(sub);
    sub->close();
  }

  void publish(const T& value) {
    std::lock_guard lock(mu_);
    for (auto& s : subs_) s->offer(value);
  }

  void close_all() {
    std::lock_guard lock(mu_);
    for (auto& s : subs_) s->close();
    subs_.clear();
  }

  std::size_t subscriber_count() const {
    std::lock_guard lock(mu_);
    return subs_.size();
  }

 private:
  const std::size_t capacity_;
  mutable std::mutex mu_;
  std::list<std::shared_ptr<Subscription>> subs_;
};

}  // namespace gestop

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <condition_variable>
#include <mutex>

namespace hiermem::detail {

// Counting semaphore with a runtime limit; caps in-flight backend requests.
class Semaphore {
 public:
  explicit Semaphore(int count) : count_(count > 0 ? count : 1) {}

  void acquire() {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return count_ > 0; });
    --count_;
  }
  void release() {
    {
      std::lock_guard lock(mu_);
      ++count_;
    }
    cv_.notify_one();
  }

  class Guard {
   public:
    explicit Guard(Semaphore& s) : s_(s) { s_.acquire(); }
    ~Guard() { s_.release(); }
    Guard(const Guard&) = delete;
    Guard& operator=(const Guard&) = delete;

   private:
    Semaphore& s_;
  };

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  int count_;
};

}  // namespace hiermem::detail

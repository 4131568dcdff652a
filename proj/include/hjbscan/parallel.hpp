#pragma once

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <cstddef>
#include <exception>
#include <functional>
#include <memory>
#include <mutex>
#include <thread>
#include <vector>

namespace hjbscan {

enum class Backend { kSequential, kParallel };

/// Fixed-size worker pool with a blocking parallel_for. The calling thread
/// takes part in the work, so a pool of size 1 has no worker threads.
class WorkerPool {
 public:
  explicit WorkerPool(unsigned threads = std::max(1u, std::thread::hardware_concurrency())) {
    threads = std::max(1u, threads);
    workers_.reserve(threads - 1);
    for (unsigned i = 0; i + 1 < threads; ++i) {
      workers_.emplace_back([this] { worker_loop(); });
    }
  }

  WorkerPool(const WorkerPool&) = delete;
  WorkerPool& operator=(const WorkerPool&) = delete;

  ~WorkerPool() {
    {
      std::lock_guard lock(mutex_);
      stop_ = true;
    }
    wake_.notify_all();
    for (auto& w : workers_) w.join();
  }

  unsigned size() const { return static_cast<unsigned>(workers_.size()) + 1; }

  /// Runs body(i) for i in [0, n). Blocks until every call returned; the first
  /// exception thrown by any call is rethrown here. Nested calls run inline.
  template <class Body>
  void parallel_for(std::size_t n, Body&& body) {
    if (n == 0) return;
    if (workers_.empty() || n == 1 || in_task()) {
      for (std::size_t i = 0; i < n; ++i) body(i);
      return;
    }
    auto job = std::make_shared<Job>();
    job->body = [&body](std::size_t i) { body(i); };
    job->n = n;
    job->chunk = std::max<std::size_t>(1, n / (8 * size()));

    std::unique_lock serial(submit_mutex_);
    {
      std::lock_guard lock(mutex_);
      job_ = job;
      ++generation_;
    }
    wake_.notify_all();
    run_chunks(*job);
    {
      std::unique_lock lock(mutex_);
      done_.wait(lock, [&] { return job->workers_finished == workers_.size(); });
      job_.reset();
    }
    if (job->error) std::rethrow_exception(job->error);
  }

 private:
  struct Job {
    std::function<void(std::size_t)> body;
    std::size_t n = 0;
    std::size_t chunk = 1;
    std::atomic<std::size_t> next{0};
    std::size_t workers_finished = 0;
    std::mutex error_mutex;
    std::exception_ptr error;
  };

  static bool& in_task() {
    thread_local bool flag = false;
    return flag;
  }

  static void run_chunks(Job& job) {
    const bool outer = in_task();
    in_task() = true;
    for (;;) {
      const std::size_t begin = job.next.fetch_add(job.chunk);
      if (begin >= job.n) break;
      const std::size_t end = std::min(job.n, begin + job.chunk);
      try {
        for (std::size_t i = begin; i < end; ++i) job.body(i);
      } catch (...) {
        std::lock_guard lock(job.error_mutex);
        if (!job.error) job.error = std::current_exception();
      }
    }
    in_task() = outer;
  }

  void worker_loop() {
    std::size_t seen = 0;
    for (;;) {
      std::shared_ptr<Job> job;
      {
        std::unique_lock lock(mutex_);
        wake_.wait(lock, [&] { return stop_ || generation_ != seen; });
        if (stop_) return;
        seen = generation_;
        job = job_;
      }
      run_chunks(*job);
      {
        std::lock_guard lock(mutex_);
        ++job->workers_finished;
      }
      done_.notify_all();
    }
  }

  std::vector<std::thread> workers_;
  std::mutex submit_mutex_;
  std::mutex mutex_;
  std::condition_variable wake_;
  std::condition_variable done_;
  std::shared_ptr<Job> job_;
  std::size_t generation_ = 0;
  bool stop_ = false;
};

/// Where a solver runs its independent per-block / per-pair work.
struct Execution {
  Backend backend = Backend::kSequential;
  WorkerPool* pool = nullptr;

  bool parallel() const { return backend == Backend::kParallel && pool != nullptr; }

  template <class Body>
  void for_each(std::size_t n, Body&& body) const {
    if (parallel()) {
      pool->parallel_for(n, std::forward<Body>(body));
    } else {
      for (std::size_t i = 0; i < n; ++i) body(i);
    }
  }
};

}  // namespace hjbscan

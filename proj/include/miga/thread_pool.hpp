#pragma once

#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace miga {

/// Fixed pool of worker threads running statically partitioned loops.
///
/// parallel_for assigns item i of [0, n) to worker i mod W, so the
/// item-to-worker mapping depends only on n and the pool size, never on
/// timing. Work items must write disjoint state. Calls must not nest: a work
/// item may not invoke parallel_for on the same pool.
class ThreadPool {
public:
    explicit ThreadPool(unsigned n_workers) : n_workers_(n_workers == 0 ? 1 : n_workers) {
        threads_.reserve(n_workers_ > 0 ? n_workers_ - 1 : 0);
        for (unsigned t = 1; t < n_workers_; ++t)
            threads_.emplace_back([this, t] { worker_loop(t); });
    }

    ~ThreadPool() {
        {
            std::unique_lock lock(mutex_);
            stop_ = true;
        }
        start_cv_.notify_all();
        for (auto& th : threads_) th.join();
    }

    ThreadPool(const ThreadPool&) = delete;
    ThreadPool& operator=(const ThreadPool&) = delete;

    unsigned size() const noexcept { return n_workers_; }

    /// Run fn(i) for every i in [0, n); blocks until all items finished.
    /// The first exception thrown by an item is rethrown on the caller.
    void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
        if (n == 0) return;
        if (n_workers_ == 1) {
            for (std::size_t i = 0; i < n; ++i) fn(i);
            return;
        }
        {
            std::unique_lock lock(mutex_);
            job_ = &fn;
            job_n_ = n;
            pending_ = n_workers_ - 1;
            error_ = nullptr;
            ++epoch_;
        }
        start_cv_.notify_all();
        run_chunk(0);
        std::unique_lock lock(mutex_);
        done_cv_.wait(lock, [this] { return pending_ == 0; });
        job_ = nullptr;
        if (error_) std::rethrow_exception(error_);
    }

private:
    // Strided assignment: item i runs on worker i mod W. Expensive items tend
    // to cluster (time intervals converge front to back), which striding
    // spreads across the pool; the mapping never depends on timing.
    void run_chunk(unsigned worker) noexcept {
        try {
            for (std::size_t i = worker; i < job_n_; i += n_workers_) (*job_)(i);
        } catch (...) {
            std::unique_lock lock(mutex_);
            if (!error_) error_ = std::current_exception();
        }
    }

    void worker_loop(unsigned worker) {
        std::uint64_t seen = 0;
        for (;;) {
            {
                std::unique_lock lock(mutex_);
                start_cv_.wait(lock, [&] { return stop_ || epoch_ != seen; });
                if (stop_) return;
                seen = epoch_;
            }
            run_chunk(worker);
            {
                std::unique_lock lock(mutex_);
                --pending_;
            }
            done_cv_.notify_all();
        }
    }

    unsigned n_workers_;
    std::vector<std::thread> threads_;
    std::mutex mutex_;
    std::condition_variable start_cv_;
    std::condition_variable done_cv_;
    const std::function<void(std::size_t)>* job_ = nullptr;
    std::size_t job_n_ = 0;
    unsigned pending_ = 0;
    std::uint64_t epoch_ = 0;
    std::exception_ptr error_;
    bool stop_ = false;
};

}  // namespace miga

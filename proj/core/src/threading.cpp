// Copyright (c) 2026 bonefield contributors
// SPDX-License-Identifier: Apache-2.0
#include "bonefield/threading.hpp"

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <mutex>
#include <thread>
#include <vector>

namespace bonefield {

namespace {

std::atomic<int> g_num_threads{0};  // 0 = not yet initialized

int default_threads() {
    unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : static_cast<int>(hc);
}

// Minimal persistent pool: workers sleep until a parallel_for hands them a
// range. parallel_for itself runs chunk 0 on the calling thread.
class Pool {
public:
    explicit Pool(int workers) {
        for (int i = 0; i < workers; ++i) {
            threads_.emplace_back([this] { worker_loop(); });
        }
    }

    ~Pool() {
        {
            std::lock_guard<std::mutex> lk(mu_);
            stop_ = true;
        }
        cv_.notify_all();
        for (auto& t : threads_) t.join();
    }

    void run(const std::vector<std::function<void()>>& jobs) {
        if (jobs.empty()) return;
        {
            std::lock_guard<std::mutex> lk(mu_);
            jobs_ = &jobs;
            next_ = 0;
            pending_ = jobs.size();
            ++generation_;
        }
        cv_.notify_all();
        // The caller participates too.
        drain();
        std::unique_lock<std::mutex> lk(mu_);
        done_cv_.wait(lk, [this] { return pending_ == 0; });
        jobs_ = nullptr;
    }

private:
    void drain() {
        for (;;) {
            size_t idx;
            {
                std::lock_guard<std::mutex> lk(mu_);
                if (jobs_ == nullptr || next_ >= jobs_->size()) return;
                idx = next_++;
            }
            (*jobs_)[idx]();
            std::lock_guard<std::mutex> lk(mu_);
            if (--pending_ == 0) done_cv_.notify_all();
        }
    }

    void worker_loop() {
        uint64_t seen = 0;
        for (;;) {
            {
                std::unique_lock<std::mutex> lk(mu_);
                cv_.wait(lk, [&] { return stop_ || generation_ != seen; });
                if (stop_) return;
                seen = generation_;
            }
            drain();
        }
    }

    std::vector<std::thread> threads_;
    std::mutex mu_;
    std::condition_variable cv_;
    std::condition_variable done_cv_;
    const std::vector<std::function<void()>>* jobs_ = nullptr;
    size_t next_ = 0;
    size_t pending_ = 0;
    uint64_t generation_ = 0;
    bool stop_ = false;
};

Pool& pool() {
    static Pool p(std::max(0, default_threads() - 1));
    return p;
}

}  // namespace

void set_num_threads(int n) { g_num_threads.store(n < 1 ? 1 : n); }

int num_threads() {
    int n = g_num_threads.load();
    if (n == 0) {
        n = default_threads();
        g_num_threads.store(n);
    }
    return n;
}

void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& fn) {
    if (n <= 0) return;
    const int threads = num_threads();
    if (threads <= 1 || n == 1) {
        fn(0, n);
        return;
    }
    const int64_t chunks = std::min<int64_t>(threads, n);
    const int64_t chunk = (n + chunks - 1) / chunks;
    std::vector<std::function<void()>> jobs;
    jobs.reserve(static_cast<size_t>(chunks));
    for (int64_t c = 0; c < chunks; ++c) {
        const int64_t b = c * chunk;
        const int64_t e = std::min(n, b + chunk);
        if (b >= e) break;
        jobs.emplace_back([&fn, b, e] { fn(b, e); });
    }
    pool().run(jobs);
}

}  // namespace bonefield

#include "gsa/parallel.hpp"

#include <algorithm>

namespace gsa {

namespace {
std::atomic<int> g_threads{0};
thread_local bool t_in_job = false;  // nested jobs run serially
}

void ThreadPool::set_threads(int n) { g_threads.store(n); }

int ThreadPool::threads() {
    int n = g_threads.load();
    if (n <= 0) n = static_cast<int>(std::thread::hardware_concurrency());
    return std::max(1, n);
}

ThreadPool& ThreadPool::instance() {
    static ThreadPool pool(static_cast<size_t>(threads()));
    return pool;
}

ThreadPool::ThreadPool(size_t n_workers) {
    for (size_t i = 0; i + 1 < n_workers; ++i)  // calling thread participates too
        workers_.emplace_back([this] { worker_loop(); });
}

ThreadPool::~ThreadPool() {
    {
        std::lock_guard<std::mutex> lk(mu_);
        stop_ = true;
    }
    cv_job_.notify_all();
    for (auto& w : workers_) w.join();
}

void ThreadPool::worker_loop() {
    t_in_job = true;  // anything a worker runs stays serial internally
    uint64_t seen = 0;
    for (;;) {
        const std::function<void(std::size_t)>* job;
        std::size_t chunks;
        {
            std::unique_lock<std::mutex> lk(mu_);
            cv_job_.wait(lk, [&] { return stop_ || job_id_ != seen; });
            if (stop_) return;
            seen = job_id_;
            job = job_;
            chunks = job_chunks_;
        }
        for (;;) {
            std::size_t c = next_chunk_.fetch_add(1);
            if (c >= chunks) break;
            (*job)(c);
        }
        {
            // the final increment must happen under the mutex or the caller
            // can miss the wakeup between its predicate check and its block
            std::lock_guard<std::mutex> lk(mu_);
            ++done_count_;
        }
        cv_done_.notify_one();
    }
}

void ThreadPool::run_chunks(std::size_t n_chunks, const std::function<void(std::size_t)>& fn) {
    if (n_chunks == 0) return;
    if (workers_.empty() || n_chunks == 1 || t_in_job) {
        for (std::size_t c = 0; c < n_chunks; ++c) fn(c);
        return;
    }
    t_in_job = true;
    {
        std::lock_guard<std::mutex> lk(mu_);
        job_ = &fn;
        job_chunks_ = n_chunks;
        next_chunk_.store(0);
        done_count_.store(0);
        ++job_id_;
    }
    cv_job_.notify_all();
    // The calling thread drains chunks alongside the workers.
    for (;;) {
        std::size_t c = next_chunk_.fetch_add(1);
        if (c >= n_chunks) break;
        fn(c);
    }
    std::unique_lock<std::mutex> lk(mu_);
    cv_done_.wait(lk, [&] { return done_count_.load() == workers_.size(); });
    job_ = nullptr;
    t_in_job = false;
}

void parallel_chunks(std::size_t n_items, std::size_t chunk_size,
                     const std::function<void(std::size_t, std::size_t, std::size_t)>& fn) {
    if (n_items == 0) return;
    std::size_t n_chunks = chunk_count(n_items, chunk_size);
    ThreadPool::instance().run_chunks(n_chunks, [&](std::size_t c) {
        std::size_t b = c * chunk_size;
        std::size_t e = std::min(n_items, b + chunk_size);
        fn(b, e, c);
    });
}

}  // namespace gsa

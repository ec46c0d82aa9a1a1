#pragma once

#include <atomic>
#include <condition_variable>
#include <cstddef>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace gsa {

// Fixed-chunk parallel loop. Work is split into chunks of `chunk` items;
// callers that need bit-exact results store per-chunk partials and reduce
// them in chunk order afterwards, so the thread schedule never matters.
class ThreadPool {
public:
    static ThreadPool& instance();

    // Global worker count; 0 = hardware_concurrency. Takes effect lazily.
    static void set_threads(int n);
    static int threads();

    void run_chunks(std::size_t n_chunks, const std::function<void(std::size_t)>& fn);

    ~ThreadPool();

private:
    ThreadPool(size_t n_workers);

    void worker_loop();

    std::vector<std::thread> workers_;
    std::mutex mu_;
    std::condition_variable cv_job_, cv_done_;
    const std::function<void(std::size_t)>* job_ = nullptr;
    std::size_t job_chunks_ = 0;
    std::atomic<std::size_t> next_chunk_{0};
    std::atomic<std::size_t> done_count_{0};
    uint64_t job_id_ = 0;
    bool stop_ = false;
};

void parallel_chunks(std::size_t n_items, std::size_t chunk_size,
                     const std::function<void(std::size_t begin, std::size_t end, std::size_t chunk_idx)>& fn);

inline std::size_t chunk_count(std::size_t n_items, std::size_t chunk_size) {
    return (n_items + chunk_size - 1) / chunk_size;
}

}  // namespace gsa

#ifndef CRITSTATS_PARALLEL_HPP
#define CRITSTATS_PARALLEL_HPP

#include <atomic>
#include <cstdlib>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace critstats {

inline int default_thread_count() {
    if (const char* env = std::getenv("CRITSTATS_THREADS")) {
        int n = std::atoi(env);
        if (n > 0) return n;
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? static_cast<int>(hw) : 1;
}

// Run job(i) for i in [0, n_jobs). Each job writes only to its own slot of
// some caller-owned storage, so results are identical for any thread count;
// the caller reduces the slots in a fixed order afterwards.
inline void parallel_for(std::size_t n_jobs, const std::function<void(std::size_t)>& job, int n_threads = 0) {
    if (n_threads <= 0) n_threads = default_thread_count();
    if (n_threads == 1 || n_jobs <= 1) {
        for (std::size_t i = 0; i < n_jobs; ++i) job(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto worker = [&]() {
        for (;;) {
            std::size_t i = next.fetch_add(1);
            if (i >= n_jobs) return;
            try {
                job(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!error) error = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    int spawn = static_cast<int>(std::min<std::size_t>(n_jobs, static_cast<std::size_t>(n_threads)));
    for (int t = 0; t < spawn; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

} // namespace critstats

#endif

#pragma once

#include <Eigen/Dense>
#include <functional>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace iesis {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Thrown on bad user input: dimension mismatches, out-of-range values,
// malformed configs. Maps to CLI exit code 2.
class ValidationError : public std::runtime_error {
  public:
    explicit ValidationError(const std::string &msg)
        : std::runtime_error("validation error: " + msg) {}
};

// Thrown when a linear system or time march cannot be completed.
// Maps to CLI exit code 3.
class SolverError : public std::runtime_error {
  public:
    explicit SolverError(const std::string &msg)
        : std::runtime_error("solver error: " + msg) {}
};

// Thrown when a matrix expected to be SPD fails factorization even after
// any permitted repair.
class FactorizationError : public std::runtime_error {
  public:
    explicit FactorizationError(const std::string &msg)
        : std::runtime_error("factorization error: " + msg) {}
};

inline void require(bool cond, const std::string &msg) {
    if (!cond)
        throw ValidationError(msg);
}

inline bool all_finite(const Eigen::Ref<const MatrixXd> &m) {
    return m.allFinite();
}

// Runs fn(i) for i in [0, n) on up to nthreads workers. Each index is
// processed exactly once; fn must not touch shared mutable state except
// through its own index.
inline void parallel_for(Eigen::Index n, const std::function<void(Eigen::Index)> &fn,
                         unsigned nthreads = std::thread::hardware_concurrency()) {
    if (n <= 0)
        return;
    if (nthreads <= 1 || n == 1) {
        for (Eigen::Index i = 0; i < n; ++i)
            fn(i);
        return;
    }
    unsigned workers = std::min<unsigned>(nthreads, static_cast<unsigned>(n));
    std::vector<std::thread> pool;
    pool.reserve(workers);
    std::exception_ptr first_error;
    std::mutex err_mutex;
    for (unsigned w = 0; w < workers; ++w) {
        pool.emplace_back([&, w]() {
            try {
                for (Eigen::Index i = w; i < n; i += workers)
                    fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(err_mutex);
                if (!first_error)
                    first_error = std::current_exception();
            }
        });
    }
    for (auto &t : pool)
        t.join();
    if (first_error)
        std::rethrow_exception(first_error);
}

} // namespace iesis

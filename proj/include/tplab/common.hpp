// Shared scalar/matrix aliases, error types and small utilities.
#pragma once

#include <Eigen/Dense>

#include <concepts>
#include <cstdint>
#include <cstdlib>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace tplab {

template <class S>
concept Scalar = std::floating_point<S>;

// Row-major storage throughout: a matrix is its flat row-major data plus a shape.
template <Scalar S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <Scalar S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

using Matf = Mat<float>;
using Matd = Mat<double>;
using Vecf = Vec<float>;
using Vecd = Vec<double>;

using index_t = Eigen::Index;

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ShapeError : Error {
    using Error::Error;
};

struct MaskError : Error {
    using Error::Error;
};

// A softmax row with no admissible source. `row` is the offending row index
// in whatever matrix was being normalized; callers add their own context.
struct FullyMaskedRowError : Error {
    index_t row;
    explicit FullyMaskedRowError(index_t r, const std::string& what)
        : Error(what), row(r) {}
};

struct CheckpointError : Error {
    using Error::Error;
};

struct ConfigError : Error {
    using Error::Error;
};

inline std::string shape_str(index_t rows, index_t cols) {
    return std::to_string(rows) + "x" + std::to_string(cols);
}

template <Scalar S>
void check_finite(const Mat<S>& m, const char* what) {
    if (!m.allFinite()) {
        throw Error(std::string(what) + ": non-finite values");
    }
}

// Thread budget: TPLAB_THREADS caps parallelism, default = hardware cores.
inline int thread_budget() {
    if (const char* env = std::getenv("TPLAB_THREADS")) {
        int n = std::atoi(env);
        if (n >= 1) return n;
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

// Index-parallel loop. Results must be written to per-index slots so the
// outcome is independent of scheduling; reductions happen after the join.
template <class Fn>
void parallel_for(index_t n, Fn&& fn, int threads = thread_budget()) {
    if (threads <= 1 || n <= 1) {
        for (index_t i = 0; i < n; ++i) fn(i);
        return;
    }
    const int nt = static_cast<int>(std::min<index_t>(threads, n));
    std::vector<std::thread> pool;
    pool.reserve(nt);
    for (int t = 0; t < nt; ++t) {
        pool.emplace_back([&, t] {
            for (index_t i = t; i < n; i += nt) fn(i);
        });
    }
    for (auto& th : pool) th.join();
}

}  // namespace tplab

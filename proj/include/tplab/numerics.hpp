// Dense kernels the model is built from: matmul, masked softmax, layer norm,
// plus seeded randomness and compensated summation.
//
// Storage is the caller's scalar type; reductions (matmul accumulation,
// softmax and layer-norm statistics) run in double so that tolerance-bound
// equivalence checks hold at float storage.
#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "tplab/common.hpp"

namespace tplab {

template <Scalar S>
inline constexpr S neg_inf = -std::numeric_limits<S>::infinity();

// ---------------------------------------------------------------------------
// matmul

template <Scalar S>
Mat<S> matmul(const Mat<S>& a, const Mat<S>& b) {
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul: dimension mismatch " + shape_str(a.rows(), a.cols()) +
                         " * " + shape_str(b.rows(), b.cols()));
    }
    if constexpr (std::is_same_v<S, double>) {
        return a * b;
    } else {
        return ((a.template cast<double>()) * (b.template cast<double>())).template cast<S>();
    }
}

// ---------------------------------------------------------------------------
// masked softmax
//
// mask entries are 0 (pass) or -inf (blocked); composition of masks is by
// addition. Each row is stabilized by subtracting its max over admissible
// entries; blocked entries come out exactly 0.

template <Scalar S>
Mat<S> masked_softmax(const Mat<S>& scores, const Mat<S>& mask) {
    if (scores.rows() != mask.rows() || scores.cols() != mask.cols()) {
        throw ShapeError("masked_softmax: scores " + shape_str(scores.rows(), scores.cols()) +
                         " vs mask " + shape_str(mask.rows(), mask.cols()));
    }
    const index_t n = scores.rows(), m = scores.cols();
    for (index_t i = 0; i < n; ++i) {
        for (index_t j = 0; j < m; ++j) {
            const S v = mask(i, j);
            if (!(v == S(0) || (std::isinf(v) && v < S(0)))) {
                throw MaskError("masked_softmax: mask entry at (" + std::to_string(i) + "," +
                                std::to_string(j) + ") is neither 0 nor -inf");
            }
        }
    }
    Mat<S> out(n, m);
    std::vector<double> row(m);
    for (index_t i = 0; i < n; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (index_t j = 0; j < m; ++j) {
            row[j] = static_cast<double>(scores(i, j)) + static_cast<double>(mask(i, j));
            if (row[j] > mx) mx = row[j];
        }
        if (!std::isfinite(mx)) {
            throw FullyMaskedRowError(i, "masked_softmax: row " + std::to_string(i) +
                                             " has no admissible entry");
        }
        double sum = 0.0;
        for (index_t j = 0; j < m; ++j) {
            row[j] = std::exp(row[j] - mx);  // exp(-inf) == 0 exactly
            sum += row[j];
        }
        for (index_t j = 0; j < m; ++j) {
            out(i, j) = static_cast<S>(row[j] / sum);
        }
    }
    return out;
}

// Softmax of a single logit row (no mask), e.g. the next-token distribution.
template <Scalar S>
Vec<S> softmax_vector(const Vec<S>& logits) {
    const index_t n = logits.size();
    if (n == 0) throw ShapeError("softmax_vector: empty input");
    double mx = -std::numeric_limits<double>::infinity();
    for (index_t i = 0; i < n; ++i) mx = std::max(mx, static_cast<double>(logits(i)));
    if (!std::isfinite(mx)) throw Error("softmax_vector: non-finite logits");
    std::vector<double> e(n);
    double sum = 0.0;
    for (index_t i = 0; i < n; ++i) {
        e[i] = std::exp(static_cast<double>(logits(i)) - mx);
        sum += e[i];
    }
    Vec<S> out(n);
    for (index_t i = 0; i < n; ++i) out(i) = static_cast<S>(e[i] / sum);
    return out;
}

// ---------------------------------------------------------------------------
// layer norm (row-wise, population variance)

template <Scalar S>
Mat<S> layer_norm(const Mat<S>& x, const Vec<S>& gain, const Vec<S>& bias, S eps) {
    if (gain.size() != x.cols() || bias.size() != x.cols()) {
        throw ShapeError("layer_norm: gain/bias length " + std::to_string(gain.size()) + "/" +
                         std::to_string(bias.size()) + " vs cols " + std::to_string(x.cols()));
    }
    if (!(eps > S(0))) throw Error("layer_norm: eps must be > 0");
    const index_t n = x.rows(), d = x.cols();
    Mat<S> out(n, d);
    for (index_t i = 0; i < n; ++i) {
        double mean = 0.0;
        for (index_t j = 0; j < d; ++j) mean += static_cast<double>(x(i, j));
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (index_t j = 0; j < d; ++j) {
            const double c = static_cast<double>(x(i, j)) - mean;
            var += c * c;
        }
        var /= static_cast<double>(d);
        const double rstd = 1.0 / std::sqrt(var + static_cast<double>(eps));
        for (index_t j = 0; j < d; ++j) {
            const double xn = (static_cast<double>(x(i, j)) - mean) * rstd;
            out(i, j) = static_cast<S>(xn * static_cast<double>(gain(j)) +
                                       static_cast<double>(bias(j)));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Rng
//
// mt19937_64 is bit-exact across platforms; the transforms below avoid
// implementation-defined std distributions so draw sequences are too.

class Rng {
  public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    uint64_t next_u64() { return gen_(); }

    // uniform in [0, 1) with 53-bit resolution
    double uniform01() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    // uniform integer in [0, bound), rejection-sampled
    int uniform_int(int bound) {
        if (bound <= 0) throw Error("Rng::uniform_int: bound must be positive");
        const uint64_t b = static_cast<uint64_t>(bound);
        const uint64_t limit = std::numeric_limits<uint64_t>::max() - std::numeric_limits<uint64_t>::max() % b;
        uint64_t x;
        do {
            x = gen_();
        } while (x >= limit);
        return static_cast<int>(x % b);
    }

    // Irwin-Hall approximation: mean 0, variance 1, pure arithmetic.
    double normal() {
        double s = 0.0;
        for (int i = 0; i < 12; ++i) s += uniform01();
        return s - 6.0;
    }

    std::vector<int> permutation(int n) {
        std::vector<int> p(n);
        std::iota(p.begin(), p.end(), 0);
        for (int i = n - 1; i > 0; --i) {
            std::swap(p[i], p[uniform_int(i + 1)]);
        }
        return p;
    }

  private:
    std::mt19937_64 gen_;
};

// ---------------------------------------------------------------------------
// compensated summation

class KahanSum {
  public:
    void add(double v) {
        const double y = v - c_;
        const double t = s_ + y;
        c_ = (t - s_) - y;
        s_ = t;
    }
    double value() const { return s_; }

  private:
    double s_ = 0.0;
    double c_ = 0.0;
};

inline double kahan_mean(std::span<const double> xs) {
    if (xs.empty()) return 0.0;
    KahanSum k;
    for (double x : xs) k.add(x);
    return k.value() / static_cast<double>(xs.size());
}

}  // namespace tplab

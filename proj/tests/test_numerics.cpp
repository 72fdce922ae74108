#include <doctest.h>

#include <cmath>

#include "tplab/numerics.hpp"

using namespace tplab;

namespace {

// independent oracle: naive triple loop in double
Matf naive_matmul(const Matf& a, const Matf& b) {
    Matf out(a.rows(), b.cols());
    for (index_t i = 0; i < a.rows(); ++i) {
        for (index_t j = 0; j < b.cols(); ++j) {
            double acc = 0.0;
            for (index_t k = 0; k < a.cols(); ++k) {
                acc += static_cast<double>(a(i, k)) * static_cast<double>(b(k, j));
            }
            out(i, j) = static_cast<float>(acc);
        }
    }
    return out;
}

Matf random_mat(index_t r, index_t c, Rng& rng, double scale = 1.0) {
    Matf m(r, c);
    for (index_t i = 0; i < r; ++i)
        for (index_t j = 0; j < c; ++j) m(i, j) = static_cast<float>(rng.normal() * scale);
    return m;
}

}  // namespace

TEST_CASE("matmul identity and hand arithmetic") {
    Matf id = Matf::Identity(2, 2);
    Matf b(2, 2);
    b << 3, 4, 5, 6;
    CHECK(matmul(id, b) == b);
    CHECK(matmul(b, id) == b);

    Matf a(1, 2);
    a << 1, 2;
    Matf c(2, 1);
    c << 3, 4;
    const Matf r = matmul(a, c);
    CHECK(r.rows() == 1);
    CHECK(r.cols() == 1);
    CHECK(r(0, 0) == doctest::Approx(11.0));
}

TEST_CASE("matmul matches the naive triple-loop oracle") {
    Rng rng(7);
    const Matf a = random_mat(7, 5, rng);
    const Matf b = random_mat(5, 3, rng);
    const Matf got = matmul(a, b);
    const Matf want = naive_matmul(a, b);
    for (index_t i = 0; i < got.rows(); ++i)
        for (index_t j = 0; j < got.cols(); ++j)
            CHECK(std::abs(got(i, j) - want(i, j)) < 1e-6f);
}

TEST_CASE("matmul associativity within tolerance") {
    Rng rng(11);
    const Matf a = random_mat(6, 4, rng);
    const Matf b = random_mat(4, 5, rng);
    const Matf c = random_mat(5, 3, rng);
    const Matf ab_c = matmul(matmul(a, b), c);
    const Matf a_bc = matmul(a, matmul(b, c));
    for (index_t i = 0; i < ab_c.rows(); ++i)
        for (index_t j = 0; j < ab_c.cols(); ++j)
            CHECK(std::abs(ab_c(i, j) - a_bc(i, j)) < 1e-6f);
}

TEST_CASE("matmul rejects shape mismatch with a shape report") {
    Matf a(2, 3), b(4, 2);
    a.setZero();
    b.setZero();
    CHECK_THROWS_WITH_AS(matmul(a, b), doctest::Contains("2x3"), ShapeError);
}

TEST_CASE("masked_softmax forced rows") {
    Matf s(1, 3), m(1, 3);
    s << 0, 0, 0;
    m << 0, 0, 0;
    Matf w = masked_softmax(s, m);
    for (int j = 0; j < 3; ++j) CHECK(w(0, j) == doctest::Approx(1.0 / 3.0));

    Matf s2(1, 2), m2(1, 2);
    s2 << 5, 5;
    m2 << 0, neg_inf<float>;
    Matf w2 = masked_softmax(s2, m2);
    CHECK(w2(0, 0) == 1.0f);
    CHECK(w2(0, 1) == 0.0f);

    Matf s3(1, 3), m3(1, 3);
    s3 << 1, 2, 3;
    m3 << 0, 0, neg_inf<float>;
    Matf w3 = masked_softmax(s3, m3);
    const double e1 = std::exp(1.0), e2 = std::exp(2.0);
    CHECK(w3(0, 0) == doctest::Approx(e1 / (e1 + e2)));
    CHECK(w3(0, 1) == doctest::Approx(e2 / (e1 + e2)));
    CHECK(w3(0, 2) == 0.0f);
}

TEST_CASE("masked_softmax errors") {
    Matf s(1, 2), m(1, 2);
    s << 1, 2;
    m << neg_inf<float>, neg_inf<float>;
    CHECK_THROWS_AS(masked_softmax(s, m), FullyMaskedRowError);

    Matf bad(1, 2);
    bad << 0, -1;  // -1 is neither 0 nor -inf
    CHECK_THROWS_AS(masked_softmax(s, bad), MaskError);

    Matf wrong(2, 2);
    wrong.setZero();
    CHECK_THROWS_AS(masked_softmax(s, wrong), ShapeError);
}

TEST_CASE("masked_softmax property: rows sum to one, blocked entries exactly zero") {
    Rng rng(1234);
    for (int trial = 0; trial < 120; ++trial) {
        const index_t n = 1 + rng.uniform_int(8);
        const index_t m = 1 + rng.uniform_int(12);
        Matf s = random_mat(n, m, rng, 3.0);
        Matf mask = Matf::Zero(n, m);
        for (index_t i = 0; i < n; ++i) {
            const int keep = rng.uniform_int(static_cast<int>(m));  // stays admissible
            for (index_t j = 0; j < m; ++j) {
                if (j != keep && rng.uniform01() < 0.5) mask(i, j) = neg_inf<float>;
            }
        }
        const Matf w = masked_softmax(s, mask);
        for (index_t i = 0; i < n; ++i) {
            double sum = 0.0;
            for (index_t j = 0; j < m; ++j) {
                sum += static_cast<double>(w(i, j));
                if (std::isinf(mask(i, j))) CHECK(w(i, j) == 0.0f);
                CHECK(w(i, j) >= 0.0f);
            }
            CHECK(std::abs(sum - 1.0) < 1e-6);
        }
    }
}

TEST_CASE("softmax_vector saturation and agreement with masked_softmax") {
    Vecf uniform = Vecf::Zero(8);
    const Vecf p = softmax_vector(uniform);
    for (int i = 0; i < 8; ++i) CHECK(p(i) == doctest::Approx(1.0 / 8.0));

    Vecf peaked = Vecf::Zero(8);
    peaked(3) = 20.0f;
    CHECK(softmax_vector(peaked)(3) > 0.999f);

    Rng rng(5);
    Vecf logits(6);
    for (int i = 0; i < 6; ++i) logits(i) = static_cast<float>(rng.normal());
    Matf row(1, 6);
    row.row(0) = logits.transpose();
    const Matf zero_mask = Matf::Zero(1, 6);
    const Matf viaMask = masked_softmax(row, zero_mask);
    const Vecf viaVec = softmax_vector(logits);
    for (int i = 0; i < 6; ++i) CHECK(viaVec(i) == viaMask(0, i));
}

TEST_CASE("layer_norm handles constant and already-normalized rows") {
    Vecf gain = Vecf::Ones(4), bias = Vecf::Zero(4);
    Matf constant(1, 4);
    constant << 2, 2, 2, 2;
    const Matf z = layer_norm(constant, gain, bias, 1e-5f);
    for (int j = 0; j < 4; ++j) CHECK(z(0, j) == doctest::Approx(0.0));

    Vecf g2 = Vecf::Ones(2), b2 = Vecf::Zero(2);
    Matf pm(1, 2);
    pm << 1, -1;
    const Matf out = layer_norm(pm, g2, b2, 1e-9f);
    CHECK(out(0, 0) == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(out(0, 1) == doctest::Approx(-1.0).epsilon(1e-6));
}

TEST_CASE("layer_norm oracle: recomputed row moments") {
    Rng rng(21);
    Matf x = random_mat(5, 16, rng, 2.0);
    Vecf gain = Vecf::Ones(16), bias = Vecf::Zero(16);
    const Matf y = layer_norm(x, gain, bias, 1e-6f);
    for (index_t i = 0; i < y.rows(); ++i) {
        double mean = 0.0, var = 0.0;
        for (index_t j = 0; j < 16; ++j) mean += y(i, j);
        mean /= 16.0;
        for (index_t j = 0; j < 16; ++j) var += (y(i, j) - mean) * (y(i, j) - mean);
        var /= 16.0;
        CHECK(std::abs(mean) < 1e-5);
        CHECK(std::abs(var - 1.0) < 1e-5);
    }
}

TEST_CASE("layer_norm shape and eps validation") {
    Matf x(1, 3);
    x.setZero();
    Vecf short_gain = Vecf::Ones(2), bias = Vecf::Zero(3);
    CHECK_THROWS_AS(layer_norm(x, short_gain, bias, 1e-5f), ShapeError);
    Vecf gain = Vecf::Ones(3);
    CHECK_THROWS_AS(layer_norm(x, gain, bias, 0.0f), Error);
}

TEST_CASE("rng determinism over 10^4 draws") {
    Rng a(42), b(42), c(43);
    bool all_equal = true;
    bool any_diff_from_c = false;
    for (int i = 0; i < 10000; ++i) {
        const uint64_t x = a.next_u64(), y = b.next_u64(), z = c.next_u64();
        all_equal = all_equal && (x == y);
        any_diff_from_c = any_diff_from_c || (x != z);
    }
    CHECK(all_equal);
    CHECK(any_diff_from_c);

    Rng p1(7), p2(7);
    CHECK(p1.permutation(100) == p2.permutation(100));
}

TEST_CASE("rng moments are sane") {
    Rng rng(99);
    double sum = 0.0, sq = 0.0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        const double v = rng.normal();
        sum += v;
        sq += v * v;
    }
    CHECK(std::abs(sum / n) < 0.05);
    CHECK(std::abs(sq / n - 1.0) < 0.05);
}

TEST_CASE("kahan mean is order-insensitive") {
    Rng rng(3);
    std::vector<double> xs(2000);
    for (auto& x : xs) x = rng.normal() * 1e6 + 1.0;
    const double m1 = kahan_mean(xs);
    std::reverse(xs.begin(), xs.end());
    const double m2 = kahan_mean(xs);
    CHECK(std::abs(m1 - m2) < 1e-9);
}

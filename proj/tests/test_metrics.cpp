#include <doctest.h>

#include "tplab/metrics.hpp"

using namespace tplab;

namespace {

Vecf dist3(float a, float b, float c) {
    Vecf v(3);
    v << a, b, c;
    return v;
}

}  // namespace

TEST_CASE("compute_pc is the difference of ground-truth probabilities") {
    const Vecf p = dist3(0.8f, 0.1f, 0.1f);
    const Vecf q = dist3(0.5f, 0.25f, 0.25f);
    CHECK(compute_pc(p, q, 0) == doctest::Approx(0.3));
    CHECK(compute_pc(p, p, 0) == 0.0);
}

TEST_CASE("compute_pc antisymmetry") {
    Rng rng(4);
    for (int trial = 0; trial < 50; ++trial) {
        Vecf a(5), b(5);
        double sa = 0, sb = 0;
        for (int i = 0; i < 5; ++i) {
            a(i) = static_cast<float>(rng.uniform01()) + 0.01f;
            b(i) = static_cast<float>(rng.uniform01()) + 0.01f;
            sa += a(i);
            sb += b(i);
        }
        for (int i = 0; i < 5; ++i) {
            a(i) = static_cast<float>(a(i) / sa);
            b(i) = static_cast<float>(b(i) / sb);
        }
        const int g = rng.uniform_int(5);
        CHECK(compute_pc(a, b, g) == -compute_pc(b, a, g));
        CHECK(compute_pc(a, b, g) >= -1.0);
        CHECK(compute_pc(a, b, g) <= 1.0);
    }
}

TEST_CASE("compute_pc validation") {
    const Vecf p = dist3(0.8f, 0.1f, 0.1f);
    CHECK_THROWS_AS(compute_pc(p, p, 3), Error);
    CHECK_THROWS_AS(compute_pc(p, p, -1), Error);
    const Vecf not_dist = dist3(0.8f, 0.8f, 0.1f);
    CHECK_THROWS_AS(compute_pc(not_dist, p, 0), Error);
    Vecf shorter(2);
    shorter << 0.5f, 0.5f;
    CHECK_THROWS_AS(compute_pc(shorter, p, 0), ShapeError);
}

TEST_CASE("batch mean equals recomputation from raw distributions") {
    Rng rng(9);
    std::vector<Vecf> perturbed, base;
    std::vector<int> gts;
    for (int s = 0; s < 40; ++s) {
        Vecf a(4), b(4);
        double sa = 0, sb = 0;
        for (int i = 0; i < 4; ++i) {
            a(i) = static_cast<float>(rng.uniform01()) + 0.01f;
            b(i) = static_cast<float>(rng.uniform01()) + 0.01f;
            sa += a(i);
            sb += b(i);
        }
        for (int i = 0; i < 4; ++i) {
            a(i) = static_cast<float>(a(i) / sa);
            b(i) = static_cast<float>(b(i) / sb);
        }
        perturbed.push_back(a);
        base.push_back(b);
        gts.push_back(rng.uniform_int(4));
    }
    std::vector<double> pcs;
    for (size_t s = 0; s < perturbed.size(); ++s) {
        pcs.push_back(compute_pc(perturbed[s], base[s], gts[s]));
    }
    const double mean = kahan_mean(pcs);
    // recomputation oracle: unweighted mean of per-sample differences
    double direct = 0.0;
    for (size_t s = 0; s < perturbed.size(); ++s) {
        direct += static_cast<double>(perturbed[s](gts[s])) - static_cast<double>(base[s](gts[s]));
    }
    direct /= static_cast<double>(perturbed.size());
    CHECK(mean == doctest::Approx(direct).epsilon(1e-12));
}

TEST_CASE("perturbation results validate range and even sample counts") {
    PerturbationResult r;
    r.recipe = "x";
    r.entries.push_back({0, "w0", 0.5, 10});
    r.entries.push_back({1, "w1", -0.25, 10});
    CHECK_NOTHROW(r.validate());
    r.entries.push_back({2, "w2", 1.5, 10});
    CHECK_THROWS_AS(r.validate(), Error);
    r.entries.back() = {2, "w2", 0.0, 9};
    CHECK_THROWS_AS(r.validate(), Error);
}

// The perturbation metric P_C and result aggregation.
#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "tplab/common.hpp"
#include "tplab/numerics.hpp"

namespace tplab {

// Difference of the ground-truth token's probability between a perturbed and
// a base distribution.
template <Scalar S>
double compute_pc(const Vec<S>& perturbed, const Vec<S>& base, int gt) {
    if (perturbed.size() != base.size()) {
        throw ShapeError("compute_pc: size mismatch " + std::to_string(perturbed.size()) + " vs " +
                         std::to_string(base.size()));
    }
    if (gt < 0 || gt >= perturbed.size()) {
        throw Error("compute_pc: ground-truth token " + std::to_string(gt) + " outside vocab " +
                    std::to_string(perturbed.size()));
    }
    auto check_dist = [](const Vec<S>& p, const char* what) {
        double sum = 0.0;
        for (index_t i = 0; i < p.size(); ++i) sum += static_cast<double>(p(i));
        if (std::abs(sum - 1.0) > 1e-6) {
            throw Error(std::string("compute_pc: ") + what + " is not a distribution (sum " +
                        std::to_string(sum) + ")");
        }
    };
    check_dist(perturbed, "perturbed");
    check_dist(base, "base");
    return static_cast<double>(perturbed(gt)) - static_cast<double>(base(gt));
}

// One sweep (or per-condition list) of mean P_C values.
struct PerturbationResult {
    struct Entry {
        int id = 0;          // window start layer, layer index, or condition ordinal
        std::string key;     // printable condition, e.g. "window_0" or "reverse_pe"
        double mean_pc = 0;
        int n = 0;
    };
    std::string recipe;
    std::string task;
    uint64_t seed = 0;
    std::vector<Entry> entries;

    void validate() const {
        int n = entries.empty() ? 0 : entries.front().n;
        for (const auto& e : entries) {
            if (e.mean_pc < -1.0 - 1e-9 || e.mean_pc > 1.0 + 1e-9) {
                throw Error("PerturbationResult: mean P_C outside [-1,1]: " +
                            std::to_string(e.mean_pc));
            }
            if (e.n != n) {
                throw Error("PerturbationResult: uneven sample counts within one sweep");
            }
        }
    }
};

}  // namespace tplab

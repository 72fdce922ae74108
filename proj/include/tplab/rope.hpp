// Rotary positional encodings, 1-axis and 3-axis.
//
// Heads are rotated pairwise on interleaved dims (2p, 2p+1). rotary_1d drives
// every pair from the temporal coordinate. rotary_3d splits each head into
// d/2 | d/4 | d/4 sub-bands driven by (t, h, w); within a band of width b the
// inverse frequencies follow the usual spacing base^(-2p/b) with base 10000.
// Text tokens carry t == h == w, so they degenerate to plain 1-d rotary.
#pragma once

#include <cmath>

#include "tplab/config.hpp"
#include "tplab/layout.hpp"

namespace tplab {

inline constexpr double kRopeBase = 10000.0;

// Per-token cos/sin for each rotation pair of one head (shared by all heads).
template <Scalar S>
struct RopeTable {
    Mat<S> cos;  // n x (d_head/2)
    Mat<S> sin;
    bool identity = false;  // PeMode::None
};

namespace detail {

// pair index -> (band width in dims, pair offset within band, axis)
struct PairBand {
    int band_dims;
    int pair_in_band;
    int axis;  // 0=t, 1=h, 2=w
};

inline PairBand pair_band(PeMode mode, int d_head, int pair) {
    if (mode == PeMode::Rotary1d) return {d_head, pair, 0};
    const int t_pairs = d_head / 4;       // d/2 dims
    const int h_pairs = d_head / 8;       // d/4 dims
    if (pair < t_pairs) return {d_head / 2, pair, 0};
    if (pair < t_pairs + h_pairs) return {d_head / 4, pair - t_pairs, 1};
    return {d_head / 4, pair - t_pairs - h_pairs, 2};
}

}  // namespace detail

template <Scalar S>
RopeTable<S> make_rope_table(const PositionIds& ids, PeMode mode, int d_head) {
    RopeTable<S> table;
    if (mode == PeMode::None) {
        table.identity = true;
        return table;
    }
    const int n = ids.size();
    const int pairs = d_head / 2;
    table.cos.resize(n, pairs);
    table.sin.resize(n, pairs);
    for (int p = 0; p < pairs; ++p) {
        const auto band = detail::pair_band(mode, d_head, p);
        const double theta = std::pow(kRopeBase, -2.0 * band.pair_in_band / band.band_dims);
        for (int i = 0; i < n; ++i) {
            const int coord = band.axis == 0 ? ids.t[i] : band.axis == 1 ? ids.h[i] : ids.w[i];
            const double a = coord * theta;
            table.cos(i, p) = static_cast<S>(std::cos(a));
            table.sin(i, p) = static_cast<S>(std::sin(a));
        }
    }
    return table;
}

// Rotates q-or-k rows in place. `inverse` applies the transposed rotation,
// which is what the backward pass needs.
template <Scalar S>
void apply_rope_inplace(Mat<S>& x, const RopeTable<S>& table, int n_heads, int d_head,
                        bool inverse = false) {
    if (table.identity) return;
    const index_t n = x.rows();
    if (x.cols() != static_cast<index_t>(n_heads) * d_head) {
        throw ShapeError("apply_rope: cols " + std::to_string(x.cols()) + " vs heads*d_head " +
                         std::to_string(n_heads * d_head));
    }
    const int pairs = d_head / 2;
    for (index_t i = 0; i < n; ++i) {
        for (int head = 0; head < n_heads; ++head) {
            S* row = x.row(i).data() + head * d_head;
            for (int p = 0; p < pairs; ++p) {
                const S c = table.cos(i, p);
                const S s = inverse ? -table.sin(i, p) : table.sin(i, p);
                const S a = row[2 * p];
                const S b = row[2 * p + 1];
                row[2 * p] = a * c - b * s;
                row[2 * p + 1] = a * s + b * c;
            }
        }
    }
}

// Functional form over a full q-or-k matrix (all heads concatenated).
template <Scalar S>
Mat<S> apply_pe(const Mat<S>& q_or_k, const PositionIds& ids, PeMode mode, int n_heads,
                int d_head) {
    if (mode == PeMode::None) return q_or_k;
    if (q_or_k.rows() != ids.size()) {
        throw ShapeError("apply_pe: rows " + std::to_string(q_or_k.rows()) + " vs ids " +
                         std::to_string(ids.size()));
    }
    Mat<S> out = q_or_k;
    const auto table = make_rope_table<S>(ids, mode, d_head);
    apply_rope_inplace(out, table, n_heads, d_head);
    return out;
}

}  // namespace tplab

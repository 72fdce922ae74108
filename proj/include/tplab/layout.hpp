// Token layout of one input sequence (instruction | frames | query) and the
// per-token 3-axis position ids feeding the positional encoding.
#pragma once

#include <algorithm>
#include <vector>

#include "tplab/config.hpp"
#include "tplab/numerics.hpp"

namespace tplab {

struct Range {
    int begin = 0;
    int end = 0;  // exclusive

    int size() const { return end - begin; }
    bool contains(int i) const { return i >= begin && i < end; }
    bool operator==(const Range&) const = default;
};

struct TokenLayout {
    Range instruction;
    std::vector<Range> frames;  // frame-major, equal sizes
    Range query;
    int total_len = 0;

    int n_frames() const { return static_cast<int>(frames.size()); }
    int tokens_per_frame() const { return frames.empty() ? 0 : frames.front().size(); }
    Range visual() const {
        if (frames.empty()) return {instruction.end, instruction.end};
        return {frames.front().begin, frames.back().end};
    }
    bool is_visual(int i) const { return visual().contains(i); }
    int frame_of(int i) const {
        // -1 for non-visual tokens
        if (!is_visual(i)) return -1;
        return (i - frames.front().begin) / tokens_per_frame();
    }
    int last_index() const { return total_len - 1; }

    std::vector<int> segment_indices(const Range& r) const {
        std::vector<int> v(r.size());
        for (int i = 0; i < r.size(); ++i) v[i] = r.begin + i;
        return v;
    }
    std::vector<int> visual_indices() const { return segment_indices(visual()); }
    std::vector<int> frame_indices(int k) const { return segment_indices(frames.at(k)); }
};

inline TokenLayout build_layout(const ModelConfig& config, int instruction_len, int query_len) {
    config.validate();
    if (instruction_len < 1 || query_len < 1) {
        throw ConfigError("build_layout: zero-length segment");
    }
    TokenLayout layout;
    layout.instruction = {0, instruction_len};
    int pos = instruction_len;
    const int per_frame = config.grid.tokens_per_frame();
    for (int k = 0; k < config.grid.t; ++k) {
        layout.frames.push_back({pos, pos + per_frame});
        pos += per_frame;
    }
    layout.query = {pos, pos + query_len};
    layout.total_len = pos + query_len;
    return layout;
}

// ---------------------------------------------------------------------------
// Position ids: (t, h, w) per token. Text tokens carry their sequence
// position on all three axes; tokens of frame k share t = instruction_len + k
// while (h, w) enumerate the frame grid row-major.

struct PositionIds {
    std::vector<int> t, h, w;

    int size() const { return static_cast<int>(t.size()); }
    bool operator==(const PositionIds&) const = default;
};

enum class PosScheme { Default, ReversedTemporal };

struct PosSegment {
    enum Kind { Video, Query } kind = Video;
};

inline PositionIds assign_position_ids(const TokenLayout& layout, const FrameGrid& grid,
                                       PosScheme scheme = PosScheme::Default) {
    const int n = layout.total_len;
    PositionIds ids;
    ids.t.resize(n);
    ids.h.resize(n);
    ids.w.resize(n);
    for (int i = layout.instruction.begin; i < layout.instruction.end; ++i) {
        ids.t[i] = ids.h[i] = ids.w[i] = i;
    }
    const int base = layout.instruction.end;
    const int n_frames = layout.n_frames();
    for (int k = 0; k < n_frames; ++k) {
        const int tk = scheme == PosScheme::ReversedTemporal ? base + (n_frames - 1 - k)
                                                             : base + k;
        const Range r = layout.frames[k];
        for (int i = r.begin; i < r.end; ++i) {
            const int cell = i - r.begin;
            ids.t[i] = tk;
            ids.h[i] = cell / grid.w;
            ids.w[i] = cell % grid.w;
        }
    }
    for (int i = layout.query.begin; i < layout.query.end; ++i) {
        ids.t[i] = ids.h[i] = ids.w[i] = i;
    }
    return ids;
}

// Permutes the (t,h,w) triples among the tokens of one segment; the other
// tokens keep their ids. Deterministic in the seed.
inline PositionIds shuffle_position_ids(const PositionIds& ids, const TokenLayout& layout,
                                        PosSegment::Kind segment, uint64_t seed) {
    PositionIds out = ids;
    const Range r = segment == PosSegment::Video ? layout.visual() : layout.query;
    Rng rng(seed);
    const std::vector<int> perm = rng.permutation(r.size());
    for (int i = 0; i < r.size(); ++i) {
        const int dst = r.begin + i;
        const int src = r.begin + perm[i];
        out.t[dst] = ids.t[src];
        out.h[dst] = ids.h[src];
        out.w[dst] = ids.w[src];
    }
    return out;
}

// Permutes only the per-frame temporal coordinates (frame k gets the t of
// frame perm[k]); spatial ids and text untouched.
inline PositionIds shuffle_frame_temporal_ids(const PositionIds& ids, const TokenLayout& layout,
                                              uint64_t seed) {
    PositionIds out = ids;
    Rng rng(seed);
    const int n_frames = layout.n_frames();
    const std::vector<int> perm = rng.permutation(n_frames);
    for (int k = 0; k < n_frames; ++k) {
        const Range dst = layout.frames[k];
        const Range src = layout.frames[perm[k]];
        for (int i = 0; i < dst.size(); ++i) {
            out.t[dst.begin + i] = ids.t[src.begin + i];
        }
    }
    return out;
}

// Maps frame k's temporal coordinate to that of frame n-1-k; text untouched.
inline PositionIds reverse_temporal_ids(const PositionIds& ids, const TokenLayout& layout) {
    PositionIds out = ids;
    const int n_frames = layout.n_frames();
    for (int k = 0; k < n_frames; ++k) {
        const Range dst = layout.frames[k];
        const Range src = layout.frames[n_frames - 1 - k];
        for (int i = 0; i < dst.size(); ++i) {
            out.t[dst.begin + i] = ids.t[src.begin + i];
        }
    }
    return out;
}

}  // namespace tplab

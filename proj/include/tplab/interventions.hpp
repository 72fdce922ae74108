// Declarative perturbations: attention knockouts over (target, source) token
// sets, positional-encoding mutations, frame-order edits, and the sliding
// window layer sweep.
#pragma once

#include <algorithm>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "tplab/metrics.hpp"
#include "tplab/model.hpp"

namespace tplab {

// ---------------------------------------------------------------------------
// knockout specs
//
// One spec is a product block: targets x sources, active on a layer set.
// Richer shapes (inter-frame, spatial restrictions) are unions of blocks.

struct KnockoutSpec {
    std::vector<int> targets;
    std::vector<int> sources;
    std::vector<int> layers;  // empty = every layer

    bool active_at(int layer) const {
        return layers.empty() || std::find(layers.begin(), layers.end(), layer) != layers.end();
    }
};

using KnockoutSet = std::vector<KnockoutSpec>;

// Additive mask M: -inf exactly at {(i,j) : i in T, j in S}, 0 elsewhere.
// Composes with the causal mask by addition. Errors if some target row would
// have no admissible source left once the causal mask is applied.
template <Scalar S>
Mat<S> build_knockout_mask(const KnockoutSet& specs, int total_len) {
    Mat<S> m = Mat<S>::Zero(total_len, total_len);
    for (const auto& spec : specs) {
        for (int i : spec.targets) {
            if (i < 0 || i >= total_len) {
                throw Error("build_knockout_mask: target " + std::to_string(i) +
                            " outside sequence of length " + std::to_string(total_len));
            }
            for (int j : spec.sources) {
                if (j < 0 || j >= total_len) {
                    throw Error("build_knockout_mask: source " + std::to_string(j) +
                                " outside sequence of length " + std::to_string(total_len));
                }
                m(i, j) = neg_inf<S>;
            }
        }
    }
    for (int i = 0; i < total_len; ++i) {
        bool open = false;
        for (int j = 0; j <= i; ++j) {
            if (m(i, j) == S(0)) {
                open = true;
                break;
            }
        }
        if (!open) {
            throw Error("build_knockout_mask: row " + std::to_string(i) +
                        " fully masked once composed with the causal mask");
        }
    }
    return m;
}

inline Mat<float> build_knockout_mask(const KnockoutSpec& spec, int total_len) {
    return build_knockout_mask<float>(KnockoutSet{spec}, total_len);
}

// ---------------------------------------------------------------------------
// spec constructors

enum class SourceSegment { Query, Video };

// Blocks the final token from attending to one input segment. The final
// token itself is never placed in the source set implicitly.
inline KnockoutSpec final_token_knockout(const TokenLayout& layout, SourceSegment segment) {
    KnockoutSpec spec;
    const int last = layout.last_index();
    spec.targets = {last};
    const Range r = segment == SourceSegment::Query ? layout.query : layout.visual();
    for (int j = r.begin; j < r.end; ++j) {
        if (j != last) spec.sources.push_back(j);
    }
    return spec;
}

// Query tokens cut off from every visual token.
inline KnockoutSpec frame_to_query_knockout(const TokenLayout& layout) {
    KnockoutSpec spec;
    spec.targets = layout.segment_indices(layout.query);
    spec.sources = layout.visual_indices();
    return spec;
}

// Each frame cut off from all earlier frames: a union of per-frame blocks.
inline KnockoutSet inter_frame_knockout(const TokenLayout& layout) {
    if (layout.n_frames() < 2) {
        throw Error("inter_frame_knockout: needs at least 2 frames, got " +
                    std::to_string(layout.n_frames()));
    }
    KnockoutSet set;
    for (int k = 1; k < layout.n_frames(); ++k) {
        KnockoutSpec spec;
        spec.targets = layout.frame_indices(k);
        for (int e = 0; e < k; ++e) {
            const auto idx = layout.frame_indices(e);
            spec.sources.insert(spec.sources.end(), idx.begin(), idx.end());
        }
        set.push_back(std::move(spec));
    }
    return set;
}

// Query tokens may reach only frame `keep_frame` among visual tokens.
inline KnockoutSpec single_frame_restriction(const TokenLayout& layout, int keep_frame) {
    if (keep_frame < 0 || keep_frame >= layout.n_frames()) {
        throw Error("single_frame_restriction: frame " + std::to_string(keep_frame) +
                    " outside 0.." + std::to_string(layout.n_frames() - 1));
    }
    KnockoutSpec spec;
    spec.targets = layout.segment_indices(layout.query);
    const Range keep = layout.frames[keep_frame];
    for (int j : layout.visual_indices()) {
        if (!keep.contains(j)) spec.sources.push_back(j);
    }
    return spec;
}

// ---------------------------------------------------------------------------
// spatiotemporal assembly restrictions (among earlier-frame visual tokens;
// same-frame, instruction and query attention untouched)

enum class SpatioKind {
    CorrespondingArea,      // aligned region (Chebyshev radius) in all preceding frames
    PreviousFrame,          // all of frame k-1 only
    CorrespondingAreaPrev,  // aligned region of frame k-1 only
};

inline const char* spatio_kind_name(SpatioKind k) {
    switch (k) {
        case SpatioKind::CorrespondingArea: return "corresponding_area";
        case SpatioKind::PreviousFrame: return "previous_frame";
        case SpatioKind::CorrespondingAreaPrev: return "corresponding_area_prev";
    }
    return "?";
}

inline KnockoutSet spatiotemporal_config(const TokenLayout& layout, const FrameGrid& grid,
                                         SpatioKind kind, int radius = 1) {
    if (radius < 0) throw Error("spatiotemporal_config: radius must be >= 0");
    const int T = layout.n_frames();
    const int per = grid.tokens_per_frame();
    KnockoutSet set;
    for (int k = 1; k < T; ++k) {
        for (int cell = 0; cell < per; ++cell) {
            const int i = layout.frames[k].begin + cell;
            const int hi = cell / grid.w, wi = cell % grid.w;
            KnockoutSpec spec;
            spec.targets = {i};
            for (int e = 0; e < k; ++e) {
                for (int src_cell = 0; src_cell < per; ++src_cell) {
                    const int j = layout.frames[e].begin + src_cell;
                    const int hj = src_cell / grid.w, wj = src_cell % grid.w;
                    const bool aligned =
                        std::abs(hi - hj) <= radius && std::abs(wi - wj) <= radius;
                    bool allowed = false;
                    switch (kind) {
                        case SpatioKind::CorrespondingArea: allowed = aligned; break;
                        case SpatioKind::PreviousFrame: allowed = e == k - 1; break;
                        case SpatioKind::CorrespondingAreaPrev: allowed = e == k - 1 && aligned; break;
                    }
                    if (!allowed) spec.sources.push_back(j);
                }
            }
            if (!spec.sources.empty()) set.push_back(std::move(spec));
        }
    }
    return set;
}

// Number of earlier-frame visual sources a visual token keeps on average
// under a spatiotemporal restriction (reported next to the radius).
inline double spatio_mean_allowed_sources(const TokenLayout& layout, const FrameGrid& grid,
                                          SpatioKind kind, int radius = 1) {
    const auto set = spatiotemporal_config(layout, grid, kind, radius);
    const int T = layout.n_frames();
    const int per = grid.tokens_per_frame();
    if (T < 2) return 0.0;
    int64_t allowed = 0;
    int64_t tokens = 0;
    for (int k = 1; k < T; ++k) {
        for (int cell = 0; cell < per; ++cell) {
            const int i = layout.frames[k].begin + cell;
            int64_t blocked = 0;
            for (const auto& spec : set) {
                if (spec.targets.size() == 1 && spec.targets[0] == i) {
                    blocked = static_cast<int64_t>(spec.sources.size());
                }
            }
            allowed += static_cast<int64_t>(k) * per - blocked;
            ++tokens;
        }
    }
    return static_cast<double>(allowed) / static_cast<double>(tokens);
}

// ---------------------------------------------------------------------------
// frame order edits

inline std::vector<int> reverse_frames(std::span<const int> tokens, const TokenLayout& layout) {
    if (static_cast<int>(tokens.size()) != layout.total_len) {
        throw ShapeError("reverse_frames: tokens " + std::to_string(tokens.size()) +
                         " vs layout " + std::to_string(layout.total_len));
    }
    std::vector<int> out(tokens.begin(), tokens.end());
    const int T = layout.n_frames();
    for (int k = 0; k < T; ++k) {
        const Range dst = layout.frames[k];
        const Range src = layout.frames[T - 1 - k];
        for (int i = 0; i < dst.size(); ++i) out[dst.begin + i] = tokens[src.begin + i];
    }
    return out;
}

// ---------------------------------------------------------------------------
// intervention specs

enum class InterventionKind { Identity, RemovePe, ShufflePe, ReversePe, ReverseFrames, Knockout };

struct InterventionSpec {
    InterventionKind kind = InterventionKind::Identity;
    std::string label;
    std::vector<int> layers;  // for PE kinds; empty = all layers
    PosSegment::Kind segment = PosSegment::Video;  // ShufflePe
    uint64_t seed = 0;                             // ShufflePe
    KnockoutSet knockout;

    static InterventionSpec identity() { return {InterventionKind::Identity, "identity", {}, PosSegment::Video, 0, {}}; }
    static InterventionSpec remove_pe(std::vector<int> layers) {
        InterventionSpec s;
        s.kind = InterventionKind::RemovePe;
        s.label = "remove_pe";
        s.layers = std::move(layers);
        return s;
    }
    static InterventionSpec shuffle_pe(PosSegment::Kind segment, uint64_t seed,
                                       std::vector<int> layers = {}) {
        InterventionSpec s;
        s.kind = InterventionKind::ShufflePe;
        s.label = segment == PosSegment::Video ? "shuffle_pe_video" : "shuffle_pe_query";
        s.segment = segment;
        s.seed = seed;
        s.layers = std::move(layers);
        return s;
    }
    static InterventionSpec reverse_pe(std::vector<int> layers = {}) {
        InterventionSpec s;
        s.kind = InterventionKind::ReversePe;
        s.label = "reverse_pe";
        s.layers = std::move(layers);
        return s;
    }
    static InterventionSpec reverse_frame_order() {
        InterventionSpec s;
        s.kind = InterventionKind::ReverseFrames;
        s.label = "reverse_order";
        return s;
    }
    static InterventionSpec from_knockout(KnockoutSet set, std::string label) {
        InterventionSpec s;
        s.kind = InterventionKind::Knockout;
        s.knockout = std::move(set);
        s.label = std::move(label);
        return s;
    }
};

// Removes PE at exactly one layer, everything else unchanged.
inline InterventionSpec remove_pe_at_layer(int layer) {
    return InterventionSpec::remove_pe({layer});
}

// The frame-order / position-id reversal bundle: (true,false) reverses the
// input frames, (false,true) only the temporal axis of the ids, (true,true)
// keeps each frame paired with its original temporal id.
inline std::vector<InterventionSpec> compose_reversal(bool frames_reversed, bool pe_reversed) {
    std::vector<InterventionSpec> specs;
    if (frames_reversed) specs.push_back(InterventionSpec::reverse_frame_order());
    if (pe_reversed) specs.push_back(InterventionSpec::reverse_pe());
    return specs;
}

// ---------------------------------------------------------------------------
// compiling specs onto the model's hook points

template <Scalar S>
struct CompiledIntervention {
    std::vector<HookPoint<S>> hooks;
    bool reverse_frames = false;
};

template <Scalar S>
void compile_into(CompiledIntervention<S>& out, const InterventionSpec& spec,
                  const ModelConfig& cfg, const TokenLayout& layout, const PositionIds& ids) {
    std::vector<int> layers = spec.layers;
    if (layers.empty()) {
        layers.resize(cfg.n_layers);
        std::iota(layers.begin(), layers.end(), 0);
    }
    for (int l : layers) {
        if (l < 0 || l >= cfg.n_layers) {
            throw Error("intervention '" + spec.label + "': layer " + std::to_string(l) +
                        " outside 0.." + std::to_string(cfg.n_layers - 1));
        }
    }
    switch (spec.kind) {
        case InterventionKind::Identity:
            break;
        case InterventionKind::RemovePe:
            for (int l : layers) {
                out.hooks.push_back(HookPoint<S>::pre_pe(l, [](PrePeContext<S>& ctx) {
                    ctx.pe_enabled = false;
                }));
            }
            break;
        case InterventionKind::ShufflePe: {
            auto shuffled = std::make_shared<PositionIds>(
                shuffle_position_ids(ids, layout, spec.segment, spec.seed));
            for (int l : layers) {
                out.hooks.push_back(HookPoint<S>::pre_pe(l, [shuffled](PrePeContext<S>& ctx) {
                    ctx.ids = shuffled.get();
                }));
            }
            break;
        }
        case InterventionKind::ReversePe: {
            auto reversed = std::make_shared<PositionIds>(reverse_temporal_ids(ids, layout));
            for (int l : layers) {
                out.hooks.push_back(HookPoint<S>::pre_pe(l, [reversed](PrePeContext<S>& ctx) {
                    ctx.ids = reversed.get();
                }));
            }
            break;
        }
        case InterventionKind::ReverseFrames:
            out.reverse_frames = true;
            break;
        case InterventionKind::Knockout: {
            // group blocks by the layer they are active at; one mask per layer
            for (int l = 0; l < cfg.n_layers; ++l) {
                KnockoutSet active;
                for (const auto& block : spec.knockout) {
                    KnockoutSpec b = block;
                    if (b.layers.empty()) b.layers = spec.layers;  // inherit the spec's set
                    if (b.layers.empty() || b.active_at(l)) active.push_back(block);
                }
                if (active.empty()) continue;
                auto mask = std::make_shared<Mat<S>>(
                    build_knockout_mask<S>(active, layout.total_len));
                out.hooks.push_back(HookPoint<S>::post_scores(l, [mask](PostScoresContext<S>& ctx) {
                    ctx.extra_mask += *mask;
                }));
            }
            break;
        }
    }
}

template <Scalar S>
CompiledIntervention<S> compile_interventions(const std::vector<InterventionSpec>& specs,
                                              const ModelConfig& cfg, const TokenLayout& layout,
                                              const PositionIds& ids) {
    CompiledIntervention<S> out;
    for (const auto& spec : specs) compile_into(out, spec, cfg, layout, ids);
    return out;
}

// ---------------------------------------------------------------------------
// evaluation plumbing shared by sweeps and single-condition runs

struct RunSample {
    std::vector<int> tokens;
    int gt = 0;
};

template <Scalar S>
std::vector<Vec<S>> base_distributions(const Model<S>& model, const TokenLayout& layout,
                                       const PositionIds& ids, const std::vector<RunSample>& samples,
                                       const std::vector<InterventionSpec>& base_specs = {},
                                       int threads = thread_budget()) {
    const auto compiled = compile_interventions<S>(base_specs, model.config, layout, ids);
    std::vector<Vec<S>> out(samples.size());
    parallel_for(static_cast<index_t>(samples.size()), [&](index_t i) {
        const auto& sample = samples[i];
        std::vector<int> toks = compiled.reverse_frames
                                    ? reverse_frames(sample.tokens, layout)
                                    : sample.tokens;
        ForwardOptions<S> opt;
        opt.hooks = compiled.hooks;
        const auto res = forward(model, std::span<const int>(toks), layout, ids, opt);
        out[i] = next_token_distribution<S>(res.logits.row(layout.last_index()).transpose());
    }, threads);
    return out;
}

// Mean P_C of `specs` against precomputed base distributions.
template <Scalar S>
double mean_pc(const Model<S>& model, const TokenLayout& layout, const PositionIds& ids,
               const std::vector<RunSample>& samples, const std::vector<Vec<S>>& base,
               const std::vector<InterventionSpec>& specs, int threads = thread_budget()) {
    if (base.size() != samples.size()) {
        throw ShapeError("mean_pc: base distributions " + std::to_string(base.size()) +
                         " vs samples " + std::to_string(samples.size()));
    }
    const auto compiled = compile_interventions<S>(specs, model.config, layout, ids);
    std::vector<double> pcs(samples.size());
    parallel_for(static_cast<index_t>(samples.size()), [&](index_t i) {
        const auto& sample = samples[i];
        std::vector<int> toks = compiled.reverse_frames
                                    ? reverse_frames(sample.tokens, layout)
                                    : sample.tokens;
        ForwardOptions<S> opt;
        opt.hooks = compiled.hooks;
        const auto res = forward(model, std::span<const int>(toks), layout, ids, opt);
        const Vec<S> p = next_token_distribution<S>(res.logits.row(layout.last_index()).transpose());
        pcs[i] = compute_pc<S>(p, base[i], sample.gt);
    }, threads);
    return kahan_mean(pcs);
}

// ---------------------------------------------------------------------------
// sliding-window layer sweep

struct WindowSweep {
    int window_k = 5;
    int stride = 1;

    std::vector<Range> windows(int n_layers) const {
        if (window_k < 1 || stride < 1) throw Error("WindowSweep: window and stride must be >= 1");
        std::vector<Range> out;
        for (int start = 0; start + window_k <= n_layers; start += stride) {
            out.push_back({start, start + window_k});
        }
        if (out.empty()) {
            throw Error("WindowSweep: window " + std::to_string(window_k) +
                        " larger than depth " + std::to_string(n_layers));
        }
        return out;
    }
};

// One mean P_C per window; the spec's own layer set is replaced per window.
template <Scalar S>
PerturbationResult sweep_layers(const Model<S>& model, const TokenLayout& layout,
                                const PositionIds& ids, const std::vector<RunSample>& samples,
                                const std::vector<Vec<S>>& base, InterventionSpec spec,
                                const WindowSweep& sweep, int threads = thread_budget()) {
    PerturbationResult result;
    result.recipe = spec.label;
    for (const Range& win : sweep.windows(model.config.n_layers)) {
        std::vector<int> layers;
        for (int l = win.begin; l < win.end; ++l) layers.push_back(l);
        spec.layers = layers;
        for (auto& block : spec.knockout) block.layers = layers;
        const double mean = mean_pc<S>(model, layout, ids, samples, base, {spec}, threads);
        result.entries.push_back({win.begin, "window_" + std::to_string(win.begin), mean,
                                  static_cast<int>(samples.size())});
    }
    result.validate();
    return result;
}

}  // namespace tplab

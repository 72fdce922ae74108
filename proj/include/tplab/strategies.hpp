// Pathway-guided efficiency strategies: staged sparse attention (s1, s2) and
// temporal-exit KV eviction (s3), plus attention FLOP / cache byte accounting.
#pragma once

#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "tplab/tasks.hpp"

namespace tplab {

enum class StrategyKind { Baseline, S1QueryLastFrame, S2NoInterFrame, S3KvFrameExit };

inline const char* strategy_name(StrategyKind k) {
    switch (k) {
        case StrategyKind::Baseline: return "baseline";
        case StrategyKind::S1QueryLastFrame: return "s1_query_last_frame";
        case StrategyKind::S2NoInterFrame: return "s2_no_inter_frame";
        case StrategyKind::S3KvFrameExit: return "s3_kv_frame_exit";
    }
    return "?";
}

struct StrategySchedule {
    StrategyKind kind = StrategyKind::Baseline;
    LayerBand band{0.0, 0.0};
    // "attention between frame tokens is disabled": default blocks only
    // cross-frame visual pairs; false also severs same-frame visual pairs.
    bool cross_frame_only = true;

    static StrategySchedule make(StrategyKind kind) {
        StrategySchedule s;
        s.kind = kind;
        switch (kind) {
            case StrategyKind::Baseline: s.band = {0.0, 0.0}; break;
            case StrategyKind::S1QueryLastFrame: s.band = {kEarlyBandEnd, kMiddleBandEnd}; break;
            case StrategyKind::S2NoInterFrame:
            case StrategyKind::S3KvFrameExit: s.band = {kMiddleBandEnd, 1.0}; break;
        }
        return s;
    }

    std::vector<int> resolved_layers(int n_layers) const { return band.resolve(n_layers); }
};

// A configured run: mask-route interventions for s1/s2, an eviction plan for
// s3. Feed it to evaluate() or to forward() directly.
struct StrategyRun {
    StrategyKind kind = StrategyKind::Baseline;
    std::vector<InterventionSpec> specs;
    std::optional<EvictionPlan> eviction;
    std::vector<int> layers;

    EvalModifiers modifiers() const {
        EvalModifiers m;
        m.specs = specs;
        if (eviction) m.eviction = &*eviction;
        return m;
    }
};

inline StrategyRun apply_strategy(const ModelConfig& config, const StrategySchedule& schedule,
                                  const TokenLayout& layout) {
    if (layout.n_frames() < 1) throw Error("apply_strategy: layout has no frames");
    StrategyRun run;
    run.kind = schedule.kind;
    run.layers = schedule.resolved_layers(config.n_layers);
    if (schedule.kind == StrategyKind::Baseline) return run;
    if (run.layers.empty()) {
        std::fprintf(stderr, "warning: %s resolves to an empty layer band; no-op\n",
                     strategy_name(schedule.kind));
        return run;
    }
    switch (schedule.kind) {
        case StrategyKind::Baseline:
            break;
        case StrategyKind::S1QueryLastFrame: {
            // query keeps instruction/query sources and the last frame only
            KnockoutSpec spec = single_frame_restriction(layout, layout.n_frames() - 1);
            spec.layers = run.layers;
            run.specs.push_back(
                InterventionSpec::from_knockout({spec}, strategy_name(schedule.kind)));
            break;
        }
        case StrategyKind::S2NoInterFrame: {
            KnockoutSet set;
            if (schedule.cross_frame_only) {
                if (layout.n_frames() >= 2) set = inter_frame_knockout(layout);
            } else {
                for (int i : layout.visual_indices()) {
                    KnockoutSpec spec;
                    spec.targets = {i};
                    for (int j : layout.visual_indices()) {
                        if (j != i) spec.sources.push_back(j);
                    }
                    set.push_back(std::move(spec));
                }
            }
            for (auto& spec : set) spec.layers = run.layers;
            if (!set.empty()) {
                run.specs.push_back(
                    InterventionSpec::from_knockout(std::move(set), strategy_name(schedule.kind)));
            }
            break;
        }
        case StrategyKind::S3KvFrameExit: {
            EvictionPlan plan = EvictionPlan::none(layout.total_len, config.n_layers);
            const int exit_layer = run.layers.front();
            for (int j : layout.visual_indices()) plan.first_evict[j] = exit_layer;
            run.eviction = std::move(plan);
            break;
        }
    }
    return run;
}

// The knockout whose outputs an s3 eviction must reproduce: every token cut
// off from the evicted visual tokens across the banded layers.
inline InterventionSpec s3_equivalent_knockout(const ModelConfig& config,
                                               const TokenLayout& layout,
                                               const std::vector<int>& band_layers) {
    KnockoutSpec spec;
    for (int i = 0; i < layout.total_len; ++i) spec.targets.push_back(i);
    spec.sources = layout.visual_indices();
    std::vector<int> layers = band_layers;
    if (!layers.empty()) {
        for (int l = layers.back() + 1; l < config.n_layers; ++l) layers.push_back(l);
    }
    spec.layers = layers;
    return InterventionSpec::from_knockout({spec}, "s3_equivalent_knockout");
}

// ---------------------------------------------------------------------------
// cost accounting

struct CostReport {
    int64_t attention_flops = 0;  // 2 * d_model per admissible (i,j), all layers
    size_t kv_bytes_peak = 0;     // sum over layers of live * 2 * d_model * bytes
    std::vector<int64_t> per_layer_flops;
    std::vector<size_t> per_layer_bytes;
};

inline CostReport account_costs(const RunStats& stats) {
    CostReport report;
    const size_t per_token = 2ull * stats.d_model * stats.bytes_per_value;
    for (size_t l = 0; l < stats.attention_pairs.size(); ++l) {
        const int64_t flops = stats.attention_pairs[l] * 2 * stats.d_model;
        const size_t bytes = static_cast<size_t>(stats.live_tokens[l]) * per_token;
        report.per_layer_flops.push_back(flops);
        report.per_layer_bytes.push_back(bytes);
        report.attention_flops += flops;
        report.kv_bytes_peak += bytes;
    }
    return report;
}

// Runs one representative forward under the strategy (the layout, masks and
// liveness are sample-independent) and prices it.
template <Scalar S>
CostReport strategy_costs(const Model<S>& model, const StrategyRun& run,
                          const TokenLayout& layout, const PositionIds& ids,
                          std::span<const int> tokens) {
    const auto compiled = compile_interventions<S>(run.specs, model.config, layout, ids);
    ForwardOptions<S> opt;
    opt.hooks = compiled.hooks;
    if (run.eviction) opt.eviction = &*run.eviction;
    std::vector<int> toks = compiled.reverse_frames ? reverse_frames(tokens, layout)
                                                    : std::vector<int>(tokens.begin(), tokens.end());
    const auto res = forward(model, std::span<const int>(toks), layout, ids, opt);
    return account_costs(res.stats);
}

// ---------------------------------------------------------------------------
// benchmark table

struct StrategyRow {
    std::string strategy;
    double accuracy = 0.0;
    double mean_pc = 0.0;
    int64_t flops = 0;
    size_t kv_bytes_peak = 0;
};

template <Scalar S>
std::vector<StrategyRow> benchmark_strategies(const Model<S>& model,
                                              const std::vector<SyntheticSample>& data,
                                              int threads = thread_budget()) {
    if (data.empty()) throw Error("benchmark_strategies: empty eval set");
    const TokenLayout layout = build_layout(model.config, kInstructionLen, kQueryLen);
    const PositionIds ids = assign_position_ids(layout, model.config.grid);
    const std::vector<int> probe = encode_tokens(data.front());

    std::vector<StrategyRow> rows;
    for (StrategyKind kind : {StrategyKind::Baseline, StrategyKind::S1QueryLastFrame,
                              StrategyKind::S2NoInterFrame, StrategyKind::S3KvFrameExit}) {
        const StrategyRun run = apply_strategy(model.config, StrategySchedule::make(kind), layout);
        const EvalResult ev = evaluate(model, data, run.modifiers(), threads);
        const CostReport cost = strategy_costs(model, run, layout, ids, probe);
        StrategyRow row;
        row.strategy = strategy_name(kind);
        row.accuracy = ev.accuracy;
        row.mean_pc = kind == StrategyKind::Baseline ? 0.0 : ev.mean_pc;
        row.flops = cost.attention_flops;
        row.kv_bytes_peak = cost.kv_bytes_peak;
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace tplab

// Synthetic temporal tasks over symbol-grid frames, their token encoding,
// dataset generation with disjoint train/eval splits, evaluation, and
// line-delimited import/export.
#pragma once

#include <json.hpp>

#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "tplab/interventions.hpp"
#include "tplab/model.hpp"

namespace tplab {

enum class TaskKind { Direction, Order, YesNo };

inline const char* task_name(TaskKind k) {
    switch (k) {
        case TaskKind::Direction: return "direction";
        case TaskKind::Order: return "order";
        case TaskKind::YesNo: return "yes_no";
    }
    return "?";
}

inline TaskKind task_from_name(const std::string& s) {
    if (s == "direction") return TaskKind::Direction;
    if (s == "order") return TaskKind::Order;
    if (s == "yes_no") return TaskKind::YesNo;
    throw Error("unknown task kind '" + s + "'");
}

// Fixed token ids. Symbols occupy [kFirstSymbol, vocab_size).
namespace tok {
inline constexpr int BOS = 0;
inline constexpr int SEP = 1;
inline constexpr int QMARK = 2;
inline constexpr int EOS = 3;
inline constexpr int TK_DIRECTION = 4;
inline constexpr int TK_ORDER = 5;
inline constexpr int TK_YESNO = 6;
inline constexpr int BG = 7;
inline constexpr int A_LEFT = 8;
inline constexpr int A_RIGHT = 9;
inline constexpr int A_UP = 10;
inline constexpr int A_DOWN = 11;
inline constexpr int A_YES = 12;
inline constexpr int A_NO = 13;
inline constexpr int kFirstSymbol = 16;
}  // namespace tok

inline constexpr int kInstructionLen = 3;
inline constexpr int kQueryLen = 5;

struct SyntheticSample {
    TaskKind kind = TaskKind::Direction;
    std::vector<std::vector<int>> frames;  // T grids, each H*W row-major symbol ids
    std::vector<int> query;                // kQueryLen tokens
    int answer = 0;
    std::vector<int> options;  // answer candidates scored at evaluation
};

inline std::vector<int> instruction_tokens(TaskKind kind) {
    const int tk = kind == TaskKind::Direction ? tok::TK_DIRECTION
                   : kind == TaskKind::Order   ? tok::TK_ORDER
                                               : tok::TK_YESNO;
    return {tok::BOS, tk, tok::SEP};
}

inline std::vector<int> encode_tokens(const SyntheticSample& s) {
    std::vector<int> out = instruction_tokens(s.kind);
    for (const auto& frame : s.frames) out.insert(out.end(), frame.begin(), frame.end());
    out.insert(out.end(), s.query.begin(), s.query.end());
    return out;
}

inline RunSample encode_sample(const SyntheticSample& s) {
    return {encode_tokens(s), s.answer};
}

// ---------------------------------------------------------------------------
// generation

enum class Split { Train, Eval };

namespace detail {

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// 20% of latent combinations are held out for eval.
inline bool combo_in_split(uint64_t combo, Split split) {
    const bool eval = splitmix64(combo ^ 0x7431c0de5eedULL) % 5 == 0;
    return split == Split::Eval ? eval : !eval;
}

}  // namespace detail

struct GeneratorOptions {
    FrameGrid grid;
    int vocab_size = 64;
    // chance that the later event of order/yes_no samples lands in the last
    // frame (the remaining mass spreads over earlier pairs)
    double last_frame_bias = 0.5;
    // cap on distinct event/object symbols; 0 = everything above kFirstSymbol
    int symbol_pool = 0;
};

inline int generator_symbol_count(const GeneratorOptions& opt) {
    const int all = opt.vocab_size - tok::kFirstSymbol;
    return opt.symbol_pool > 0 ? std::min(opt.symbol_pool, all) : all;
}

inline void check_generator_preconditions(TaskKind kind, const GeneratorOptions& opt) {
    const int n_symbols = generator_symbol_count(opt);
    if (n_symbols < 2) {
        throw Error("generate_dataset: vocab too small, needs at least 2 symbol ids");
    }
    const auto& g = opt.grid;
    if (kind == TaskKind::Direction) {
        if (g.t < 2) throw Error("generate_dataset: direction needs at least 2 frames");
        if (g.w < 2 || g.h < 2) {
            throw Error("generate_dataset: direction needs at least 2 cells along the motion axis");
        }
        if (g.w < g.t || g.h < g.t) {
            throw Error("generate_dataset: direction motion of one cell per frame needs grid >= " +
                        std::to_string(g.t) + " along both axes, got " + std::to_string(g.h) + "x" +
                        std::to_string(g.w));
        }
    } else {
        if (g.t < 2) throw Error("generate_dataset: order/yes_no need at least 2 frames");
    }
}

inline std::vector<SyntheticSample> generate_dataset(TaskKind kind, int n, uint64_t seed,
                                                     Split split, const GeneratorOptions& opt) {
    if (n < 1) throw Error("generate_dataset: n must be >= 1");
    check_generator_preconditions(kind, opt);
    const auto& g = opt.grid;
    const int n_symbols = generator_symbol_count(opt);
    Rng rng(seed);
    std::vector<SyntheticSample> out;
    out.reserve(n);

    auto blank_frames = [&] {
        return std::vector<std::vector<int>>(g.t, std::vector<int>(g.tokens_per_frame(), tok::BG));
    };
    auto place = [&](std::vector<std::vector<int>>& frames, int frame, int row, int col, int sym) {
        frames[frame][row * g.w + col] = sym;
    };

    // chooses the two event frames for order/yes_no
    auto pick_event_frames = [&](int& early, int& late) {
        if (g.t == 2 || rng.uniform01() < opt.last_frame_bias) {
            late = g.t - 1;
            early = rng.uniform_int(g.t - 1);
        } else {
            late = 1 + rng.uniform_int(g.t - 2);  // in [1, t-2]
            early = rng.uniform_int(late);
        }
    };

    const int n_classes = kind == TaskKind::Direction ? 4 : 2;
    for (int i = 0; i < n; ++i) {
        const int cls = i % n_classes;  // round-robin keeps classes within +-1
        SyntheticSample s;
        s.kind = kind;
        if (kind == TaskKind::Direction) {
            // cls: 0=left 1=right 2=up 3=down; one object moves one cell/frame
            while (true) {
                const bool horizontal = cls < 2;
                const int lane = rng.uniform_int(horizontal ? g.h : g.w);
                const int sym_idx = rng.uniform_int(n_symbols);
                const uint64_t combo =
                    ((static_cast<uint64_t>(cls) * 64 + lane) * 64 + sym_idx) * 4 + 1;
                if (!detail::combo_in_split(combo, split)) continue;
                const int sym = tok::kFirstSymbol + sym_idx;
                s.frames = blank_frames();
                for (int k = 0; k < g.t; ++k) {
                    int row = lane, col = lane;
                    switch (cls) {
                        case 0: row = lane; col = g.w - 1 - k; break;  // left
                        case 1: row = lane; col = k; break;            // right
                        case 2: row = g.h - 1 - k; col = lane; break;  // up
                        case 3: row = k; col = lane; break;            // down
                    }
                    place(s.frames, k, row, col, sym);
                }
                s.query = {tok::QMARK, sym, tok::SEP, tok::SEP, tok::EOS};
                s.answer = tok::A_LEFT + cls;
                s.options = {tok::A_LEFT, tok::A_RIGHT, tok::A_UP, tok::A_DOWN};
                break;
            }
        } else {
            // two distinct event symbols in different frames
            while (true) {
                const int ia = rng.uniform_int(n_symbols);
                int ib = rng.uniform_int(n_symbols - 1);
                if (ib >= ia) ++ib;
                int early = 0, late = 0;
                pick_event_frames(early, late);
                const uint64_t combo = ((static_cast<uint64_t>(std::min(ia, ib)) * 64 +
                                         std::max(ia, ib)) *
                                            64 +
                                        early) *
                                           64 +
                                       late;
                if (!detail::combo_in_split(combo, split)) continue;
                const int sym_a = tok::kFirstSymbol + ia;  // the earlier event
                const int sym_b = tok::kFirstSymbol + ib;
                s.frames = blank_frames();
                place(s.frames, early, rng.uniform_int(g.h), rng.uniform_int(g.w), sym_a);
                place(s.frames, late, rng.uniform_int(g.h), rng.uniform_int(g.w), sym_b);
                if (kind == TaskKind::Order) {
                    // cls 0: answer mentioned first; cls 1: answer mentioned second
                    const int first = cls == 0 ? sym_a : sym_b;
                    const int second = cls == 0 ? sym_b : sym_a;
                    s.query = {tok::QMARK, first, second, tok::SEP, tok::EOS};
                    s.answer = sym_a;
                    s.options = {first, second};
                } else {
                    // "did x come before the other event?" — the video holds
                    // exactly two events, so probing one symbol asks the same
                    // question as "did x precede y". cls 0: yes, cls 1: no.
                    const int x = cls == 0 ? sym_a : sym_b;
                    s.query = {tok::QMARK, x, tok::SEP, tok::SEP, tok::EOS};
                    s.answer = cls == 0 ? tok::A_YES : tok::A_NO;
                    s.options = {tok::A_YES, tok::A_NO};
                }
                break;
            }
        }
        out.push_back(std::move(s));
    }
    return out;
}

// ---------------------------------------------------------------------------
// evaluation

struct EvalModifiers {
    std::vector<InterventionSpec> specs;
    const EvictionPlan* eviction = nullptr;
};

struct EvalResult {
    double accuracy = 0.0;        // argmax over the sample's options
    double mean_p_gt = 0.0;       // mean probability of the ground-truth token
    double mean_pc = 0.0;         // only meaningful when modifiers were given
    std::vector<int> predictions;  // chosen option token per sample
};

template <Scalar S>
EvalResult evaluate(const Model<S>& model, const std::vector<SyntheticSample>& samples,
                    const EvalModifiers& modifiers = {}, int threads = thread_budget()) {
    if (samples.empty()) throw Error("evaluate: empty sample set");
    const TokenLayout layout = build_layout(model.config, kInstructionLen, kQueryLen);
    const PositionIds ids = assign_position_ids(layout, model.config.grid);
    const auto compiled =
        compile_interventions<S>(modifiers.specs, model.config, layout, ids);
    const bool has_modifiers = !modifiers.specs.empty() || modifiers.eviction != nullptr;

    struct PerSample {
        double p_gt = 0, pc = 0;
        int correct = 0;
        int prediction = 0;
    };
    std::vector<PerSample> rows(samples.size());
    parallel_for(static_cast<index_t>(samples.size()), [&](index_t i) {
        const SyntheticSample& s = samples[i];
        const std::vector<int> base_tokens = encode_tokens(s);
        if (static_cast<int>(base_tokens.size()) != layout.total_len) {
            throw ShapeError("evaluate: sample does not fit the model layout");
        }
        Vec<S> base_p;
        if (has_modifiers) {
            const auto base =
                forward(model, std::span<const int>(base_tokens), layout, ids);
            base_p = next_token_distribution<S>(base.logits.row(layout.last_index()).transpose());
        }
        std::vector<int> toks =
            compiled.reverse_frames ? reverse_frames(base_tokens, layout) : base_tokens;
        ForwardOptions<S> opt;
        opt.hooks = compiled.hooks;
        opt.eviction = modifiers.eviction;
        const auto res = forward(model, std::span<const int>(toks), layout, ids, opt);
        const Vec<S> p = next_token_distribution<S>(res.logits.row(layout.last_index()).transpose());
        int best = s.options.front();
        for (int o : s.options) {
            if (p(o) > p(best)) best = o;
        }
        rows[i].prediction = best;
        rows[i].correct = best == s.answer ? 1 : 0;
        rows[i].p_gt = static_cast<double>(p(s.answer));
        if (has_modifiers) rows[i].pc = compute_pc<S>(p, base_p, s.answer);
    }, threads);

    EvalResult out;
    KahanSum acc, pgt, pc;
    out.predictions.resize(samples.size());
    for (size_t i = 0; i < rows.size(); ++i) {
        acc.add(rows[i].correct);
        pgt.add(rows[i].p_gt);
        pc.add(rows[i].pc);
        out.predictions[i] = rows[i].prediction;
    }
    out.accuracy = acc.value() / static_cast<double>(samples.size());
    out.mean_p_gt = pgt.value() / static_cast<double>(samples.size());
    out.mean_pc = pc.value() / static_cast<double>(samples.size());
    return out;
}

// ---------------------------------------------------------------------------
// line-delimited import/export

inline std::string to_jsonl(const std::vector<SyntheticSample>& samples, const FrameGrid& grid) {
    std::ostringstream out;
    for (const auto& s : samples) {
        nlohmann::json j;
        j["task"] = task_name(s.kind);
        j["grid"] = {grid.t, grid.h, grid.w};
        j["frames"] = s.frames;
        j["query"] = s.query;
        j["answer"] = s.answer;
        j["options"] = s.options;
        out << j.dump() << "\n";
    }
    return out.str();
}

inline std::vector<SyntheticSample> from_jsonl(const std::string& text, FrameGrid* grid_out = nullptr) {
    std::vector<SyntheticSample> out;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw Error("dataset line " + std::to_string(lineno) + ": " + e.what());
        }
        SyntheticSample s;
        s.kind = task_from_name(j.at("task").get<std::string>());
        s.frames = j.at("frames").get<std::vector<std::vector<int>>>();
        s.query = j.at("query").get<std::vector<int>>();
        s.answer = j.at("answer").get<int>();
        s.options = j.at("options").get<std::vector<int>>();
        if (grid_out && j.contains("grid")) {
            const auto g = j.at("grid").get<std::vector<int>>();
            if (g.size() != 3) throw Error("dataset line " + std::to_string(lineno) + ": bad grid");
            *grid_out = {g[0], g[1], g[2]};
        }
        out.push_back(std::move(s));
    }
    return out;
}

inline void write_jsonl_file(const std::string& path, const std::vector<SyntheticSample>& samples,
                             const FrameGrid& grid) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot open dataset file for writing: " + path);
    f << to_jsonl(samples, grid);
    if (!f) throw Error("short write to dataset file: " + path);
}

inline std::vector<SyntheticSample> read_jsonl_file(const std::string& path,
                                                    FrameGrid* grid_out = nullptr) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error("cannot open dataset file: " + path);
    std::ostringstream buf;
    buf << f.rdbuf();
    return from_jsonl(buf.str(), grid_out);
}

}  // namespace tplab

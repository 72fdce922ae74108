// Decoder-only transformer over the instruction|frames|query layout, with
// pluggable rotary encodings, hook points for interventions, a segment-aware
// KV cache with eviction, and activation recording.
#pragma once

#include <cstring>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "tplab/config.hpp"
#include "tplab/layout.hpp"
#include "tplab/numerics.hpp"
#include "tplab/rope.hpp"

namespace tplab {

inline constexpr float kLayerNormEps = 1e-5f;

template <Scalar S>
S gelu(S x) {
    const S k = static_cast<S>(0.7978845608028654);  // sqrt(2/pi)
    const S inner = k * (x + static_cast<S>(0.044715) * x * x * x);
    return static_cast<S>(0.5) * x * (static_cast<S>(1) + std::tanh(inner));
}

template <Scalar S>
S gelu_derivative(S x) {
    const S k = static_cast<S>(0.7978845608028654);
    const S inner = k * (x + static_cast<S>(0.044715) * x * x * x);
    const S t = std::tanh(inner);
    const S sech2 = static_cast<S>(1) - t * t;
    const S dinner = k * (static_cast<S>(1) + static_cast<S>(3) * static_cast<S>(0.044715) * x * x);
    return static_cast<S>(0.5) * (static_cast<S>(1) + t) + static_cast<S>(0.5) * x * sech2 * dinner;
}

// ---------------------------------------------------------------------------
// weights

template <Scalar S>
struct LayerWeights {
    Vec<S> ln1_g, ln1_b;
    Mat<S> wq, wk, wv, wo;
    Vec<S> ln2_g, ln2_b;
    Mat<S> w1;
    Vec<S> b1;
    Mat<S> w2;
    Vec<S> b2;
};

template <Scalar S>
struct Weights {
    Mat<S> embedding;  // vocab x d
    std::vector<LayerWeights<S>> layers;
    Vec<S> lnf_g, lnf_b;
    Mat<S> unembed;  // d x vocab
};

// Visits every parameter block as a flat span, in the declared order used by
// the checkpoint format and the optimizer.
template <Scalar S, class Fn>
void visit_params(Weights<S>& w, Fn&& fn) {
    auto mat = [&](const char* name, Mat<S>& m) { fn(name, m.data(), static_cast<size_t>(m.size())); };
    auto vec = [&](const char* name, Vec<S>& v) { fn(name, v.data(), static_cast<size_t>(v.size())); };
    mat("embedding", w.embedding);
    for (auto& l : w.layers) {
        vec("ln1_g", l.ln1_g);
        vec("ln1_b", l.ln1_b);
        mat("wq", l.wq);
        mat("wk", l.wk);
        mat("wv", l.wv);
        mat("wo", l.wo);
        vec("ln2_g", l.ln2_g);
        vec("ln2_b", l.ln2_b);
        mat("w1", l.w1);
        vec("b1", l.b1);
        mat("w2", l.w2);
        vec("b2", l.b2);
    }
    vec("lnf_g", w.lnf_g);
    vec("lnf_b", w.lnf_b);
    mat("unembed", w.unembed);
}

template <Scalar S>
size_t param_count(const Weights<S>& w) {
    size_t n = 0;
    visit_params(const_cast<Weights<S>&>(w), [&](const char*, S*, size_t len) { n += len; });
    return n;
}

template <Scalar S>
struct Model {
    ModelConfig config;
    Weights<S> weights;

    static Model random_init(const ModelConfig& cfg, uint64_t seed) {
        cfg.validate();
        Model m;
        m.config = cfg;
        auto& w = m.weights;
        const int d = cfg.d_model;
        w.embedding.resize(cfg.vocab_size, d);
        w.layers.resize(cfg.n_layers);
        for (auto& l : w.layers) {
            l.ln1_g = Vec<S>::Ones(d);
            l.ln1_b = Vec<S>::Zero(d);
            l.wq.resize(d, d);
            l.wk.resize(d, d);
            l.wv.resize(d, d);
            l.wo.resize(d, d);
            l.ln2_g = Vec<S>::Ones(d);
            l.ln2_b = Vec<S>::Zero(d);
            l.w1.resize(d, cfg.d_ffn());
            l.b1 = Vec<S>::Zero(cfg.d_ffn());
            l.w2.resize(cfg.d_ffn(), d);
            l.b2 = Vec<S>::Zero(d);
        }
        w.lnf_g = Vec<S>::Ones(d);
        w.lnf_b = Vec<S>::Zero(d);
        w.unembed.resize(d, cfg.vocab_size);
        Rng rng(seed);
        auto fill = [&](Mat<S>& mat) {
            for (index_t i = 0; i < mat.rows(); ++i)
                for (index_t j = 0; j < mat.cols(); ++j)
                    mat(i, j) = static_cast<S>(rng.normal() * 0.02);
        };
        fill(w.embedding);
        for (auto& l : w.layers) {
            fill(l.wq);
            fill(l.wk);
            fill(l.wv);
            fill(l.wo);
            fill(l.w1);
            fill(l.w2);
        }
        fill(w.unembed);
        return m;
    }

    template <Scalar T>
    Model<T> cast() const {
        Model<T> out;
        out.config = config;
        out.weights.embedding = weights.embedding.template cast<T>();
        out.weights.layers.resize(weights.layers.size());
        for (size_t i = 0; i < weights.layers.size(); ++i) {
            const auto& a = weights.layers[i];
            auto& b = out.weights.layers[i];
            b.ln1_g = a.ln1_g.template cast<T>();
            b.ln1_b = a.ln1_b.template cast<T>();
            b.wq = a.wq.template cast<T>();
            b.wk = a.wk.template cast<T>();
            b.wv = a.wv.template cast<T>();
            b.wo = a.wo.template cast<T>();
            b.ln2_g = a.ln2_g.template cast<T>();
            b.ln2_b = a.ln2_b.template cast<T>();
            b.w1 = a.w1.template cast<T>();
            b.b1 = a.b1.template cast<T>();
            b.w2 = a.w2.template cast<T>();
            b.b2 = a.b2.template cast<T>();
        }
        out.weights.lnf_g = weights.lnf_g.template cast<T>();
        out.weights.lnf_b = weights.lnf_b.template cast<T>();
        out.weights.unembed = weights.unembed.template cast<T>();
        return out;
    }
};

// ---------------------------------------------------------------------------
// KV cache and eviction

// Which layer a token stops contributing at. A token evicted at layer L is
// absent from attention at L and every later layer.
struct EvictionPlan {
    std::vector<int> first_evict;  // per token; n_layers (or more) == never

    static EvictionPlan none(int total_len, int n_layers) {
        EvictionPlan p;
        p.first_evict.assign(total_len, n_layers);
        return p;
    }
    bool live(int layer, int token) const { return layer < first_evict[token]; }
    bool any(int n_layers) const {
        for (int f : first_evict)
            if (f < n_layers) return true;
        return false;
    }
};

template <Scalar S>
struct KVCache {
    struct Layer {
        Mat<S> k, v;  // capacity x d_model, first `count` rows valid
        std::vector<uint8_t> live;
        int count = 0;
    };
    std::vector<Layer> layers;
    std::vector<std::pair<int, int>> eviction_log;  // (layer, token)
    int d_model = 0;

    void init(int n_layers, int capacity, int d) {
        d_model = d;
        layers.assign(n_layers, {});
        for (auto& l : layers) {
            l.k.resize(capacity, d);
            l.v.resize(capacity, d);
            l.live.assign(capacity, 0);
            l.count = 0;
        }
        eviction_log.clear();
    }

    void append(int layer, const Eigen::Ref<const Vec<S>>& krow, const Eigen::Ref<const Vec<S>>& vrow,
                bool is_live) {
        auto& l = layers[layer];
        l.k.row(l.count) = krow.transpose();
        l.v.row(l.count) = vrow.transpose();
        l.live[l.count] = is_live ? 1 : 0;
        if (!is_live) eviction_log.emplace_back(layer, l.count);
        ++l.count;
    }

    int live_count(int layer) const {
        const auto& l = layers[layer];
        int n = 0;
        for (int i = 0; i < l.count; ++i) n += l.live[i];
        return n;
    }

    // live tokens x 2 x d_model x bytes per value
    size_t bytes(int layer) const {
        return static_cast<size_t>(live_count(layer)) * 2 * d_model * sizeof(S);
    }
    size_t total_bytes() const {
        size_t b = 0;
        for (size_t l = 0; l < layers.size(); ++l) b += bytes(static_cast<int>(l));
        return b;
    }
};

// ---------------------------------------------------------------------------
// hooks

enum class HookSite { PrePe, PostScores, PostAttention };

template <Scalar S>
struct PrePeContext {
    int layer;
    Mat<S>& q;  // n x d_model, before rotation
    Mat<S>& k;
    const PositionIds*& ids;  // swap to override this layer's ids
    bool& pe_enabled;         // clear to make PE the identity this layer
};

template <Scalar S>
struct PostScoresContext {
    int layer;
    std::vector<Mat<S>>& scores;  // per head, scaled QK^T (compacted columns under eviction)
    Mat<S>& extra_mask;           // additive {0,-inf}, full n x n, composed with the causal mask
    const std::vector<int>& cols; // source column -> token index
};

template <Scalar S>
struct PostAttentionContext {
    int layer;
    std::vector<Mat<S>>& weights;  // per head, post-softmax
    Mat<S>& attn_out;              // n x d_model, after the output projection
    const std::vector<int>& cols;
};

template <Scalar S>
struct HookPoint {
    using PrePeFn = std::function<void(PrePeContext<S>&)>;
    using PostScoresFn = std::function<void(PostScoresContext<S>&)>;
    using PostAttentionFn = std::function<void(PostAttentionContext<S>&)>;

    int layer = 0;
    HookSite site = HookSite::PrePe;
    std::variant<PrePeFn, PostScoresFn, PostAttentionFn> callback;

    static HookPoint pre_pe(int layer, PrePeFn fn) {
        return {layer, HookSite::PrePe, std::move(fn)};
    }
    static HookPoint post_scores(int layer, PostScoresFn fn) {
        return {layer, HookSite::PostScores, std::move(fn)};
    }
    static HookPoint post_attention(int layer, PostAttentionFn fn) {
        return {layer, HookSite::PostAttention, std::move(fn)};
    }
};

struct RecordingOptions {
    bool scores = false;   // scaled pre-mask scores per head
    bool weights = false;  // post-softmax weights per head
    bool attn_out = false;
};

template <Scalar S>
struct Recorded {
    std::vector<std::vector<Mat<S>>> scores;   // [layer][head]
    std::vector<std::vector<Mat<S>>> weights;  // [layer][head]
    std::vector<Mat<S>> attn_out;              // [layer]
    std::vector<std::vector<int>> cols;        // [layer] source column -> token index
};

// Per-layer attention accounting gathered during a run.
struct RunStats {
    std::vector<int64_t> attention_pairs;  // admissible (i,j) per layer
    std::vector<int> live_tokens;          // per layer
    int total_len = 0;
    int d_model = 0;
    size_t bytes_per_value = 0;
};

template <Scalar S>
struct ForwardOptions {
    std::vector<HookPoint<S>> hooks;
    const EvictionPlan* eviction = nullptr;
    RecordingOptions record;
    KVCache<S>* cache = nullptr;  // populated when given
};

template <Scalar S>
struct ForwardResult {
    Mat<S> logits;  // n x vocab
    Recorded<S> recorded;
    RunStats stats;
};

template <Scalar S>
Mat<S> causal_mask(index_t n) {
    Mat<S> m = Mat<S>::Zero(n, n);
    for (index_t i = 0; i < n; ++i)
        for (index_t j = i + 1; j < n; ++j) m(i, j) = neg_inf<S>;
    return m;
}

// ---------------------------------------------------------------------------
// full-sequence forward

template <Scalar S>
ForwardResult<S> forward(const Model<S>& model, std::span<const int> tokens,
                         const TokenLayout& layout, const PositionIds& ids,
                         const ForwardOptions<S>& options = {}) {
    const ModelConfig& cfg = model.config;
    const int n = static_cast<int>(tokens.size());
    if (n != layout.total_len) {
        throw ShapeError("forward: tokens " + std::to_string(n) + " vs layout " +
                         std::to_string(layout.total_len));
    }
    if (ids.size() != n) {
        throw ShapeError("forward: ids " + std::to_string(ids.size()) + " vs tokens " +
                         std::to_string(n));
    }
    for (int i = 0; i < n; ++i) {
        if (tokens[i] < 0 || tokens[i] >= cfg.vocab_size) {
            throw Error("forward: token id " + std::to_string(tokens[i]) + " at position " +
                        std::to_string(i) + " outside vocab " + std::to_string(cfg.vocab_size));
        }
    }

    const auto& w = model.weights;
    const S eps = static_cast<S>(kLayerNormEps);
    const int dh = cfg.d_head;
    const S inv_sqrt_dh = static_cast<S>(1.0 / std::sqrt(static_cast<double>(dh)));

    ForwardResult<S> result;
    result.stats.total_len = n;
    result.stats.d_model = cfg.d_model;
    result.stats.bytes_per_value = sizeof(S);
    result.stats.attention_pairs.assign(cfg.n_layers, 0);
    result.stats.live_tokens.assign(cfg.n_layers, 0);
    if (options.record.scores) result.recorded.scores.resize(cfg.n_layers);
    if (options.record.weights) result.recorded.weights.resize(cfg.n_layers);
    if (options.record.attn_out) result.recorded.attn_out.resize(cfg.n_layers);
    result.recorded.cols.resize(cfg.n_layers);

    if (options.cache) options.cache->init(cfg.n_layers, n, cfg.d_model);

    Mat<S> h(n, cfg.d_model);
    for (int i = 0; i < n; ++i) h.row(i) = w.embedding.row(tokens[i]);

    const Mat<S> mc = causal_mask<S>(n);
    const RopeTable<S> default_table = make_rope_table<S>(ids, cfg.pe_mode, dh);

    std::vector<Mat<S>> head_scores(cfg.n_heads);
    std::vector<Mat<S>> head_weights(cfg.n_heads);

    for (int layer = 0; layer < cfg.n_layers; ++layer) {
        const auto& lw = w.layers[layer];
        const Mat<S> x = layer_norm<S>(h, lw.ln1_g, lw.ln1_b, eps);
        Mat<S> q = matmul<S>(x, lw.wq);
        Mat<S> k = matmul<S>(x, lw.wk);
        const Mat<S> v = matmul<S>(x, lw.wv);

        const PositionIds* layer_ids = &ids;
        bool pe_enabled = true;
        for (const auto& hook : options.hooks) {
            if (hook.layer != layer || hook.site != HookSite::PrePe) continue;
            PrePeContext<S> ctx{layer, q, k, layer_ids, pe_enabled};
            std::get<typename HookPoint<S>::PrePeFn>(hook.callback)(ctx);
        }
        if (pe_enabled && cfg.pe_mode != PeMode::None) {
            if (layer_ids == &ids) {
                apply_rope_inplace(q, default_table, cfg.n_heads, dh);
                apply_rope_inplace(k, default_table, cfg.n_heads, dh);
            } else {
                const RopeTable<S> t = make_rope_table<S>(*layer_ids, cfg.pe_mode, dh);
                apply_rope_inplace(q, t, cfg.n_heads, dh);
                apply_rope_inplace(k, t, cfg.n_heads, dh);
            }
        }

        // live source columns at this layer
        std::vector<int>& cols = result.recorded.cols[layer];
        cols.clear();
        cols.reserve(n);
        for (int j = 0; j < n; ++j) {
            if (!options.eviction || options.eviction->live(layer, j)) cols.push_back(j);
        }
        const int m = static_cast<int>(cols.size());
        const bool compact = m != n;
        result.stats.live_tokens[layer] = m;

        if (options.cache) {
            for (int j = 0; j < n; ++j) {
                options.cache->append(layer, k.row(j).transpose(), v.row(j).transpose(),
                                      !options.eviction || options.eviction->live(layer, j));
            }
        }

        Mat<S> ksrc, vsrc;
        if (compact) {
            ksrc.resize(m, cfg.d_model);
            vsrc.resize(m, cfg.d_model);
            for (int c = 0; c < m; ++c) {
                ksrc.row(c) = k.row(cols[c]);
                vsrc.row(c) = v.row(cols[c]);
            }
        }
        const Mat<S>& keff = compact ? ksrc : k;
        const Mat<S>& veff = compact ? vsrc : v;

        for (int head = 0; head < cfg.n_heads; ++head) {
            const Mat<S> qh = q.block(0, head * dh, n, dh);
            const Mat<S> khT = keff.block(0, head * dh, m, dh).transpose();
            head_scores[head] = matmul<S>(qh, khT) * inv_sqrt_dh;
        }

        Mat<S> extra_mask;
        bool have_extra = false;
        for (const auto& hook : options.hooks) {
            if (hook.layer != layer || hook.site != HookSite::PostScores) continue;
            if (!have_extra) {
                extra_mask = Mat<S>::Zero(n, n);
                have_extra = true;
            }
            PostScoresContext<S> ctx{layer, head_scores, extra_mask, cols};
            std::get<typename HookPoint<S>::PostScoresFn>(hook.callback)(ctx);
        }

        Mat<S> mask(n, m);
        if (compact || have_extra) {
            for (int i = 0; i < n; ++i) {
                for (int c = 0; c < m; ++c) {
                    const int j = cols[c];
                    mask(i, c) = have_extra ? mc(i, j) + extra_mask(i, j) : mc(i, j);
                }
            }
        } else {
            mask = mc;
        }

        if (options.record.scores) result.recorded.scores[layer] = head_scores;

        Mat<S> attn_cat(n, cfg.d_model);
        for (int head = 0; head < cfg.n_heads; ++head) {
            try {
                head_weights[head] = masked_softmax<S>(head_scores[head], mask);
            } catch (const FullyMaskedRowError& e) {
                throw FullyMaskedRowError(
                    e.row, "forward: attention row fully masked at layer " + std::to_string(layer) +
                               ", head " + std::to_string(head) + ", token " + std::to_string(e.row));
            }
            const Mat<S> vh = veff.block(0, head * dh, m, dh);
            attn_cat.block(0, head * dh, n, dh) = matmul<S>(head_weights[head], vh);
        }
        // one mask shared by all heads, so pair accounting is per layer
        int64_t pairs = 0;
        for (int i = 0; i < n; ++i)
            for (int c = 0; c < m; ++c)
                if (std::isfinite(static_cast<double>(mask(i, c)))) ++pairs;
        result.stats.attention_pairs[layer] = pairs;

        Mat<S> attn_out = matmul<S>(attn_cat, lw.wo);
        for (const auto& hook : options.hooks) {
            if (hook.layer != layer || hook.site != HookSite::PostAttention) continue;
            PostAttentionContext<S> ctx{layer, head_weights, attn_out, cols};
            std::get<typename HookPoint<S>::PostAttentionFn>(hook.callback)(ctx);
        }
        if (options.record.weights) result.recorded.weights[layer] = head_weights;
        if (options.record.attn_out) result.recorded.attn_out[layer] = attn_out;

        h += attn_out;

        const Mat<S> x2 = layer_norm<S>(h, lw.ln2_g, lw.ln2_b, eps);
        Mat<S> u = matmul<S>(x2, lw.w1);
        u.rowwise() += lw.b1.transpose();
        for (index_t i = 0; i < u.rows(); ++i)
            for (index_t j = 0; j < u.cols(); ++j) u(i, j) = gelu(u(i, j));
        Mat<S> f = matmul<S>(u, lw.w2);
        f.rowwise() += lw.b2.transpose();
        h += f;
    }

    const Mat<S> xf = layer_norm<S>(h, w.lnf_g, w.lnf_b, eps);
    result.logits = matmul<S>(xf, w.unembed);
    check_finite(result.logits, "forward logits");
    return result;
}

// ---------------------------------------------------------------------------
// incremental decoding against a KV cache
//
// Processes the sequence one token at a time, storing per-layer k/v in the
// cache (honoring the eviction plan) and attending over stored live entries.
// Hooks are a full-sequence feature and are not supported here.

template <Scalar S>
Mat<S> forward_incremental(const Model<S>& model, std::span<const int> tokens,
                           const TokenLayout& layout, const PositionIds& ids, KVCache<S>& cache,
                           const EvictionPlan* eviction = nullptr) {
    const ModelConfig& cfg = model.config;
    const int n = static_cast<int>(tokens.size());
    if (n != layout.total_len || ids.size() != n) {
        throw ShapeError("forward_incremental: layout/ids mismatch");
    }
    const auto& w = model.weights;
    const S eps = static_cast<S>(kLayerNormEps);
    const int dh = cfg.d_head;
    const S inv_sqrt_dh = static_cast<S>(1.0 / std::sqrt(static_cast<double>(dh)));
    const RopeTable<S> table = make_rope_table<S>(ids, cfg.pe_mode, dh);

    cache.init(cfg.n_layers, n, cfg.d_model);
    Mat<S> logits(n, cfg.vocab_size);

    for (int i = 0; i < n; ++i) {
        if (tokens[i] < 0 || tokens[i] >= cfg.vocab_size) {
            throw Error("forward_incremental: token id out of vocab at position " +
                        std::to_string(i));
        }
        Mat<S> h = w.embedding.row(tokens[i]);
        for (int layer = 0; layer < cfg.n_layers; ++layer) {
            const auto& lw = w.layers[layer];
            const Mat<S> x = layer_norm<S>(h, lw.ln1_g, lw.ln1_b, eps);
            Mat<S> q = matmul<S>(x, lw.wq);
            Mat<S> k = matmul<S>(x, lw.wk);
            const Mat<S> v = matmul<S>(x, lw.wv);
            if (cfg.pe_mode != PeMode::None) {
                // single-row rotation with this position's table entries
                const int pairs = dh / 2;
                for (int head = 0; head < cfg.n_heads; ++head) {
                    for (Mat<S>* mat : {&q, &k}) {
                        S* row = mat->row(0).data() + head * dh;
                        for (int p = 0; p < pairs; ++p) {
                            const S c = table.cos(i, p), s = table.sin(i, p);
                            const S a = row[2 * p], b = row[2 * p + 1];
                            row[2 * p] = a * c - b * s;
                            row[2 * p + 1] = a * s + b * c;
                        }
                    }
                }
            }
            const bool is_live = !eviction || eviction->live(layer, i);
            cache.append(layer, k.row(0).transpose(), v.row(0).transpose(), is_live);

            auto& cl = cache.layers[layer];
            std::vector<int> live;
            live.reserve(cl.count);
            for (int j = 0; j < cl.count; ++j)
                if (cl.live[j]) live.push_back(j);
            const int m = static_cast<int>(live.size());
            if (m == 0) {
                throw FullyMaskedRowError(i, "forward_incremental: no live source at layer " +
                                                 std::to_string(layer) + ", token " +
                                                 std::to_string(i));
            }
            Mat<S> ksrc(m, cfg.d_model), vsrc(m, cfg.d_model);
            for (int c = 0; c < m; ++c) {
                ksrc.row(c) = cl.k.row(live[c]);
                vsrc.row(c) = cl.v.row(live[c]);
            }
            Mat<S> attn_cat(1, cfg.d_model);
            const Mat<S> zero_mask = Mat<S>::Zero(1, m);
            for (int head = 0; head < cfg.n_heads; ++head) {
                const Mat<S> qh = q.block(0, head * dh, 1, dh);
                const Mat<S> khT = ksrc.block(0, head * dh, m, dh).transpose();
                const Mat<S> scores = matmul<S>(qh, khT) * inv_sqrt_dh;
                const Mat<S> weights = masked_softmax<S>(scores, zero_mask);
                attn_cat.block(0, head * dh, 1, dh) =
                    matmul<S>(weights, vsrc.block(0, head * dh, m, dh));
            }
            h += matmul<S>(attn_cat, lw.wo);
            const Mat<S> x2 = layer_norm<S>(h, lw.ln2_g, lw.ln2_b, eps);
            Mat<S> u = matmul<S>(x2, lw.w1);
            u.rowwise() += lw.b1.transpose();
            for (index_t jj = 0; jj < u.cols(); ++jj) u(0, jj) = gelu(u(0, jj));
            Mat<S> f = matmul<S>(u, lw.w2);
            f.rowwise() += lw.b2.transpose();
            h += f;
        }
        const Mat<S> xf = layer_norm<S>(h, w.lnf_g, w.lnf_b, eps);
        logits.row(i) = matmul<S>(xf, w.unembed).row(0);
    }
    check_finite(logits, "forward_incremental logits");
    return logits;
}

// Softmax of a final-position logit row.
template <Scalar S>
Vec<S> next_token_distribution(const Vec<S>& logits) {
    return softmax_vector<S>(logits);
}

}  // namespace tplab

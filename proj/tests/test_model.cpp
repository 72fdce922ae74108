#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "tplab/checkpoint.hpp"
#include "tplab/interventions.hpp"
#include "tplab/model.hpp"

using namespace tplab;

namespace {

ModelConfig toy_config(int layers = 2, PeMode pe = PeMode::Rotary3d) {
    ModelConfig cfg;
    cfg.n_layers = layers;
    cfg.d_model = 16;
    cfg.n_heads = 2;
    cfg.d_head = 8;
    cfg.ffn_mult = 2;
    cfg.vocab_size = 24;
    cfg.grid = {3, 2, 2};
    cfg.pe_mode = pe;
    return cfg;
}

struct Fixture {
    ModelConfig cfg;
    Model<float> model;
    TokenLayout layout;
    PositionIds ids;
    std::vector<int> tokens;

    explicit Fixture(int layers = 2, PeMode pe = PeMode::Rotary3d, uint64_t seed = 5)
        : cfg(toy_config(layers, pe)),
          model(Model<float>::random_init(cfg, seed)),
          layout(build_layout(cfg, 2, 3)),
          ids(assign_position_ids(layout, cfg.grid)) {
        Rng rng(seed + 1);
        tokens.resize(layout.total_len);
        for (auto& t : tokens) t = rng.uniform_int(cfg.vocab_size);
    }
};

}  // namespace

TEST_CASE("forward shapes, finite logits, and vocab validation") {
    Fixture f;
    const auto res = forward(f.model, std::span<const int>(f.tokens), f.layout, f.ids);
    CHECK(res.logits.rows() == f.layout.total_len);
    CHECK(res.logits.cols() == f.cfg.vocab_size);
    CHECK(res.logits.allFinite());

    auto bad = f.tokens;
    bad[3] = f.cfg.vocab_size;
    CHECK_THROWS_AS(forward(f.model, std::span<const int>(bad), f.layout, f.ids), Error);
}

TEST_CASE("causality: edits after position i leave logits at i bitwise unchanged") {
    Fixture f(3);
    const auto base = forward(f.model, std::span<const int>(f.tokens), f.layout, f.ids);
    Rng rng(77);
    for (int trial = 0; trial < 5; ++trial) {
        const int cut = 1 + rng.uniform_int(f.layout.total_len - 1);
        auto edited = f.tokens;
        for (int j = cut; j < f.layout.total_len; ++j) {
            edited[j] = rng.uniform_int(f.cfg.vocab_size);
        }
        const auto res = forward(f.model, std::span<const int>(edited), f.layout, f.ids);
        for (int i = 0; i < cut; ++i) {
            for (int v = 0; v < f.cfg.vocab_size; ++v) {
                REQUIRE(res.logits(i, v) == base.logits(i, v));
            }
        }
    }
}

TEST_CASE("incremental decoding with a KV cache matches the full forward") {
    for (PeMode pe : {PeMode::None, PeMode::Rotary1d, PeMode::Rotary3d}) {
        Fixture f(3, pe);
        const auto full = forward(f.model, std::span<const int>(f.tokens), f.layout, f.ids);
        KVCache<float> cache;
        const Matf inc = forward_incremental(f.model, std::span<const int>(f.tokens), f.layout,
                                             f.ids, cache);
        REQUIRE(inc.rows() == full.logits.rows());
        for (index_t i = 0; i < inc.rows(); ++i)
            for (index_t j = 0; j < inc.cols(); ++j)
                CHECK(std::abs(inc(i, j) - full.logits(i, j)) < 1e-5f);
        // every token live at every layer
        for (int l = 0; l < f.cfg.n_layers; ++l) {
            CHECK(cache.live_count(l) == f.layout.total_len);
            CHECK(cache.bytes(l) ==
                  static_cast<size_t>(f.layout.total_len) * 2 * f.cfg.d_model * sizeof(float));
        }
        CHECK(cache.eviction_log.empty());
    }
}

TEST_CASE("populating a fresh cache does not change full-forward logits") {
    Fixture f;
    const auto plain = forward(f.model, std::span<const int>(f.tokens), f.layout, f.ids);
    ForwardOptions<float> opt;
    KVCache<float> cache;
    opt.cache = &cache;
    const auto with_cache = forward(f.model, std::span<const int>(f.tokens), f.layout, f.ids, opt);
    CHECK(plain.logits == with_cache.logits);
    CHECK(cache.layers.size() == static_cast<size_t>(f.cfg.n_layers));
    CHECK(cache.layers[0].count == f.layout.total_len);
}

TEST_CASE("hook transparency: identity callbacks are bit-identical to no hooks") {
    Fixture f(3);
    const auto base = forward(f.model, std::span<const int>(f.tokens), f.layout, f.ids);
    ForwardOptions<float> opt;
    opt.hooks.push_back(HookPoint<float>::pre_pe(0, [](PrePeContext<float>&) {}));
    opt.hooks.push_back(HookPoint<float>::post_scores(1, [](PostScoresContext<float>&) {}));
    opt.hooks.push_back(HookPoint<float>::post_attention(2, [](PostAttentionContext<float>&) {}));
    const auto hooked = forward(f.model, std::span<const int>(f.tokens), f.layout, f.ids, opt);
    CHECK(base.logits == hooked.logits);
}

TEST_CASE("eviction plan removes tokens from attention and the accounting") {
    Fixture f(3);
    EvictionPlan plan = EvictionPlan::none(f.layout.total_len, f.cfg.n_layers);
    for (int j : f.layout.visual_indices()) plan.first_evict[j] = 1;  // gone from layer 1 on

    ForwardOptions<float> opt;
    opt.eviction = &plan;
    KVCache<float> cache;
    opt.cache = &cache;
    const auto res = forward(f.model, std::span<const int>(f.tokens), f.layout, f.ids, opt);
    CHECK(res.logits.allFinite());

    const int n = f.layout.total_len;
    const int vis = f.layout.visual().size();
    CHECK(res.stats.live_tokens[0] == n);
    CHECK(res.stats.live_tokens[1] == n - vis);
    CHECK(res.stats.live_tokens[2] == n - vis);
    CHECK(cache.live_count(0) == n);
    CHECK(cache.live_count(1) == n - vis);
    CHECK(cache.bytes(1) == static_cast<size_t>(n - vis) * 2 * f.cfg.d_model * sizeof(float));
    CHECK(cache.eviction_log.size() == static_cast<size_t>(2 * vis));

    // incremental path agrees with the compacted full forward
    KVCache<float> cache2;
    const Matf inc = forward_incremental(f.model, std::span<const int>(f.tokens), f.layout, f.ids,
                                         cache2, &plan);
    for (index_t j = 0; j < inc.cols(); ++j) {
        CHECK(std::abs(inc(n - 1, j) - res.logits(n - 1, j)) < 1e-5f);
    }
}

TEST_CASE("fully masked attention rows surface layer and token context") {
    Fixture f;
    EvictionPlan plan = EvictionPlan::none(f.layout.total_len, f.cfg.n_layers);
    plan.first_evict[0] = 1;  // token 0 has no live source left at layer 1
    ForwardOptions<float> opt;
    opt.eviction = &plan;
    bool threw = false;
    try {
        forward(f.model, std::span<const int>(f.tokens), f.layout, f.ids, opt);
    } catch (const FullyMaskedRowError& e) {
        threw = true;
        const std::string what = e.what();
        CHECK(what.find("layer 1") != std::string::npos);
        CHECK(what.find("token 0") != std::string::npos);
    }
    CHECK(threw);
}

TEST_CASE("one-layer model without PE is invariant to context permutation") {
    Fixture f(1, PeMode::None, 9);
    const int n = f.layout.total_len;
    const auto base = forward(f.model, std::span<const int>(f.tokens), f.layout, f.ids);
    Rng rng(31);
    for (int trial = 0; trial < 4; ++trial) {
        auto perm = rng.permutation(n - 1);  // permute all context tokens, keep the final one
        auto shuffled = f.tokens;
        for (int i = 0; i < n - 1; ++i) shuffled[i] = f.tokens[perm[i]];
        const auto res = forward(f.model, std::span<const int>(shuffled), f.layout, f.ids);
        for (int v = 0; v < f.cfg.vocab_size; ++v) {
            CHECK(std::abs(res.logits(n - 1, v) - base.logits(n - 1, v)) < 1e-5f);
        }
    }

    // with two layers the same permutation moves the final logits
    Fixture g(2, PeMode::None, 9);
    const auto gbase = forward(g.model, std::span<const int>(g.tokens), g.layout, g.ids);
    auto perm = Rng(31).permutation(n - 1);
    auto shuffled = g.tokens;
    for (int i = 0; i < n - 1; ++i) shuffled[i] = g.tokens[perm[i]];
    const auto gres = forward(g.model, std::span<const int>(shuffled), g.layout, g.ids);
    float max_diff = 0.f;
    for (int v = 0; v < g.cfg.vocab_size; ++v) {
        max_diff = std::max(max_diff,
                            std::abs(gres.logits(n - 1, v) - gbase.logits(n - 1, v)));
    }
    CHECK(max_diff > 1e-6f);
}

TEST_CASE("next_token_distribution sums to one and matches softmax") {
    Fixture f;
    const auto res = forward(f.model, std::span<const int>(f.tokens), f.layout, f.ids);
    const Vecf p = next_token_distribution<float>(
        res.logits.row(f.layout.last_index()).transpose());
    double sum = 0.0;
    for (index_t i = 0; i < p.size(); ++i) {
        sum += p(i);
        CHECK(p(i) >= 0.f);
    }
    CHECK(std::abs(sum - 1.0) < 1e-6);
}

TEST_CASE("checkpoint round-trips bitwise and rejects mismatches") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "tplab_ckpt_test";
    fs::create_directories(dir);
    const std::string path = (dir / "m.tplab").string();

    Fixture f(2, PeMode::Rotary3d, 123);
    save_checkpoint(f.model, path);
    const Model<float> loaded = load_checkpoint<float>(path);
    CHECK(loaded.config == f.cfg);
    bool identical = true;
    auto& lw = const_cast<Weights<float>&>(loaded.weights);
    std::vector<std::pair<const float*, size_t>> blocks;
    visit_params(lw, [&](const char*, float* p, size_t n) { blocks.emplace_back(p, n); });
    size_t bi = 0;
    visit_params(const_cast<Weights<float>&>(f.model.weights),
                 [&](const char*, float* p, size_t n) {
                     REQUIRE(blocks[bi].second == n);
                     for (size_t i = 0; i < n; ++i) {
                         identical = identical && (blocks[bi].first[i] == p[i]);
                     }
                     ++bi;
                 });
    CHECK(identical);

    // same logits after reload
    const auto a = forward(f.model, std::span<const int>(f.tokens), f.layout, f.ids);
    const auto b = forward(loaded, std::span<const int>(f.tokens), f.layout, f.ids);
    CHECK(a.logits == b.logits);

    ModelConfig other = f.cfg;
    other.n_layers += 1;
    CHECK_THROWS_AS(load_checkpoint_expecting<float>(path, other), CheckpointError);
    CHECK_THROWS_AS(load_checkpoint<float>((dir / "missing.tplab").string()), CheckpointError);

    // truncated file
    const std::string trunc = (dir / "trunc.tplab").string();
    fs::copy_file(path, trunc, fs::copy_options::overwrite_existing);
    fs::resize_file(trunc, fs::file_size(trunc) - 128);
    CHECK_THROWS_AS(load_checkpoint<float>(trunc), CheckpointError);

    // not a checkpoint at all
    const std::string junk = (dir / "junk.tplab").string();
    std::FILE* jf = std::fopen(junk.c_str(), "wb");
    std::fputs("definitely not a checkpoint", jf);
    std::fclose(jf);
    CHECK_THROWS_AS(load_checkpoint<float>(junk), CheckpointError);
    fs::remove_all(dir);
}

TEST_CASE("double-cast of a model preserves behavior closely") {
    Fixture f;
    const Model<double> dmodel = f.model.cast<double>();
    PositionIds ids = f.ids;
    const auto rf = forward(f.model, std::span<const int>(f.tokens), f.layout, ids);
    const auto rd = forward(dmodel, std::span<const int>(f.tokens), f.layout, ids);
    for (index_t j = 0; j < rf.logits.cols(); ++j) {
        CHECK(std::abs(static_cast<double>(rf.logits(f.layout.last_index(), j)) -
                       rd.logits(f.layout.last_index(), j)) < 1e-4);
    }
}

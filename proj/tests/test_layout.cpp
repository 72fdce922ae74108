#include <doctest.h>

#include "tplab/layout.hpp"
#include "tplab/rope.hpp"

using namespace tplab;

namespace {

ModelConfig tiny_config(int t = 4, int h = 2, int w = 2) {
    ModelConfig cfg;
    cfg.n_layers = 2;
    cfg.d_model = 16;
    cfg.n_heads = 2;
    cfg.d_head = 8;
    cfg.grid = {t, h, w};
    return cfg;
}

}  // namespace

TEST_CASE("build_layout partitions the sequence in order") {
    const TokenLayout layout = build_layout(tiny_config(), 3, 5);
    CHECK(layout.instruction == Range{0, 3});
    REQUIRE(layout.n_frames() == 4);
    CHECK(layout.frames[0] == Range{3, 7});
    CHECK(layout.frames[1] == Range{7, 11});
    CHECK(layout.frames[2] == Range{11, 15});
    CHECK(layout.frames[3] == Range{15, 19});
    CHECK(layout.query == Range{19, 24});
    CHECK(layout.total_len == 24);
    CHECK(layout.visual() == Range{3, 19});
    CHECK(layout.frame_of(3) == 0);
    CHECK(layout.frame_of(18) == 3);
    CHECK(layout.frame_of(0) == -1);
    CHECK(layout.frame_of(20) == -1);
}

TEST_CASE("build_layout degenerate and error cases") {
    const TokenLayout one = build_layout(tiny_config(1, 2, 2), 1, 1);
    CHECK(one.n_frames() == 1);
    CHECK(one.total_len == 1 + 4 + 1);
    CHECK_THROWS_AS(build_layout(tiny_config(), 0, 5), ConfigError);
    CHECK_THROWS_AS(build_layout(tiny_config(), 3, 0), ConfigError);
}

TEST_CASE("build_layout at a frame size comparable to real per-frame token counts") {
    ModelConfig cfg = tiny_config(4, 10, 10);
    const TokenLayout layout = build_layout(cfg, 3, 5);
    CHECK(layout.visual().size() == 400);
    CHECK(layout.tokens_per_frame() == 100);
}

TEST_CASE("default position ids: text offsets, staggered frame t, grid h/w") {
    const ModelConfig cfg = tiny_config();
    const TokenLayout layout = build_layout(cfg, 3, 5);
    const PositionIds ids = assign_position_ids(layout, cfg.grid);
    REQUIRE(ids.size() == layout.total_len);
    for (int i = 0; i < 3; ++i) {
        CHECK(ids.t[i] == i);
        CHECK(ids.h[i] == i);
        CHECK(ids.w[i] == i);
    }
    for (int k = 0; k < 4; ++k) {
        const Range r = layout.frames[k];
        for (int i = r.begin; i < r.end; ++i) {
            CHECK(ids.t[i] == 3 + k);
            const int cell = i - r.begin;
            CHECK(ids.h[i] == cell / 2);
            CHECK(ids.w[i] == cell % 2);
        }
    }
    for (int i = layout.query.begin; i < layout.query.end; ++i) {
        CHECK(ids.t[i] == i);
        CHECK(ids.h[i] == i);
        CHECK(ids.w[i] == i);
    }
}

TEST_CASE("reversed temporal ids mirror the frame axis and leave text alone") {
    const ModelConfig cfg = tiny_config();
    const TokenLayout layout = build_layout(cfg, 3, 5);
    const PositionIds ids = assign_position_ids(layout, cfg.grid);
    const PositionIds rev = assign_position_ids(layout, cfg.grid, PosScheme::ReversedTemporal);
    for (int k = 0; k < 4; ++k) {
        const Range r = layout.frames[k];
        for (int i = r.begin; i < r.end; ++i) {
            CHECK(rev.t[i] == 3 + (3 - k));
            CHECK(rev.h[i] == ids.h[i]);
            CHECK(rev.w[i] == ids.w[i]);
        }
    }
    CHECK(rev.t[0] == ids.t[0]);
    CHECK(rev.t[layout.query.begin] == ids.t[layout.query.begin]);

    // reversing twice is the identity
    CHECK(reverse_temporal_ids(rev, layout) == ids);
    CHECK(reverse_temporal_ids(ids, layout) == rev);
}

TEST_CASE("shuffled position ids are deterministic per seed and segment-local") {
    const ModelConfig cfg = tiny_config();
    const TokenLayout layout = build_layout(cfg, 3, 5);
    const PositionIds ids = assign_position_ids(layout, cfg.grid);
    const PositionIds a = shuffle_position_ids(ids, layout, PosSegment::Video, 17);
    const PositionIds b = shuffle_position_ids(ids, layout, PosSegment::Video, 17);
    const PositionIds c = shuffle_position_ids(ids, layout, PosSegment::Video, 18);
    CHECK(a == b);
    CHECK(a != c);
    for (int i = 0; i < layout.instruction.end; ++i) CHECK(a.t[i] == ids.t[i]);
    for (int i = layout.query.begin; i < layout.query.end; ++i) CHECK(a.t[i] == ids.t[i]);

    const PositionIds q = shuffle_position_ids(ids, layout, PosSegment::Query, 17);
    for (int i = layout.visual().begin; i < layout.visual().end; ++i) CHECK(q.t[i] == ids.t[i]);

    // the shuffled segment carries the same multiset of triples
    auto triples = [&](const PositionIds& p, Range r) {
        std::vector<std::tuple<int, int, int>> v;
        for (int i = r.begin; i < r.end; ++i) v.emplace_back(p.t[i], p.h[i], p.w[i]);
        std::sort(v.begin(), v.end());
        return v;
    };
    CHECK(triples(a, layout.visual()) == triples(ids, layout.visual()));
}

TEST_CASE("rotary at position zero is the identity rotation") {
    PositionIds ids;
    ids.t = {0};
    ids.h = {0};
    ids.w = {0};
    Rng rng(3);
    Matf x(1, 16);
    for (int j = 0; j < 16; ++j) x(0, j) = static_cast<float>(rng.normal());
    const Matf out = apply_pe(x, ids, PeMode::Rotary1d, 2, 8);
    CHECK(out == x);
}

TEST_CASE("pe mode none returns the input bitwise") {
    PositionIds ids;
    ids.t = {5, 9};
    ids.h = {1, 2};
    ids.w = {0, 3};
    Matf x(2, 16);
    x.setRandom();
    const Matf out = apply_pe(x, ids, PeMode::None, 2, 8);
    CHECK(out == x);
}

TEST_CASE("rotary_1d attention scores depend only on relative position") {
    Rng rng(8);
    const int d_head = 8;
    Matf q(1, d_head), k(1, d_head);
    for (int j = 0; j < d_head; ++j) {
        q(0, j) = static_cast<float>(rng.normal());
        k(0, j) = static_cast<float>(rng.normal());
    }
    auto score = [&](int pq, int pk) {
        PositionIds iq, ik;
        iq.t = {pq};
        iq.h = {pq};
        iq.w = {pq};
        ik.t = {pk};
        ik.h = {pk};
        ik.w = {pk};
        const Matf qr = apply_pe(q, iq, PeMode::Rotary1d, 1, d_head);
        const Matf kr = apply_pe(k, ik, PeMode::Rotary1d, 1, d_head);
        double acc = 0.0;
        for (int j = 0; j < d_head; ++j) acc += static_cast<double>(qr(0, j)) * kr(0, j);
        return acc;
    };
    for (int trial = 0; trial < 20; ++trial) {
        const int p1 = rng.uniform_int(40);
        const int p2 = rng.uniform_int(p1 + 1);  // k at or before q
        const int shift = rng.uniform_int(30);
        CHECK(std::abs(score(p1, p2) - score(p1 + shift, p2 + shift)) < 1e-5);
    }
}

TEST_CASE("rotary_3d bands are driven by their own axes") {
    const int d_head = 16;
    Matf x = Matf::Ones(1, d_head);
    PositionIds base;
    base.t = {0};
    base.h = {0};
    base.w = {0};

    // moving only h leaves the t band (first d/2 dims) unchanged
    PositionIds moved_h = base;
    moved_h.h = {3};
    const Matf xb = apply_pe(x, base, PeMode::Rotary3d, 1, d_head);
    const Matf xh = apply_pe(x, moved_h, PeMode::Rotary3d, 1, d_head);
    for (int j = 0; j < d_head / 2; ++j) CHECK(xh(0, j) == xb(0, j));
    bool h_band_changed = false;
    for (int j = d_head / 2; j < d_head / 2 + d_head / 4; ++j) {
        if (xh(0, j) != xb(0, j)) h_band_changed = true;
    }
    CHECK(h_band_changed);

    // moving only t leaves the h and w bands unchanged
    PositionIds moved_t = base;
    moved_t.t = {5};
    const Matf xt = apply_pe(x, moved_t, PeMode::Rotary3d, 1, d_head);
    for (int j = d_head / 2; j < d_head; ++j) CHECK(xt(0, j) == xb(0, j));
}

TEST_CASE("rotary_3d requires d_head divisible into even bands") {
    ModelConfig cfg;
    cfg.n_layers = 1;
    cfg.d_model = 12;
    cfg.n_heads = 1;
    cfg.d_head = 12;
    cfg.pe_mode = PeMode::Rotary3d;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg.d_model = 16;
    cfg.d_head = 16;
    CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("layer bands resolve by rounding to the nearest layer") {
    const LayerBand mid{kEarlyBandEnd, kMiddleBandEnd};
    CHECK(mid.resolve(6) == std::vector<int>{2, 3});
    const LayerBand deep{kMiddleBandEnd, 1.0};
    CHECK(deep.resolve(6) == std::vector<int>{4, 5});
    const LayerBand deep28{kMiddleBandEnd, 1.0};
    std::vector<int> expect;
    for (int l = 20; l < 28; ++l) expect.push_back(l);
    CHECK(deep28.resolve(28) == expect);
    CHECK(LayerBand{0.0, 0.0}.resolve(6).empty());
}

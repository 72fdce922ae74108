// Binary checkpoint container: "TPLAB01" magic, little-endian u32 config
// block, then weight blocks as little-endian f32 in visit_params order.
#pragma once

#include <bit>
#include <cstdint>
#include <cstdio>
#include <string>

#include "tplab/model.hpp"

namespace tplab {

static_assert(std::endian::native == std::endian::little,
              "checkpoint io assumes a little-endian host");

inline constexpr char kCheckpointMagic[7] = {'T', 'P', 'L', 'A', 'B', '0', '1'};

namespace detail {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

inline void write_u32(std::FILE* f, uint32_t v) {
    if (std::fwrite(&v, 4, 1, f) != 1) throw CheckpointError("checkpoint: short write");
}

inline uint32_t read_u32(std::FILE* f) {
    uint32_t v = 0;
    if (std::fread(&v, 4, 1, f) != 1) throw CheckpointError("checkpoint: truncated header");
    return v;
}

}  // namespace detail

template <Scalar S>
void save_checkpoint(const Model<S>& model, const std::string& path) {
    detail::FilePtr f(std::fopen(path.c_str(), "wb"));
    if (!f) throw CheckpointError("checkpoint: cannot open for writing: " + path);
    if (std::fwrite(kCheckpointMagic, 1, sizeof(kCheckpointMagic), f.get()) !=
        sizeof(kCheckpointMagic)) {
        throw CheckpointError("checkpoint: short write");
    }
    const ModelConfig& c = model.config;
    for (uint32_t v : {static_cast<uint32_t>(c.n_layers), static_cast<uint32_t>(c.d_model),
                       static_cast<uint32_t>(c.n_heads), static_cast<uint32_t>(c.d_head),
                       static_cast<uint32_t>(c.ffn_mult), static_cast<uint32_t>(c.pe_mode),
                       static_cast<uint32_t>(c.vocab_size), static_cast<uint32_t>(c.grid.t),
                       static_cast<uint32_t>(c.grid.h), static_cast<uint32_t>(c.grid.w)}) {
        detail::write_u32(f.get(), v);
    }
    auto& weights = const_cast<Weights<S>&>(model.weights);
    visit_params(weights, [&](const char*, S* data, size_t len) {
        for (size_t i = 0; i < len; ++i) {
            const float v = static_cast<float>(data[i]);
            if (std::fwrite(&v, 4, 1, f.get()) != 1) {
                throw CheckpointError("checkpoint: short write");
            }
        }
    });
    if (std::fflush(f.get()) != 0) throw CheckpointError("checkpoint: flush failed: " + path);
}

inline ModelConfig read_checkpoint_config(std::FILE* f) {
    char magic[sizeof(kCheckpointMagic)];
    if (std::fread(magic, 1, sizeof(magic), f) != sizeof(magic) ||
        std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
        throw CheckpointError("checkpoint: bad magic (not a TPLAB01 file)");
    }
    ModelConfig c;
    c.n_layers = static_cast<int>(detail::read_u32(f));
    c.d_model = static_cast<int>(detail::read_u32(f));
    c.n_heads = static_cast<int>(detail::read_u32(f));
    c.d_head = static_cast<int>(detail::read_u32(f));
    c.ffn_mult = static_cast<int>(detail::read_u32(f));
    const uint32_t pe = detail::read_u32(f);
    if (pe > 2) throw CheckpointError("checkpoint: unknown pe_mode " + std::to_string(pe));
    c.pe_mode = static_cast<PeMode>(pe);
    c.vocab_size = static_cast<int>(detail::read_u32(f));
    c.grid.t = static_cast<int>(detail::read_u32(f));
    c.grid.h = static_cast<int>(detail::read_u32(f));
    c.grid.w = static_cast<int>(detail::read_u32(f));
    try {
        c.validate();
    } catch (const ConfigError& e) {
        throw CheckpointError(std::string("checkpoint: invalid config: ") + e.what());
    }
    return c;
}

template <Scalar S = float>
Model<S> load_checkpoint(const std::string& path) {
    detail::FilePtr f(std::fopen(path.c_str(), "rb"));
    if (!f) throw CheckpointError("checkpoint: cannot open: " + path);
    const ModelConfig cfg = read_checkpoint_config(f.get());
    Model<S> model = Model<S>::random_init(cfg, 0);
    visit_params(model.weights, [&](const char* name, S* data, size_t len) {
        for (size_t i = 0; i < len; ++i) {
            float v = 0.f;
            if (std::fread(&v, 4, 1, f.get()) != 1) {
                throw CheckpointError("checkpoint: truncated weight block '" + std::string(name) +
                                      "' in " + path);
            }
            data[i] = static_cast<S>(v);
        }
    });
    // must be exactly at EOF now
    char extra;
    if (std::fread(&extra, 1, 1, f.get()) == 1) {
        throw CheckpointError("checkpoint: trailing bytes after weights in " + path);
    }
    return model;
}

// Loads and enforces an expected config (e.g. a recipe bound to a layout).
template <Scalar S = float>
Model<S> load_checkpoint_expecting(const std::string& path, const ModelConfig& expected) {
    Model<S> m = load_checkpoint<S>(path);
    if (!(m.config == expected)) {
        throw CheckpointError("checkpoint: config mismatch for " + path);
    }
    return m;
}

}  // namespace tplab

// Minimal trainer: batched forward/backward through the full transformer,
// Adam or plain SGD, deterministic batching, and optional pathway-shaping
// augmentations applied per sample.
//
// The training path runs GEMMs in the model's native scalar type for speed;
// gradient formulas are validated against central finite differences on the
// double instantiation (see finite_difference_check).
#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "tplab/tasks.hpp"

namespace tplab {

struct TrainConfig {
    int steps = 3000;
    int batch_size = 16;
    double lr = 3e-4;
    uint64_t seed = 1;
    enum class Optimizer { Adam, Sgd } optimizer = Optimizer::Adam;
    int eval_every = 150;            // 0 disables mid-training eval
    double stop_at_accuracy = 0.99;  // early stop once the eval split reaches this
    int log_every = 0;               // 0 disables step logging to stderr

    // Pathway-shaping augmentation probabilities, drawn per sample per step.
    double aug_shuffle_video_t = 0.0;   // permute per-frame temporal ids
    double aug_pe_drop_late = 0.0;      // disable PE at one random layer >= 1
    double aug_query_last_frame = 0.0;  // query reads only the last frame
    double aug_evict_visual_deep = 0.0; // visual tokens unreadable in deep layers
};

struct TrainReport {
    std::vector<double> losses;           // one entry per step
    std::vector<std::pair<int, double>> eval_curve;  // (step, accuracy)
    double final_accuracy = 0.0;
    int steps_run = 0;
};

// Per-sample training-time modifiers.
template <Scalar S>
struct SampleAug {
    const RopeTable<S>* rope = nullptr;  // defaults to the shared table
    int pe_drop_layer = -1;
    bool query_last_frame = false;
    bool evict_visual_deep = false;
};

namespace detail {

template <Scalar S>
void rope_block(Mat<S>& x, const RopeTable<S>& table, int row0, int n, int n_heads, int d_head,
                bool inverse) {
    if (table.identity) return;
    const int pairs = d_head / 2;
    for (int i = 0; i < n; ++i) {
        for (int head = 0; head < n_heads; ++head) {
            S* row = x.row(row0 + i).data() + head * d_head;
            for (int p = 0; p < pairs; ++p) {
                const S c = table.cos(i, p);
                const S s = inverse ? -table.sin(i, p) : table.sin(i, p);
                const S a = row[2 * p], b = row[2 * p + 1];
                row[2 * p] = a * c - b * s;
                row[2 * p + 1] = a * s + b * c;
            }
        }
    }
}

}  // namespace detail

// Shared state for batched loss/gradient evaluation over one fixed layout.
template <Scalar S>
class TrainContext {
  public:
    TrainContext(Model<S>& model, int batch_capacity)
        : model_(&model),
          layout_(build_layout(model.config, kInstructionLen, kQueryLen)),
          ids_(assign_position_ids(layout_, model.config.grid)),
          rope_(make_rope_table<S>(ids_, model.config.pe_mode, model.config.d_head)),
          causal_(causal_mask<S>(layout_.total_len)),
          capacity_(batch_capacity) {
        const ModelConfig& cfg = model.config;
        grads_ = zero_like(model.weights);
        if (layout_.n_frames() >= 1) {
            qlf_mask_ = build_knockout_mask<S>(
                {single_frame_restriction(layout_, layout_.n_frames() - 1)}, layout_.total_len);
            KnockoutSpec evd;
            for (int i = 0; i < layout_.total_len; ++i) evd.targets.push_back(i);
            evd.sources = layout_.visual_indices();
            evd_mask_ = build_knockout_mask<S>({evd}, layout_.total_len);
        }
        deep_layers_ = LayerBand{kMiddleBandEnd, 1.0}.resolve(cfg.n_layers);
        alloc(cfg);
    }

    const TokenLayout& layout() const { return layout_; }
    const PositionIds& ids() const { return ids_; }
    const RopeTable<S>& default_rope() const { return rope_; }
    Weights<S>& grads() { return grads_; }

    double loss_only(std::span<const RunSample> batch, std::span<const SampleAug<S>> augs) {
        return run(batch, augs, false);
    }

    // Mean cross-entropy of the answer token at the final position; fills grads().
    double loss_and_grads(std::span<const RunSample> batch, std::span<const SampleAug<S>> augs) {
        return run(batch, augs, true);
    }

    static Weights<S> zero_like(const Weights<S>& w) {
        Weights<S> z = w;
        visit_params(z, [](const char*, S* p, size_t n) { std::fill(p, p + n, S(0)); });
        return z;
    }

  private:
    struct LayerActs {
        Mat<S> x_in, x1hat, x1, q, k, v, cat, h1, x2hat, x2, u, tanh_u;
        Vec<S> rstd1, rstd2;
        std::vector<Mat<S>> attw;  // B*H entries, n x n
    };

    void alloc(const ModelConfig& cfg) {
        const int rows = capacity_ * layout_.total_len;
        const int d = cfg.d_model, f = cfg.d_ffn();
        acts_.resize(cfg.n_layers);
        for (auto& a : acts_) {
            a.x_in.resize(rows, d);
            a.x1hat.resize(rows, d);
            a.x1.resize(rows, d);
            a.q.resize(rows, d);
            a.k.resize(rows, d);
            a.v.resize(rows, d);
            a.cat.resize(rows, d);
            a.h1.resize(rows, d);
            a.x2hat.resize(rows, d);
            a.x2.resize(rows, d);
            a.u.resize(rows, f);
            a.tanh_u.resize(rows, f);
            a.rstd1.resize(rows);
            a.rstd2.resize(rows);
            a.attw.assign(capacity_ * cfg.n_heads, Mat<S>());
        }
        x_out_.resize(rows, d);
        dx_.resize(rows, d);
        dq_.resize(rows, d);
        dk_.resize(rows, d);
        dv_.resize(rows, d);
        dcat_.resize(rows, d);
        dx1_.resize(rows, d);
        dx2_.resize(rows, d);
        du_.resize(rows, f);
    }

    // row-wise layer norm over `rows` leading rows; saves xhat and rstd
    void ln_forward(const Mat<S>& x, int rows, const Vec<S>& g, const Vec<S>& b, Mat<S>& xhat,
                    Vec<S>& rstd, Mat<S>& out) {
        const int d = static_cast<int>(x.cols());
        const S eps = static_cast<S>(kLayerNormEps);
        for (int r = 0; r < rows; ++r) {
            const S mean = x.row(r).mean();
            const S var = (x.row(r).array() - mean).square().sum() / d;
            const S rs = S(1) / std::sqrt(var + eps);
            rstd(r) = rs;
            xhat.row(r) = (x.row(r).array() - mean) * rs;
            out.row(r) = xhat.row(r).array() * g.transpose().array() + b.transpose().array();
        }
    }

    // dx accumulated into dx_out; dgain/dbias accumulated
    void ln_backward(const Mat<S>& dy, int rows, const Mat<S>& xhat, const Vec<S>& rstd,
                     const Vec<S>& g, Vec<S>& dgain, Vec<S>& dbias, Mat<S>& dx_out) {
        const int d = static_cast<int>(xhat.cols());
        for (int r = 0; r < rows; ++r) {
            dbias += dy.row(r).transpose();
            dgain += (dy.row(r).array() * xhat.row(r).array()).matrix().transpose();
            const auto dxhat = (dy.row(r).array() * g.transpose().array()).eval();
            const S m1 = dxhat.mean();
            const S m2 = (dxhat * xhat.row(r).array()).mean();
            dx_out.row(r) =
                ((dxhat - m1 - xhat.row(r).array() * m2) * rstd(r)).matrix();
        }
    }

    double run(std::span<const RunSample> batch, std::span<const SampleAug<S>> augs,
               bool compute_grads) {
        Model<S>& model = *model_;
        const ModelConfig& cfg = model.config;
        const int B = static_cast<int>(batch.size());
        if (B == 0 || B > capacity_) throw Error("TrainContext: bad batch size");
        if (augs.size() != batch.size()) throw Error("TrainContext: augs/batch size mismatch");
        const int n = layout_.total_len;
        const int rows = B * n;
        const int d = cfg.d_model, dh = cfg.d_head, H = cfg.n_heads, f = cfg.d_ffn();
        const S scale = static_cast<S>(1.0 / std::sqrt(static_cast<double>(dh)));
        const S gk = static_cast<S>(0.7978845608028654);
        const S gc = static_cast<S>(0.044715);
        auto& w = model.weights;

        auto rope_for = [&](const SampleAug<S>& aug) -> const RopeTable<S>& {
            return aug.rope ? *aug.rope : rope_;
        };
        auto deep_layer = [&](int l) {
            return std::find(deep_layers_.begin(), deep_layers_.end(), l) != deep_layers_.end();
        };

        // ---- forward ----
        Mat<S>& x0 = acts_[0].x_in;
        for (int b = 0; b < B; ++b) {
            const auto& toks = batch[b].tokens;
            if (static_cast<int>(toks.size()) != n) {
                throw ShapeError("TrainContext: sample length " + std::to_string(toks.size()) +
                                 " vs layout " + std::to_string(n));
            }
            for (int i = 0; i < n; ++i) {
                const int t = toks[i];
                if (t < 0 || t >= cfg.vocab_size) throw Error("TrainContext: token outside vocab");
                x0.row(b * n + i) = w.embedding.row(t);
            }
        }

        for (int l = 0; l < cfg.n_layers; ++l) {
            auto& a = acts_[l];
            const auto& lw = w.layers[l];
            if (l > 0) a.x_in.topRows(rows) = x_out_.topRows(rows);
            ln_forward(a.x_in, rows, lw.ln1_g, lw.ln1_b, a.x1hat, a.rstd1, a.x1);
            a.q.topRows(rows).noalias() = a.x1.topRows(rows) * lw.wq;
            a.k.topRows(rows).noalias() = a.x1.topRows(rows) * lw.wk;
            a.v.topRows(rows).noalias() = a.x1.topRows(rows) * lw.wv;
            for (int b = 0; b < B; ++b) {
                if (augs[b].pe_drop_layer == l || cfg.pe_mode == PeMode::None) continue;
                detail::rope_block(a.q, rope_for(augs[b]), b * n, n, H, dh, false);
                detail::rope_block(a.k, rope_for(augs[b]), b * n, n, H, dh, false);
            }
            for (int b = 0; b < B; ++b) {
                for (int h = 0; h < H; ++h) {
                    Mat<S>& W = a.attw[b * H + h];
                    W.noalias() = a.q.block(b * n, h * dh, n, dh) *
                                  a.k.block(b * n, h * dh, n, dh).transpose();
                    W *= scale;
                    W += causal_;
                    if (augs[b].query_last_frame) W += qlf_mask_;
                    if (augs[b].evict_visual_deep && deep_layer(l)) W += evd_mask_;
                    const Vec<S> mx = W.rowwise().maxCoeff();
                    W = ((W.colwise() - mx).array().exp()).matrix();
                    const Vec<S> sum = W.rowwise().sum();
                    W = (W.array().colwise() / sum.array()).matrix();
                    a.cat.block(b * n, h * dh, n, dh).noalias() =
                        W * a.v.block(b * n, h * dh, n, dh);
                }
            }
            a.h1.topRows(rows).noalias() = a.cat.topRows(rows) * lw.wo;
            a.h1.topRows(rows) += a.x_in.topRows(rows);
            ln_forward(a.h1, rows, lw.ln2_g, lw.ln2_b, a.x2hat, a.rstd2, a.x2);
            a.u.topRows(rows).noalias() = a.x2.topRows(rows) * lw.w1;
            a.u.topRows(rows).rowwise() += lw.b1.transpose();
            a.tanh_u.topRows(rows) =
                ((a.u.topRows(rows).array() + gc * a.u.topRows(rows).array().cube()) * gk).tanh();
            // gelu(u) = 0.5 u (1 + tanh(.)) feeds w2; x_out = h1 + ffn
            x_out_.topRows(rows).noalias() =
                (S(0.5) * a.u.topRows(rows).array() * (S(1) + a.tanh_u.topRows(rows).array()))
                    .matrix() *
                lw.w2;
            x_out_.topRows(rows).rowwise() += lw.b2.transpose();
            x_out_.topRows(rows) += a.h1.topRows(rows);
        }

        // final norm + unembed on the final position of each sample only
        Mat<S> xlast(B, d), xfhat(B, d), xfln(B, d);
        Vec<S> rstdf(B);
        for (int b = 0; b < B; ++b) xlast.row(b) = x_out_.row(b * n + n - 1);
        ln_forward(xlast, B, w.lnf_g, w.lnf_b, xfhat, rstdf, xfln);
        Mat<S> logits(B, cfg.vocab_size);
        logits.noalias() = xfln * w.unembed;

        double loss = 0.0;
        Mat<S> dlogits(B, cfg.vocab_size);
        for (int b = 0; b < B; ++b) {
            const int gt = batch[b].gt;
            if (gt < 0 || gt >= cfg.vocab_size) throw Error("TrainContext: answer outside vocab");
            double mx = -std::numeric_limits<double>::infinity();
            for (int j = 0; j < cfg.vocab_size; ++j) {
                mx = std::max(mx, static_cast<double>(logits(b, j)));
            }
            double sum = 0.0;
            for (int j = 0; j < cfg.vocab_size; ++j) {
                sum += std::exp(static_cast<double>(logits(b, j)) - mx);
            }
            const double logp = static_cast<double>(logits(b, gt)) - mx - std::log(sum);
            loss -= logp / B;
            if (compute_grads) {
                for (int j = 0; j < cfg.vocab_size; ++j) {
                    const double p = std::exp(static_cast<double>(logits(b, j)) - mx) / sum;
                    dlogits(b, j) = static_cast<S>((p - (j == gt ? 1.0 : 0.0)) / B);
                }
            }
        }
        if (!compute_grads) return loss;

        // ---- backward ----
        visit_params(grads_, [](const char*, S* p, size_t len) { std::fill(p, p + len, S(0)); });
        grads_.unembed.noalias() += xfln.transpose() * dlogits;
        Mat<S> dxfln(B, d);
        dxfln.noalias() = dlogits * w.unembed.transpose();
        Mat<S> dxlast(B, d);
        ln_backward(dxfln, B, xfhat, rstdf, w.lnf_g, grads_.lnf_g, grads_.lnf_b, dxlast);
        dx_.topRows(rows).setZero();
        for (int b = 0; b < B; ++b) dx_.row(b * n + n - 1) = dxlast.row(b);

        for (int l = cfg.n_layers - 1; l >= 0; --l) {
            auto& a = acts_[l];
            const auto& lw = w.layers[l];
            auto& gl = grads_.layers[l];

            // FFN: x_out = h1 + (gelu(u) w2 + b2)
            const auto gact = (S(0.5) * a.u.topRows(rows).array() *
                               (S(1) + a.tanh_u.topRows(rows).array()))
                                  .matrix()
                                  .eval();
            gl.b2 += dx_.topRows(rows).colwise().sum().transpose();
            gl.w2.noalias() += gact.transpose() * dx_.topRows(rows);
            du_.topRows(rows).noalias() = dx_.topRows(rows) * lw.w2.transpose();
            {
                auto uarr = a.u.topRows(rows).array();
                auto tarr = a.tanh_u.topRows(rows).array();
                // d gelu/du with t = tanh(k(u + c u^3))
                du_.topRows(rows).array() *=
                    S(0.5) * (S(1) + tarr) +
                    S(0.5) * uarr * (S(1) - tarr.square()) * gk * (S(1) + S(3) * gc * uarr.square());
            }
            gl.b1 += du_.topRows(rows).colwise().sum().transpose();
            gl.w1.noalias() += a.x2.topRows(rows).transpose() * du_.topRows(rows);
            dx2_.topRows(rows).noalias() = du_.topRows(rows) * lw.w1.transpose();
            Mat<S>& dh1 = dx2_;  // reuse: ln_backward writes the h1 gradient in place
            {
                Mat<S> tmp(rows, d);
                ln_backward(dx2_, rows, a.x2hat, a.rstd2, lw.ln2_g, gl.ln2_g, gl.ln2_b, tmp);
                dh1.topRows(rows) = tmp.topRows(rows) + dx_.topRows(rows);
            }

            // attention: h1 = x_in + cat wo
            gl.wo.noalias() += a.cat.topRows(rows).transpose() * dh1.topRows(rows);
            dcat_.topRows(rows).noalias() = dh1.topRows(rows) * lw.wo.transpose();
            dq_.topRows(rows).setZero();
            dk_.topRows(rows).setZero();
            dv_.topRows(rows).setZero();
            for (int b = 0; b < B; ++b) {
                for (int h = 0; h < H; ++h) {
                    const Mat<S>& W = a.attw[b * H + h];
                    const auto dch = dcat_.block(b * n, h * dh, n, dh);
                    const auto vb = a.v.block(b * n, h * dh, n, dh);
                    Mat<S> dW(n, n);
                    dW.noalias() = dch * vb.transpose();
                    dv_.block(b * n, h * dh, n, dh).noalias() += W.transpose() * dch;
                    const Vec<S> rowdot = (dW.array() * W.array()).rowwise().sum();
                    Mat<S> dS = (W.array() * (dW.colwise() - rowdot).array()).matrix();
                    dS *= scale;
                    dq_.block(b * n, h * dh, n, dh).noalias() =
                        dS * a.k.block(b * n, h * dh, n, dh);
                    dk_.block(b * n, h * dh, n, dh).noalias() =
                        dS.transpose() * a.q.block(b * n, h * dh, n, dh);
                }
            }
            for (int b = 0; b < B; ++b) {
                if (augs[b].pe_drop_layer == l || cfg.pe_mode == PeMode::None) continue;
                detail::rope_block(dq_, rope_for(augs[b]), b * n, n, H, dh, true);
                detail::rope_block(dk_, rope_for(augs[b]), b * n, n, H, dh, true);
            }
            gl.wq.noalias() += a.x1.topRows(rows).transpose() * dq_.topRows(rows);
            gl.wk.noalias() += a.x1.topRows(rows).transpose() * dk_.topRows(rows);
            gl.wv.noalias() += a.x1.topRows(rows).transpose() * dv_.topRows(rows);
            dx1_.topRows(rows).noalias() = dq_.topRows(rows) * lw.wq.transpose();
            dx1_.topRows(rows).noalias() += dk_.topRows(rows) * lw.wk.transpose();
            dx1_.topRows(rows).noalias() += dv_.topRows(rows) * lw.wv.transpose();
            {
                Mat<S> tmp(rows, d);
                ln_backward(dx1_, rows, a.x1hat, a.rstd1, lw.ln1_g, gl.ln1_g, gl.ln1_b, tmp);
                dx_.topRows(rows) = tmp.topRows(rows) + dh1.topRows(rows);
            }
        }
        for (int b = 0; b < B; ++b) {
            const auto& toks = batch[b].tokens;
            for (int i = 0; i < n; ++i) {
                grads_.embedding.row(toks[i]) += dx_.row(b * n + i);
            }
        }
        return loss;
    }

    Model<S>* model_;
    TokenLayout layout_;
    PositionIds ids_;
    RopeTable<S> rope_;
    Mat<S> causal_;
    Mat<S> qlf_mask_, evd_mask_;
    std::vector<int> deep_layers_;
    int capacity_;
    Weights<S> grads_;
    std::vector<LayerActs> acts_;
    Mat<S> x_out_, dx_, dq_, dk_, dv_, dcat_, dx1_, dx2_, du_;
};

// ---------------------------------------------------------------------------
// optimizers

template <Scalar S>
class AdamState {
  public:
    explicit AdamState(Weights<S>& w) {
        visit_params(w, [&](const char*, S* p, size_t n) { blocks_.emplace_back(p, n); });
        size_t total = 0;
        for (auto& [p, n] : blocks_) total += n;
        m_.assign(total, 0.0);
        v_.assign(total, 0.0);
    }

    void step(Weights<S>& w, Weights<S>& g, double lr) {
        ++t_;
        std::vector<std::pair<S*, size_t>> gblocks;
        visit_params(g, [&](const char*, S* p, size_t n) { gblocks.emplace_back(p, n); });
        const double bc1 = 1.0 - std::pow(beta1_, t_);
        const double bc2 = 1.0 - std::pow(beta2_, t_);
        size_t off = 0;
        for (size_t b = 0; b < blocks_.size(); ++b) {
            S* wp = blocks_[b].first;
            S* gp = gblocks[b].first;
            const size_t n = blocks_[b].second;
            for (size_t i = 0; i < n; ++i) {
                const double gi = static_cast<double>(gp[i]);
                m_[off + i] = beta1_ * m_[off + i] + (1.0 - beta1_) * gi;
                v_[off + i] = beta2_ * v_[off + i] + (1.0 - beta2_) * gi * gi;
                const double mhat = m_[off + i] / bc1;
                const double vhat = v_[off + i] / bc2;
                wp[i] -= static_cast<S>(lr * mhat / (std::sqrt(vhat) + eps_));
            }
            off += n;
        }
    }

  private:
    std::vector<std::pair<S*, size_t>> blocks_;
    std::vector<double> m_, v_;
    int t_ = 0;
    double beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
};

template <Scalar S>
void sgd_step(Weights<S>& w, Weights<S>& g, double lr) {
    std::vector<std::pair<S*, size_t>> gblocks;
    visit_params(g, [&](const char*, S* p, size_t n) { gblocks.emplace_back(p, n); });
    size_t b = 0;
    visit_params(w, [&](const char*, S* p, size_t n) {
        for (size_t i = 0; i < n; ++i) p[i] -= static_cast<S>(lr) * gblocks[b].first[i];
        ++b;
    });
}

// ---------------------------------------------------------------------------
// training loop

template <Scalar S>
TrainReport train(Model<S>& model, const TrainConfig& cfg,
                  const std::vector<SyntheticSample>& train_data,
                  const std::vector<SyntheticSample>& eval_data) {
    if (train_data.empty()) throw Error("train: empty training data");
    TrainContext<S> ctx(model, cfg.batch_size);
    std::vector<RunSample> encoded;
    encoded.reserve(train_data.size());
    for (const auto& s : train_data) encoded.push_back(encode_sample(s));

    Rng rng(cfg.seed);
    AdamState<S> adam(model.weights);
    TrainReport report;

    std::vector<RunSample> batch(cfg.batch_size);
    std::vector<SampleAug<S>> augs(cfg.batch_size);
    std::vector<RopeTable<S>> aug_tables(cfg.batch_size);
    const int late_layers = model.config.n_layers - 1;

    for (int step = 0; step < cfg.steps; ++step) {
        for (int b = 0; b < cfg.batch_size; ++b) {
            batch[b] = encoded[rng.uniform_int(static_cast<int>(encoded.size()))];
            SampleAug<S> aug;
            if (cfg.aug_shuffle_video_t > 0 && rng.uniform01() < cfg.aug_shuffle_video_t) {
                const PositionIds shuffled =
                    shuffle_frame_temporal_ids(ctx.ids(), ctx.layout(), rng.next_u64());
                aug_tables[b] =
                    make_rope_table<S>(shuffled, model.config.pe_mode, model.config.d_head);
                aug.rope = &aug_tables[b];
            }
            if (cfg.aug_pe_drop_late > 0 && late_layers > 0 &&
                rng.uniform01() < cfg.aug_pe_drop_late) {
                aug.pe_drop_layer = 1 + rng.uniform_int(late_layers);
            }
            if (cfg.aug_query_last_frame > 0 && rng.uniform01() < cfg.aug_query_last_frame) {
                aug.query_last_frame = true;
            }
            if (cfg.aug_evict_visual_deep > 0 && rng.uniform01() < cfg.aug_evict_visual_deep) {
                aug.evict_visual_deep = true;
            }
            augs[b] = aug;
        }
        const double loss = ctx.loss_and_grads(batch, augs);
        if (!std::isfinite(loss)) {
            throw Error("train: loss diverged (non-finite) at step " + std::to_string(step));
        }
        report.losses.push_back(loss);
        if (cfg.optimizer == TrainConfig::Optimizer::Adam) {
            adam.step(model.weights, ctx.grads(), cfg.lr);
        } else {
            sgd_step(model.weights, ctx.grads(), cfg.lr);
        }
        report.steps_run = step + 1;
        if (cfg.log_every > 0 && (step + 1) % cfg.log_every == 0) {
            std::fprintf(stderr, "step %5d  loss %.4f\n", step + 1, loss);
        }
        if (cfg.eval_every > 0 && !eval_data.empty() && (step + 1) % cfg.eval_every == 0) {
            const EvalResult ev = evaluate(model, eval_data);
            report.eval_curve.emplace_back(step + 1, ev.accuracy);
            if (cfg.log_every > 0) {
                std::fprintf(stderr, "step %5d  eval accuracy %.3f\n", step + 1, ev.accuracy);
            }
            if (ev.accuracy >= cfg.stop_at_accuracy) break;
        }
    }
    if (!eval_data.empty()) {
        report.final_accuracy = evaluate(model, eval_data).accuracy;
    }
    return report;
}

// ---------------------------------------------------------------------------
// finite-difference gradient check
//
// Central differences against the analytic gradients of the same loss, on
// every parameter. Run this on a double-precision model: float storage noise
// (~1e-6 on the loss) divided by the step dwarfs a 1e-3 relative target.

struct FdReport {
    double max_rel = 0.0;
    std::string worst_param;
    size_t params_checked = 0;
};

template <Scalar S>
FdReport finite_difference_check(Model<S>& model, std::span<const RunSample> batch,
                                 double h = 1e-5) {
    TrainContext<S> ctx(model, static_cast<int>(batch.size()));
    std::vector<SampleAug<S>> augs(batch.size());
    ctx.loss_and_grads(batch, augs);

    std::vector<std::tuple<std::string, S*, size_t>> blocks;
    int counter = 0;
    visit_params(model.weights, [&](const char* name, S* p, size_t n) {
        blocks.emplace_back(std::string(name) + "#" + std::to_string(counter++), p, n);
    });
    std::vector<std::tuple<std::string, S*, size_t>> gblocks;
    visit_params(ctx.grads(), [&](const char* name, S* p, size_t n) {
        gblocks.emplace_back(name, p, n);
    });

    FdReport report;
    for (size_t b = 0; b < blocks.size(); ++b) {
        auto& [name, wp, len] = blocks[b];
        S* gp = std::get<1>(gblocks[b]);
        for (size_t i = 0; i < len; ++i) {
            const S orig = wp[i];
            wp[i] = orig + static_cast<S>(h);
            const double lp = ctx.loss_only(batch, augs);
            wp[i] = orig - static_cast<S>(h);
            const double lm = ctx.loss_only(batch, augs);
            wp[i] = orig;
            const double fd = (lp - lm) / (2.0 * h);
            const double ad = static_cast<double>(gp[i]);
            const double rel =
                std::abs(ad - fd) / std::max({std::abs(ad), std::abs(fd), 1e-6});
            if (rel > report.max_rel) {
                report.max_rel = rel;
                report.worst_param = name + "[" + std::to_string(i) + "]";
            }
            ++report.params_checked;
        }
    }
    return report;
}

}  // namespace tplab

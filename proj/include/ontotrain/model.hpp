#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "ontotrain/errors.hpp"
#include "ontotrain/rng.hpp"
#include "ontotrain/smiles.hpp"

namespace ontotrain {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

// Encoder geometry and regularization. Defaults follow the shared model
// configuration used by every training stage.
struct ModelConfig {
    int vocab_size = 1400;
    int hidden = 256;
    int heads = 8;
    int layers = 6;
    int max_len = 256;
    int ff_multiplier = 4;
    double embed_dropout = 0.0;
    double hidden_dropout = 0.0;
    bool shared_encoder = true;  // generator shares the encoder body
};

inline void validate_config(const ModelConfig& c) {
    auto fail = [](const std::string& what) { throw InvalidConfig(what); };
    if (c.vocab_size < static_cast<int>(Vocabulary::num_specials) + 1)
        fail("vocab_size must exceed the number of special tokens");
    if (c.hidden < 1) fail("hidden must be >= 1");
    if (c.heads < 1) fail("heads must be >= 1");
    if (c.layers < 1) fail("layers must be >= 1");
    if (c.max_len < 2) fail("max_len must be >= 2");
    if (c.ff_multiplier < 1) fail("ff_multiplier must be >= 1");
    if (c.hidden % c.heads != 0)
        fail("hidden (" + std::to_string(c.hidden) + ") must be divisible by heads (" +
             std::to_string(c.heads) + ")");
    if (c.embed_dropout < 0.0 || c.embed_dropout >= 1.0) fail("embed_dropout must lie in [0, 1)");
    if (c.hidden_dropout < 0.0 || c.hidden_dropout >= 1.0) fail("hidden_dropout must lie in [0, 1)");
}

inline int head_dim(const ModelConfig& c) { return c.hidden / c.heads; }

// Output heads attached to the encoder body. Electra pretraining attaches the
// generator/discriminator pair; classification stages attach a multi-label
// head sized to the label space.
struct HeadSpec {
    bool generator = false;
    bool discriminator = false;
    int multi_label = 0;  // 0 = none, otherwise label count

    static HeadSpec electra() { return {true, true, 0}; }
    static HeadSpec multi(int labels) { return {false, false, labels}; }

    bool operator==(const HeadSpec&) const = default;
};

inline void validate_head(const HeadSpec& h) {
    if (h.multi_label < 0) throw InvalidConfig("multi_label head size must be >= 0");
    if (h.multi_label == 0 && !h.generator && !h.discriminator)
        throw InvalidConfig("model needs at least one head");
}

struct LinearParams {
    Mat w;  // in x out
    Mat b;  // 1 x out
};

struct LayerParams {
    Mat ln1_gain, ln1_bias;  // 1 x hidden
    LinearParams q, k, v, o;
    Mat ln2_gain, ln2_bias;
    LinearParams ff1, ff2;
};

struct EncoderParams {
    Mat tok_emb;  // vocab x hidden
    Mat pos_emb;  // max_len x hidden
    std::vector<LayerParams> layers;
    Mat lnf_gain, lnf_bias;
};

struct Parameters {
    ModelConfig config;
    HeadSpec head;
    EncoderParams body;
    std::optional<EncoderParams> generator_body;  // when generator head and not shared_encoder
    std::optional<LinearParams> gen_out;          // hidden -> vocab
    std::optional<LinearParams> disc_dense;       // hidden -> hidden
    std::optional<LinearParams> disc_out;         // hidden -> 1
    std::optional<LinearParams> cls_out;          // hidden -> multi_label
};

namespace detail {

template <class Enc, class Fn>
void visit_encoder(const std::string& prefix, Enc& enc, Fn&& fn) {
    fn(prefix + "embed.token", enc.tok_emb);
    fn(prefix + "embed.position", enc.pos_emb);
    for (std::size_t i = 0; i < enc.layers.size(); ++i) {
        auto& l = enc.layers[i];
        const std::string p = prefix + "layer" + std::to_string(i) + ".";
        fn(p + "ln1.gain", l.ln1_gain);
        fn(p + "ln1.bias", l.ln1_bias);
        fn(p + "attn.q.w", l.q.w);
        fn(p + "attn.q.b", l.q.b);
        fn(p + "attn.k.w", l.k.w);
        fn(p + "attn.k.b", l.k.b);
        fn(p + "attn.v.w", l.v.w);
        fn(p + "attn.v.b", l.v.b);
        fn(p + "attn.o.w", l.o.w);
        fn(p + "attn.o.b", l.o.b);
        fn(p + "ln2.gain", l.ln2_gain);
        fn(p + "ln2.bias", l.ln2_bias);
        fn(p + "ff.w1", l.ff1.w);
        fn(p + "ff.b1", l.ff1.b);
        fn(p + "ff.w2", l.ff2.w);
        fn(p + "ff.b2", l.ff2.b);
    }
    fn(prefix + "final_norm.gain", enc.lnf_gain);
    fn(prefix + "final_norm.bias", enc.lnf_bias);
}

}  // namespace detail

// Enumerates every named tensor in a fixed order (checkpoint and optimizer
// state follow this order).
template <class Params, class Fn>
void for_each_tensor(Params& p, Fn&& fn) {
    detail::visit_encoder("", p.body, fn);
    if (p.generator_body) detail::visit_encoder("gen_body.", *p.generator_body, fn);
    if (p.gen_out) {
        fn(std::string("head.generator.w"), p.gen_out->w);
        fn(std::string("head.generator.b"), p.gen_out->b);
    }
    if (p.disc_dense) {
        fn(std::string("head.disc.dense.w"), p.disc_dense->w);
        fn(std::string("head.disc.dense.b"), p.disc_dense->b);
    }
    if (p.disc_out) {
        fn(std::string("head.disc.out.w"), p.disc_out->w);
        fn(std::string("head.disc.out.b"), p.disc_out->b);
    }
    if (p.cls_out) {
        fn(std::string("head.classify.w"), p.cls_out->w);
        fn(std::string("head.classify.b"), p.cls_out->b);
    }
}

inline std::size_t num_parameters(const Parameters& p) {
    std::size_t n = 0;
    for_each_tensor(p, [&](const std::string&, const Mat& m) { n += static_cast<std::size_t>(m.size()); });
    return n;
}

namespace detail {

inline void fill_xavier(Mat& m, Rng& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = rng.uniform(-bound, bound);
}

inline LinearParams make_linear(int in, int out, Rng& rng) {
    LinearParams lin;
    lin.w.resize(in, out);
    fill_xavier(lin.w, rng);
    lin.b = Mat::Zero(1, out);
    return lin;
}

inline EncoderParams make_encoder(const ModelConfig& c, Rng& rng) {
    EncoderParams enc;
    enc.tok_emb.resize(c.vocab_size, c.hidden);
    fill_xavier(enc.tok_emb, rng);
    enc.pos_emb.resize(c.max_len, c.hidden);
    fill_xavier(enc.pos_emb, rng);
    enc.layers.resize(static_cast<std::size_t>(c.layers));
    const int ff = c.hidden * c.ff_multiplier;
    for (auto& l : enc.layers) {
        l.ln1_gain = Mat::Ones(1, c.hidden);
        l.ln1_bias = Mat::Zero(1, c.hidden);
        l.q = make_linear(c.hidden, c.hidden, rng);
        l.k = make_linear(c.hidden, c.hidden, rng);
        l.v = make_linear(c.hidden, c.hidden, rng);
        l.o = make_linear(c.hidden, c.hidden, rng);
        l.ln2_gain = Mat::Ones(1, c.hidden);
        l.ln2_bias = Mat::Zero(1, c.hidden);
        l.ff1 = make_linear(c.hidden, ff, rng);
        l.ff2 = make_linear(ff, c.hidden, rng);
    }
    enc.lnf_gain = Mat::Ones(1, c.hidden);
    enc.lnf_bias = Mat::Zero(1, c.hidden);
    return enc;
}

}  // namespace detail

// Deterministic initialization: weights from a scaled uniform with bound
// sqrt(6 / (fan_in + fan_out)), biases zero, layer-norm gains one.
inline Parameters init(const ModelConfig& config, const HeadSpec& head, std::uint64_t seed) {
    validate_config(config);
    validate_head(head);
    Rng rng(mix_seed(seed, 0x6d6f64656c));
    Parameters p;
    p.config = config;
    p.head = head;
    p.body = detail::make_encoder(config, rng);
    if (head.generator && !config.shared_encoder)
        p.generator_body = detail::make_encoder(config, rng);
    if (head.generator) p.gen_out = detail::make_linear(config.hidden, config.vocab_size, rng);
    if (head.discriminator) {
        p.disc_dense = detail::make_linear(config.hidden, config.hidden, rng);
        p.disc_out = detail::make_linear(config.hidden, 1, rng);
    }
    if (head.multi_label > 0)
        p.cls_out = detail::make_linear(config.hidden, head.multi_label, rng);
    return p;
}

inline Parameters zeros_like(const Parameters& p) {
    Parameters z = p;
    for_each_tensor(z, [](const std::string&, Mat& m) { m.setZero(); });
    return z;
}

// ---------------------------------------------------------------------------
// forward / backward
// ---------------------------------------------------------------------------

// Per-layer, per-head attention distributions over the real positions of one
// sequence (CLS included, padding excluded). Rows are query positions.
struct AttentionMaps {
    int layers = 0;
    int heads = 0;
    int seq_len = 0;
    std::vector<Mat> maps;  // layers * heads matrices, each seq_len x seq_len

    void reset(int n_layers, int n_heads, int n_seq) {
        layers = n_layers;
        heads = n_heads;
        seq_len = n_seq;
        maps.assign(static_cast<std::size_t>(n_layers) * static_cast<std::size_t>(n_heads), Mat());
    }

    Mat& at(int layer, int head) {
        return maps[static_cast<std::size_t>(layer) * static_cast<std::size_t>(heads) +
                    static_cast<std::size_t>(head)];
    }
    const Mat& at(int layer, int head) const {
        return maps[static_cast<std::size_t>(layer) * static_cast<std::size_t>(heads) +
                    static_cast<std::size_t>(head)];
    }
};

namespace detail {

constexpr double layer_norm_eps = 1e-5;
constexpr double inv_sqrt2 = 0.7071067811865476;

inline double gelu_scalar(double x) { return 0.5 * x * (1.0 + std::erf(x * inv_sqrt2)); }

inline double gelu_grad_scalar(double x) {
    const double phi = std::exp(-0.5 * x * x) * 0.3989422804014327;  // 1/sqrt(2*pi)
    return 0.5 * (1.0 + std::erf(x * inv_sqrt2)) + x * phi;
}

struct LayerNormCache {
    Mat xhat;  // normalized rows
    Vec rstd;  // per-row 1/sqrt(var + eps)
};

inline Mat layer_norm(const Mat& x, const Mat& gain, const Mat& bias, LayerNormCache* cache) {
    const Eigen::Index rows = x.rows(), cols = x.cols();
    Mat xhat(rows, cols);
    Vec rstd(rows);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const double mu = x.row(r).mean();
        const double var = (x.row(r).array() - mu).square().mean();
        const double rs = 1.0 / std::sqrt(var + layer_norm_eps);
        xhat.row(r) = ((x.row(r).array() - mu) * rs).matrix();
        rstd(r) = rs;
    }
    Mat y(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
        y.row(r) = (xhat.row(r).array() * gain.row(0).array() + bias.row(0).array()).matrix();
    if (cache) {
        cache->xhat = std::move(xhat);
        cache->rstd = std::move(rstd);
    }
    return y;
}

// d_y is the gradient at the layer-norm output; returns the gradient at the
// input and accumulates gain/bias gradients.
inline Mat layer_norm_backward(const Mat& d_y, const LayerNormCache& cache, const Mat& gain,
                               Mat& d_gain, Mat& d_bias) {
    d_gain.row(0).array() += (d_y.array() * cache.xhat.array()).colwise().sum();
    d_bias.row(0).array() += d_y.array().colwise().sum();
    Mat d_xhat(d_y.rows(), d_y.cols());
    for (Eigen::Index r = 0; r < d_y.rows(); ++r)
        d_xhat.row(r) = (d_y.row(r).array() * gain.row(0).array()).matrix();
    Mat d_x(d_y.rows(), d_y.cols());
    for (Eigen::Index r = 0; r < d_y.rows(); ++r) {
        const double m1 = d_xhat.row(r).mean();
        const double m2 = (d_xhat.row(r).array() * cache.xhat.row(r).array()).mean();
        d_x.row(r) =
            (((d_xhat.row(r).array() - m1) - cache.xhat.row(r).array() * m2) * cache.rstd(r))
                .matrix();
    }
    return d_x;
}

inline Mat make_dropout_mask(Eigen::Index rows, Eigen::Index cols, double p, Rng& rng) {
    const double scale = 1.0 / (1.0 - p);
    Mat mask(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) mask(r, c) = rng.uniform() < p ? 0.0 : scale;
    return mask;
}

struct LayerTrace {
    Mat x_in;
    LayerNormCache ln1;
    Mat a;  // LN1 output
    Mat q, k, v;
    std::vector<Mat> probs;  // per head, L x L
    Mat ctx;
    Mat drop1;  // empty when inactive
    Mat x_mid;
    LayerNormCache ln2;
    Mat f;  // LN2 output
    Mat z1deriv;  // gelu'(z1), kept instead of z1
    Mat h1;
    Mat drop2;
};

struct EncoderTrace {
    Mat emb_drop;  // empty when inactive
    std::vector<LayerTrace> layers;
    Mat x_final;  // input of the final layer norm
    LayerNormCache lnf;
};

inline void check_ids(const ModelConfig& cfg, const std::int32_t* ids, int len) {
    if (len < 1 || len > cfg.max_len)
        throw ShapeError("sequence length " + std::to_string(len) + " outside [1, max_len=" +
                         std::to_string(cfg.max_len) + "]");
    for (int t = 0; t < len; ++t)
        if (ids[t] < 0 || ids[t] >= cfg.vocab_size)
            throw VocabOverflow("token id " + std::to_string(ids[t]) + " at position " +
                                std::to_string(t) + " outside vocabulary of size " +
                                std::to_string(cfg.vocab_size));
}

// Pre-norm transformer encoder over the real prefix of one sequence. Padding
// positions are never touched, which realizes the masked-softmax contract
// exactly. Returns the final layer-norm output (len x hidden).
inline Mat encoder_forward(const EncoderParams& enc, const ModelConfig& cfg,
                           const std::int32_t* ids, int len, bool train_mode, Rng* dropout_rng,
                           EncoderTrace* trace, AttentionMaps* attention) {
    check_ids(cfg, ids, len);
    const int H = cfg.hidden;
    const int heads = cfg.heads;
    const int dh = head_dim(cfg);
    const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
    const bool drop_on = train_mode && dropout_rng != nullptr;

    Mat x(len, H);
    for (int t = 0; t < len; ++t) x.row(t) = enc.tok_emb.row(ids[t]) + enc.pos_emb.row(t);
    if (drop_on && cfg.embed_dropout > 0.0) {
        Mat mask = make_dropout_mask(len, H, cfg.embed_dropout, *dropout_rng);
        x.array() *= mask.array();
        if (trace) trace->emb_drop = std::move(mask);
    }
    if (trace) trace->layers.resize(enc.layers.size());
    if (attention) attention->reset(static_cast<int>(enc.layers.size()), heads, len);

    for (std::size_t li = 0; li < enc.layers.size(); ++li) {
        const LayerParams& l = enc.layers[li];
        LayerTrace* lt = trace ? &trace->layers[li] : nullptr;
        if (lt) lt->x_in = x;

        LayerNormCache ln1;
        Mat a = layer_norm(x, l.ln1_gain, l.ln1_bias, &ln1);
        Mat q = (a * l.q.w).rowwise() + l.q.b.row(0);
        Mat k = (a * l.k.w).rowwise() + l.k.b.row(0);
        Mat v = (a * l.v.w).rowwise() + l.v.b.row(0);

        Mat ctx(len, H);
        std::vector<Mat> probs_by_head;
        if (lt) probs_by_head.resize(static_cast<std::size_t>(heads));
        for (int h = 0; h < heads; ++h) {
            const auto qh = q.middleCols(h * dh, dh);
            const auto kh = k.middleCols(h * dh, dh);
            const auto vh = v.middleCols(h * dh, dh);
            Mat scores = qh * kh.transpose() * inv_sqrt_dh;
            for (Eigen::Index r = 0; r < scores.rows(); ++r) {
                const double mx = scores.row(r).maxCoeff();
                scores.row(r) = (scores.row(r).array() - mx).exp().matrix();
                scores.row(r) /= scores.row(r).sum();
            }
            ctx.middleCols(h * dh, dh) = scores * vh;
            if (attention) attention->at(static_cast<int>(li), h) = scores;
            if (lt) probs_by_head[static_cast<std::size_t>(h)] = std::move(scores);
        }
        Mat attn = (ctx * l.o.w).rowwise() + l.o.b.row(0);
        Mat drop1;
        if (drop_on && cfg.hidden_dropout > 0.0) {
            drop1 = make_dropout_mask(len, H, cfg.hidden_dropout, *dropout_rng);
            attn.array() *= drop1.array();
        }
        Mat x_mid = x + attn;

        LayerNormCache ln2;
        Mat f = layer_norm(x_mid, l.ln2_gain, l.ln2_bias, &ln2);
        Mat z1 = (f * l.ff1.w).rowwise() + l.ff1.b.row(0);
        Mat h1 = z1.unaryExpr([](double v_) { return gelu_scalar(v_); });
        Mat ff = (h1 * l.ff2.w).rowwise() + l.ff2.b.row(0);
        Mat drop2;
        if (drop_on && cfg.hidden_dropout > 0.0) {
            drop2 = make_dropout_mask(len, cfg.hidden, cfg.hidden_dropout, *dropout_rng);
            ff.array() *= drop2.array();
        }
        x = x_mid + ff;

        if (lt) {
            lt->ln1 = std::move(ln1);
            lt->a = std::move(a);
            lt->q = std::move(q);
            lt->k = std::move(k);
            lt->v = std::move(v);
            lt->probs = std::move(probs_by_head);
            lt->ctx = std::move(ctx);
            lt->drop1 = std::move(drop1);
            lt->x_mid = std::move(x_mid);
            lt->ln2 = std::move(ln2);
            lt->f = std::move(f);
            lt->z1deriv = z1.unaryExpr([](double v_) { return gelu_grad_scalar(v_); });
            lt->h1 = std::move(h1);
            lt->drop2 = std::move(drop2);
        }
    }

    LayerNormCache lnf;
    Mat out = layer_norm(x, enc.lnf_gain, enc.lnf_bias, &lnf);
    if (trace) {
        trace->x_final = std::move(x);
        trace->lnf = std::move(lnf);
    }
    return out;
}

// Accumulates encoder gradients for one sequence given the gradient at the
// final layer-norm output.
inline void encoder_backward(const EncoderParams& enc, const ModelConfig& cfg,
                             const std::int32_t* ids, int len, const EncoderTrace& trace,
                             const Mat& d_out, EncoderParams& g) {
    const int heads = cfg.heads;
    const int dh = head_dim(cfg);
    const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));

    Mat d_x = layer_norm_backward(d_out, trace.lnf, enc.lnf_gain, g.lnf_gain, g.lnf_bias);

    for (std::size_t li = enc.layers.size(); li-- > 0;) {
        const LayerParams& l = enc.layers[li];
        const LayerTrace& t = trace.layers[li];
        LayerParams& gl = g.layers[li];

        // x_out = x_mid + drop2 * ff(LN2(x_mid))
        Mat d_ff = t.drop2.size() ? Mat((d_x.array() * t.drop2.array()).matrix()) : d_x;
        Mat d_x_mid = d_x;

        gl.ff2.w.noalias() += t.h1.transpose() * d_ff;
        gl.ff2.b.row(0).array() += d_ff.array().colwise().sum();
        Mat d_h1 = d_ff * l.ff2.w.transpose();
        Mat d_z1 = (d_h1.array() * t.z1deriv.array()).matrix();
        gl.ff1.w.noalias() += t.f.transpose() * d_z1;
        gl.ff1.b.row(0).array() += d_z1.array().colwise().sum();
        Mat d_f = d_z1 * l.ff1.w.transpose();
        d_x_mid += layer_norm_backward(d_f, t.ln2, l.ln2_gain, gl.ln2_gain, gl.ln2_bias);

        // x_mid = x_in + drop1 * attn(LN1(x_in))
        Mat d_attn = t.drop1.size() ? Mat((d_x_mid.array() * t.drop1.array()).matrix()) : d_x_mid;
        Mat d_x_in = d_x_mid;

        gl.o.w.noalias() += t.ctx.transpose() * d_attn;
        gl.o.b.row(0).array() += d_attn.array().colwise().sum();
        Mat d_ctx = d_attn * l.o.w.transpose();

        Mat d_q(len, cfg.hidden), d_k(len, cfg.hidden), d_v(len, cfg.hidden);
        for (int h = 0; h < heads; ++h) {
            const auto qh = t.q.middleCols(h * dh, dh);
            const auto kh = t.k.middleCols(h * dh, dh);
            const auto vh = t.v.middleCols(h * dh, dh);
            const Mat& probs = t.probs[static_cast<std::size_t>(h)];
            const auto d_ctx_h = d_ctx.middleCols(h * dh, dh);

            Mat d_probs = d_ctx_h * vh.transpose();
            d_v.middleCols(h * dh, dh) = probs.transpose() * d_ctx_h;
            Vec row_dot = (d_probs.array() * probs.array()).rowwise().sum().matrix();
            Mat d_scores =
                (probs.array() * (d_probs.array().colwise() - row_dot.array())).matrix();
            d_q.middleCols(h * dh, dh) = d_scores * kh * inv_sqrt_dh;
            d_k.middleCols(h * dh, dh) = d_scores.transpose() * qh * inv_sqrt_dh;
        }
        gl.q.w.noalias() += t.a.transpose() * d_q;
        gl.q.b.row(0).array() += d_q.array().colwise().sum();
        gl.k.w.noalias() += t.a.transpose() * d_k;
        gl.k.b.row(0).array() += d_k.array().colwise().sum();
        gl.v.w.noalias() += t.a.transpose() * d_v;
        gl.v.b.row(0).array() += d_v.array().colwise().sum();
        Mat d_a = d_q * l.q.w.transpose();
        d_a.noalias() += d_k * l.k.w.transpose();
        d_a.noalias() += d_v * l.v.w.transpose();
        d_x_in += layer_norm_backward(d_a, t.ln1, l.ln1_gain, gl.ln1_gain, gl.ln1_bias);

        d_x = std::move(d_x_in);
    }

    if (trace.emb_drop.size()) d_x.array() *= trace.emb_drop.array();
    for (int t = 0; t < len; ++t) {
        g.tok_emb.row(ids[t]) += d_x.row(t);
        g.pos_emb.row(t) += d_x.row(t);
    }
}

inline int real_length(const Encoded& e) {
    if (e.ids.size() != e.mask.size()) throw ShapeError("ids and mask lengths differ");
    int len = 0;
    while (len < static_cast<int>(e.mask.size()) && e.mask[static_cast<std::size_t>(len)]) ++len;
    for (std::size_t i = static_cast<std::size_t>(len); i < e.mask.size(); ++i)
        if (e.mask[i]) throw ShapeError("padding mask must be a contiguous prefix");
    return len;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// batch forward (evaluation-facing surface)
// ---------------------------------------------------------------------------

struct ForwardOptions {
    bool train_mode = false;
    std::uint64_t dropout_seed = 0;
    bool want_attention = false;
    bool want_generator = false;      // per-position vocab logits
    bool want_discriminator = false;  // per-position replaced/original logits
};

struct ForwardResult {
    Mat cls_logits;                      // batch x labels (multi-label head)
    std::vector<Vec> disc_logits;        // per example, one logit per real position
    std::vector<Mat> gen_logits;         // per example, real positions x vocab
    std::vector<AttentionMaps> attention;
};

// Evaluation is a pure function of (params, ids, mask); with train_mode on,
// dropout is drawn deterministically from dropout_seed and the example index.
inline ForwardResult forward(const Parameters& p, const std::vector<Encoded>& batch,
                             const ForwardOptions& opt = {}) {
    const ModelConfig& cfg = p.config;
    ForwardResult res;
    if (p.cls_out) res.cls_logits.resize(static_cast<Eigen::Index>(batch.size()), p.cls_out->w.cols());
    if (opt.want_discriminator && !p.disc_out)
        throw ShapeError("model has no discriminator head");
    if (opt.want_generator && !p.gen_out) throw ShapeError("model has no generator head");
    if (opt.want_attention) res.attention.resize(batch.size());
    if (opt.want_discriminator) res.disc_logits.resize(batch.size());
    if (opt.want_generator) res.gen_logits.resize(batch.size());

    for (std::size_t i = 0; i < batch.size(); ++i) {
        const Encoded& e = batch[i];
        const int len = detail::real_length(e);
        Rng drop_rng(mix_seed(opt.dropout_seed, 0x64726f70, i));
        Rng* drop = opt.train_mode ? &drop_rng : nullptr;
        AttentionMaps* maps = opt.want_attention ? &res.attention[i] : nullptr;
        Mat out = detail::encoder_forward(p.body, cfg, e.ids.data(), len, opt.train_mode, drop,
                                          nullptr, maps);
        if (p.cls_out)
            res.cls_logits.row(static_cast<Eigen::Index>(i)) =
                out.row(0) * p.cls_out->w + p.cls_out->b.row(0);
        if (opt.want_discriminator) {
            Mat z = (out * p.disc_dense->w).rowwise() + p.disc_dense->b.row(0);
            Mat h = z.unaryExpr([](double v) { return detail::gelu_scalar(v); });
            res.disc_logits[i] = ((h * p.disc_out->w).rowwise() + p.disc_out->b.row(0)).col(0);
        }
        if (opt.want_generator) {
            const EncoderParams& gen_enc = p.generator_body ? *p.generator_body : p.body;
            Mat gout = p.generator_body
                           ? detail::encoder_forward(gen_enc, cfg, e.ids.data(), len,
                                                     opt.train_mode, drop, nullptr, nullptr)
                           : out;
            res.gen_logits[i] = (gout * p.gen_out->w).rowwise() + p.gen_out->b.row(0);
        }
    }
    return res;
}

// ---------------------------------------------------------------------------
// checkpoints: JSON manifest + little-endian float32 blob
// ---------------------------------------------------------------------------

namespace detail {

inline void write_f32_le(std::ostream& out, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    const char bytes[4] = {static_cast<char>(bits & 0xff), static_cast<char>((bits >> 8) & 0xff),
                           static_cast<char>((bits >> 16) & 0xff),
                           static_cast<char>((bits >> 24) & 0xff)};
    out.write(bytes, 4);
}

inline float read_f32_le(std::istream& in) {
    unsigned char bytes[4];
    in.read(reinterpret_cast<char*>(bytes), 4);
    std::uint32_t bits = static_cast<std::uint32_t>(bytes[0]) |
                         (static_cast<std::uint32_t>(bytes[1]) << 8) |
                         (static_cast<std::uint32_t>(bytes[2]) << 16) |
                         (static_cast<std::uint32_t>(bytes[3]) << 24);
    float v;
    std::memcpy(&v, &bits, sizeof v);
    return v;
}

inline std::filesystem::path blob_path_for(const std::filesystem::path& manifest) {
    std::filesystem::path p = manifest;
    p.replace_extension(".bin");
    return p;
}

}  // namespace detail

inline nlohmann::ordered_json config_to_json(const ModelConfig& c) {
    return nlohmann::ordered_json{{"vocab_size", c.vocab_size},
                                  {"hidden", c.hidden},
                                  {"heads", c.heads},
                                  {"layers", c.layers},
                                  {"max_len", c.max_len},
                                  {"ff_multiplier", c.ff_multiplier},
                                  {"embed_dropout", c.embed_dropout},
                                  {"hidden_dropout", c.hidden_dropout},
                                  {"shared_encoder", c.shared_encoder}};
}

inline ModelConfig config_from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.vocab_size = j.at("vocab_size").get<int>();
    c.hidden = j.at("hidden").get<int>();
    c.heads = j.at("heads").get<int>();
    c.layers = j.at("layers").get<int>();
    c.max_len = j.at("max_len").get<int>();
    c.ff_multiplier = j.at("ff_multiplier").get<int>();
    c.embed_dropout = j.at("embed_dropout").get<double>();
    c.hidden_dropout = j.at("hidden_dropout").get<double>();
    c.shared_encoder = j.at("shared_encoder").get<bool>();
    return c;
}

inline void save_checkpoint(const Parameters& p, const std::filesystem::path& manifest_path) {
    const auto blob = detail::blob_path_for(manifest_path);
    nlohmann::ordered_json manifest;
    manifest["format"] = "ontotrain.checkpoint.v1";
    manifest["config"] = config_to_json(p.config);
    manifest["head"] = {{"generator", p.head.generator},
                        {"discriminator", p.head.discriminator},
                        {"multi_label", p.head.multi_label}};
    manifest["dtype"] = "float32-le";
    manifest["blob"] = blob.filename().string();
    auto tensors = nlohmann::ordered_json::array();

    std::ofstream bout(blob, std::ios::binary);
    if (!bout) throw IoError("cannot open checkpoint blob for writing: " + blob.string());
    std::size_t offset = 0;
    for_each_tensor(p, [&](const std::string& name, const Mat& m) {
        tensors.push_back({{"name", name},
                           {"rows", m.rows()},
                           {"cols", m.cols()},
                           {"offset", offset}});
        for (Eigen::Index r = 0; r < m.rows(); ++r)
            for (Eigen::Index c = 0; c < m.cols(); ++c)
                detail::write_f32_le(bout, static_cast<float>(m(r, c)));
        offset += static_cast<std::size_t>(m.size()) * 4;
    });
    manifest["tensors"] = std::move(tensors);
    manifest["total_bytes"] = offset;
    bout.close();
    if (!bout) throw IoError("failed writing checkpoint blob: " + blob.string());

    std::ofstream mout(manifest_path, std::ios::binary);
    if (!mout) throw IoError("cannot open checkpoint manifest for writing: " + manifest_path.string());
    mout << manifest.dump(2) << '\n';
}

inline Parameters load_checkpoint(const std::filesystem::path& manifest_path) {
    std::ifstream min(manifest_path, std::ios::binary);
    if (!min) throw IoError("cannot open checkpoint manifest: " + manifest_path.string());
    nlohmann::json manifest;
    try {
        min >> manifest;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("checkpoint manifest is not valid JSON: " + std::string(e.what()));
    }
    ModelConfig cfg;
    HeadSpec head;
    try {
        cfg = config_from_json(manifest.at("config"));
        head.generator = manifest.at("head").at("generator").get<bool>();
        head.discriminator = manifest.at("head").at("discriminator").get<bool>();
        head.multi_label = manifest.at("head").at("multi_label").get<int>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("checkpoint manifest missing fields: " + std::string(e.what()));
    }
    Parameters p = init(cfg, head, 0);
    for_each_tensor(p, [](const std::string&, Mat& m) { m.setZero(); });

    std::unordered_map<std::string, Mat*> by_name;
    for_each_tensor(p, [&](const std::string& name, Mat& m) { by_name.emplace(name, &m); });

    const auto blob =
        manifest_path.parent_path() / manifest.at("blob").get<std::string>();
    std::ifstream bin(blob, std::ios::binary);
    if (!bin) throw IoError("cannot open checkpoint blob: " + blob.string());

    std::size_t filled = 0;
    for (const auto& entry : manifest.at("tensors")) {
        const std::string name = entry.at("name").get<std::string>();
        auto it = by_name.find(name);
        if (it == by_name.end())
            throw ShapeMismatch("checkpoint tensor " + name + " has no slot in this model");
        Mat& m = *it->second;
        const auto rows = entry.at("rows").get<Eigen::Index>();
        const auto cols = entry.at("cols").get<Eigen::Index>();
        if (rows != m.rows() || cols != m.cols())
            throw ShapeMismatch("checkpoint tensor " + name + " has shape " +
                                std::to_string(rows) + "x" + std::to_string(cols) +
                                ", expected " + std::to_string(m.rows()) + "x" +
                                std::to_string(m.cols()));
        bin.seekg(static_cast<std::streamoff>(entry.at("offset").get<std::size_t>()));
        for (Eigen::Index r = 0; r < rows; ++r)
            for (Eigen::Index c = 0; c < cols; ++c)
                m(r, c) = static_cast<double>(detail::read_f32_le(bin));
        if (!bin) throw IoError("checkpoint blob truncated at tensor " + name);
        ++filled;
    }
    if (filled != by_name.size())
        throw ShapeMismatch("checkpoint provides " + std::to_string(filled) + " tensors, model needs " +
                            std::to_string(by_name.size()));
    return p;
}

}  // namespace ontotrain

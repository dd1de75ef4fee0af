#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ontotrain/errors.hpp"
#include "ontotrain/labeled_set.hpp"
#include "ontotrain/metrics.hpp"
#include "ontotrain/model.hpp"
#include "ontotrain/rng.hpp"

namespace ontotrain {

struct TrainConfig {
    int epochs = 100;
    double learning_rate = 1e-4;
    int batch_size = 64;
    double l2 = 0.0;
    double mask_rate = 0.15;    // MLM corruption probability
    double disc_weight = 50.0;  // Electra loss mix
    std::uint64_t seed = 0;
    std::string optimizer = "adamax";
};

inline void validate_config(const TrainConfig& c) {
    auto fail = [](const std::string& what) { throw InvalidConfig(what); };
    if (c.epochs < 1) fail("epochs must be >= 1");
    if (!(c.learning_rate > 0.0)) fail("learning_rate must be > 0");
    if (c.batch_size < 1) fail("batch_size must be >= 1");
    if (c.l2 < 0.0) fail("l2 must be >= 0");
    if (!(c.mask_rate > 0.0 && c.mask_rate < 1.0)) fail("mask_rate must lie in (0, 1)");
    if (c.disc_weight < 0.0) fail("disc_weight must be >= 0");
    if (c.optimizer != "adamax") fail("only the adamax optimizer is implemented");
}

inline nlohmann::ordered_json train_config_to_json(const TrainConfig& c) {
    return nlohmann::ordered_json{{"epochs", c.epochs},
                                  {"learning_rate", c.learning_rate},
                                  {"batch_size", c.batch_size},
                                  {"l2", c.l2},
                                  {"mask_rate", c.mask_rate},
                                  {"disc_weight", c.disc_weight},
                                  {"seed", c.seed},
                                  {"optimizer", c.optimizer}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
    TrainConfig c;
    c.epochs = j.at("epochs").get<int>();
    c.learning_rate = j.at("learning_rate").get<double>();
    c.batch_size = j.at("batch_size").get<int>();
    c.l2 = j.at("l2").get<double>();
    c.mask_rate = j.at("mask_rate").get<double>();
    c.disc_weight = j.at("disc_weight").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.optimizer = j.value("optimizer", "adamax");
    return c;
}

// ---------------------------------------------------------------------------
// Adamax
// ---------------------------------------------------------------------------

// Per-tensor first moment m and infinity-norm accumulator u, aligned with the
// model's tensor order.
struct OptimizerState {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    long long step = 0;
    std::vector<Mat> m, u;
};

inline OptimizerState make_optimizer(const Parameters& params) {
    OptimizerState opt;
    for_each_tensor(params, [&](const std::string&, const Mat& t) {
        opt.m.push_back(Mat::Zero(t.rows(), t.cols()));
        opt.u.push_back(Mat::Zero(t.rows(), t.cols()));
    });
    return opt;
}

// g = grad + l2 * param; m = b1 m + (1 - b1) g; u = max(b2 u, |g|);
// param -= (lr / (1 - b1^t)) * m / (u + eps), with t incremented once per call.
inline void adamax_step(Parameters& params, OptimizerState& opt, const Parameters& grads,
                        double learning_rate, double l2) {
    std::vector<Mat*> ps;
    std::vector<const Mat*> gs;
    for_each_tensor(params, [&](const std::string&, Mat& t) { ps.push_back(&t); });
    for_each_tensor(grads, [&](const std::string&, const Mat& t) { gs.push_back(&t); });
    if (ps.size() != gs.size() || ps.size() != opt.m.size())
        throw ShapeError("optimizer state, parameters and gradients disagree");
    opt.step += 1;
    const double bias_corr = 1.0 - std::pow(opt.beta1, static_cast<double>(opt.step));
    const double scale = learning_rate / bias_corr;
    for (std::size_t i = 0; i < ps.size(); ++i) {
        Mat& p = *ps[i];
        const Mat& g_in = *gs[i];
        if (g_in.rows() != p.rows() || g_in.cols() != p.cols())
            throw ShapeError("gradient shape mismatch at tensor " + std::to_string(i));
        Mat g = l2 != 0.0 ? Mat(g_in + l2 * p) : g_in;
        if (!g.allFinite()) throw NonFiniteGradient("non-finite gradient at tensor " + std::to_string(i));
        opt.m[i] = opt.beta1 * opt.m[i] + (1.0 - opt.beta1) * g;
        opt.u[i] = (opt.beta2 * opt.u[i].array()).max(g.array().abs()).matrix();
        p.array() -= scale * opt.m[i].array() / (opt.u[i].array() + opt.epsilon);
    }
}

// ---------------------------------------------------------------------------
// losses
// ---------------------------------------------------------------------------

namespace detail {

inline double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

inline double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

}  // namespace detail

// Mean sigmoid binary cross-entropy over cells with present = 1. Absent cells
// contribute exactly zero to the value and the gradient; an all-absent batch
// yields loss 0 and a zero gradient.
inline double masked_bce(const Mat& logits, const Mat& labels, const Mat& present,
                         Mat* d_logits = nullptr) {
    if (labels.rows() != logits.rows() || labels.cols() != logits.cols() ||
        present.rows() != logits.rows() || present.cols() != logits.cols())
        throw ShapeError("masked_bce shapes disagree");
    if (d_logits) *d_logits = Mat::Zero(logits.rows(), logits.cols());
    double count = 0.0;
    for (Eigen::Index r = 0; r < present.rows(); ++r)
        for (Eigen::Index c = 0; c < present.cols(); ++c)
            if (present(r, c) != 0.0) count += 1.0;
    if (count == 0.0) return 0.0;
    double total = 0.0;
    for (Eigen::Index r = 0; r < logits.rows(); ++r)
        for (Eigen::Index c = 0; c < logits.cols(); ++c) {
            if (present(r, c) == 0.0) continue;
            const double z = logits(r, c);
            const double y = labels(r, c) != 0.0 ? 1.0 : 0.0;
            total += detail::softplus(z) - y * z;
            if (d_logits) (*d_logits)(r, c) = (detail::sigmoid(z) - y) / count;
        }
    return total / count;
}

// Softmax cross-entropy of one logit row against a target index; optional
// gradient at the logits.
inline double softmax_cross_entropy(const Vec& logits, int target, Vec* d_logits = nullptr) {
    if (target < 0 || target >= logits.size()) throw ShapeError("cross-entropy target out of range");
    const double mx = logits.maxCoeff();
    const double lse = mx + std::log((logits.array() - mx).exp().sum());
    if (d_logits) {
        *d_logits = ((logits.array() - lse).exp()).matrix();
        (*d_logits)(target) -= 1.0;
    }
    return lse - logits(target);
}

// ---------------------------------------------------------------------------
// Electra corruption
// ---------------------------------------------------------------------------

struct Corruption {
    std::vector<std::int32_t> ids;  // with MASK at the chosen positions
    std::vector<int> positions;     // ascending
};

// Independently selects each non-special real position with probability
// mask_rate and replaces it with MASK.
inline Corruption mlm_corrupt(const std::vector<std::int32_t>& ids, int len, double mask_rate,
                              Rng& rng) {
    Corruption out;
    out.ids = ids;
    for (int t = 0; t < len; ++t) {
        if (Vocabulary::is_special(ids[static_cast<std::size_t>(t)])) continue;
        if (rng.bernoulli(mask_rate)) {
            out.ids[static_cast<std::size_t>(t)] = Vocabulary::mask_id;
            out.positions.push_back(t);
        }
    }
    return out;
}

// One batch worth of corruption plus generator replacements. Fixing the plan
// makes the Electra loss a deterministic, differentiable function of the
// parameters (replacement sampling is detached).
struct ElectraExample {
    Corruption corruption;
    std::vector<std::int32_t> replaced;  // original ids with sampled tokens at positions
};

struct ElectraPlan {
    std::vector<ElectraExample> examples;
};

// Samples replacements from the generator's eval-mode predictive distribution.
inline ElectraPlan make_electra_plan(const Parameters& params, const std::vector<Encoded>& batch,
                                     double mask_rate, const Rng& step_rng) {
    if (!params.gen_out) throw ShapeError("model has no generator head");
    const EncoderParams& gen_enc = params.generator_body ? *params.generator_body : params.body;
    ElectraPlan plan;
    plan.examples.resize(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const Encoded& e = batch[i];
        const int len = detail::real_length(e);
        Rng rng = step_rng.derive(0x636f7272, i);
        ElectraExample& ex = plan.examples[i];
        ex.corruption = mlm_corrupt(e.ids, len, mask_rate, rng);
        ex.replaced = e.ids;
        if (ex.corruption.positions.empty()) continue;
        const Mat out = detail::encoder_forward(gen_enc, params.config,
                                                ex.corruption.ids.data(), len, false, nullptr,
                                                nullptr, nullptr);
        for (int pos : ex.corruption.positions) {
            Vec logits = (out.row(pos) * params.gen_out->w + params.gen_out->b.row(0)).transpose();
            const double mx = logits.maxCoeff();
            Eigen::ArrayXd probs = (logits.array() - mx).exp();
            const std::size_t pick = rng.categorical(probs.data(), static_cast<std::size_t>(probs.size()));
            ex.replaced[static_cast<std::size_t>(pos)] = static_cast<std::int32_t>(pick);
        }
    }
    return plan;
}

struct ElectraLosses {
    double generator = 0.0;
    double discriminator = 0.0;
    double total = 0.0;
    long long corrupted_positions = 0;
    long long discriminator_positions = 0;
};

// Generator loss: mean cross-entropy at corrupted positions. Discriminator
// loss: mean BCE of "token differs from original" over all real non-special
// positions. total = generator + disc_weight * discriminator.
inline ElectraLosses electra_losses(const Parameters& params, const std::vector<Encoded>& batch,
                                    const ElectraPlan& plan, double disc_weight, bool train_mode,
                                    std::uint64_t dropout_seed, Parameters* grads) {
    if (!params.gen_out || !params.disc_dense || !params.disc_out)
        throw ShapeError("electra losses need generator and discriminator heads");
    if (plan.examples.size() != batch.size())
        throw ShapeError("plan size does not match batch size");
    const ModelConfig& cfg = params.config;

    ElectraLosses res;
    std::vector<int> lens(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
        lens[i] = detail::real_length(batch[i]);
        res.corrupted_positions +=
            static_cast<long long>(plan.examples[i].corruption.positions.size());
        for (int t = 0; t < lens[i]; ++t)
            if (!Vocabulary::is_special(batch[i].ids[static_cast<std::size_t>(t)]))
                ++res.discriminator_positions;
    }

    const EncoderParams& gen_enc = params.generator_body ? *params.generator_body : params.body;
    EncoderParams* gen_grads = nullptr;
    if (grads) gen_grads = grads->generator_body ? &*grads->generator_body : &grads->body;

    for (std::size_t i = 0; i < batch.size(); ++i) {
        const ElectraExample& ex = plan.examples[i];
        const int len = lens[i];

        // generator pass on the corrupted sequence
        if (!ex.corruption.positions.empty()) {
            detail::EncoderTrace trace;
            Rng drop_rng(mix_seed(dropout_seed, 0x67656e, i));
            Mat out = detail::encoder_forward(gen_enc, cfg, ex.corruption.ids.data(), len,
                                              train_mode, train_mode ? &drop_rng : nullptr,
                                              grads ? &trace : nullptr, nullptr);
            Mat d_out;
            if (grads) d_out = Mat::Zero(len, cfg.hidden);
            for (int pos : ex.corruption.positions) {
                Vec logits =
                    (out.row(pos) * params.gen_out->w + params.gen_out->b.row(0)).transpose();
                const int target = batch[i].ids[static_cast<std::size_t>(pos)];
                Vec d_logits;
                res.generator +=
                    softmax_cross_entropy(logits, target, grads ? &d_logits : nullptr);
                if (grads) {
                    d_logits /= static_cast<double>(res.corrupted_positions);
                    grads->gen_out->w.noalias() += out.row(pos).transpose() * d_logits.transpose();
                    grads->gen_out->b.row(0) += d_logits.transpose();
                    d_out.row(pos) += (params.gen_out->w * d_logits).transpose();
                }
            }
            if (grads)
                detail::encoder_backward(gen_enc, cfg, ex.corruption.ids.data(), len, trace, d_out,
                                         *gen_grads);
        }

        // discriminator pass on the replaced sequence
        {
            detail::EncoderTrace trace;
            Rng drop_rng(mix_seed(dropout_seed, 0x64697363, i));
            Mat out = detail::encoder_forward(params.body, cfg, ex.replaced.data(), len,
                                              train_mode, train_mode ? &drop_rng : nullptr,
                                              grads ? &trace : nullptr, nullptr);
            Mat z = (out * params.disc_dense->w).rowwise() + params.disc_dense->b.row(0);
            Mat h = z.unaryExpr([](double v) { return detail::gelu_scalar(v); });
            Vec scores = ((h * params.disc_out->w).rowwise() + params.disc_out->b.row(0)).col(0);

            Vec d_scores;
            if (grads) d_scores = Vec::Zero(len);
            for (int t = 0; t < len; ++t) {
                if (Vocabulary::is_special(batch[i].ids[static_cast<std::size_t>(t)])) continue;
                const double y = ex.replaced[static_cast<std::size_t>(t)] !=
                                         batch[i].ids[static_cast<std::size_t>(t)]
                                     ? 1.0
                                     : 0.0;
                res.discriminator += detail::softplus(scores(t)) - y * scores(t);
                if (grads)
                    d_scores(t) = (detail::sigmoid(scores(t)) - y) /
                                  static_cast<double>(res.discriminator_positions) * disc_weight;
            }
            if (grads && res.discriminator_positions > 0) {
                grads->disc_out->w.noalias() += h.transpose() * d_scores;
                grads->disc_out->b(0, 0) += d_scores.sum();
                Mat d_h = d_scores * params.disc_out->w.transpose();
                Mat d_z = (d_h.array() *
                           z.unaryExpr([](double v) { return detail::gelu_grad_scalar(v); }).array())
                              .matrix();
                grads->disc_dense->w.noalias() += out.transpose() * d_z;
                grads->disc_dense->b.row(0).array() += d_z.array().colwise().sum();
                Mat d_out = d_z * params.disc_dense->w.transpose();
                detail::encoder_backward(params.body, cfg, ex.replaced.data(), len, trace, d_out,
                                         grads->body);
            }
        }
    }

    if (res.corrupted_positions > 0)
        res.generator /= static_cast<double>(res.corrupted_positions);
    if (res.discriminator_positions > 0)
        res.discriminator /= static_cast<double>(res.discriminator_positions);
    res.total = res.generator + disc_weight * res.discriminator;
    return res;
}

// Corrupt, sample replacements, compute both losses, take one Adamax step on
// generator + disc_weight * discriminator.
inline ElectraLosses electra_step(Parameters& params, OptimizerState& opt,
                                  const std::vector<Encoded>& batch, const TrainConfig& cfg,
                                  const Rng& step_rng, long batch_index = -1) {
    const ElectraPlan plan = make_electra_plan(params, batch, cfg.mask_rate, step_rng);
    Parameters grads = zeros_like(params);
    const ElectraLosses losses = electra_losses(params, batch, plan, cfg.disc_weight, true,
                                                step_rng.derive(0x64726f70).seed(), &grads);
    if (!std::isfinite(losses.total))
        throw NonFiniteLoss("non-finite electra loss at batch " + std::to_string(batch_index));
    adamax_step(params, opt, grads, cfg.learning_rate, cfg.l2);
    return losses;
}

// ---------------------------------------------------------------------------
// supervised multi-label step
// ---------------------------------------------------------------------------

// Pooled masked BCE of the CLS-head logits over the batch; fills grads when
// given. The streaming cell normalization matches masked_bce exactly.
inline double supervised_loss_and_grads(const Parameters& params, const std::vector<Encoded>& batch,
                                        const Mat& labels, const Mat& present, bool train_mode,
                                        std::uint64_t dropout_seed, Parameters* grads,
                                        Mat* logits_out = nullptr) {
    if (!params.cls_out) throw ShapeError("model has no multi-label head");
    const ModelConfig& cfg = params.config;
    const auto n_labels = params.cls_out->w.cols();
    if (labels.rows() != static_cast<Eigen::Index>(batch.size()) || labels.cols() != n_labels ||
        present.rows() != labels.rows() || present.cols() != labels.cols())
        throw ShapeError("supervised batch shapes disagree");

    double count = 0.0;
    for (Eigen::Index r = 0; r < present.rows(); ++r)
        for (Eigen::Index c = 0; c < present.cols(); ++c)
            if (present(r, c) != 0.0) count += 1.0;

    if (logits_out) logits_out->resize(labels.rows(), labels.cols());
    double total = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const int len = detail::real_length(batch[i]);
        detail::EncoderTrace trace;
        Rng drop_rng(mix_seed(dropout_seed, 0x636c73, i));
        Mat out = detail::encoder_forward(params.body, cfg, batch[i].ids.data(), len, train_mode,
                                          train_mode ? &drop_rng : nullptr,
                                          grads ? &trace : nullptr, nullptr);
        Vec logits = (out.row(0) * params.cls_out->w + params.cls_out->b.row(0)).transpose();
        if (logits_out) logits_out->row(static_cast<Eigen::Index>(i)) = logits.transpose();
        if (count == 0.0) continue;
        Vec d_logits = Vec::Zero(n_labels);
        for (Eigen::Index c = 0; c < n_labels; ++c) {
            if (present(static_cast<Eigen::Index>(i), c) == 0.0) continue;
            const double z = logits(c);
            const double y = labels(static_cast<Eigen::Index>(i), c) != 0.0 ? 1.0 : 0.0;
            total += detail::softplus(z) - y * z;
            d_logits(c) = (detail::sigmoid(z) - y) / count;
        }
        if (grads) {
            grads->cls_out->w.noalias() += out.row(0).transpose() * d_logits.transpose();
            grads->cls_out->b.row(0) += d_logits.transpose();
            Mat d_out = Mat::Zero(len, cfg.hidden);
            d_out.row(0) = (params.cls_out->w * d_logits).transpose();
            detail::encoder_backward(params.body, cfg, batch[i].ids.data(), len, trace, d_out,
                                     grads->body);
        }
    }
    return count == 0.0 ? 0.0 : total / count;
}

inline double supervised_step(Parameters& params, OptimizerState& opt,
                              const std::vector<Encoded>& batch, const Mat& labels,
                              const Mat& present, const TrainConfig& cfg, const Rng& step_rng,
                              long batch_index = -1) {
    Parameters grads = zeros_like(params);
    const double loss = supervised_loss_and_grads(params, batch, labels, present, true,
                                                  step_rng.derive(0x64726f70).seed(), &grads);
    if (!std::isfinite(loss))
        throw NonFiniteLoss("non-finite loss at batch " + std::to_string(batch_index));
    adamax_step(params, opt, grads, cfg.learning_rate, cfg.l2);
    return loss;
}

// ---------------------------------------------------------------------------
// stages
// ---------------------------------------------------------------------------

enum class Stage { pretrain, ontology, toxicity };

inline std::string to_string(Stage s) {
    switch (s) {
        case Stage::pretrain: return "pretrain";
        case Stage::ontology: return "ontology";
        case Stage::toxicity: return "toxicity";
    }
    return "?";
}

inline std::optional<Stage> stage_from_string(const std::string& s) {
    if (s == "pretrain") return Stage::pretrain;
    if (s == "ontology") return Stage::ontology;
    if (s == "toxicity") return Stage::toxicity;
    return std::nullopt;
}

// Stage-appropriate defaults: the toxicity stage applies the strong
// fine-tuning regularization (embedding dropout 0.2, hidden dropout 0.4,
// L2 1e-4); the other stages train unregularized by default.
struct StageDefaults {
    ModelConfig model;
    TrainConfig train;
};

inline StageDefaults stage_defaults(Stage stage) {
    StageDefaults d;
    if (stage == Stage::toxicity) {
        d.model.embed_dropout = 0.2;
        d.model.hidden_dropout = 0.4;
        d.train.l2 = 1e-4;
    }
    return d;
}

struct EpochLog {
    int epoch = 0;
    double train_loss = 0.0;
    double val_f1_micro = 0.0;
    double val_rocauc_macro = 0.0;
};

inline void write_epoch_log_csv(const std::vector<EpochLog>& log, std::ostream& out) {
    out << "epoch,loss,val_f1_micro,val_rocauc_macro\n";
    out << std::setprecision(12);
    for (const auto& row : log)
        out << row.epoch << ',' << row.train_loss << ',' << row.val_f1_micro << ','
            << row.val_rocauc_macro << '\n';
}

inline std::vector<EpochLog> read_epoch_log_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw ParseError("epoch log is empty", 0);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "epoch,loss,val_f1_micro,val_rocauc_macro")
        throw ParseError("unexpected epoch log header: " + line, 1);
    std::vector<EpochLog> log;
    long line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        EpochLog row;
        std::size_t pos = 0;
        auto next_field = [&]() {
            const std::size_t comma = line.find(',', pos);
            std::string field = comma == std::string::npos ? line.substr(pos)
                                                           : line.substr(pos, comma - pos);
            pos = comma == std::string::npos ? std::string::npos : comma + 1;
            return field;
        };
        try {
            row.epoch = std::stoi(next_field());
            row.train_loss = std::stod(next_field());
            row.val_f1_micro = std::stod(next_field());
            row.val_rocauc_macro = std::stod(next_field());
        } catch (const std::exception&) {
            throw ParseError("malformed epoch log row", line_no);
        }
        if (pos != std::string::npos) throw ParseError("too many fields in epoch log row", line_no);
        log.push_back(row);
    }
    if (log.empty()) throw ParseError("epoch log has no rows", line_no);
    return log;
}

inline std::optional<int> first_epoch_reaching(const std::vector<EpochLog>& log, double f1_threshold) {
    for (const auto& row : log)
        if (row.val_f1_micro >= f1_threshold) return row.epoch;
    return std::nullopt;
}

struct StageData {
    const LabeledSet* train = nullptr;
    const LabeledSet* validation = nullptr;
};

struct StageResult {
    std::vector<EpochLog> log;
    int best_epoch = -1;
    double best_val_f1 = -1.0;
    std::filesystem::path final_checkpoint;
    std::filesystem::path best_checkpoint;
    std::filesystem::path epoch_log_csv;
    std::filesystem::path run_manifest;
    std::size_t skipped_train_rows = 0;
    std::size_t skipped_validation_rows = 0;
};

namespace detail {

struct EncodedSet {
    std::vector<Encoded> rows;
    std::vector<std::size_t> source_index;
    std::size_t skipped = 0;
};

inline EncodedSet encode_set(const LabeledSet& set, const Vocabulary& vocab, int max_len) {
    EncodedSet out;
    for (std::size_t i = 0; i < set.rows.size(); ++i) {
        try {
            out.rows.push_back(encode(set.rows[i].seq, vocab, max_len));
            out.source_index.push_back(i);
        } catch (const SequenceTooLong&) {
            ++out.skipped;
        }
    }
    return out;
}

inline void fill_label_mats(const LabeledSet& set, const std::vector<std::size_t>& source,
                            const std::vector<std::size_t>& which, Mat& labels, Mat& present) {
    const auto n_labels = static_cast<Eigen::Index>(set.label_count());
    labels.resize(static_cast<Eigen::Index>(which.size()), n_labels);
    present.resize(static_cast<Eigen::Index>(which.size()), n_labels);
    for (std::size_t i = 0; i < which.size(); ++i) {
        const LabeledRow& row = set.rows[source[which[i]]];
        for (Eigen::Index c = 0; c < n_labels; ++c) {
            labels(static_cast<Eigen::Index>(i), c) = row.labels[static_cast<std::size_t>(c)];
            present(static_cast<Eigen::Index>(i), c) = row.present[static_cast<std::size_t>(c)];
        }
    }
}

// Replaced-token detection scores over a validation corpus: one row per
// eligible position, scored by the discriminator in eval mode.
inline PredictionBatch electra_validation_batch(const Parameters& params,
                                                const std::vector<Encoded>& rows,
                                                double mask_rate, const Rng& rng) {
    const ElectraPlan plan = make_electra_plan(params, rows, mask_rate, rng);
    std::vector<double> scores, labels;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const int len = real_length(rows[i]);
        Mat out = encoder_forward(params.body, params.config, plan.examples[i].replaced.data(),
                                  len, false, nullptr, nullptr, nullptr);
        Mat z = (out * params.disc_dense->w).rowwise() + params.disc_dense->b.row(0);
        Mat h = z.unaryExpr([](double v) { return gelu_scalar(v); });
        Vec logit = ((h * params.disc_out->w).rowwise() + params.disc_out->b.row(0)).col(0);
        for (int t = 0; t < len; ++t) {
            if (Vocabulary::is_special(rows[i].ids[static_cast<std::size_t>(t)])) continue;
            scores.push_back(sigmoid(logit(t)));
            labels.push_back(plan.examples[i].replaced[static_cast<std::size_t>(t)] !=
                                     rows[i].ids[static_cast<std::size_t>(t)]
                                 ? 1.0
                                 : 0.0);
        }
    }
    PredictionBatch batch;
    batch.scores.resize(static_cast<Eigen::Index>(scores.size()), 1);
    batch.labels.resize(static_cast<Eigen::Index>(labels.size()), 1);
    batch.present = Mat::Ones(static_cast<Eigen::Index>(scores.size()), 1);
    for (std::size_t i = 0; i < scores.size(); ++i) {
        batch.scores(static_cast<Eigen::Index>(i), 0) = scores[i];
        batch.labels(static_cast<Eigen::Index>(i), 0) = labels[i];
    }
    return batch;
}

}  // namespace detail

// Runs one training stage end to end: seeded shuffling, per-batch updates,
// per-epoch validation metrics, final and best-validation checkpoints.
// init_from transfers the encoder body only; heads are freshly initialized.
inline StageResult run_stage(Stage stage, const std::optional<std::filesystem::path>& init_from,
                             const StageData& data, const ModelConfig& model_config,
                             const TrainConfig& train_config, const Vocabulary& vocab,
                             const std::filesystem::path& out_dir,
                             const nlohmann::ordered_json& invocation = {}) {
    validate_config(model_config);
    validate_config(train_config);
    if (!data.train || !data.validation) throw InvalidConfig("stage needs train and validation data");
    if (static_cast<int>(vocab.size()) > model_config.vocab_size)
        throw InvalidConfig("vocabulary size " + std::to_string(vocab.size()) +
                            " exceeds configured vocab_size " +
                            std::to_string(model_config.vocab_size));

    const bool supervised = stage != Stage::pretrain;
    if (supervised) {
        if (data.train->label_count() == 0)
            throw InvalidConfig(to_string(stage) + " stage needs labeled data");
        if (data.train->label_count() != data.validation->label_count())
            throw ShapeMismatch("train and validation label counts differ");
    }
    data.train->check_invariants();
    data.validation->check_invariants();

    const HeadSpec head = supervised
                              ? HeadSpec::multi(static_cast<int>(data.train->label_count()))
                              : HeadSpec::electra();
    Parameters params = init(model_config, head, train_config.seed);
    if (init_from) {
        const Parameters loaded = load_checkpoint(*init_from);
        const ModelConfig& lc = loaded.config;
        if (lc.vocab_size != model_config.vocab_size || lc.hidden != model_config.hidden ||
            lc.heads != model_config.heads || lc.layers != model_config.layers ||
            lc.max_len != model_config.max_len || lc.ff_multiplier != model_config.ff_multiplier)
            throw ShapeMismatch("checkpoint encoder geometry does not match the requested config");
        params.body = loaded.body;  // heads stay freshly initialized
    }

    const auto train_enc = detail::encode_set(*data.train, vocab, model_config.max_len);
    const auto val_enc = detail::encode_set(*data.validation, vocab, model_config.max_len);
    if (train_enc.rows.empty()) throw InvalidConfig("no usable training rows after encoding");
    if (val_enc.rows.empty()) throw InvalidConfig("no usable validation rows after encoding");

    std::filesystem::create_directories(out_dir);
    OptimizerState opt = make_optimizer(params);
    Rng base_rng(mix_seed(train_config.seed, 0x737461676531 + static_cast<int>(stage)));

    StageResult result;
    result.skipped_train_rows = train_enc.skipped;
    result.skipped_validation_rows = val_enc.skipped;
    Parameters best_params = params;

    std::vector<std::size_t> order(train_enc.rows.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = 1; epoch <= train_config.epochs; ++epoch) {
        Rng shuffle_rng = base_rng.derive(0x73687566, static_cast<std::uint64_t>(epoch));
        shuffle_rng.shuffle(order);

        double loss_sum = 0.0;
        long n_batches = 0;
        for (std::size_t begin = 0; begin < order.size();
             begin += static_cast<std::size_t>(train_config.batch_size)) {
            const std::size_t end =
                std::min(order.size(), begin + static_cast<std::size_t>(train_config.batch_size));
            std::vector<std::size_t> which(order.begin() + static_cast<std::ptrdiff_t>(begin),
                                           order.begin() + static_cast<std::ptrdiff_t>(end));
            std::vector<Encoded> batch;
            batch.reserve(which.size());
            for (std::size_t w : which) batch.push_back(train_enc.rows[w]);
            const Rng step_rng =
                base_rng.derive(0x62617463, (static_cast<std::uint64_t>(epoch) << 32) |
                                                static_cast<std::uint64_t>(n_batches));
            double loss;
            if (supervised) {
                Mat labels, present;
                detail::fill_label_mats(*data.train, train_enc.source_index, which, labels, present);
                loss = supervised_step(params, opt, batch, labels, present, train_config, step_rng,
                                       n_batches);
            } else {
                loss = electra_step(params, opt, batch, train_config, step_rng, n_batches).total;
            }
            loss_sum += loss;
            ++n_batches;
        }

        EpochLog row;
        row.epoch = epoch;
        row.train_loss = loss_sum / static_cast<double>(n_batches);
        PredictionBatch val_batch;
        if (supervised) {
            std::vector<std::size_t> all(val_enc.rows.size());
            for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
            Mat labels, present;
            detail::fill_label_mats(*data.validation, val_enc.source_index, all, labels, present);
            Mat logits;
            supervised_loss_and_grads(params, val_enc.rows, labels, present, false, 0, nullptr,
                                      &logits);
            val_batch.scores = logits.unaryExpr([](double z) { return detail::sigmoid(z); });
            val_batch.labels = labels;
            val_batch.present = present;
        } else {
            val_batch = detail::electra_validation_batch(
                params, val_enc.rows, train_config.mask_rate,
                base_rng.derive(0x76616c, static_cast<std::uint64_t>(epoch)));
        }
        row.val_f1_micro = micro_f1(val_batch, 0.5);
        row.val_rocauc_macro = macro_auc(roc_auc_per_class(val_batch));
        result.log.push_back(row);

        if (row.val_f1_micro > result.best_val_f1) {
            result.best_val_f1 = row.val_f1_micro;
            result.best_epoch = epoch;
            best_params = params;
        }
    }

    result.final_checkpoint = out_dir / "checkpoint_final.json";
    result.best_checkpoint = out_dir / "checkpoint_best.json";
    result.epoch_log_csv = out_dir / "epoch_log.csv";
    result.run_manifest = out_dir / "run_manifest.json";
    save_checkpoint(params, result.final_checkpoint);
    save_checkpoint(best_params, result.best_checkpoint);
    {
        std::ofstream out(result.epoch_log_csv, std::ios::binary);
        if (!out) throw IoError("cannot write epoch log: " + result.epoch_log_csv.string());
        write_epoch_log_csv(result.log, out);
    }
    {
        nlohmann::ordered_json manifest;
        manifest["stage"] = to_string(stage);
        manifest["model"] = config_to_json(model_config);
        manifest["train"] = train_config_to_json(train_config);
        manifest["init_from"] = init_from ? nlohmann::ordered_json(init_from->string())
                                          : nlohmann::ordered_json(nullptr);
        manifest["head"] = {{"generator", head.generator},
                            {"discriminator", head.discriminator},
                            {"multi_label", head.multi_label}};
        manifest["rows"] = {{"train", train_enc.rows.size()},
                            {"validation", val_enc.rows.size()},
                            {"skipped_train", train_enc.skipped},
                            {"skipped_validation", val_enc.skipped}};
        manifest["best_epoch"] = result.best_epoch;
        manifest["best_val_f1"] = result.best_val_f1;
        if (!invocation.is_null() && !invocation.empty()) manifest["invocation"] = invocation;
        std::ofstream out(result.run_manifest, std::ios::binary);
        if (!out) throw IoError("cannot write run manifest: " + result.run_manifest.string());
        out << manifest.dump(2) << '\n';
    }
    return result;
}

}  // namespace ontotrain

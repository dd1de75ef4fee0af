#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ontotrain/errors.hpp"
#include "ontotrain/labeled_set.hpp"
#include "ontotrain/model.hpp"

namespace ontotrain {

// Sigmoid scores with ground-truth labels and a presence mask. Cells with
// present = 0 are excluded from every loss and metric.
struct PredictionBatch {
    Mat scores;
    Mat labels;
    Mat present;

    void validate() const {
        if (labels.rows() != scores.rows() || labels.cols() != scores.cols() ||
            present.rows() != scores.rows() || present.cols() != scores.cols())
            throw ShapeError("prediction batch shapes disagree");
        for (Eigen::Index r = 0; r < scores.rows(); ++r)
            for (Eigen::Index c = 0; c < scores.cols(); ++c) {
                const double s = scores(r, c);
                if (!std::isfinite(s) || s < 0.0 || s > 1.0)
                    throw ShapeError("scores must be finite and in [0, 1]");
            }
    }
};

// TP/FP/FN pooled over all present cells; returns 0 when the denominator is 0.
inline double micro_f1(const PredictionBatch& batch, double threshold) {
    if (!(threshold > 0.0 && threshold < 1.0))
        throw InvalidConfig("threshold must lie in (0, 1)");
    batch.validate();
    long long tp = 0, fp = 0, fn = 0;
    for (Eigen::Index r = 0; r < batch.scores.rows(); ++r)
        for (Eigen::Index c = 0; c < batch.scores.cols(); ++c) {
            if (batch.present(r, c) == 0.0) continue;
            const bool pred = batch.scores(r, c) >= threshold;
            const bool truth = batch.labels(r, c) != 0.0;
            if (pred && truth)
                ++tp;
            else if (pred && !truth)
                ++fp;
            else if (!pred && truth)
                ++fn;
        }
    const long long denom = 2 * tp + fp + fn;
    return denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
}

// Rank-statistic AUC per label: P(score_pos > score_neg) + 0.5 P(tie) over
// rows with present = 1. Undefined (absent) when a label has no positive or no
// negative.
inline std::vector<std::optional<double>> roc_auc_per_class(const PredictionBatch& batch) {
    batch.validate();
    std::vector<std::optional<double>> out(static_cast<std::size_t>(batch.scores.cols()));
    std::vector<std::pair<double, int>> cells;
    for (Eigen::Index c = 0; c < batch.scores.cols(); ++c) {
        cells.clear();
        long long n_pos = 0;
        for (Eigen::Index r = 0; r < batch.scores.rows(); ++r) {
            if (batch.present(r, c) == 0.0) continue;
            const int y = batch.labels(r, c) != 0.0 ? 1 : 0;
            n_pos += y;
            cells.emplace_back(batch.scores(r, c), y);
        }
        const long long n_neg = static_cast<long long>(cells.size()) - n_pos;
        if (n_pos == 0 || n_neg == 0) continue;
        std::sort(cells.begin(), cells.end(),
                  [](const auto& a, const auto& b) { return a.first < b.first; });
        double rank_sum_pos = 0.0;
        std::size_t i = 0;
        while (i < cells.size()) {
            std::size_t j = i;
            while (j < cells.size() && cells[j].first == cells[i].first) ++j;
            const double avg_rank = static_cast<double>(i + j + 1) / 2.0;  // 1-based
            for (std::size_t k = i; k < j; ++k)
                if (cells[k].second) rank_sum_pos += avg_rank;
            i = j;
        }
        const double auc =
            (rank_sum_pos - static_cast<double>(n_pos) * static_cast<double>(n_pos + 1) / 2.0) /
            (static_cast<double>(n_pos) * static_cast<double>(n_neg));
        out[static_cast<std::size_t>(c)] = auc;
    }
    return out;
}

// Unweighted mean over defined classes; NaN when every class is undefined.
inline double macro_auc(const std::vector<std::optional<double>>& per_class) {
    double sum = 0.0;
    int n = 0;
    for (const auto& v : per_class)
        if (v) {
            sum += *v;
            ++n;
        }
    return n == 0 ? std::numeric_limits<double>::quiet_NaN() : sum / n;
}

// ---------------------------------------------------------------------------
// normalized attention entropy
// ---------------------------------------------------------------------------

struct EntropyOptions {
    // Drop position 0 (CLS) from both the query and key axes and renormalize
    // rows, so entropy is taken over molecule tokens only.
    bool exclude_specials = true;
};

struct EntropyReport {
    Mat per_head_mean;  // layers x heads
    double overall = 0.0;
    long long rows = 0;     // (layer, head, query) rows measured
    long long skipped = 0;  // rows with fewer than 2 keys
};

class EntropyAccumulator {
public:
    void add(const AttentionMaps& maps, const EntropyOptions& opt = {}) {
        if (layers_ < 0) {
            layers_ = maps.layers;
            heads_ = maps.heads;
            sum_ = Mat::Zero(layers_, heads_);
            count_ = Mat::Zero(layers_, heads_);
        } else if (maps.layers != layers_ || maps.heads != heads_) {
            throw ShapeError("attention maps disagree on layer/head counts");
        }
        const int first = opt.exclude_specials ? 1 : 0;
        const int n_keys = maps.seq_len - first;
        const int n_queries = maps.seq_len - first;
        if (n_keys < 2) {
            skipped_ += static_cast<long long>(layers_) * heads_ * std::max(0, n_queries);
            return;
        }
        const double log_n = std::log(static_cast<double>(n_keys));
        for (int l = 0; l < layers_; ++l)
            for (int h = 0; h < heads_; ++h) {
                const Mat& m = maps.at(l, h);
                for (int q = first; q < maps.seq_len; ++q) {
                    double total = 0.0;
                    for (int k = first; k < maps.seq_len; ++k) total += m(q, k);
                    if (total <= 0.0) {
                        ++skipped_;
                        continue;
                    }
                    double entropy = 0.0;
                    for (int k = first; k < maps.seq_len; ++k) {
                        const double p = m(q, k) / total;
                        if (p > 0.0) entropy -= p * std::log(p);
                    }
                    double value = entropy / log_n;
                    value = std::min(1.0, std::max(0.0, value));
                    sum_(l, h) += value;
                    count_(l, h) += 1.0;
                }
            }
    }

    EntropyReport report() const {
        EntropyReport rep;
        rep.skipped = skipped_;
        if (layers_ < 0 || count_.sum() == 0.0)
            throw DegenerateSequence("no attention rows with at least 2 keys");
        rep.per_head_mean = Mat::Zero(layers_, heads_);
        double total = 0.0;
        for (int l = 0; l < layers_; ++l)
            for (int h = 0; h < heads_; ++h)
                rep.per_head_mean(l, h) = count_(l, h) > 0 ? sum_(l, h) / count_(l, h)
                                                           : std::numeric_limits<double>::quiet_NaN();
        total = sum_.sum();
        rep.rows = static_cast<long long>(count_.sum());
        rep.overall = total / count_.sum();
        return rep;
    }

private:
    int layers_ = -1, heads_ = 0;
    Mat sum_, count_;
    long long skipped_ = 0;
};

// H = -sum p ln p over the key axis, normalized by ln(n_keys); 1 = uniform,
// 0 = one-hot. Rows with fewer than 2 keys are skipped and counted; a map with
// no usable row at all raises DegenerateSequence.
inline EntropyReport normalized_entropy(const AttentionMaps& maps, const EntropyOptions& opt = {}) {
    EntropyAccumulator acc;
    acc.add(maps, opt);
    return acc.report();
}

// ---------------------------------------------------------------------------
// checkpoint evaluation
// ---------------------------------------------------------------------------

struct ClassReport {
    std::string name;
    std::optional<double> f1;       // absent when the class has no present cells
    std::optional<double> roc_auc;  // absent without both positives and negatives
    long long present_cells = 0;
    long long positives = 0;
};

struct EvalReport {
    std::vector<ClassReport> per_class;
    double micro_f1_value = 0.0;
    double macro_auc_value = std::numeric_limits<double>::quiet_NaN();
    std::optional<EntropyReport> entropy;
    std::size_t rows = 0;
    std::size_t skipped_rows = 0;
};

struct EvalOptions {
    double threshold = 0.5;
    bool with_entropy = true;
    EntropyOptions entropy_options;
    int batch_size = 64;
};

// Eval-mode forward over the whole set; per-class F1 and ROC-AUC, pooled
// micro-F1, and aggregated attention entropy, all with missing-label
// exclusion.
inline EvalReport evaluate(const Parameters& params, const LabeledSet& set,
                           const Vocabulary& vocab, const EvalOptions& opt = {}) {
    if (!params.cls_out)
        throw ShapeMismatch("checkpoint has no multi-label head");
    if (params.head.multi_label != static_cast<int>(set.label_count()))
        throw ShapeMismatch("checkpoint head size " + std::to_string(params.head.multi_label) +
                            " does not match label count " + std::to_string(set.label_count()));
    EvalReport rep;
    std::vector<Encoded> encoded;
    std::vector<std::size_t> kept;
    for (std::size_t i = 0; i < set.rows.size(); ++i) {
        try {
            encoded.push_back(encode(set.rows[i].seq, vocab, params.config.max_len));
            kept.push_back(i);
        } catch (const SequenceTooLong&) {
            ++rep.skipped_rows;
        }
    }
    rep.rows = kept.size();

    const auto n = static_cast<Eigen::Index>(kept.size());
    const auto labels_n = static_cast<Eigen::Index>(set.label_count());
    PredictionBatch batch;
    batch.scores.resize(n, labels_n);
    batch.labels.resize(n, labels_n);
    batch.present.resize(n, labels_n);
    EntropyAccumulator entropy_acc;

    ForwardOptions fwd;
    fwd.want_attention = opt.with_entropy;
    for (Eigen::Index begin = 0; begin < n; begin += opt.batch_size) {
        const Eigen::Index count = std::min<Eigen::Index>(opt.batch_size, n - begin);
        std::vector<Encoded> chunk(encoded.begin() + begin, encoded.begin() + begin + count);
        ForwardResult out = forward(params, chunk, fwd);
        for (Eigen::Index j = 0; j < count; ++j) {
            const LabeledRow& row = set.rows[kept[static_cast<std::size_t>(begin + j)]];
            for (Eigen::Index c = 0; c < labels_n; ++c) {
                const double z = out.cls_logits(j, c);
                batch.scores(begin + j, c) = 1.0 / (1.0 + std::exp(-z));
                batch.labels(begin + j, c) = row.labels[static_cast<std::size_t>(c)];
                batch.present(begin + j, c) = row.present[static_cast<std::size_t>(c)];
            }
            if (opt.with_entropy)
                entropy_acc.add(out.attention[static_cast<std::size_t>(j)], opt.entropy_options);
        }
    }

    rep.micro_f1_value = micro_f1(batch, opt.threshold);
    const auto aucs = roc_auc_per_class(batch);
    rep.macro_auc_value = macro_auc(aucs);
    for (std::size_t c = 0; c < set.label_count(); ++c) {
        ClassReport cr;
        cr.name = set.label_names[c];
        long long tp = 0, fp = 0, fn = 0;
        for (Eigen::Index r = 0; r < n; ++r) {
            if (batch.present(r, static_cast<Eigen::Index>(c)) == 0.0) continue;
            ++cr.present_cells;
            const bool truth = batch.labels(r, static_cast<Eigen::Index>(c)) != 0.0;
            const bool pred = batch.scores(r, static_cast<Eigen::Index>(c)) >= opt.threshold;
            cr.positives += truth ? 1 : 0;
            if (pred && truth)
                ++tp;
            else if (pred && !truth)
                ++fp;
            else if (!pred && truth)
                ++fn;
        }
        if (cr.present_cells > 0) {
            const long long denom = 2 * tp + fp + fn;
            cr.f1 = denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
        }
        cr.roc_auc = aucs[c];
        rep.per_class.push_back(std::move(cr));
    }
    if (opt.with_entropy) {
        try {
            rep.entropy = entropy_acc.report();
        } catch (const DegenerateSequence&) {
            rep.entropy = std::nullopt;
        }
    }
    return rep;
}

inline nlohmann::ordered_json eval_report_to_json(const EvalReport& rep) {
    nlohmann::ordered_json j;
    j["micro_f1"] = rep.micro_f1_value;
    j["rocauc_macro"] = std::isfinite(rep.macro_auc_value)
                            ? nlohmann::ordered_json(rep.macro_auc_value)
                            : nlohmann::ordered_json(nullptr);
    j["rows"] = rep.rows;
    j["skipped_rows"] = rep.skipped_rows;
    auto classes = nlohmann::ordered_json::array();
    for (const auto& c : rep.per_class) {
        nlohmann::ordered_json e;
        e["name"] = c.name;
        e["f1"] = c.f1 ? nlohmann::ordered_json(*c.f1) : nlohmann::ordered_json(nullptr);
        e["roc_auc"] =
            c.roc_auc ? nlohmann::ordered_json(*c.roc_auc) : nlohmann::ordered_json(nullptr);
        e["present_cells"] = c.present_cells;
        e["positives"] = c.positives;
        classes.push_back(std::move(e));
    }
    j["per_class"] = std::move(classes);
    if (rep.entropy) {
        nlohmann::ordered_json ent;
        ent["overall"] = rep.entropy->overall;
        ent["rows"] = rep.entropy->rows;
        ent["skipped"] = rep.entropy->skipped;
        nlohmann::ordered_json per_head;
        for (Eigen::Index l = 0; l < rep.entropy->per_head_mean.rows(); ++l)
            for (Eigen::Index h = 0; h < rep.entropy->per_head_mean.cols(); ++h)
                per_head[std::to_string(l) + "." + std::to_string(h)] =
                    rep.entropy->per_head_mean(l, h);
        ent["per_head"] = std::move(per_head);
        j["entropy"] = std::move(ent);
    } else {
        j["entropy"] = nullptr;
    }
    return j;
}

// CSV mirror, one row per class in the set's label order.
inline void eval_report_to_csv(const EvalReport& rep, std::ostream& out) {
    out << "label,f1,roc_auc,present_cells,positives\n";
    for (const auto& c : rep.per_class) {
        out << c.name << ',';
        if (c.f1) out << *c.f1;
        out << ',';
        if (c.roc_auc) out << *c.roc_auc;
        out << ',' << c.present_cells << ',' << c.positives << '\n';
    }
}

}  // namespace ontotrain

// ontotrain: SMILES Electra pretraining, ontology pre-training and toxicity
// fine-tuning, with evaluation, attention export and curve plotting.
//
// Exit codes: 0 success, 1 runtime error, 2 usage or path error.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ontotrain/datasets.hpp"
#include "ontotrain/metrics.hpp"
#include "ontotrain/model.hpp"
#include "ontotrain/ontology.hpp"
#include "ontotrain/reference.hpp"
#include "ontotrain/smiles.hpp"
#include "ontotrain/svg.hpp"
#include "ontotrain/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

// Usage and path problems exit with 2; anything failing later exits with 1.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void require_file(const std::string& path, const std::string& what) {
    if (!fs::exists(path)) throw UsageError(what + " does not exist: " + path);
}

std::uint64_t env_seed_fallback() {
    const char* env = std::getenv("ONTOTRAIN_SEED");
    if (!env) return 0;
    try {
        return std::stoull(env);
    } catch (const std::exception&) {
        throw UsageError(std::string("ONTOTRAIN_SEED is not an integer: ") + env);
    }
}

void write_text(const fs::path& path, const std::string& content) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ontotrain::IoError("cannot write " + path.string());
    out << content;
}

void write_manifest(const fs::path& path, const ordered_json& manifest) {
    write_text(path, manifest.dump(2) + "\n");
}

// Distinguishes a Tox21-style table (has a smiles column) from the labeled-set
// format (header of label names).
bool looks_like_tox_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::string header;
    if (!std::getline(in, header)) return false;
    const char delim = header.find('\t') != std::string::npos ? '\t' : ',';
    for (const auto& field : ontotrain::detail::split_delimited(header, delim))
        if (ontotrain::detail::canonical_column(field) == "smiles") return true;
    return false;
}

ontotrain::LabeledSet load_any_labeled(const std::string& path, const ontotrain::Vocabulary& vocab,
                                       int max_len, ontotrain::LoadReport* report = nullptr) {
    if (looks_like_tox_csv(path)) return ontotrain::load_tox21_csv(path, vocab, max_len, report);
    return ontotrain::load_labeled_set(path);
}

// ---------------------------------------------------------------------------
// train command configuration
// ---------------------------------------------------------------------------

struct TrainPaths {
    std::string corpus;  // pretrain
    std::string data;    // single-file mode (ontology set / MoleculeNet csv)
    std::string train;   // explicit-role mode
    std::string validation;
    std::string test;
    std::string vocab;
    std::string init;
    std::string out;
};

struct TrainOptions {
    ontotrain::ModelConfig model;
    ontotrain::TrainConfig train;
    TrainPaths paths;
    double fractions[3] = {0.85, 0.075, 0.075};
    double val_fraction = 0.05;  // pretrain corpus holdout
};

void apply_model_overrides(const json& j, ontotrain::ModelConfig& m) {
    if (j.contains("vocab_size")) m.vocab_size = j.at("vocab_size").get<int>();
    if (j.contains("hidden")) m.hidden = j.at("hidden").get<int>();
    if (j.contains("heads")) m.heads = j.at("heads").get<int>();
    if (j.contains("layers")) m.layers = j.at("layers").get<int>();
    if (j.contains("max_len")) m.max_len = j.at("max_len").get<int>();
    if (j.contains("ff_multiplier")) m.ff_multiplier = j.at("ff_multiplier").get<int>();
    if (j.contains("embed_dropout")) m.embed_dropout = j.at("embed_dropout").get<double>();
    if (j.contains("hidden_dropout")) m.hidden_dropout = j.at("hidden_dropout").get<double>();
    if (j.contains("shared_encoder")) m.shared_encoder = j.at("shared_encoder").get<bool>();
}

void apply_train_overrides(const json& j, ontotrain::TrainConfig& t) {
    if (j.contains("epochs")) t.epochs = j.at("epochs").get<int>();
    if (j.contains("learning_rate")) t.learning_rate = j.at("learning_rate").get<double>();
    if (j.contains("batch_size")) t.batch_size = j.at("batch_size").get<int>();
    if (j.contains("l2")) t.l2 = j.at("l2").get<double>();
    if (j.contains("mask_rate")) t.mask_rate = j.at("mask_rate").get<double>();
    if (j.contains("disc_weight")) t.disc_weight = j.at("disc_weight").get<double>();
    if (j.contains("seed")) t.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("optimizer")) t.optimizer = j.at("optimizer").get<std::string>();
}

void apply_paths_overrides(const json& j, TrainPaths& p) {
    auto grab = [&](const char* key, std::string& slot) {
        if (j.contains(key) && !j.at(key).is_null()) slot = j.at(key).get<std::string>();
    };
    grab("corpus", p.corpus);
    grab("data", p.data);
    grab("train", p.train);
    grab("validation", p.validation);
    grab("test", p.test);
    grab("vocab", p.vocab);
    grab("init", p.init);
    grab("out", p.out);
}

ordered_json paths_to_json(const TrainPaths& p) {
    ordered_json j;
    auto put = [&](const char* key, const std::string& value) {
        j[key] = value.empty() ? ordered_json(nullptr) : ordered_json(value);
    };
    put("corpus", p.corpus);
    put("data", p.data);
    put("train", p.train);
    put("validation", p.validation);
    put("test", p.test);
    put("vocab", p.vocab);
    put("init", p.init);
    put("out", p.out);
    return j;
}

// ---------------------------------------------------------------------------
// subcommand implementations
// ---------------------------------------------------------------------------

int cmd_build_vocab(const std::string& corpus_path, const std::string& out_path,
                    std::size_t max_size) {
    require_file(corpus_path, "corpus file");
    const auto corpus = ontotrain::load_pretrain_corpus(corpus_path);
    const ontotrain::Vocabulary vocab = ontotrain::build_vocabulary(corpus, max_size);
    if (fs::path(out_path).has_parent_path())
        fs::create_directories(fs::path(out_path).parent_path());
    vocab.save(out_path);
    ordered_json manifest;
    manifest["command"] = "build-vocab";
    manifest["corpus"] = corpus_path;
    manifest["out"] = out_path;
    manifest["max_size"] = max_size;
    manifest["corpus_lines"] = corpus.size();
    manifest["vocab_size"] = vocab.size();
    write_manifest(out_path + ".manifest.json", manifest);
    std::cout << "vocabulary: " << vocab.size() << " entries from " << corpus.size()
              << " corpus lines -> " << out_path << "\n";
    return 0;
}

int cmd_make_ontology_set(const std::string& obo_path, const std::string& vocab_path,
                          std::size_t min_members, std::string root, int max_len,
                          const std::string& out_path) {
    require_file(obo_path, "OBO file");
    require_file(vocab_path, "vocabulary file");
    const ontotrain::Vocabulary vocab = ontotrain::Vocabulary::load(vocab_path);
    const ontotrain::OntologyGraph graph = ontotrain::parse_obo(obo_path);
    if (!graph.contains(root)) {
        const auto by_name = graph.id_by_name(root);
        if (!by_name) throw ontotrain::UnknownClass(root);
        root = *by_name;
    }
    const auto space = ontotrain::select_label_classes(graph, min_members, root);
    if (space.empty())
        throw ontotrain::Error("label space is empty: no class under " + root + " has " +
                               std::to_string(min_members) + " annotated subclasses");
    ontotrain::DatasetBuildReport report;
    const ontotrain::LabeledSet set =
        ontotrain::build_ontology_dataset(graph, space, vocab, max_len, &report);
    if (fs::path(out_path).has_parent_path())
        fs::create_directories(fs::path(out_path).parent_path());
    ontotrain::save_labeled_set(set, out_path);

    ordered_json stats;
    stats["command"] = "make-ontology-set";
    stats["obo"] = obo_path;
    stats["vocab"] = vocab_path;
    stats["root"] = root;
    stats["min_members"] = min_members;
    stats["max_len"] = max_len;
    stats["out"] = out_path;
    stats["ontology_classes"] = graph.size();
    stats["dangling_parents"] = graph.dangling_parents().size();
    stats["label_classes"] = space.size();
    stats["rows"] = report.rows;
    stats["skipped_tokenize"] = report.skipped_tokenize;
    stats["skipped_too_long"] = report.skipped_too_long;
    stats["full_scale_reference"] = {{"label_classes", ontotrain::reference::ontology_label_classes},
                                     {"rows", ontotrain::reference::ontology_dataset_rows}};
    write_manifest(out_path + ".stats.json", stats);
    std::cout << "label classes: " << space.size() << "\nrows: " << report.rows
              << "\nskipped: " << (report.skipped_tokenize + report.skipped_too_long) << " ("
              << report.skipped_tokenize << " tokenize, " << report.skipped_too_long
              << " too long)\n-> " << out_path << "\n";
    return 0;
}

int cmd_train(const std::string& stage_name, const TrainOptions& opt) {
    const auto stage = ontotrain::stage_from_string(stage_name);
    if (!stage) throw UsageError("unknown stage: " + stage_name + " (pretrain|ontology|toxicity)");
    if (opt.paths.vocab.empty()) throw UsageError("--vocab is required");
    if (opt.paths.out.empty()) throw UsageError("--out is required");
    require_file(opt.paths.vocab, "vocabulary file");
    if (!opt.paths.init.empty()) require_file(opt.paths.init, "init checkpoint");

    const ontotrain::Vocabulary vocab = ontotrain::Vocabulary::load(opt.paths.vocab);
    const fs::path out_dir(opt.paths.out);
    fs::create_directories(out_dir);

    ontotrain::LabeledSet train_set, val_set, test_set;
    bool have_test = false;

    if (*stage == ontotrain::Stage::pretrain) {
        if (opt.paths.corpus.empty()) throw UsageError("pretrain needs --corpus");
        require_file(opt.paths.corpus, "corpus file");
        const auto corpus = ontotrain::load_pretrain_corpus(opt.paths.corpus);
        std::cout << "corpus: " << corpus.size() << " SMILES\n";
        ontotrain::LabeledSet all;
        std::size_t skipped = 0;
        for (const auto& smiles : corpus) {
            try {
                ontotrain::LabeledRow row;
                row.seq = ontotrain::tokenize(smiles);
                all.rows.push_back(std::move(row));
            } catch (const ontotrain::TokenizeError&) {
                ++skipped;
            }
        }
        if (skipped) std::cout << "skipped " << skipped << " lines that do not tokenize\n";
        std::vector<std::size_t> order(all.rows.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        ontotrain::Rng rng(ontotrain::mix_seed(opt.train.seed, 0x636f7270));
        rng.shuffle(order);
        const std::size_t n_val = std::max<std::size_t>(
            1, static_cast<std::size_t>(opt.val_fraction * static_cast<double>(order.size())));
        if (order.size() < n_val + 1) throw UsageError("corpus too small to hold out validation");
        for (std::size_t i = 0; i < order.size(); ++i)
            (i < n_val ? val_set : train_set).rows.push_back(all.rows[order[i]]);
    } else if (!opt.paths.data.empty()) {
        require_file(opt.paths.data, "data file");
        ontotrain::LoadReport report;
        const ontotrain::LabeledSet all =
            load_any_labeled(opt.paths.data, vocab, opt.model.max_len, &report);
        if (report.skipped() > 0) std::cout << "skipped " << report.skipped() << " rows\n";
        ontotrain::SplitSpec spec;
        spec.train = opt.fractions[0];
        spec.validation = opt.fractions[1];
        spec.test = opt.fractions[2];
        spec.seed = opt.train.seed;
        ontotrain::SplitIndices indices;
        std::tie(train_set, val_set, test_set) = ontotrain::split(all, spec, &indices);
        have_test = true;
        std::ostringstream manifest;
        ontotrain::save_split_manifest(indices, manifest);
        write_text(out_dir / "split_manifest.txt", manifest.str());
    } else {
        if (opt.paths.train.empty() || opt.paths.validation.empty())
            throw UsageError(stage_name + " needs --data or --train/--val");
        require_file(opt.paths.train, "train file");
        require_file(opt.paths.validation, "validation file");
        train_set = load_any_labeled(opt.paths.train, vocab, opt.model.max_len);
        val_set = load_any_labeled(opt.paths.validation, vocab, opt.model.max_len);
        if (!opt.paths.test.empty()) {
            require_file(opt.paths.test, "test file");
            test_set = load_any_labeled(opt.paths.test, vocab, opt.model.max_len);
            have_test = true;
        }
    }

    if (*stage != ontotrain::Stage::pretrain && opt.paths.init.empty())
        std::cout << "warning: no --init checkpoint; training " << stage_name
                  << " from fresh initialization\n";

    if (*stage != ontotrain::Stage::pretrain) {
        ontotrain::save_labeled_set(train_set, (out_dir / "train_set.tsv").string());
        ontotrain::save_labeled_set(val_set, (out_dir / "val_set.tsv").string());
        if (have_test)
            ontotrain::save_labeled_set(test_set, (out_dir / "test_set.tsv").string());
    }

    ordered_json invocation;
    invocation["command"] = "train";
    invocation["stage"] = stage_name;
    invocation["model"] = ontotrain::config_to_json(opt.model);
    invocation["train"] = ontotrain::train_config_to_json(opt.train);
    invocation["paths"] = paths_to_json(opt.paths);
    invocation["fractions"] = {opt.fractions[0], opt.fractions[1], opt.fractions[2]};
    invocation["val_fraction"] = opt.val_fraction;

    const std::optional<fs::path> init =
        opt.paths.init.empty() ? std::nullopt : std::optional<fs::path>(opt.paths.init);
    const ontotrain::StageData data{&train_set, &val_set};
    const ontotrain::StageResult result = ontotrain::run_stage(
        *stage, init, data, opt.model, opt.train, vocab, out_dir, invocation);

    std::cout << "trained " << result.log.size() << " epochs; best val micro-F1 "
              << result.best_val_f1 << " at epoch " << result.best_epoch << "\n"
              << "checkpoints: " << result.best_checkpoint.string() << ", "
              << result.final_checkpoint.string() << "\n"
              << "epoch log: " << result.epoch_log_csv.string() << "\n";
    return 0;
}

int cmd_evaluate(const std::string& checkpoint, const std::string& data,
                 const std::string& vocab_path, const std::string& out,
                 double threshold, bool with_entropy) {
    require_file(checkpoint, "checkpoint manifest");
    require_file(data, "data file");
    require_file(vocab_path, "vocabulary file");
    const ontotrain::Vocabulary vocab = ontotrain::Vocabulary::load(vocab_path);
    const ontotrain::Parameters params = ontotrain::load_checkpoint(checkpoint);
    const ontotrain::LabeledSet set = load_any_labeled(data, vocab, params.config.max_len);

    ontotrain::EvalOptions opt;
    opt.threshold = threshold;
    opt.with_entropy = with_entropy;
    const ontotrain::EvalReport report = ontotrain::evaluate(params, set, vocab, opt);

    const fs::path out_dir(out);
    fs::create_directories(out_dir);
    ordered_json report_json = ontotrain::eval_report_to_json(report);
    const bool canonical_endpoints =
        std::equal(set.label_names.begin(), set.label_names.end(),
                   ontotrain::tox21_endpoints().begin(), ontotrain::tox21_endpoints().end());
    if (canonical_endpoints) {
        auto ref_to_json = [](const ontotrain::reference::DatasetReference& ref) {
            ordered_json out_ref;
            auto cell = [](const std::optional<double>& v) {
                return v ? ordered_json(*v) : ordered_json(nullptr);
            };
            ordered_json endpoints = ordered_json::array();
            for (std::size_t i = 0; i < ref.endpoints.size(); ++i) {
                const auto& e = ref.endpoints[i];
                endpoints.push_back({{"name", ontotrain::tox21_endpoints()[i]},
                                     {"f1_pretrained", cell(e.f1_pretrained)},
                                     {"f1_baseline", cell(e.f1_baseline)},
                                     {"roc_auc_pretrained", cell(e.auc_pretrained)},
                                     {"roc_auc_baseline", cell(e.auc_baseline)}});
            }
            out_ref["endpoints"] = std::move(endpoints);
            out_ref["entropy_pretrained"] = ref.entropy_pretrained;
            out_ref["entropy_baseline"] = ref.entropy_baseline;
            return out_ref;
        };
        report_json["full_scale_reference"] = {
            {"moleculenet", ref_to_json(ontotrain::reference::moleculenet())},
            {"challenge", ref_to_json(ontotrain::reference::challenge())}};
    }
    write_text(out_dir / "report.json", report_json.dump(2) + "\n");
    std::ostringstream csv;
    ontotrain::eval_report_to_csv(report, csv);
    write_text(out_dir / "report.csv", csv.str());

    ordered_json manifest;
    manifest["command"] = "evaluate";
    manifest["checkpoint"] = checkpoint;
    manifest["data"] = data;
    manifest["vocab"] = vocab_path;
    manifest["threshold"] = threshold;
    manifest["with_entropy"] = with_entropy;
    manifest["out"] = out;
    write_manifest(out_dir / "run_manifest.json", manifest);

    std::cout << "rows: " << report.rows << " (skipped " << report.skipped_rows << ")\n"
              << "micro-F1: " << report.micro_f1_value << "\n";
    if (std::isfinite(report.macro_auc_value))
        std::cout << "ROC-AUC (macro): " << report.macro_auc_value << "\n";
    if (report.entropy) std::cout << "attention entropy: " << report.entropy->overall << "\n";
    std::cout << "-> " << (out_dir / "report.json").string() << "\n";
    return 0;
}

int cmd_export_attention(const std::string& checkpoint, const std::string& vocab_path,
                         const std::string& smiles, const std::string& out) {
    require_file(checkpoint, "checkpoint manifest");
    require_file(vocab_path, "vocabulary file");
    const ontotrain::Vocabulary vocab = ontotrain::Vocabulary::load(vocab_path);
    const ontotrain::Parameters params = ontotrain::load_checkpoint(checkpoint);

    const ontotrain::TokenSequence seq = ontotrain::tokenize(smiles);
    const ontotrain::Encoded encoded = ontotrain::encode(seq, vocab, params.config.max_len);
    ontotrain::ForwardOptions fwd;
    fwd.want_attention = true;
    const ontotrain::ForwardResult result = ontotrain::forward(params, {encoded}, fwd);
    const ontotrain::AttentionMaps& maps = result.attention.at(0);

    std::vector<std::string> tokens = {"[CLS]"};
    tokens.insert(tokens.end(), seq.tokens.begin(), seq.tokens.end());

    const fs::path out_dir(out);
    fs::create_directories(out_dir);

    ordered_json doc;
    doc["smiles"] = smiles;
    doc["tokens"] = tokens;
    doc["layers"] = ordered_json::array();
    ontotrain::EntropyOptions raw;
    raw.exclude_specials = false;
    for (int l = 0; l < maps.layers; ++l) {
        ordered_json layer;
        layer["layer"] = l;
        double mean_entropy = 0.0;
        ordered_json heads = ordered_json::array();
        ordered_json row_sums = ordered_json::array();
        for (int h = 0; h < maps.heads; ++h) {
            const ontotrain::Mat& m = maps.at(l, h);
            ordered_json rows = ordered_json::array();
            ordered_json sums = ordered_json::array();
            for (Eigen::Index q = 0; q < m.rows(); ++q) {
                ordered_json row = ordered_json::array();
                for (Eigen::Index k = 0; k < m.cols(); ++k) row.push_back(m(q, k));
                rows.push_back(std::move(row));
                sums.push_back(m.row(q).sum());
            }
            heads.push_back(std::move(rows));
            row_sums.push_back(std::move(sums));
        }
        if (maps.seq_len >= 2) {
            ontotrain::AttentionMaps one;
            one.reset(1, maps.heads, maps.seq_len);
            for (int h = 0; h < maps.heads; ++h) one.at(0, h) = maps.at(l, h);
            mean_entropy = ontotrain::normalized_entropy(one, raw).overall;
        }
        layer["mean_normalized_entropy"] = mean_entropy;
        layer["near_uniform"] = mean_entropy > 0.99;
        layer["heads"] = std::move(heads);
        layer["row_sums"] = std::move(row_sums);
        doc["layers"].push_back(std::move(layer));

        write_text(out_dir / ("layer_" + std::to_string(l) + ".svg"),
                   ontotrain::svg_attention_layer(tokens, maps, l));
    }
    write_text(out_dir / "attention.json", doc.dump(2) + "\n");

    ordered_json manifest;
    manifest["command"] = "export-attention";
    manifest["checkpoint"] = checkpoint;
    manifest["vocab"] = vocab_path;
    manifest["smiles"] = smiles;
    manifest["out"] = out;
    write_manifest(out_dir / "run_manifest.json", manifest);
    std::cout << maps.layers << " layers x " << maps.heads << " heads over " << maps.seq_len
              << " positions -> " << (out_dir / "attention.json").string() << "\n";
    return 0;
}

int cmd_plot_curves(const std::vector<std::string>& log_paths, const std::string& out,
                    std::optional<double> f1_threshold) {
    if (log_paths.empty()) throw UsageError("at least one epoch log CSV is required");
    for (const auto& p : log_paths) require_file(p, "epoch log");
    std::vector<std::pair<std::string, std::vector<ontotrain::EpochLog>>> logs;
    for (const auto& p : log_paths) {
        std::ifstream in(p, std::ios::binary);
        try {
            logs.emplace_back(fs::path(p).parent_path().filename().string() + "/" +
                                  fs::path(p).stem().string(),
                              ontotrain::read_epoch_log_csv(in));
        } catch (const ontotrain::ParseError& e) {
            throw ontotrain::ParseError(p + ": " + e.what());
        }
    }

    const fs::path out_dir(out);
    fs::create_directories(out_dir);
    struct MetricSpec {
        const char* file;
        const char* title;
        double ontotrain::EpochLog::* field;
    };
    const std::vector<MetricSpec> metrics = {
        {"val_f1_micro.svg", "validation micro-F1", &ontotrain::EpochLog::val_f1_micro},
        {"val_rocauc_macro.svg", "validation ROC-AUC (macro)",
         &ontotrain::EpochLog::val_rocauc_macro},
        {"loss.svg", "training loss", &ontotrain::EpochLog::train_loss},
    };
    for (const auto& metric : metrics) {
        std::vector<ontotrain::Series> series;
        for (const auto& [name, rows] : logs) {
            ontotrain::Series s;
            s.name = name;
            for (const auto& row : rows)
                s.points.emplace_back(static_cast<double>(row.epoch), row.*(metric.field));
            series.push_back(std::move(s));
        }
        write_text(out_dir / metric.file,
                   ontotrain::svg_curves(series, metric.title, "epoch", metric.title));
    }

    if (f1_threshold) {
        std::ostringstream table;
        table << "log,first_epoch_at_f1_" << *f1_threshold << "\n";
        for (const auto& [name, rows] : logs) {
            const auto epoch = ontotrain::first_epoch_reaching(rows, *f1_threshold);
            table << name << ',';
            if (epoch) table << *epoch;
            table << '\n';
        }
        write_text(out_dir / "threshold_table.csv", table.str());
    }

    ordered_json manifest;
    manifest["command"] = "plot-curves";
    manifest["logs"] = log_paths;
    manifest["out"] = out;
    manifest["f1_threshold"] =
        f1_threshold ? ordered_json(*f1_threshold) : ordered_json(nullptr);
    write_manifest(out_dir / "run_manifest.json", manifest);
    std::cout << logs.size() << " logs -> " << out_dir.string() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ontology pre-training pipeline for molecular property prediction"};
    app.require_subcommand(1);

    // build-vocab
    auto* build_vocab = app.add_subcommand("build-vocab", "build a token vocabulary from a corpus");
    std::string bv_corpus, bv_out;
    std::size_t bv_max_size = 1400;
    build_vocab->add_option("--corpus", bv_corpus, "SMILES corpus, one per line")->required();
    build_vocab->add_option("--out", bv_out, "vocabulary file to write")->required();
    build_vocab->add_option("--max-size", bv_max_size, "maximum vocabulary size");

    // make-ontology-set
    auto* make_set = app.add_subcommand("make-ontology-set",
                                        "select label classes and emit the ontology dataset");
    std::string mo_obo, mo_vocab, mo_out, mo_root = "CHEBI:23367";
    std::size_t mo_min_members = 100;
    int mo_max_len = 256;
    make_set->add_option("--obo", mo_obo, "ontology in OBO format")->required();
    make_set->add_option("--vocab", mo_vocab, "vocabulary file")->required();
    make_set->add_option("--out", mo_out, "labeled set file to write")->required();
    make_set->add_option("--min-members", mo_min_members,
                         "minimum annotated strict subclasses per label class");
    make_set->add_option("--root", mo_root, "root class id or name");
    make_set->add_option("--max-len", mo_max_len, "maximum token length per molecule");

    // train
    auto* train = app.add_subcommand("train", "run one training stage");
    std::string tr_stage, tr_config;
    TrainOptions tr;
    train->add_option("stage", tr_stage, "pretrain | ontology | toxicity")->required();
    train->add_option("--config", tr_config, "JSON config (a run manifest also works)");
    train->add_option("--corpus", tr.paths.corpus, "pretrain corpus");
    train->add_option("--data", tr.paths.data, "single labeled file, split internally");
    train->add_option("--train", tr.paths.train, "training set file");
    train->add_option("--val", tr.paths.validation, "validation set file");
    train->add_option("--test", tr.paths.test, "test set file (stored for later evaluation)");
    train->add_option("--vocab", tr.paths.vocab, "vocabulary file");
    train->add_option("--init", tr.paths.init, "checkpoint to initialize the encoder body from");
    train->add_option("--out", tr.paths.out, "output directory");
    std::vector<double> tr_fractions;
    train->add_option("--fractions", tr_fractions, "train/validation/test fractions")
        ->expected(3);
    train->add_option("--val-fraction", tr.val_fraction, "pretrain corpus validation holdout");
    int tr_vocab_size = 0, tr_hidden = 0, tr_heads = 0, tr_layers = 0, tr_max_len = 0,
        tr_ff_mult = 0;
    double tr_embed_dropout = -1, tr_hidden_dropout = -1;
    bool tr_separate_generator = false;
    train->add_option("--vocab-size", tr_vocab_size, "embedding table size");
    train->add_option("--hidden", tr_hidden, "hidden size");
    train->add_option("--heads", tr_heads, "attention heads");
    train->add_option("--layers", tr_layers, "encoder layers");
    train->add_option("--max-len", tr_max_len, "maximum sequence length");
    train->add_option("--ff-mult", tr_ff_mult, "feed-forward width multiplier");
    train->add_option("--embed-dropout", tr_embed_dropout, "embedding dropout");
    train->add_option("--hidden-dropout", tr_hidden_dropout, "hidden state dropout");
    train->add_flag("--separate-generator", tr_separate_generator,
                    "give the Electra generator its own encoder body");
    int tr_epochs = 0, tr_batch = 0;
    double tr_lr = -1, tr_l2 = -1, tr_mask_rate = -1, tr_disc_weight = -1;
    std::int64_t tr_seed = -1;
    train->add_option("--epochs", tr_epochs, "training epochs");
    train->add_option("--batch-size", tr_batch, "batch size");
    train->add_option("--lr", tr_lr, "learning rate");
    train->add_option("--l2", tr_l2, "L2 regularization strength");
    train->add_option("--mask-rate", tr_mask_rate, "MLM corruption probability");
    train->add_option("--disc-weight", tr_disc_weight, "discriminator loss weight");
    train->add_option("--seed", tr_seed, "global seed (ONTOTRAIN_SEED as fallback)");

    // evaluate
    auto* evaluate = app.add_subcommand("evaluate", "score a checkpoint on a labeled set");
    std::string ev_checkpoint, ev_data, ev_vocab, ev_out;
    double ev_threshold = 0.5;
    bool ev_no_entropy = false;
    evaluate->add_option("--checkpoint", ev_checkpoint, "checkpoint manifest")->required();
    evaluate->add_option("--data", ev_data, "labeled set (.tsv) or Tox21 table")->required();
    evaluate->add_option("--vocab", ev_vocab, "vocabulary file")->required();
    evaluate->add_option("--out", ev_out, "output directory")->required();
    evaluate->add_option("--threshold", ev_threshold, "classification threshold");
    evaluate->add_flag("--no-entropy", ev_no_entropy, "skip attention entropy");

    // export-attention
    auto* export_attention =
        app.add_subcommand("export-attention", "dump attention maps and heatmaps for one SMILES");
    std::string ea_checkpoint, ea_vocab, ea_smiles, ea_out;
    export_attention->add_option("--checkpoint", ea_checkpoint, "checkpoint manifest")->required();
    export_attention->add_option("--vocab", ea_vocab, "vocabulary file")->required();
    export_attention->add_option("--smiles", ea_smiles, "molecule to visualize")->required();
    export_attention->add_option("--out", ea_out, "output directory")->required();

    // plot-curves
    auto* plot = app.add_subcommand("plot-curves", "plot epoch logs as SVG curves");
    std::vector<std::string> pc_logs;
    std::string pc_out;
    double pc_threshold = -1;
    plot->add_option("logs", pc_logs, "epoch log CSV files")->required();
    plot->add_option("--out-dir", pc_out, "output directory")->required();
    plot->add_option("--f1-threshold", pc_threshold,
                     "also emit first-epoch-reaching-threshold table");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (build_vocab->parsed()) return cmd_build_vocab(bv_corpus, bv_out, bv_max_size);
        if (make_set->parsed())
            return cmd_make_ontology_set(mo_obo, mo_vocab, mo_min_members, mo_root, mo_max_len,
                                         mo_out);
        if (train->parsed()) {
            const auto stage = ontotrain::stage_from_string(tr_stage);
            if (!stage)
                throw UsageError("unknown stage: " + tr_stage + " (pretrain|ontology|toxicity)");
            const ontotrain::StageDefaults defaults = ontotrain::stage_defaults(*stage);
            tr.model = defaults.model;
            tr.train = defaults.train;
            tr.train.seed = env_seed_fallback();
            // CLI11 has already written flag values into tr.paths; keep them
            // aside so explicit flags win over the config file.
            const TrainPaths flag_paths = tr.paths;
            const double flag_val_fraction = tr.val_fraction;
            tr.paths = TrainPaths{};
            if (!tr_config.empty()) {
                require_file(tr_config, "config file");
                json cfg;
                try {
                    std::ifstream in(tr_config);
                    in >> cfg;
                } catch (const json::exception& e) {
                    throw UsageError("config file is not valid JSON: " + std::string(e.what()));
                }
                auto apply_section = [&](const json& section) {
                    if (section.contains("model")) apply_model_overrides(section.at("model"), tr.model);
                    if (section.contains("train")) apply_train_overrides(section.at("train"), tr.train);
                    if (section.contains("paths")) apply_paths_overrides(section.at("paths"), tr.paths);
                    if (section.contains("fractions") && section.at("fractions").is_array() &&
                        section.at("fractions").size() == 3)
                        for (int i = 0; i < 3; ++i)
                            tr.fractions[i] = section.at("fractions")[static_cast<std::size_t>(i)]
                                                  .get<double>();
                    if (section.contains("val_fraction"))
                        tr.val_fraction = section.at("val_fraction").get<double>();
                };
                apply_section(cfg);
                if (cfg.contains("invocation")) apply_section(cfg.at("invocation"));
            }
            apply_paths_overrides(paths_to_json(flag_paths), tr.paths);
            if (train->count("--val-fraction")) tr.val_fraction = flag_val_fraction;
            if (tr_vocab_size > 0) tr.model.vocab_size = tr_vocab_size;
            if (tr_hidden > 0) tr.model.hidden = tr_hidden;
            if (tr_heads > 0) tr.model.heads = tr_heads;
            if (tr_layers > 0) tr.model.layers = tr_layers;
            if (tr_max_len > 0) tr.model.max_len = tr_max_len;
            if (tr_ff_mult > 0) tr.model.ff_multiplier = tr_ff_mult;
            if (tr_embed_dropout >= 0) tr.model.embed_dropout = tr_embed_dropout;
            if (tr_hidden_dropout >= 0) tr.model.hidden_dropout = tr_hidden_dropout;
            if (tr_separate_generator) tr.model.shared_encoder = false;
            if (tr_epochs > 0) tr.train.epochs = tr_epochs;
            if (tr_batch > 0) tr.train.batch_size = tr_batch;
            if (tr_lr >= 0) tr.train.learning_rate = tr_lr;
            if (tr_l2 >= 0) tr.train.l2 = tr_l2;
            if (tr_mask_rate >= 0) tr.train.mask_rate = tr_mask_rate;
            if (tr_disc_weight >= 0) tr.train.disc_weight = tr_disc_weight;
            if (tr_seed >= 0) tr.train.seed = static_cast<std::uint64_t>(tr_seed);
            if (tr_fractions.size() == 3) {
                tr.fractions[0] = tr_fractions[0];
                tr.fractions[1] = tr_fractions[1];
                tr.fractions[2] = tr_fractions[2];
            }
            return cmd_train(tr_stage, tr);
        }
        if (evaluate->parsed())
            return cmd_evaluate(ev_checkpoint, ev_data, ev_vocab, ev_out, ev_threshold,
                                !ev_no_entropy);
        if (export_attention->parsed())
            return cmd_export_attention(ea_checkpoint, ea_vocab, ea_smiles, ea_out);
        if (plot->parsed())
            return cmd_plot_curves(pc_logs, pc_out,
                                   pc_threshold >= 0 ? std::optional<double>(pc_threshold)
                                                     : std::nullopt);
        std::cerr << "no subcommand\n";
        return 2;
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const ontotrain::IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

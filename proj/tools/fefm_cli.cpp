// Command-line driver: preprocess, train, evaluate, predict, analyze, sweep.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "fefm/analysis.hpp"
#include "fefm/data.hpp"
#include "fefm/model_io.hpp"
#include "fefm/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace fefm;

namespace {

constexpr const char* kVersion = "fefm 1.0.0";

uint64_t fnv1a(const std::string& bytes) {
    uint64_t h = 1469598103934665603ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_manifest(const fs::path& out_dir, const std::string& command,
                    const std::vector<std::string>& inputs, const std::string& config_text) {
    json manifest;
    manifest["command"] = command;
    manifest["inputs"] = inputs;
    char hash[32];
    std::snprintf(hash, sizeof(hash), "%016llx",
                  static_cast<unsigned long long>(fnv1a(config_text)));
    manifest["config_hash"] = hash;
    manifest["version"] = kVersion;
    std::ofstream out(out_dir / "manifest.json");
    out << manifest.dump(2) << "\n";
}

// ---- schema files ----

struct SchemaFile {
    std::string label_column;
    std::vector<FieldSchema> fields;
};

SchemaFile load_schema(const std::string& path) {
    json j = json::parse(read_file(path), nullptr, true, true);
    SchemaFile schema;
    for (auto& [key, value] : j.items()) {
        if (key == "label") {
            schema.label_column = value.get<std::string>();
        } else if (key == "fields") {
            for (const auto& fj : value) {
                FieldSchema f;
                for (auto& [fk, fv] : fj.items()) {
                    if (fk == "name")
                        f.name = fv.get<std::string>();
                    else if (fk == "kind")
                        f.kind = fv.get<std::string>() == "numeric" ? FieldKind::Numeric
                                                                    : FieldKind::Categorical;
                    else if (fk == "transform") {
                        const std::string t = fv.get<std::string>();
                        if (t == "hour24")
                            f.transform = Transform::Hour24;
                        else if (t == "discretize")
                            f.transform = Transform::Discretize;
                        else if (t != "none")
                            throw ConfigError("unknown transform '" + t + "'");
                    } else if (fk == "dropped")
                        f.dropped = fv.get<bool>();
                    else
                        throw ConfigError("unknown schema key '" + fk + "'");
                }
                if (f.name.empty()) throw ConfigError("schema field without a name");
                schema.fields.push_back(std::move(f));
            }
        } else {
            throw ConfigError("unknown schema key '" + key + "'");
        }
    }
    if (schema.label_column.empty()) throw ConfigError("schema must name the label column");
    if (schema.fields.empty()) throw ConfigError("schema has no fields");
    return schema;
}

// ---- run configuration ----

struct RunConfig {
    std::string model = "fefm";
    int k = 16;
    TrainConfig train;
    bool symmetric_mode = true;
    std::vector<int> dnn_widths{1024, 1024, 1024};
    double dropout = 0.2;
    bool use_fefm_logit = true;
    bool use_linear_terms = true;
    bool dnn_input_feature_embeddings = true;
    bool dnn_input_fefm_embeddings = true;
    std::string train_path, val_path, test_path, vocab_path, out_dir = "out";
};

ModelKind parse_kind(const std::string& name) {
    if (name == "lr") return ModelKind::LR;
    if (name == "fm") return ModelKind::FM;
    if (name == "ffm") return ModelKind::FFM;
    if (name == "fwfm") return ModelKind::FwFM;
    if (name == "fefm" || name == "deepfefm") return ModelKind::FEFM;
    throw ConfigError("unknown model kind '" + name + "'");
}

RunConfig load_run_config(const std::string& path) {
    json j = json::parse(read_file(path), nullptr, true, true);
    RunConfig cfg;
    for (auto& [key, value] : j.items()) {
        if (key == "model")
            cfg.model = value.get<std::string>();
        else if (key == "k")
            cfg.k = value.get<int>();
        else if (key == "eta")
            cfg.train.eta = value.get<double>();
        else if (key == "lambda1")
            cfg.train.lambda1 = value.get<double>();
        else if (key == "lambda2")
            cfg.train.lambda2 = value.get<double>();
        else if (key == "lambda3")
            cfg.train.lambda3 = value.get<double>();
        else if (key == "lambda_deep")
            cfg.train.lambda_deep = value.get<double>();
        else if (key == "batch_size")
            cfg.train.batch_size = value.get<int>();
        else if (key == "max_epochs")
            cfg.train.max_epochs = value.get<int>();
        else if (key == "min_delta")
            cfg.train.min_delta = value.get<double>();
        else if (key == "patience")
            cfg.train.patience = value.get<int>();
        else if (key == "seed")
            cfg.train.seed = value.get<uint64_t>();
        else if (key == "shuffle_each_epoch")
            cfg.train.shuffle_each_epoch = value.get<bool>();
        else if (key == "symmetric_mode")
            cfg.symmetric_mode = value.get<bool>();
        else if (key == "dnn_widths")
            cfg.dnn_widths = value.get<std::vector<int>>();
        else if (key == "dropout")
            cfg.dropout = value.get<double>();
        else if (key == "use_fefm_logit")
            cfg.use_fefm_logit = value.get<bool>();
        else if (key == "use_linear_terms")
            cfg.use_linear_terms = value.get<bool>();
        else if (key == "dnn_input_feature_embeddings")
            cfg.dnn_input_feature_embeddings = value.get<bool>();
        else if (key == "dnn_input_fefm_embeddings")
            cfg.dnn_input_fefm_embeddings = value.get<bool>();
        else if (key == "train_path")
            cfg.train_path = value.get<std::string>();
        else if (key == "val_path")
            cfg.val_path = value.get<std::string>();
        else if (key == "test_path")
            cfg.test_path = value.get<std::string>();
        else if (key == "vocab_path")
            cfg.vocab_path = value.get<std::string>();
        else if (key == "out_dir")
            cfg.out_dir = value.get<std::string>();
        else
            throw ConfigError("unknown config key '" + key + "'");
    }
    parse_kind(cfg.model);
    cfg.train.validate();
    if (cfg.train_path.empty() || cfg.val_path.empty() || cfg.vocab_path.empty())
        throw ConfigError("config must set train_path, val_path, and vocab_path");
    return cfg;
}

Vocabulary load_vocab_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path);
    return load_vocabulary(in);
}

Model build_model(const RunConfig& cfg, int n, int64_t m) {
    if (cfg.model == "deepfefm") {
        DeepFefmParams p;
        p.fefm = ShallowParams::init(ModelKind::FEFM, m, n, cfg.k, cfg.train.seed, 0.01,
                                     cfg.symmetric_mode);
        p.use_fefm_logit = cfg.use_fefm_logit;
        p.use_linear_terms = cfg.use_linear_terms;
        p.dnn_input_feature_embeddings = cfg.dnn_input_feature_embeddings;
        p.dnn_input_fefm_embeddings = cfg.dnn_input_fefm_embeddings;
        p.dnn = DnnParams::init(p.dnn_input_width(), cfg.dnn_widths, cfg.dropout, cfg.train.seed + 1);
        return p;
    }
    return ShallowParams::init(parse_kind(cfg.model), m, n, cfg.k, cfg.train.seed, 0.01,
                               cfg.symmetric_mode);
}

struct TrainOutcome {
    Model model;
    TrainHistory history;
    EvalResult val;
};

TrainOutcome run_training(const RunConfig& cfg, const Dataset& train, const Dataset& val) {
    Model model = build_model(cfg, train.n, train.m);
    if (std::holds_alternative<DeepFefmParams>(model)) {
        auto [trained, hist] = fit(std::get<DeepFefmParams>(model), train, val, cfg.train);
        EvalResult ev = evaluate(trained, val);
        return {std::move(trained), std::move(hist), ev};
    }
    auto [trained, hist] = fit(std::get<ShallowParams>(model), train, val, cfg.train);
    EvalResult ev = evaluate(trained, val);
    return {std::move(trained), std::move(hist), ev};
}

EvalResult eval_model(const Model& model, const Dataset& ds) {
    return std::visit([&](const auto& p) { return evaluate(p, ds); }, model);
}

std::vector<double> predict_model(const Model& model, const Dataset& ds) {
    return std::visit([&](const auto& p) { return predict_probabilities(p, ds); }, model);
}

const ShallowParams& shallow_of(const Model& model) {
    if (std::holds_alternative<ShallowParams>(model)) return std::get<ShallowParams>(model);
    return std::get<DeepFefmParams>(model).fefm;
}

int64_t model_param_count(const Model& model) {
    if (std::holds_alternative<ShallowParams>(model)) {
        const auto& p = std::get<ShallowParams>(model);
        return param_count(p.kind, p.m, p.n, std::max(p.k, 1));
    }
    const auto& deep = std::get<DeepFefmParams>(model);
    int64_t count = param_count(ModelKind::FEFM, deep.fefm.m, deep.fefm.n, deep.fefm.k);
    for (const auto& layer : deep.dnn.W) count += static_cast<int64_t>(layer.size());
    for (const auto& layer : deep.dnn.b) count += static_cast<int64_t>(layer.size());
    count += static_cast<int64_t>(deep.dnn.w_logit.size());
    return count;
}

void write_metadata(const fs::path& path, const RunConfig& cfg, const TrainOutcome& outcome) {
    json meta;
    meta["model"] = cfg.model;
    meta["k"] = cfg.k;
    meta["eta"] = cfg.train.eta;
    meta["lambda1"] = cfg.train.lambda1;
    meta["lambda2"] = cfg.train.lambda2;
    meta["lambda3"] = cfg.train.lambda3;
    meta["lambda_deep"] = cfg.train.lambda_deep;
    meta["batch_size"] = cfg.train.batch_size;
    meta["max_epochs"] = cfg.train.max_epochs;
    meta["min_delta"] = cfg.train.min_delta;
    meta["patience"] = cfg.train.patience;
    meta["seed"] = cfg.train.seed;
    meta["symmetric_mode"] = cfg.symmetric_mode;
    meta["best_epoch"] = outcome.history.best_epoch;
    meta["stopped_epoch"] = outcome.history.stopped_epoch;
    meta["val_logloss"] = outcome.val.log_loss;
    meta["val_auc"] = outcome.val.auc;
    meta["param_count"] = model_param_count(outcome.model);
    std::ofstream out(path);
    out << meta.dump(2) << "\n";
}

void write_predictions(const std::string& path, const std::vector<double>& probs,
                       const Dataset& ds) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    out << "probability,label\n";
    char buf[64];
    for (size_t i = 0; i < probs.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.12f,%d\n", probs[i], ds.instances[i].label > 0 ? 1 : 0);
        out << buf;
    }
}

// ---- subcommands ----

struct PreprocessArgs {
    std::string raw_path, schema_path, out_dir = "out";
    int64_t min_frequency = 20;
    std::string ratios = "0.64,0.16,0.20";
    uint64_t seed = 42;
    std::string delimiter = "comma";
};

int cmd_preprocess(const PreprocessArgs& args) {
    SchemaFile schema = load_schema(args.schema_path);
    const char delim = args.delimiter == "tab" ? '\t' : ',';
    std::ifstream in(args.raw_path);
    if (!in) throw DataError("cannot open " + args.raw_path);
    auto rows = read_delimited(in, schema.fields, schema.label_column, delim);
    if (rows.empty()) throw DataError("no data rows in " + args.raw_path);

    double r_train, r_val, r_test;
    if (std::sscanf(args.ratios.c_str(), "%lf,%lf,%lf", &r_train, &r_val, &r_test) != 3)
        throw ConfigError("ratios must be three comma-separated numbers");

    // shuffle raw rows first so the vocabulary is fit on the training split only
    std::vector<int64_t> perm(rows.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::mt19937_64 rng(args.seed);
    std::shuffle(perm.begin(), perm.end(), rng);
    const int64_t N = static_cast<int64_t>(rows.size());
    const int64_t n_val = static_cast<int64_t>(std::floor(r_val * static_cast<double>(N)));
    const int64_t n_test = static_cast<int64_t>(std::floor(r_test * static_cast<double>(N)));
    const int64_t n_train = N - n_val - n_test;
    if (r_train <= 0 || r_val <= 0 || r_test <= 0 || std::abs(r_train + r_val + r_test - 1.0) > 1e-9)
        throw ConfigError("ratios must be positive and sum to 1");

    std::vector<RawRow> train_rows, val_rows, test_rows;
    for (int64_t i = 0; i < N; ++i) {
        const RawRow& row = rows[perm[i]];
        if (i < n_train)
            train_rows.push_back(row);
        else if (i < n_train + n_val)
            val_rows.push_back(row);
        else
            test_rows.push_back(row);
    }

    auto vocab = build_vocabulary(train_rows, schema.fields, args.min_frequency);
    fs::create_directories(args.out_dir);
    {
        std::ofstream out(fs::path(args.out_dir) / "vocab.txt");
        save_vocabulary(out, vocab);
    }
    const char* names[3] = {"train.ffm", "val.ffm", "test.ffm"};
    const std::vector<RawRow>* parts[3] = {&train_rows, &val_rows, &test_rows};
    for (int s = 0; s < 3; ++s) {
        std::ofstream out(fs::path(args.out_dir) / names[s]);
        write_libffm(out, encode_dataset(*parts[s], vocab));
    }
    write_manifest(args.out_dir, "preprocess", {args.raw_path, args.schema_path},
                   read_file(args.schema_path) + args.ratios + std::to_string(args.seed) +
                       std::to_string(args.min_frequency));
    std::cout << "n=" << active_field_count(vocab) << " m=" << vocab.m() << " splits=" << n_train
              << "/" << n_val << "/" << n_test << "\n";
    return 0;
}

int cmd_train(const std::string& config_path, std::optional<uint64_t> seed_override,
              std::optional<std::string> out_override) {
    RunConfig cfg = load_run_config(config_path);
    if (seed_override) cfg.train.seed = *seed_override;
    if (out_override) cfg.out_dir = *out_override;
    auto vocab = load_vocab_file(cfg.vocab_path);
    const int n = active_field_count(vocab);
    auto train = read_libffm_file(cfg.train_path, n, vocab.m());
    auto val = read_libffm_file(cfg.val_path, n, vocab.m());

    TrainOutcome outcome = run_training(cfg, train, val);

    fs::create_directories(cfg.out_dir);
    save_model_file((fs::path(cfg.out_dir) / "model.bin").string(), outcome.model);
    {
        std::ofstream out(fs::path(cfg.out_dir) / "history.csv");
        write_history_csv(out, outcome.history);
    }
    write_metadata(fs::path(cfg.out_dir) / "model.meta.json", cfg, outcome);
    write_manifest(cfg.out_dir, "train", {config_path, cfg.train_path, cfg.val_path, cfg.vocab_path},
                   read_file(config_path));
    std::cout << "best_epoch=" << outcome.history.best_epoch << " val_logloss=" << outcome.val.log_loss
              << " val_auc=" << outcome.val.auc << "\n";
    return 0;
}

std::pair<Model, Dataset> load_model_and_data(const std::string& model_path,
                                              const std::string& data_path) {
    Model model = load_model_file(model_path);
    const ShallowParams& p = shallow_of(model);
    Dataset ds = read_libffm_file(data_path, p.n, p.m);
    return {std::move(model), std::move(ds)};
}

int cmd_evaluate(const std::string& model_path, const std::string& data_path,
                 const std::string& predictions_path) {
    auto [model, ds] = load_model_and_data(model_path, data_path);
    auto probs = predict_model(model, ds);
    if (!predictions_path.empty()) write_predictions(predictions_path, probs, ds);
    std::vector<int> labels;
    for (const auto& inst : ds.instances) labels.push_back(inst.label);
    const double ll = log_loss_metric(probs, labels);
    try {
        const double auc = auc_metric(probs, labels);
        std::cout << "auc=" << auc << " logloss=" << ll << "\n";
    } catch (const DataError&) {
        std::cout << "auc=undefined (single-class data) logloss=" << ll << "\n";
        return 2;
    }
    return 0;
}

int cmd_predict(const std::string& model_path, const std::string& data_path,
                const std::string& out_path) {
    auto [model, ds] = load_model_and_data(model_path, data_path);
    write_predictions(out_path, predict_model(model, ds), ds);
    std::cout << "wrote " << ds.size() << " predictions to " << out_path << "\n";
    return 0;
}

int cmd_analyze(const std::string& model_path, const std::string& vocab_path, int top,
                const std::string& out_dir) {
    Model model = load_model_file(model_path);
    if (std::holds_alternative<ShallowParams>(model) &&
        std::get<ShallowParams>(model).kind != ModelKind::FEFM)
        throw ConfigError("field analysis requires an FEFM or DeepFEFM model");
    const ShallowParams& fefm = shallow_of(model);
    auto vocab = load_vocab_file(vocab_path);
    std::vector<std::string> names;
    for (const auto& f : vocab.fields)
        if (!f.dropped) names.push_back(f.name);
    if (static_cast<int>(names.size()) != fefm.n)
        throw DataError("vocabulary field count does not match the model");

    auto report = rank_field_pairs(fefm, names, top);
    fs::create_directories(out_dir);
    {
        std::ofstream out(fs::path(out_dir) / "field_pairs.csv");
        write_report_csv(out, report);
    }
    {
        std::ofstream out(fs::path(out_dir) / "field_pairs.txt");
        write_report_text(out, report);
    }
    write_manifest(out_dir, "analyze", {model_path, vocab_path}, model_path + std::to_string(top));
    write_report_text(std::cout, report);
    return 0;
}

int cmd_sweep(const std::string& config_path, const std::string& k_list, const std::string& out_dir,
              bool continue_on_error) {
    RunConfig cfg = load_run_config(config_path);
    std::vector<int> ks;
    {
        std::istringstream in(k_list);
        std::string tok;
        while (std::getline(in, tok, ','))
            if (!tok.empty()) ks.push_back(std::stoi(tok));
    }
    if (ks.empty()) throw ConfigError("sweep needs a nonempty k list");

    auto vocab = load_vocab_file(cfg.vocab_path);
    const int n = active_field_count(vocab);
    auto train = read_libffm_file(cfg.train_path, n, vocab.m());
    auto val = read_libffm_file(cfg.val_path, n, vocab.m());
    Dataset test;
    if (!cfg.test_path.empty()) test = read_libffm_file(cfg.test_path, n, vocab.m());

    fs::create_directories(out_dir);
    std::ofstream out(fs::path(out_dir) / "sweep.csv");
    out << "k,val_auc,val_logloss,test_auc,test_logloss,param_count\n";
    int failures = 0;
    for (int k : ks) {
        try {
            RunConfig run = cfg;
            run.k = k;
            TrainOutcome outcome = run_training(run, train, val);
            EvalResult test_ev = outcome.val;
            if (!test.instances.empty()) test_ev = eval_model(outcome.model, test);
            char buf[200];
            std::snprintf(buf, sizeof(buf), "%d,%.9f,%.9f,%.9f,%.9f,%lld\n", k, outcome.val.auc,
                          outcome.val.log_loss, test_ev.auc, test_ev.log_loss,
                          static_cast<long long>(model_param_count(outcome.model)));
            out << buf;
            out.flush();
        } catch (const std::exception& e) {
            ++failures;
            std::cerr << "k=" << k << " failed: " << e.what() << "\n";
            if (!continue_on_error) throw;
        }
    }
    write_manifest(out_dir, "sweep", {config_path, cfg.train_path, cfg.val_path, cfg.vocab_path},
                   read_file(config_path) + k_list);
    std::cout << "sweep complete: " << (ks.size() - failures) << "/" << ks.size() << " runs\n";
    return failures == 0 ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Field-embedded factorization machine training and analysis"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    PreprocessArgs pre;
    auto* sub_pre = app.add_subcommand("preprocess", "Build vocabulary and encoded splits");
    sub_pre->add_option("--raw", pre.raw_path, "Delimited input file")->required();
    sub_pre->add_option("--schema", pre.schema_path, "Schema JSON")->required();
    sub_pre->add_option("--out", pre.out_dir, "Output directory");
    sub_pre->add_option("--min-frequency", pre.min_frequency, "Feature frequency threshold");
    sub_pre->add_option("--ratios", pre.ratios, "train,val,test ratios");
    sub_pre->add_option("--seed", pre.seed, "Shuffle seed");
    sub_pre->add_option("--delimiter", pre.delimiter, "comma or tab");

    std::string config_path, model_path, data_path, vocab_path, predictions_path, out_path;
    std::string k_list;
    int top = 7;
    bool continue_on_error = false;
    std::optional<uint64_t> seed_override;
    std::optional<std::string> out_override;
    uint64_t seed_value = 0;
    std::string out_value;

    auto* sub_train = app.add_subcommand("train", "Train a model from a config file");
    sub_train->add_option("--config", config_path, "Run config JSON")->required();
    auto* seed_opt = sub_train->add_option("--seed", seed_value, "Override config seed");
    auto* out_opt = sub_train->add_option("--out", out_value, "Override output directory");

    auto* sub_eval = app.add_subcommand("evaluate", "Evaluate a model on a dataset");
    sub_eval->add_option("--model", model_path, "Model file")->required();
    sub_eval->add_option("--data", data_path, "libffm-format data")->required();
    sub_eval->add_option("--predictions", predictions_path, "Optional prediction CSV path");

    auto* sub_pred = app.add_subcommand("predict", "Write per-instance probabilities");
    sub_pred->add_option("--model", model_path, "Model file")->required();
    sub_pred->add_option("--data", data_path, "libffm-format data")->required();
    sub_pred->add_option("--out", out_path, "Prediction CSV path")->required();

    auto* sub_analyze = app.add_subcommand("analyze", "Rank field pairs by interaction strength");
    sub_analyze->add_option("--model", model_path, "FEFM/DeepFEFM model file")->required();
    sub_analyze->add_option("--vocab", vocab_path, "Vocabulary file")->required();
    sub_analyze->add_option("--top", top, "Number of pairs to keep");
    sub_analyze->add_option("--out", out_path, "Output directory")->default_val("out");

    auto* sub_sweep = app.add_subcommand("sweep", "Train across embedding dimensions");
    sub_sweep->add_option("--config", config_path, "Run config JSON")->required();
    sub_sweep->add_option("--k", k_list, "Comma-separated k values")->required();
    sub_sweep->add_option("--out", out_path, "Output directory")->default_val("out");
    sub_sweep->add_flag("--continue-on-error", continue_on_error, "Keep sweeping past failures");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (sub_pre->parsed()) return cmd_preprocess(pre);
        if (sub_train->parsed()) {
            if (seed_opt->count()) seed_override = seed_value;
            if (out_opt->count()) out_override = out_value;
            return cmd_train(config_path, seed_override, out_override);
        }
        if (sub_eval->parsed()) return cmd_evaluate(model_path, data_path, predictions_path);
        if (sub_pred->parsed()) return cmd_predict(model_path, data_path, out_path);
        if (sub_analyze->parsed()) return cmd_analyze(model_path, vocab_path, top, out_path);
        if (sub_sweep->parsed()) return cmd_sweep(config_path, k_list, out_path, continue_on_error);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 1;
}

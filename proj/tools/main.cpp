// sonarzoo command line tool: build and cost the model families, train them
// from scratch, extract features, and run the low-shot transfer protocol.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage or config error.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "sonarzoo/anchors.hpp"
#include "sonarzoo/cost.hpp"
#include "sonarzoo/csv.hpp"
#include "sonarzoo/dataset.hpp"
#include "sonarzoo/errors.hpp"
#include "sonarzoo/graph.hpp"
#include "sonarzoo/serialize.hpp"
#include "sonarzoo/trainer.hpp"
#include "sonarzoo/transfer.hpp"
#include "sonarzoo/zoo.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace sonarzoo;

namespace {

std::string default_out_dir() {
    const char* env = std::getenv("SONARZOO_OUT");
    return (env && *env) ? env : ".";
}

std::string out_path(const std::string& dir, const std::string& name) {
    return (fs::path(dir) / name).string();
}

void write_output(const std::string& dir, const std::string& name, const std::string& content) {
    fs::create_directories(dir);
    const std::string path = out_path(dir, name);
    write_text_file(path, content);
    std::printf("wrote %s\n", path.c_str());
}

json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config: " + path);
    try {
        return json::parse(std::string((std::istreambuf_iterator<char>(in)),
                                       std::istreambuf_iterator<char>()));
    } catch (const json::exception& e) {
        throw ConfigError("bad JSON in " + path + ": " + e.what());
    }
}

void check_keys(const json& obj, const std::string& where,
                std::initializer_list<const char*> allowed) {
    if (!obj.is_object()) throw ConfigError(where + " must be a JSON object");
    for (const auto& [key, value] : obj.items()) {
        bool ok = false;
        for (const char* a : allowed) ok = ok || key == a;
        if (!ok) throw ConfigError("unknown key '" + key + "' in " + where);
    }
}

template <class T>
T get_as(const json& obj, const std::string& where, const char* key) {
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError("bad value for '" + std::string(key) + "' in " + where + ": " + e.what());
    }
}

template <class T>
T get_or(const json& obj, const std::string& where, const char* key, T def) {
    if (!obj.contains(key)) return def;
    return get_as<T>(obj, where, key);
}

void check_schema_version(const json& cfg, const std::string& where) {
    if (get_or<std::int64_t>(cfg, where, "schema_version", 1) != 1)
        throw ConfigError("unsupported schema_version in " + where + " (expected 1)");
}

int require_layer(const ModelGraph& g, const std::string& layer) {
    const int id = g.find(layer);
    if (id < 0) throw ConfigError("unknown layer '" + layer + "' in " + g.meta.family);
    return id;
}

// ---------------------------------------------------------------- dataset --

struct DatasetSpec {
    bool synthetic = false;
    std::string root;
    std::int64_t image_size = 0;
    // synthetic parameters
    std::int64_t classes = 4;
    std::int64_t per_class = 10;
    std::uint64_t seed = 1234;
};

DatasetSpec parse_dataset(const json& j, const std::string& where) {
    check_keys(j, where, {"root", "image_size", "synthetic"});
    DatasetSpec d;
    if (j.contains("synthetic")) {
        if (j.contains("root") || j.contains("image_size"))
            throw ConfigError(where + ": give either root+image_size or synthetic, not both");
        const json& s = j.at("synthetic");
        check_keys(s, where + ".synthetic", {"classes", "per_class", "image_size", "seed"});
        d.synthetic = true;
        d.classes = get_or<std::int64_t>(s, where, "classes", 4);
        d.per_class = get_or<std::int64_t>(s, where, "per_class", 10);
        d.image_size = get_or<std::int64_t>(s, where, "image_size", 32);
        d.seed = get_or<std::uint64_t>(s, where, "seed", 1234);
        return d;
    }
    if (!j.contains("root")) throw ConfigError(where + ": needs 'root' or 'synthetic'");
    d.root = get_as<std::string>(j, where, "root");
    if (!fs::is_directory(d.root)) throw ConfigError(where + ": dataset root not found: " + d.root);
    if (!j.contains("image_size")) throw ConfigError(where + ": 'image_size' is required with 'root'");
    d.image_size = get_as<std::int64_t>(j, where, "image_size");
    return d;
}

ImageDataset load_dataset_spec(const DatasetSpec& d) {
    if (d.synthetic) return synth_generate(d.classes, d.per_class, d.image_size, d.seed);
    return load_dataset(d.root, d.image_size);
}

json resolved_dataset(const DatasetSpec& d) {
    json j;
    if (d.synthetic) {
        j["synthetic"] = {{"classes", d.classes},
                          {"per_class", d.per_class},
                          {"image_size", d.image_size},
                          {"seed", d.seed}};
    } else {
        j["root"] = d.root;
        j["image_size"] = d.image_size;
    }
    return j;
}

// ------------------------------------------------------------------ split --

struct SplitSpec {
    std::string kind = "none"; // none | sequential
    double fraction = 0.7;
};

SplitSpec parse_split(const json& j, const std::string& where) {
    SplitSpec s;
    if (j.is_null()) return s;
    check_keys(j, where, {"kind", "fraction"});
    s.kind = get_or<std::string>(j, where, "kind", "none");
    if (s.kind != "none" && s.kind != "sequential")
        throw ConfigError(where + ".kind must be 'none' or 'sequential'");
    s.fraction = get_or<double>(j, where, "fraction", 0.7);
    if (s.fraction <= 0.0 || s.fraction >= 1.0)
        throw ConfigError(where + ".fraction must be in (0, 1)");
    return s;
}

json resolved_split(const SplitSpec& s) {
    json j;
    j["kind"] = s.kind;
    if (s.kind == "sequential") j["fraction"] = s.fraction;
    return j;
}

// Returns (train, test); test empty when the split kind is none.
std::pair<ImageDataset, ImageDataset> apply_split(const ImageDataset& ds, const SplitSpec& s) {
    if (s.kind == "sequential") return sequential_split(ds, s.fraction);
    return {ds, ImageDataset{}};
}

// --------------------------------------------------------------- training --

TrainConfig parse_train(const json& j, const std::string& where, std::int64_t default_epochs) {
    TrainConfig tc;
    tc.epochs = default_epochs;
    if (j.is_null()) return tc;
    check_keys(j, where,
               {"learning_rate", "epochs", "batch_size", "augment", "shift_fraction", "flip_ud",
                "flip_lr", "seed", "pixel_mean", "early_stop", "stop_accuracy", "stop_loss",
                "verbose"});
    tc.learning_rate = get_or<double>(j, where, "learning_rate", tc.learning_rate);
    tc.epochs = get_or<std::int64_t>(j, where, "epochs", tc.epochs);
    tc.batch_size = get_or<std::int64_t>(j, where, "batch_size", tc.batch_size);
    tc.augment = get_or<bool>(j, where, "augment", tc.augment);
    tc.aug.shift_fraction = get_or<double>(j, where, "shift_fraction", tc.aug.shift_fraction);
    tc.aug.flip_ud = get_or<double>(j, where, "flip_ud", tc.aug.flip_ud);
    tc.aug.flip_lr = get_or<double>(j, where, "flip_lr", tc.aug.flip_lr);
    tc.seed = get_or<std::uint64_t>(j, where, "seed", tc.seed);
    tc.pixel_mean = get_or<double>(j, where, "pixel_mean", tc.pixel_mean);
    tc.early_stop = get_or<bool>(j, where, "early_stop", tc.early_stop);
    tc.stop_accuracy = get_or<double>(j, where, "stop_accuracy", tc.stop_accuracy);
    tc.stop_loss = get_or<double>(j, where, "stop_loss", tc.stop_loss);
    tc.verbose = get_or<bool>(j, where, "verbose", tc.verbose);
    return tc;
}

json resolved_train(const TrainConfig& tc) {
    json j;
    j["learning_rate"] = tc.learning_rate;
    j["epochs"] = tc.epochs;
    j["batch_size"] = tc.batch_size;
    j["augment"] = tc.augment;
    j["shift_fraction"] = tc.aug.shift_fraction;
    j["flip_ud"] = tc.aug.flip_ud;
    j["flip_lr"] = tc.aug.flip_lr;
    j["seed"] = tc.seed;
    j["pixel_mean"] = tc.pixel_mean;
    j["early_stop"] = tc.early_stop;
    j["stop_accuracy"] = tc.stop_accuracy;
    j["stop_loss"] = tc.stop_loss;
    j["verbose"] = tc.verbose;
    return j;
}

std::string train_log_csv(const TrainLog& log, bool classifier) {
    std::string csv = classifier ? "epoch;loss;accuracy\n" : "epoch;loss\n";
    for (std::size_t i = 0; i < log.epochs.size(); ++i) {
        csv += format_int(static_cast<std::int64_t>(i + 1)) + ";" +
               format_fixed(log.epochs[i].loss, 6);
        if (classifier) csv += ";" + format_fixed(log.epochs[i].accuracy * 100.0, 4);
        csv += "\n";
    }
    return csv;
}

// -------------------------------------------------------------------- svm --

SvmConfig parse_svm(const json& j, const std::string& where) {
    SvmConfig s;
    if (j.is_null()) return s;
    check_keys(j, where, {"C", "tolerance", "max_epochs", "squared_hinge", "standardize"});
    s.C = get_or<double>(j, where, "C", s.C);
    s.tolerance = get_or<double>(j, where, "tolerance", s.tolerance);
    s.max_epochs = get_or<std::int64_t>(j, where, "max_epochs", s.max_epochs);
    s.squared_hinge = get_or<bool>(j, where, "squared_hinge", s.squared_hinge);
    s.standardize = get_or<bool>(j, where, "standardize", s.standardize);
    return s;
}

json resolved_svm(const SvmConfig& s) {
    json j;
    j["C"] = s.C;
    j["tolerance"] = s.tolerance;
    j["max_epochs"] = s.max_epochs;
    j["squared_hinge"] = s.squared_hinge;
    j["standardize"] = s.standardize;
    return j;
}

// Normalized raw pixels as a feature matrix (the no-model baseline).
FeatureMatrix pixel_features(const ImageDataset& ds, double pixel_mean) {
    FeatureMatrix f;
    f.rows = ds.size();
    f.cols = ds.image_size * ds.image_size;
    f.layer = "input";
    f.model_id = "raw-pixels";
    f.labels = ds.labels;
    std::vector<std::int64_t> idx(static_cast<std::size_t>(ds.size()));
    for (std::int64_t i = 0; i < ds.size(); ++i) idx[static_cast<std::size_t>(i)] = i;
    Tensor x = batch_tensor(ds, idx);
    normalize_inplace(x, pixel_mean);
    f.data.assign(x.data(), x.data() + x.size());
    return f;
}

// ----------------------------------------------------------------- widths --

std::vector<std::int64_t> default_width_grid(const std::string& family) {
    if (family == "autoencoder") return {4, 8, 16, 32, 64, 128};
    return {8, 16, 24, 32, 40, 48, 56, 64};
}

// ================================================================ commands ==

struct AnalyzeArgs {
    std::string family;
    std::int64_t width = 0; // 0: family default
    std::int64_t size = 96;
    std::int64_t classes = 12;
    std::string convention = "mac2";
    std::string truncate;
    std::string csv_path;
};

int run_analyze(const AnalyzeArgs& a) {
    const FlopConvention conv = flop_convention_from_name(a.convention);
    const std::int64_t width = a.width > 0 ? a.width : default_width(a.family);
    ModelGraph g = build_model({a.family, width, a.size, a.classes});
    if (!a.truncate.empty()) {
        require_layer(g, a.truncate);
        g = truncate_at(g, a.truncate);
    }
    const CostReport r = analyze_cost(g, conv);

    std::printf("%s w=%lld input=%lldx%lld classes=%lld convention=%s\n", a.family.c_str(),
                static_cast<long long>(width), static_cast<long long>(a.size),
                static_cast<long long>(a.size), static_cast<long long>(a.classes),
                flop_convention_name(conv));
    if (!a.truncate.empty()) std::printf("truncated at %s\n", a.truncate.c_str());
    std::printf("%-26s %-18s %12s %16s %12s\n", "name", "kind", "params", "flops", "activation");
    for (const auto& lc : r.layers)
        std::printf("%-26s %-18s %12lld %16lld %12lld\n", lc.name.c_str(), lc.kind.c_str(),
                    static_cast<long long>(lc.params), static_cast<long long>(lc.flops),
                    static_cast<long long>(lc.activation));
    std::printf("total params %lld\n", static_cast<long long>(r.total_params));
    std::printf("total flops %lld\n", static_cast<long long>(r.total_flops));
    std::printf("activation bytes %lld\n", static_cast<long long>(r.activation_bytes));

    if (!a.csv_path.empty()) {
        std::string csv = "name;kind;params;flops\n";
        for (const auto& lc : r.layers)
            csv += lc.name + ";" + lc.kind + ";" + format_int(lc.params) + ";" +
                   format_int(lc.flops) + "\n";
        write_text_file(a.csv_path, csv);
        std::printf("wrote %s\n", a.csv_path.c_str());
    }
    return 0;
}

struct SweepArgs {
    std::string family;
    std::vector<std::int64_t> widths;
    std::vector<std::int64_t> sizes{32, 48, 64, 80, 96};
    std::int64_t classes = 12;
    std::string convention = "mac2";
    std::string out = default_out_dir();
};

int run_sweep(const SweepArgs& a) {
    const FlopConvention conv = flop_convention_from_name(a.convention);
    const std::vector<std::int64_t> widths =
        a.widths.empty() ? default_width_grid(a.family) : a.widths;
    const auto tables = sweep_width_flops(a.family, widths, a.sizes, a.classes, conv);
    for (const auto& t : tables) write_output(a.out, t.filename, t.csv);

    json cfg;
    cfg["schema_version"] = 1;
    cfg["family"] = a.family;
    cfg["widths"] = widths;
    cfg["sizes"] = a.sizes;
    cfg["classes"] = a.classes;
    cfg["convention"] = flop_convention_name(conv);
    write_output(a.out, "sweep-config.json", cfg.dump(2) + "\n");
    return 0;
}

struct SynthArgs {
    std::int64_t classes = 4;
    std::int64_t per_class = 10;
    std::int64_t size = 32;
    std::uint64_t seed = 1234;
    std::string out = default_out_dir();
};

int run_synth(const SynthArgs& a) {
    const ImageDataset ds = synth_generate(a.classes, a.per_class, a.size, a.seed);
    save_dataset(ds, a.out);
    json cfg;
    cfg["schema_version"] = 1;
    cfg["synthetic"] = {{"classes", a.classes},
                        {"per_class", a.per_class},
                        {"image_size", a.size},
                        {"seed", a.seed}};
    write_output(a.out, "synth-config.json", cfg.dump(2) + "\n");
    std::printf("wrote %lld images in %lld classes under %s\n",
                static_cast<long long>(ds.size()), static_cast<long long>(ds.num_classes()),
                a.out.c_str());
    return 0;
}

int run_train(const std::string& config_path, const std::string& out) {
    const json cfg = load_json_file(config_path);
    check_keys(cfg, "config", {"schema_version", "model", "dataset", "split", "train"});
    check_schema_version(cfg, "config");
    if (!cfg.contains("model")) throw ConfigError("config: 'model' section is required");
    if (!cfg.contains("dataset")) throw ConfigError("config: 'dataset' section is required");

    const DatasetSpec dspec = parse_dataset(cfg.at("dataset"), "dataset");
    const ImageDataset full = load_dataset_spec(dspec);
    const SplitSpec split = parse_split(cfg.value("split", json()), "split");
    const auto [train_ds, test_ds] = apply_split(full, split);

    const json& jm = cfg.at("model");
    check_keys(jm, "model", {"family", "width", "input_size", "classes"});
    if (!jm.contains("family")) throw ConfigError("model: 'family' is required");
    const std::string family = get_as<std::string>(jm, "model", "family");
    const std::int64_t width = get_or<std::int64_t>(jm, "model", "width", default_width(family));
    const std::int64_t input_size =
        get_or<std::int64_t>(jm, "model", "input_size", full.image_size);
    const std::int64_t classes =
        get_or<std::int64_t>(jm, "model", "classes", full.num_classes());
    if (input_size != full.image_size)
        throw ConfigError("model input_size " + std::to_string(input_size) +
                          " does not match dataset image size " + std::to_string(full.image_size));

    TrainConfig tc = parse_train(cfg.value("train", json()), "train", 200);
    const bool mean_given = cfg.contains("train") && cfg.at("train").contains("pixel_mean");
    if (!mean_given) tc.pixel_mean = compute_pixel_mean(train_ds);

    const bool classifier = family != "autoencoder";
    ModelGraph g = build_model({family, width, input_size, classes});
    initialize_weights(g, tc.seed);
    const TrainLog log = classifier ? train_classifier(g, train_ds, tc)
                                    : train_autoencoder(g, train_ds, tc);

    fs::create_directories(out);
    const std::string model_name = family + "-w" + std::to_string(width) + ".szm";
    save_model(g, out_path(out, model_name));
    std::printf("wrote %s\n", out_path(out, model_name).c_str());
    write_output(out, "train-log.csv", train_log_csv(log, classifier));

    json metrics;
    metrics["family"] = family;
    metrics["width"] = width;
    metrics["input_size"] = input_size;
    metrics["classes"] = classifier ? classes : 0;
    metrics["pixel_mean"] = tc.pixel_mean;
    metrics["epochs_run"] = log.epochs.size();
    metrics["model_file"] = model_name;
    char hash[16];
    std::snprintf(hash, sizeof hash, "%08x", structure_hash(g));
    metrics["structure_hash"] = hash;
    if (!log.epochs.empty()) {
        metrics["final_loss"] = log.epochs.back().loss;
        if (classifier) metrics["final_accuracy"] = log.epochs.back().accuracy;
    }
    if (test_ds.size() > 0) {
        if (classifier)
            metrics["test_accuracy"] = evaluate_accuracy(g, test_ds, tc.batch_size);
        else
            metrics["test_mse"] = evaluate_mse(g, test_ds, tc.batch_size);
    }
    write_output(out, "metrics.json", metrics.dump(2) + "\n");

    json resolved;
    resolved["schema_version"] = 1;
    resolved["model"] = {{"family", family},
                         {"width", width},
                         {"input_size", input_size},
                         {"classes", classes}};
    resolved["dataset"] = resolved_dataset(dspec);
    resolved["split"] = resolved_split(split);
    resolved["train"] = resolved_train(tc);
    write_output(out, "train-config.json", resolved.dump(2) + "\n");

    if (!log.epochs.empty()) {
        if (classifier)
            std::printf("final epoch %zu: loss %.6f accuracy %.4f%%\n", log.epochs.size(),
                        log.epochs.back().loss, log.epochs.back().accuracy * 100.0);
        else
            std::printf("final epoch %zu: loss %.6f\n", log.epochs.size(),
                        log.epochs.back().loss);
    }
    if (metrics.contains("test_accuracy"))
        std::printf("test accuracy %.4f%%\n", metrics["test_accuracy"].get<double>() * 100.0);
    if (metrics.contains("test_mse"))
        std::printf("test mse %.6f\n", metrics["test_mse"].get<double>());
    return 0;
}

int run_widthsearch(const std::string& config_path, const std::string& out, bool long_epochs) {
    const json cfg = load_json_file(config_path);
    check_keys(cfg, "config",
               {"schema_version", "family", "widths", "folds", "dataset", "split", "train"});
    check_schema_version(cfg, "config");
    if (!cfg.contains("family")) throw ConfigError("config: 'family' is required");
    if (!cfg.contains("dataset")) throw ConfigError("config: 'dataset' section is required");

    const std::string family = get_as<std::string>(cfg, "config", "family");
    const std::vector<std::int64_t> widths =
        get_or<std::vector<std::int64_t>>(cfg, "config", "widths", default_width_grid(family));
    const std::int64_t folds = get_or<std::int64_t>(cfg, "config", "folds", 5);

    const DatasetSpec dspec = parse_dataset(cfg.at("dataset"), "dataset");
    const ImageDataset full = load_dataset_spec(dspec);
    const SplitSpec split = parse_split(cfg.value("split", json()), "split");
    const ImageDataset ds = apply_split(full, split).first;

    TrainConfig tc = parse_train(cfg.value("train", json()), "train", 50);
    const bool epochs_given = cfg.contains("train") && cfg.at("train").contains("epochs");
    if (long_epochs && !epochs_given) tc.epochs = 200;

    const WidthSearchResult r = width_search(family, widths, ds, folds, tc);

    fs::create_directories(out);
    write_output(out, "width-tuning-" + family + ".csv", width_search_csv(r));

    json report;
    report["family"] = family;
    report["folds"] = folds;
    report["selected_width"] = r.selected_width;
    json rows = json::array();
    for (const auto& row : r.rows) {
        json jr;
        jr["width"] = row.width;
        jr["acc_mean_percent"] = row.mean * 100.0;
        jr["acc_std_percent"] = row.stddev * 100.0;
        jr["acc_max_percent"] = row.max * 100.0;
        jr["acc_min_percent"] = row.min * 100.0;
        json fa = json::array();
        for (double v : row.fold_accuracy) fa.push_back(v * 100.0);
        jr["fold_accuracy_percent"] = std::move(fa);
        if (!row.errors.empty()) jr["errors"] = row.errors;
        rows.push_back(std::move(jr));
    }
    report["rows"] = std::move(rows);
    write_output(out, "width-tuning-" + family + ".json", report.dump(2) + "\n");

    json resolved;
    resolved["schema_version"] = 1;
    resolved["family"] = family;
    resolved["widths"] = widths;
    resolved["folds"] = folds;
    resolved["dataset"] = resolved_dataset(dspec);
    resolved["split"] = resolved_split(split);
    resolved["train"] = resolved_train(tc);
    write_output(out, "widthsearch-config.json", resolved.dump(2) + "\n");

    std::printf("selected width %lld\n", static_cast<long long>(r.selected_width));
    return 0;
}

int run_extract(const std::string& config_path, const std::string& out) {
    const json cfg = load_json_file(config_path);
    check_keys(cfg, "config",
               {"schema_version", "model_file", "layer", "dataset", "split", "batch"});
    check_schema_version(cfg, "config");
    if (!cfg.contains("model_file")) throw ConfigError("config: 'model_file' is required");
    if (!cfg.contains("layer")) throw ConfigError("config: 'layer' is required");
    if (!cfg.contains("dataset")) throw ConfigError("config: 'dataset' section is required");

    const std::string model_file = get_as<std::string>(cfg, "config", "model_file");
    if (!fs::is_regular_file(model_file))
        throw ConfigError("model file not found: " + model_file);
    const std::string layer = get_as<std::string>(cfg, "config", "layer");
    const std::int64_t batch = get_or<std::int64_t>(cfg, "config", "batch", 32);

    const DatasetSpec dspec = parse_dataset(cfg.at("dataset"), "dataset");
    const ImageDataset full = load_dataset_spec(dspec);
    const SplitSpec split = parse_split(cfg.value("split", json()), "split");

    const ModelGraph g = load_model(model_file);
    require_layer(g, layer);

    fs::create_directories(out);
    auto emit = [&](const ImageDataset& ds, const std::string& name) {
        const FeatureMatrix f = extract_features(g, layer, ds, batch);
        save_features(f, out_path(out, name));
        std::printf("wrote %s (%lld rows x %lld features)\n", out_path(out, name).c_str(),
                    static_cast<long long>(f.rows), static_cast<long long>(f.cols));
    };
    if (split.kind == "sequential") {
        const auto [train_ds, test_ds] = apply_split(full, split);
        emit(train_ds, "features-" + layer + "-train.szf");
        emit(test_ds, "features-" + layer + "-test.szf");
    } else {
        emit(full, "features-" + layer + ".szf");
    }

    json resolved;
    resolved["schema_version"] = 1;
    resolved["model_file"] = model_file;
    resolved["layer"] = layer;
    resolved["batch"] = batch;
    resolved["dataset"] = resolved_dataset(dspec);
    resolved["split"] = resolved_split(split);
    write_output(out, "extract-config.json", resolved.dump(2) + "\n");
    return 0;
}

int run_lowshot(const std::string& config_path, const std::string& out, bool raw_pixels_flag) {
    const json cfg = load_json_file(config_path);
    check_keys(cfg, "config",
               {"schema_version", "features", "model_file", "layer", "raw_pixels", "dataset",
                "split", "spc", "runs", "seed", "svm", "batch"});
    check_schema_version(cfg, "config");

    const std::vector<std::int64_t> spc = get_or<std::vector<std::int64_t>>(
        cfg, "config", "spc", {1, 5, 10, 20, 30, 40, 50});
    const std::int64_t runs = get_or<std::int64_t>(cfg, "config", "runs", 10);
    const std::uint64_t seed = get_or<std::uint64_t>(cfg, "config", "seed", 0);
    const std::int64_t batch = get_or<std::int64_t>(cfg, "config", "batch", 32);
    const SvmConfig svm = parse_svm(cfg.value("svm", json()), "svm");
    const bool raw_pixels =
        raw_pixels_flag || get_or<bool>(cfg, "config", "raw_pixels", false);

    FeatureMatrix train_f, test_f;
    json resolved;
    resolved["schema_version"] = 1;

    if (cfg.contains("features")) {
        if (cfg.contains("model_file") || cfg.contains("layer") || raw_pixels ||
            cfg.contains("dataset") || cfg.contains("split"))
            throw ConfigError(
                "config: 'features' replaces model_file/layer/raw_pixels/dataset/split");
        const json& jf = cfg.at("features");
        check_keys(jf, "features", {"train", "test"});
        if (!jf.contains("train") || !jf.contains("test"))
            throw ConfigError("features: both 'train' and 'test' paths are required");
        const std::string train_path = get_as<std::string>(jf, "features", "train");
        const std::string test_path = get_as<std::string>(jf, "features", "test");
        if (!fs::is_regular_file(train_path))
            throw ConfigError("feature file not found: " + train_path);
        if (!fs::is_regular_file(test_path))
            throw ConfigError("feature file not found: " + test_path);
        train_f = load_features(train_path);
        test_f = load_features(test_path);
        resolved["features"] = {{"train", train_path}, {"test", test_path}};
    } else {
        if (!cfg.contains("dataset"))
            throw ConfigError("config: 'dataset' section is required without 'features'");
        const DatasetSpec dspec = parse_dataset(cfg.at("dataset"), "dataset");
        const ImageDataset full = load_dataset_spec(dspec);
        SplitSpec split = parse_split(cfg.value("split", json()), "split");
        if (!cfg.contains("split")) split.kind = "sequential";
        if (split.kind != "sequential")
            throw ConfigError("lowshot needs a sequential split to form train/test sets");
        const auto [train_ds, test_ds] = apply_split(full, split);

        if (raw_pixels) {
            if (cfg.contains("model_file") || cfg.contains("layer"))
                throw ConfigError("config: raw_pixels excludes model_file/layer");
            const double mean = compute_pixel_mean(train_ds);
            train_f = pixel_features(train_ds, mean);
            test_f = pixel_features(test_ds, mean);
            resolved["raw_pixels"] = true;
        } else {
            if (!cfg.contains("model_file") || !cfg.contains("layer"))
                throw ConfigError(
                    "config: needs 'features', 'raw_pixels', or 'model_file'+'layer'");
            const std::string model_file = get_as<std::string>(cfg, "config", "model_file");
            if (!fs::is_regular_file(model_file))
                throw ConfigError("model file not found: " + model_file);
            const std::string layer = get_as<std::string>(cfg, "config", "layer");
            const ModelGraph g = load_model(model_file);
            require_layer(g, layer);
            train_f = extract_features(g, layer, train_ds, batch);
            test_f = extract_features(g, layer, test_ds, batch);
            resolved["model_file"] = model_file;
            resolved["layer"] = layer;
        }
        resolved["dataset"] = resolved_dataset(dspec);
        resolved["split"] = resolved_split(split);
    }

    const SampleComplexityCurve curve = run_lowshot(train_f, test_f, spc, runs, seed, svm);

    const std::string tag = train_f.layer.empty() ? "features" : train_f.layer;
    fs::create_directories(out);
    write_output(out, "lowshot-" + tag + ".csv", lowshot_csv(curve));
    write_output(out, "lowshot-" + tag + ".json",
                 lowshot_json(curve, train_f.model_id, train_f.layer));

    resolved["spc"] = spc;
    resolved["runs"] = runs;
    resolved["seed"] = seed;
    resolved["batch"] = batch;
    resolved["svm"] = resolved_svm(svm);
    write_output(out, "lowshot-config.json", resolved.dump(2) + "\n");

    for (const auto& pt : curve.points)
        std::printf("spc %lld: %.4f%% +/- %.4f%%\n", static_cast<long long>(pt.spc),
                    pt.mean * 100.0, pt.stddev * 100.0);
    std::printf("auscc %.4f%%\n", curve.auscc * 100.0);
    return 0;
}

// ----------------------------------------------------------------- verify --

double params_at(const std::string& family, std::int64_t w, std::int64_t s,
                 const std::string& layer) {
    const ModelGraph g = build_model({family, w, s, 12});
    const CostReport r = analyze_cost(g);
    return static_cast<double>(params_through(g, r, layer));
}

double flops_at(const std::string& family, std::int64_t w, std::int64_t s,
                const std::string& layer) {
    const ModelGraph g = build_model({family, w, s, 12});
    const CostReport r = analyze_cost(g);
    if (layer.empty()) return static_cast<double>(r.total_flops);
    return static_cast<double>(flops_through(g, r, layer));
}

double auscc_from_manifest(const AnchorSet& as, const std::string& id) {
    const auto& grid = as.require("auscc-spc-grid").series;
    const auto& ys = as.require(id).series;
    if (grid.size() != ys.size())
        throw ConfigError("manifest series length mismatch for " + id);
    std::vector<std::pair<double, double>> pts;
    for (std::size_t i = 0; i < grid.size(); ++i) pts.emplace_back(grid[i], ys[i]);
    return compute_auscc(pts);
}

double dataset_pixel_mean(const std::string& dir, std::int64_t size) {
    const ImageDataset ds = load_dataset(dir, size);
    return compute_pixel_mean(sequential_split(ds, 0.7).first);
}

double densenet_test_accuracy(const std::string& dir) {
    const ImageDataset ds = load_dataset(dir, 32);
    const auto [train_ds, test_ds] = sequential_split(ds, 0.7);
    TrainConfig tc;
    tc.pixel_mean = compute_pixel_mean(train_ds);
    ModelGraph g = build_model({"densenet121", 16, 32, ds.num_classes()});
    initialize_weights(g, tc.seed);
    train_classifier(g, train_ds, tc);
    return evaluate_accuracy(g, test_ds, tc.batch_size);
}

// Measurement wired per anchor id; unknown ids are reported as skipped.
std::optional<double> measure_anchor(const std::string& id, const AnchorSet& as,
                                     const std::string& dataset_dir, bool full_training,
                                     std::string* note) {
    if (id == "resnet20-w32-s96-params-flatten") return params_at("resnet20", 32, 96, "flatten_5");
    if (id == "resnet20-w32-s96-flops-total") return flops_at("resnet20", 32, 96, "");
    if (id == "resnet20-w32-params-act91") return params_at("resnet20", 32, 96, "activation_91");
    if (id == "resnet20-w32-params-act93") return params_at("resnet20", 32, 96, "activation_93");
    if (id == "resnet20-w32-flops-act91") return flops_at("resnet20", 32, 96, "activation_91");
    if (id == "mobilenet-w32-params-pw11") return params_at("mobilenet", 32, 96, "conv_pw_11_relu");
    if (id == "mobilenet-w32-params-pw12") return params_at("mobilenet", 32, 96, "conv_pw_12_relu");
    if (id == "mobilenet-w32-params-flatten") return params_at("mobilenet", 32, 96, "flatten_5");
    if (id == "mobilenet-w32-flops-pw11") return flops_at("mobilenet", 32, 96, "conv_pw_11_relu");
    if (id == "densenet121-w16-params-block15-relu")
        return params_at("densenet121", 16, 96, "conv5_block15_0_relu");
    if (id == "densenet121-w16-params-block16-relu")
        return params_at("densenet121", 16, 96, "conv5_block16_0_relu");
    if (id == "densenet121-w16-params-avgpool")
        return params_at("densenet121", 16, 96, "avg_pool");
    if (id == "densenet121-w16-flops-block15-relu")
        return flops_at("densenet121", 16, 96, "conv5_block15_0_relu");
    if (id == "squeezenet-w32-params-bn48") return params_at("squeezenet", 32, 96, "batch_norm_48");
    if (id == "squeezenet-w32-params-bn49") return params_at("squeezenet", 32, 96, "batch_norm_49");
    if (id == "squeezenet-w32-params-bn50") return params_at("squeezenet", 32, 96, "batch_norm_50");
    if (id == "squeezenet-w32-flops-bn48") return flops_at("squeezenet", 32, 96, "batch_norm_48");
    if (id == "minixception-w16-params-add18") return params_at("minixception", 16, 96, "add_18");
    if (id == "minixception-w16-params-add19") return params_at("minixception", 16, 96, "add_19");
    if (id == "minixception-w16-params-conv2d35")
        return params_at("minixception", 16, 96, "conv2d_35");
    if (id == "minixception-w16-flops-add19") return flops_at("minixception", 16, 96, "add_19");
    if (id == "auscc-resnet20-flatten-watertank" || id == "auscc-mobilenet-pw11-watertank")
        return auscc_from_manifest(as, id);
    if (id == "auscc-spc-grid") {
        *note = "input grid for the curve anchors, not a measurement";
        return std::nullopt;
    }
    if (id.rfind("pixel-mean-", 0) == 0)
        return dataset_pixel_mean(dataset_dir, std::stoll(id.substr(11)));
    if (id == "densenet121-w16-s32-test-accuracy") {
        if (!full_training) {
            *note = "multi-minute training pass; rerun with --full-training";
            return std::nullopt;
        }
        return densenet_test_accuracy(dataset_dir);
    }
    *note = "no measurement wired for this id";
    return std::nullopt;
}

int run_verify(const std::string& manifest, const std::string& dataset_dir, bool want_json,
               bool full_training) {
    const AnchorSet as = load_anchors(manifest);
    std::vector<AnchorCheck> checks;
    bool hard_fail = false;

    for (const auto& [id, anchor] : as.by_id) {
        AnchorCheck c;
        if (anchor.gating == "dataset" && dataset_dir.empty()) {
            c.id = id;
            c.expected = anchor.value;
            c.tolerance = anchor.tolerance;
            c.relative = anchor.relative;
            c.skipped = true;
            c.note = "dataset not available";
        } else {
            std::string note;
            const auto measured = measure_anchor(id, as, dataset_dir, full_training, &note);
            if (!measured) {
                c.id = id;
                c.expected = anchor.value;
                c.tolerance = anchor.tolerance;
                c.relative = anchor.relative;
                c.skipped = true;
                c.note = note;
            } else {
                c = check_anchor(anchor, *measured);
                if (anchor.gating == "soft" && !c.pass) c.note = "soft anchor, advisory only";
            }
        }
        if (!c.pass && !c.skipped && anchor.gating != "soft") hard_fail = true;
        checks.push_back(std::move(c));
    }

    if (want_json)
        std::fputs(render_anchor_report_json(checks).c_str(), stdout);
    else
        std::fputs(render_anchor_report(checks).c_str(), stdout);

    int pass = 0, fail = 0, skip = 0;
    for (const auto& c : checks) (c.skipped ? skip : (c.pass ? pass : fail))++;
    if (!want_json)
        std::printf("%d passed, %d failed, %d skipped\n", pass, fail, skip);
    return hard_fail ? 1 : 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"sonarzoo: width-parameterized sonar CNN zoo - cost analysis, training, "
                 "feature extraction, and low-shot transfer evaluation"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "sonarzoo 0.1.0");
    std::int64_t jobs = 1;
    app.add_option("--jobs", jobs,
                   "upper bound on worker threads (kernels are single-threaded for "
                   "determinism, so this is a cap, not a demand)")
        ->check(CLI::PositiveNumber);

    AnalyzeArgs an;
    auto* analyze = app.add_subcommand("analyze", "static per-layer parameter and FLOP report");
    analyze->add_option("family", an.family, "model family (resnet20, mobilenet, densenet121, "
                                             "squeezenet, minixception, autoencoder)")
        ->required();
    analyze->add_option("--width", an.width, "width parameter w (code size c for the autoencoder; "
                                             "default: the published choice)");
    analyze->add_option("--size", an.size, "square input size")->capture_default_str();
    analyze->add_option("--classes", an.classes, "class count")->capture_default_str();
    analyze->add_option("--convention", an.convention, "FLOP convention: mac2 | mac2-elem")
        ->capture_default_str();
    analyze->add_option("--truncate", an.truncate,
                        "report the sub-model ending at this layer (name or alias)");
    analyze->add_option("--csv", an.csv_path, "also write a name;kind;params;flops CSV here");

    SweepArgs sw;
    auto* sweep = app.add_subcommand("sweep", "FLOPs vs width tables, one CSV per input size");
    sweep->add_option("family", sw.family, "model family")->required();
    sweep->add_option("--widths", sw.widths, "width grid (default: 8..64 by 8; autoencoder "
                                             "4,8,16,32,64,128)")
        ->delimiter(',');
    sweep->add_option("--sizes", sw.sizes, "input sizes")->delimiter(',')->capture_default_str();
    sweep->add_option("--classes", sw.classes, "class count")->capture_default_str();
    sweep->add_option("--convention", sw.convention, "FLOP convention: mac2 | mac2-elem")
        ->capture_default_str();
    sweep->add_option("--out", sw.out, "output directory (default: $SONARZOO_OUT or .)");

    SynthArgs sy;
    auto* synth = app.add_subcommand("synth", "write a synthetic sonar-like PNG dataset");
    synth->add_option("--classes", sy.classes, "class count")->capture_default_str();
    synth->add_option("--per-class", sy.per_class, "images per class")->capture_default_str();
    synth->add_option("--size", sy.size, "square image size")->capture_default_str();
    synth->add_option("--seed", sy.seed, "generator seed")->capture_default_str();
    synth->add_option("--out", sy.out, "dataset root directory (default: $SONARZOO_OUT or .)");

    std::string train_config, train_out = default_out_dir();
    auto* train = app.add_subcommand("train", "train a model from scratch per a JSON config");
    train->add_option("--config", train_config, "JSON run config")->required();
    train->add_option("--out", train_out, "output directory (default: $SONARZOO_OUT or .)");

    std::string ws_config, ws_out = default_out_dir();
    bool ws_long = false;
    auto* widthsearch = app.add_subcommand(
        "widthsearch", "k-fold cross-validated accuracy over a width grid");
    widthsearch->add_option("--config", ws_config, "JSON run config")->required();
    widthsearch->add_option("--out", ws_out, "output directory (default: $SONARZOO_OUT or .)");
    widthsearch->add_flag("--full-epochs", ws_long,
                          "train 200 epochs per cell instead of the 50-epoch default");

    std::string ex_config, ex_out = default_out_dir();
    auto* extract = app.add_subcommand("extract", "run images through a checkpoint and store a "
                                                  "named layer's activations");
    extract->add_option("--config", ex_config, "JSON run config")->required();
    extract->add_option("--out", ex_out, "output directory (default: $SONARZOO_OUT or .)");

    std::string ls_config, ls_out = default_out_dir();
    bool ls_raw = false;
    auto* lowshot = app.add_subcommand(
        "lowshot", "low-shot transfer: subsample per class, fit the linear SVM, score, repeat");
    lowshot->add_option("--config", ls_config, "JSON run config")->required();
    lowshot->add_option("--out", ls_out, "output directory (default: $SONARZOO_OUT or .)");
    lowshot->add_flag("--raw-pixels", ls_raw, "use normalized pixels as features (baseline)");

    std::string vf_manifest = "data/anchors.json", vf_dataset;
    bool vf_json = false, vf_full = false;
    if (const char* env = std::getenv("SONARZOO_TURNTABLE_DIR"); env && *env) vf_dataset = env;
    auto* verify = app.add_subcommand("verify", "measure every reference anchor and report "
                                                "measured vs expected");
    verify->add_option("--manifest", vf_manifest, "anchor manifest")->capture_default_str();
    verify->add_option("--dataset", vf_dataset,
                       "turntable dataset root (default: $SONARZOO_TURNTABLE_DIR); "
                       "dataset-gated anchors are skipped without it");
    verify->add_flag("--json", vf_json, "emit the report as JSON");
    verify->add_flag("--full-training", vf_full,
                     "also run the dataset-gated training anchor (slow)");

    int rc = 0;
    analyze->callback([&] { rc = run_analyze(an); });
    sweep->callback([&] { rc = run_sweep(sw); });
    synth->callback([&] { rc = run_synth(sy); });
    train->callback([&] { rc = run_train(train_config, train_out); });
    widthsearch->callback([&] { rc = run_widthsearch(ws_config, ws_out, ws_long); });
    extract->callback([&] { rc = run_extract(ex_config, ex_out); });
    lowshot->callback([&] { rc = run_lowshot(ls_config, ls_out, ls_raw); });
    verify->callback([&] { rc = run_verify(vf_manifest, vf_dataset, vf_json, vf_full); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return rc;
}

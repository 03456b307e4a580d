// Release gate. Each numbered criterion prints exactly one PASS/FAIL/SKIP
// line; the process exits non-zero iff any criterion failed. Criterion 8
// drives the real command-line binary (path in $SONARZOO_CLI), criterion 10
// needs the measured turntable dataset ($SONARZOO_TURNTABLE_DIR) and is
// skipped without it.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "sonarzoo/anchors.hpp"
#include "sonarzoo/cost.hpp"
#include "sonarzoo/csv.hpp"
#include "sonarzoo/dataset.hpp"
#include "sonarzoo/errors.hpp"
#include "sonarzoo/graph.hpp"
#include "sonarzoo/runtime.hpp"
#include "sonarzoo/svm.hpp"
#include "sonarzoo/trainer.hpp"
#include "sonarzoo/transfer.hpp"
#include "sonarzoo/zoo.hpp"

#include "fd_check.hpp"
#include "golden_fixtures.hpp"
#include "test_paths.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace sonarzoo;

namespace {

class Timer {
public:
    double secs() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
    }

private:
    std::chrono::steady_clock::time_point t0_ = std::chrono::steady_clock::now();
};

struct Gate {
    int passed = 0, failed = 0, skipped = 0;

    void pass(int n, const std::string& msg, const Timer& t) {
        ++passed;
        std::printf("PASS criterion %d: %s (%.1fs)\n", n, msg.c_str(), t.secs());
        std::fflush(stdout);
    }
    void fail(int n, const std::string& msg, const Timer& t) {
        ++failed;
        std::printf("FAIL criterion %d: %s (%.1fs)\n", n, msg.c_str(), t.secs());
        std::fflush(stdout);
    }
    void skip(int n, const std::string& msg) {
        ++skipped;
        std::printf("SKIP criterion %d: %s\n", n, msg.c_str());
        std::fflush(stdout);
    }
};

std::string fmt(double v, int decimals = 4) { return format_fixed(v, decimals); }

std::string anchor_note(const AnchorCheck& c) {
    return c.id + " measured " + fmt(c.measured) + " vs " + fmt(c.expected) + " tol " +
           fmt(c.tolerance) + (c.relative ? " rel" : " abs");
}

std::string read_file_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw IoError("cannot open " + p.string());
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

// ---------------------------------------------------------------- criteria --

void criterion_params(Gate& gate, const AnchorSet& anchors) {
    Timer t;
    try {
        const ModelGraph g = build_model({"resnet20", 32, 96, 12});
        const CostReport r = analyze_cost(g);
        const double measured = double(params_through(g, r, "flatten_5"));
        const AnchorCheck c = check_anchor(anchors.require("resnet20-w32-s96-params-flatten"),
                                           measured);
        if (c.pass)
            gate.pass(1, "parameters through flatten_5: " + anchor_note(c), t);
        else
            gate.fail(1, anchor_note(c), t);
    } catch (const std::exception& e) {
        gate.fail(1, std::string("exception: ") + e.what(), t);
    }
}

void criterion_flops(Gate& gate, const AnchorSet& anchors) {
    Timer t;
    try {
        const ModelGraph g = build_model({"resnet20", 32, 96, 12});
        const CostReport r = analyze_cost(g);
        const AnchorCheck c = check_anchor(anchors.require("resnet20-w32-s96-flops-total"),
                                           double(r.total_flops));

        // Cross-family reference points are informational: print their status
        // but never gate on them.
        struct Soft {
            const char* id;
            const char* family;
            std::int64_t width;
            const char* layer;
        };
        const std::vector<Soft> soft = {
            {"mobilenet-w32-params-pw11", "mobilenet", 32, "conv_pw_11_relu"},
            {"densenet121-w16-params-block15-relu", "densenet121", 16, "conv5_block15_0_relu"},
            {"squeezenet-w32-params-bn48", "squeezenet", 32, "batch_norm_48"},
            {"minixception-w16-params-add19", "minixception", 16, "add_19"},
        };
        for (const Soft& s : soft) {
            const ModelGraph m = build_model({s.family, s.width, 96, 12});
            const CostReport rm = analyze_cost(m);
            const AnchorCheck sc =
                check_anchor(anchors.require(s.id), double(params_through(m, rm, s.layer)));
            std::printf("  soft anchor %s: measured %s vs %s -> %s\n", sc.id.c_str(),
                        format_int(std::int64_t(sc.measured)).c_str(),
                        format_int(std::int64_t(sc.expected)).c_str(),
                        sc.pass ? "within tolerance" : "outside tolerance");
        }
        if (c.pass)
            gate.pass(2, "total FLOPs: " + anchor_note(c), t);
        else
            gate.fail(2, anchor_note(c), t);
    } catch (const std::exception& e) {
        gate.fail(2, std::string("exception: ") + e.what(), t);
    }
}

void criterion_auscc(Gate& gate, const AnchorSet& anchors) {
    Timer t;
    try {
        const Anchor& grid = anchors.require("auscc-spc-grid");
        auto measure = [&](const std::string& id) {
            const Anchor& a = anchors.require(id);
            if (a.series.size() != grid.series.size())
                throw ConfigError(id + ": series length does not match the spc grid");
            std::vector<std::pair<double, double>> pts;
            for (std::size_t i = 0; i < grid.series.size(); ++i)
                pts.emplace_back(grid.series[i], a.series[i]);
            return check_anchor(a, compute_auscc(pts));
        };
        const AnchorCheck r = measure("auscc-resnet20-flatten-watertank");
        const AnchorCheck m = measure("auscc-mobilenet-pw11-watertank");
        if (r.pass && m.pass)
            gate.pass(3, "curve areas: " + anchor_note(r) + "; " + anchor_note(m), t);
        else
            gate.fail(3, anchor_note(r) + "; " + anchor_note(m), t);
    } catch (const std::exception& e) {
        gate.fail(3, std::string("exception: ") + e.what(), t);
    }
}

void criterion_gradients(Gate& gate) {
    Timer t;
    const double tol = 1e-4;
    try {
        const std::vector<std::uint64_t> seeds = {11, 22, 33, 44, 55};
        const std::vector<fdtest::KernelCheck> checks = fdtest::sweep_all_kernels(seeds);
        double worst = 0.0;
        std::string worst_name;
        int bad = 0;
        for (const fdtest::KernelCheck& c : checks) {
            if (c.max_rel_err > worst) {
                worst = c.max_rel_err;
                worst_name = c.kernel;
            }
            if (c.max_rel_err > tol) ++bad;
        }
        char wbuf[64];
        std::snprintf(wbuf, sizeof wbuf, "%.2e (%s)", worst, worst_name.c_str());
        const std::string msg = format_int(std::int64_t(checks.size())) +
                                " gradient checks over " +
                                format_int(std::int64_t(seeds.size())) +
                                " seeds, max rel err " + wbuf;
        if (bad == 0)
            gate.pass(4, msg, t);
        else
            gate.fail(4, format_int(bad) + " checks above 1e-4; " + msg, t);
    } catch (const std::exception& e) {
        gate.fail(4, std::string("exception: ") + e.what(), t);
    }
}

void criterion_shapes(Gate& gate) {
    Timer t;
    try {
        const std::vector<std::int64_t> sizes = {32, 48, 64, 80, 96};
        std::int64_t nodes_checked = 0;
        std::vector<std::string> mismatches;
        for (const std::string& family : model_families()) {
            for (std::int64_t s : sizes) {
                const ModelGraph g = build_model({family, 8, s, 4});
                Tensor input({2, s, s, 1});
                SeededRng rng(900 + s);
                for (std::int64_t i = 0; i < input.size(); ++i)
                    input[i] = float(rng.uniform(0.0, 255.0));
                std::vector<int> ids(std::size_t(g.size()));
                for (int i = 0; i < g.size(); ++i) ids[std::size_t(i)] = i;
                const std::vector<Tensor> acts = forward_collect(g, input, ids);
                for (int i = 0; i < g.size(); ++i) {
                    std::vector<std::int64_t> want = {2};
                    const LayerNode& n = g.node(i);
                    want.insert(want.end(), n.out_shape.begin(), n.out_shape.end());
                    ++nodes_checked;
                    if (acts[std::size_t(i)].dims() != want)
                        mismatches.push_back(family + " s" + std::to_string(s) + " " + n.name);
                }
            }
        }
        const std::string msg = "6 families x 5 input sizes, " + format_int(nodes_checked) +
                                " layer shapes compared against the executed activations";
        if (mismatches.empty()) {
            gate.pass(5, msg, t);
        } else {
            std::string detail = mismatches.front();
            if (mismatches.size() > 1)
                detail += " and " + std::to_string(mismatches.size() - 1) + " more";
            gate.fail(5, "static/executed shape mismatch at " + detail, t);
        }
    } catch (const std::exception& e) {
        gate.fail(5, std::string("exception: ") + e.what(), t);
    }
}

void criterion_training(Gate& gate) {
    Timer t;
    try {
        const ImageDataset ds = synth_generate(4, 10, 32, 1234);
        const double mean = compute_pixel_mean(ds);

        std::string notes;
        bool ok = true;
        for (const std::string& family : model_families()) {
            if (family == "autoencoder") continue;
            ModelGraph g = build_model({family, 8, 32, 4});
            initialize_weights(g, 1);
            TrainConfig tc;
            tc.learning_rate = 0.001;
            tc.epochs = 200;
            tc.batch_size = 8;
            tc.augment = false;
            tc.pixel_mean = mean;
            tc.seed = 1;
            tc.early_stop = true;
            tc.stop_accuracy = 0.95;
            const TrainLog log = train_classifier(g, ds, tc);
            const double acc = log.epochs.empty() ? 0.0 : log.epochs.back().accuracy;
            if (!notes.empty()) notes += ", ";
            notes += family + " " + std::to_string(log.epochs.size()) + "ep " +
                     fmt(acc * 100.0, 1) + "%";
            if (acc < 0.95 || std::int64_t(log.epochs.size()) > 200) ok = false;
        }

        ModelGraph ae = build_model({"autoencoder", 16, 32, 0});
        initialize_weights(ae, 1);
        const double initial = evaluate_mse(ae, ds);
        TrainConfig ac;
        ac.learning_rate = 0.003;
        ac.epochs = 200;
        ac.batch_size = 4;
        ac.augment = false;
        ac.pixel_mean = mean;
        ac.seed = 1;
        ac.early_stop = true;
        ac.stop_loss = 0.05 * initial;
        const TrainLog alog = train_autoencoder(ae, ds, ac);
        const double final_mse = evaluate_mse(ae, ds);
        const double ratio = initial > 0.0 ? final_mse / initial : 1.0;
        notes += ", autoencoder " + std::to_string(alog.epochs.size()) + "ep mse ratio " +
                 fmt(ratio, 4);
        if (!(ratio <= 0.1)) ok = false;

        if (ok)
            gate.pass(6, "from-scratch training converged: " + notes, t);
        else
            gate.fail(6, "training fell short of target: " + notes, t);
    } catch (const std::exception& e) {
        gate.fail(6, std::string("exception: ") + e.what(), t);
    }
}

void criterion_svm(Gate& gate) {
    Timer t;
    try {
        std::ifstream in(testpaths::fixture("svm_oracle.json"));
        if (!in) throw IoError("missing tests/fixtures/svm_oracle.json");
        json j;
        in >> j;
        const json& problems = j.at("problems");
        int matched = 0;
        double worst_dev = 0.0;
        std::string first_bad;
        for (const json& p : problems) {
            FeatureMatrix f;
            f.labels = p.at("y").get<std::vector<std::int64_t>>();
            f.rows = std::int64_t(f.labels.size());
            f.cols = 2;
            for (const json& row : p.at("x"))
                for (const json& v : row) f.data.push_back(v.get<float>());
            const SvmModel m = train_linear_svm(f, {});
            const double acc = svm_accuracy(m, f);
            const double qp_acc = p.at("qp_accuracy").get<double>();
            const auto ref = p.at("qp_weights").get<std::vector<std::vector<double>>>();
            for (std::int64_t c = 0; c < m.classes; ++c) {
                for (std::int64_t k = 0; k < m.feature_dim; ++k)
                    worst_dev = std::max(worst_dev,
                                         std::abs(m.weights[std::size_t(c)][std::size_t(k)] -
                                                  ref[std::size_t(c)][std::size_t(k)]));
                worst_dev = std::max(worst_dev, std::abs(m.bias[std::size_t(c)] -
                                                         ref[std::size_t(c)].back()));
            }
            if (acc == qp_acc) {
                ++matched;
            } else if (first_bad.empty()) {
                first_bad = "seed " + std::to_string(p.at("seed").get<std::int64_t>()) +
                            ": descent " + fmt(acc) + " vs reference " + fmt(qp_acc);
            }
        }
        char dbuf[32];
        std::snprintf(dbuf, sizeof dbuf, "%.2e", worst_dev);
        const std::string msg = std::to_string(matched) + "/" +
                                std::to_string(problems.size()) +
                                " problems match the offline QP reference accuracy, max weight "
                                "deviation " + dbuf;
        if (matched == int(problems.size()) && matched >= 10)
            gate.pass(7, msg, t);
        else
            gate.fail(7, msg + (first_bad.empty() ? "" : "; " + first_bad), t);
    } catch (const std::exception& e) {
        gate.fail(7, std::string("exception: ") + e.what(), t);
    }
}

void criterion_pipeline(Gate& gate) {
    Timer t;
    const char* cli = std::getenv("SONARZOO_CLI");
    if (!cli || !*cli) {
        gate.skip(8, "SONARZOO_CLI is not set; run through ctest or point it at the binary");
        return;
    }
    try {
        const fs::path root = fs::temp_directory_path() / "sonarzoo-acceptance";
        fs::remove_all(root);
        fs::create_directories(root);
        const fs::path log = root / "cli.log";

        auto sh = [&](const std::string& args) {
            const std::string cmd = "\"" + std::string(cli) + "\" " + args + " >> \"" +
                                    log.string() + "\" 2>&1";
            return std::system(cmd.c_str()) == 0;
        };

        for (const std::string run : {"a", "b"}) {
            const fs::path ds = root / ("ds-" + run);
            const fs::path out = root / ("out-" + run);
            if (!sh("synth --classes 4 --per-class 10 --size 32 --seed 1234 --out \"" +
                    ds.string() + "\""))
                throw IoError("synth failed, see " + log.string());

            json tcfg;
            tcfg["schema_version"] = 1;
            tcfg["model"] = {{"family", "resnet20"}, {"width", 8}, {"input_size", 32},
                             {"classes", 4}};
            tcfg["dataset"] = {{"root", ds.string()}, {"image_size", 32}};
            tcfg["split"] = {{"kind", "sequential"}, {"fraction", 0.7}};
            tcfg["train"] = {{"epochs", 5}, {"batch_size", 8}, {"seed", 3}, {"augment", true}};
            const fs::path tpath = root / ("train-" + run + ".json");
            write_text_file(tpath.string(), tcfg.dump(2) + "\n");
            if (!sh("train --config \"" + tpath.string() + "\" --out \"" + out.string() + "\""))
                throw IoError("train failed, see " + log.string());

            json ecfg;
            ecfg["schema_version"] = 1;
            ecfg["model_file"] = (out / "resnet20-w8.szm").string();
            ecfg["layer"] = "flatten_5";
            ecfg["dataset"] = {{"root", ds.string()}, {"image_size", 32}};
            ecfg["split"] = {{"kind", "sequential"}, {"fraction", 0.7}};
            const fs::path epath = root / ("extract-" + run + ".json");
            write_text_file(epath.string(), ecfg.dump(2) + "\n");
            if (!sh("extract --config \"" + epath.string() + "\" --out \"" + out.string() + "\""))
                throw IoError("extract failed, see " + log.string());

            json lcfg;
            lcfg["schema_version"] = 1;
            lcfg["features"] = {{"train", (out / "features-flatten_5-train.szf").string()},
                                {"test", (out / "features-flatten_5-test.szf").string()}};
            lcfg["spc"] = {1, 2, 5};
            lcfg["runs"] = 3;
            lcfg["seed"] = 9;
            const fs::path lpath = root / ("lowshot-" + run + ".json");
            write_text_file(lpath.string(), lcfg.dump(2) + "\n");
            if (!sh("lowshot --config \"" + lpath.string() + "\" --out \"" + out.string() + "\""))
                throw IoError("lowshot failed, see " + log.string());
        }

        const std::vector<std::string> files = {
            "resnet20-w8.szm",
            "train-log.csv",
            "metrics.json",
            "features-flatten_5-train.szf",
            "features-flatten_5-test.szf",
            "lowshot-flatten_5.csv",
            "lowshot-flatten_5.json",
        };
        std::vector<std::string> differ;
        for (const std::string& f : files) {
            if (read_file_bytes(root / "out-a" / f) != read_file_bytes(root / "out-b" / f))
                differ.push_back(f);
        }
        if (differ.empty()) {
            gate.pass(8, "synth/train/extract/lowshot rerun is byte-identical across " +
                             std::to_string(files.size()) + " output files", t);
            fs::remove_all(root);
        } else {
            std::string names;
            for (const std::string& f : differ) names += (names.empty() ? "" : ", ") + f;
            gate.fail(8, "rerun outputs differ: " + names + " (kept under " + root.string() + ")",
                      t);
        }
    } catch (const std::exception& e) {
        gate.fail(8, std::string("exception: ") + e.what(), t);
    }
}

void criterion_goldens(Gate& gate) {
    Timer t;
    try {
        std::vector<std::string> differ;
        auto compare = [&](const std::string& name, const std::string& produced) {
            if (produced != read_text_file(testpaths::golden(name))) differ.push_back(name);
        };
        compare("width-tuning.csv", width_search_csv(goldens::width_tuning_fixture()));
        compare("lowshot.csv", lowshot_csv(goldens::lowshot_fixture()));
        int tables = 2;
        for (const SweepTable& tbl : goldens::sweep_fixture()) {
            compare(tbl.filename, tbl.csv);
            ++tables;
        }
        if (differ.empty()) {
            gate.pass(9, std::to_string(tables) + " CSV reports byte-match the checked-in goldens",
                      t);
        } else {
            std::string names;
            for (const std::string& f : differ) names += (names.empty() ? "" : ", ") + f;
            gate.fail(9, "CSV output drifted from goldens: " + names, t);
        }
    } catch (const std::exception& e) {
        gate.fail(9, std::string("exception: ") + e.what(), t);
    }
}

void criterion_dataset(Gate& gate, const AnchorSet& anchors) {
    const char* dir = std::getenv("SONARZOO_TURNTABLE_DIR");
    if (!dir || !*dir) {
        gate.skip(10, "SONARZOO_TURNTABLE_DIR is not set; measured-dataset checks skipped");
        return;
    }
    Timer t;
    try {
        std::string notes;
        bool ok = true;
        for (std::int64_t s : {32, 48, 64, 80, 96}) {
            const ImageDataset full = load_dataset(dir, s);
            const auto [train_ds, test_ds] = sequential_split(full, 0.7);
            const AnchorCheck c = check_anchor(anchors.require("pixel-mean-" + std::to_string(s)),
                                               compute_pixel_mean(train_ds));
            if (!notes.empty()) notes += "; ";
            notes += anchor_note(c);
            if (!c.pass) ok = false;
        }

        const ImageDataset full = load_dataset(dir, 32);
        const auto [train_ds, test_ds] = sequential_split(full, 0.7);
        ModelGraph g = build_model({"densenet121", 16, 32, full.num_classes()});
        initialize_weights(g, 0);
        TrainConfig tc;
        tc.epochs = 200;
        tc.batch_size = 32;
        tc.augment = true;
        tc.pixel_mean = compute_pixel_mean(train_ds);
        tc.seed = 0;
        train_classifier(g, train_ds, tc);
        const AnchorCheck c = check_anchor(anchors.require("densenet121-w16-s32-test-accuracy"),
                                           evaluate_accuracy(g, test_ds, tc.batch_size));
        notes += "; " + anchor_note(c);
        if (!c.pass) ok = false;

        if (ok)
            gate.pass(10, "turntable dataset checks: " + notes, t);
        else
            gate.fail(10, notes, t);
    } catch (const std::exception& e) {
        gate.fail(10, std::string("exception: ") + e.what(), t);
    }
}

} // namespace

int main() {
    Gate gate;
    try {
        const AnchorSet anchors = load_anchors(testpaths::anchors_manifest());
        criterion_params(gate, anchors);
        criterion_flops(gate, anchors);
        criterion_auscc(gate, anchors);
        criterion_gradients(gate);
        criterion_shapes(gate);
        criterion_training(gate);
        criterion_svm(gate);
        criterion_pipeline(gate);
        criterion_goldens(gate);
        criterion_dataset(gate, anchors);
    } catch (const std::exception& e) {
        std::printf("FAIL acceptance: unexpected exception: %s\n", e.what());
        return 1;
    }
    std::printf("acceptance: %d pass, %d fail, %d skip\n", gate.passed, gate.failed, gate.skipped);
    return gate.failed == 0 ? 0 : 1;
}

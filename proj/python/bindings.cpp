// Python bindings for the sonarzoo core: model building and cost analysis,
// serialization, training, feature extraction, the linear SVM, and the
// low-shot transfer protocol. Accuracies are fractions here; the CSV layer is
// where percent formatting lives.

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "sonarzoo/cost.hpp"
#include "sonarzoo/dataset.hpp"
#include "sonarzoo/errors.hpp"
#include "sonarzoo/graph.hpp"
#include "sonarzoo/runtime.hpp"
#include "sonarzoo/serialize.hpp"
#include "sonarzoo/svm.hpp"
#include "sonarzoo/trainer.hpp"
#include "sonarzoo/transfer.hpp"
#include "sonarzoo/zoo.hpp"

namespace py = pybind11;
using namespace sonarzoo;

namespace {

using U8Array = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;
using F32Array = py::array_t<float, py::array::c_style | py::array::forcecast>;
using I64Array = py::array_t<std::int64_t, py::array::c_style | py::array::forcecast>;

ImageDataset dataset_from_numpy(const U8Array& images, const std::optional<I64Array>& labels) {
    if (images.ndim() != 3) throw ConfigError("images must be a (N, H, W) uint8 array");
    const std::int64_t n = images.shape(0);
    const std::int64_t h = images.shape(1);
    const std::int64_t w = images.shape(2);
    if (h != w) throw ConfigError("images must be square");

    ImageDataset ds;
    ds.image_size = h;
    std::int64_t classes = 1;
    if (labels) {
        if (labels->ndim() != 1 || labels->shape(0) != n)
            throw ConfigError("labels must be a (N,) int64 array matching the images");
        const auto lab = labels->unchecked<1>();
        for (std::int64_t i = 0; i < n; ++i) {
            if (lab(i) < 0) throw ConfigError("labels must be non-negative");
            classes = std::max(classes, lab(i) + 1);
            ds.labels.push_back(lab(i));
        }
    } else {
        ds.labels.assign(static_cast<std::size_t>(n), 0);
    }
    for (std::int64_t c = 0; c < classes; ++c)
        ds.class_names.push_back("class_" + std::to_string(c));

    const auto img = images.unchecked<3>();
    for (std::int64_t i = 0; i < n; ++i) {
        GrayImage g;
        g.height = h;
        g.width = w;
        g.pixels.resize(static_cast<std::size_t>(h * w));
        for (std::int64_t y = 0; y < h; ++y)
            for (std::int64_t x = 0; x < w; ++x)
                g.pixels[static_cast<std::size_t>(y * w + x)] = img(i, y, x);
        ds.images.push_back(std::move(g));
        ds.object_ids.push_back(ds.labels[static_cast<std::size_t>(i)]);
        ds.seq_index.push_back(i);
    }
    for (std::int64_t c = 0; c < classes; ++c)
        ds.object_names.push_back(ds.class_names[static_cast<std::size_t>(c)] + "/0");
    return ds;
}

py::array dataset_to_numpy(const ImageDataset& ds) {
    const std::int64_t s = ds.image_size;
    py::array_t<std::uint8_t> out({ds.size(), s, s});
    auto view = out.mutable_unchecked<3>();
    for (std::int64_t i = 0; i < ds.size(); ++i)
        for (std::int64_t y = 0; y < s; ++y)
            for (std::int64_t x = 0; x < s; ++x)
                view(i, y, x) = ds.images[static_cast<std::size_t>(i)].at(y, x);
    return out;
}

Tensor tensor_from_numpy(const F32Array& x) {
    std::vector<std::int64_t> dims(x.ndim());
    for (py::ssize_t i = 0; i < x.ndim(); ++i) dims[static_cast<std::size_t>(i)] = x.shape(i);
    if (dims.size() == 3) dims.push_back(1); // (B, H, W) means one channel
    if (dims.size() != 4) throw ConfigError("expected a (B, H, W, C) or (B, H, W) float array");
    Tensor t(dims);
    std::copy(x.data(), x.data() + x.size(), t.data());
    return t;
}

py::array tensor_to_numpy(const Tensor& t) {
    std::vector<py::ssize_t> dims(t.dims().begin(), t.dims().end());
    py::array_t<float> out(dims);
    std::copy(t.data(), t.data() + t.size(), out.mutable_data());
    return out;
}

FeatureMatrix features_from_numpy(const F32Array& x, const I64Array& y) {
    if (x.ndim() != 2) throw ConfigError("features must be a (N, D) float array");
    if (y.ndim() != 1 || y.shape(0) != x.shape(0))
        throw ConfigError("labels must be a (N,) int64 array matching the features");
    FeatureMatrix f;
    f.rows = x.shape(0);
    f.cols = x.shape(1);
    f.data.assign(x.data(), x.data() + x.size());
    f.labels.assign(y.data(), y.data() + y.size());
    return f;
}

py::array features_to_numpy(const FeatureMatrix& f) {
    py::array_t<float> out({f.rows, f.cols});
    std::copy(f.data.begin(), f.data.end(), out.mutable_data());
    return out;
}

TrainConfig train_config_from_kwargs(double learning_rate, std::int64_t epochs,
                                     std::int64_t batch_size, bool augment, double shift_fraction,
                                     double flip_ud, double flip_lr, std::uint64_t seed,
                                     std::optional<double> pixel_mean, bool early_stop,
                                     double stop_accuracy, double stop_loss, bool verbose,
                                     const ImageDataset& ds) {
    TrainConfig tc;
    tc.learning_rate = learning_rate;
    tc.epochs = epochs;
    tc.batch_size = batch_size;
    tc.augment = augment;
    tc.aug.shift_fraction = shift_fraction;
    tc.aug.flip_ud = flip_ud;
    tc.aug.flip_lr = flip_lr;
    tc.seed = seed;
    tc.pixel_mean = pixel_mean ? *pixel_mean : compute_pixel_mean(ds);
    tc.early_stop = early_stop;
    tc.stop_accuracy = stop_accuracy;
    tc.stop_loss = stop_loss;
    tc.verbose = verbose;
    return tc;
}

py::list log_to_list(const TrainLog& log, bool classifier) {
    py::list out;
    for (const auto& e : log.epochs) {
        py::dict d;
        d["loss"] = e.loss;
        if (classifier) d["accuracy"] = e.accuracy;
        out.append(std::move(d));
    }
    return out;
}

py::dict curve_to_dict(const SampleComplexityCurve& curve) {
    py::dict out;
    out["auscc"] = curve.auscc;
    out["runs"] = curve.runs;
    py::list pts;
    for (const auto& pt : curve.points) {
        py::dict d;
        d["spc"] = pt.spc;
        d["mean"] = pt.mean;
        d["std"] = pt.stddev;
        d["runs"] = pt.runs;
        d["shortfall"] = pt.shortfall;
        pts.append(std::move(d));
    }
    out["points"] = std::move(pts);
    return out;
}

} // namespace

PYBIND11_MODULE(_sonarzoo, m) {
    m.doc() = "width-parameterized sonar CNN zoo: cost analysis, training, feature "
              "extraction, and low-shot transfer evaluation";

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
    py::register_exception<GraphError>(m, "GraphError", PyExc_KeyError);
    py::register_exception<IoError>(m, "IoError", PyExc_OSError);
    py::register_exception<TrainAbort>(m, "TrainAbort", PyExc_RuntimeError);

    py::class_<ModelGraph>(m, "Model")
        .def_static(
            "build",
            [](const std::string& family, std::int64_t width, std::int64_t input_size,
               std::int64_t classes, std::optional<std::uint64_t> seed) {
                ModelGraph g = build_model({family, width, input_size, classes});
                if (seed) initialize_weights(g, *seed);
                return g;
            },
            py::arg("family"), py::arg("width"), py::arg("input_size") = 96,
            py::arg("classes") = 12, py::arg("seed") = std::nullopt,
            "Build a family member; pass seed to also draw initial weights.")
        .def_static("load", &load_model, py::arg("path"))
        .def("save", &save_model, py::arg("path"))
        .def(
            "truncate",
            [](const ModelGraph& g, const std::string& layer) { return truncate_at(g, layer); },
            py::arg("layer"),
            "Sub-model ending at the named layer (ancestors only, weights shared).")
        .def("init_weights",
             [](ModelGraph& g, std::uint64_t seed) { initialize_weights(g, seed); },
             py::arg("seed"))
        .def_property_readonly("family", [](const ModelGraph& g) { return g.meta.family; })
        .def_property_readonly("width", [](const ModelGraph& g) { return g.meta.width_param; })
        .def_property_readonly("input_size",
                               [](const ModelGraph& g) { return g.meta.input_size; })
        .def_property_readonly("classes", [](const ModelGraph& g) { return g.meta.num_classes; })
        .def_property(
            "pixel_mean", [](const ModelGraph& g) { return g.meta.pixel_mean; },
            [](ModelGraph& g, double v) { g.meta.pixel_mean = v; })
        .def_property_readonly("layers",
                               [](const ModelGraph& g) {
                                   std::vector<std::string> names;
                                   for (int id = 0; id < g.size(); ++id)
                                       names.push_back(g.node(id).name);
                                   return names;
                               })
        .def_property_readonly("aliases", [](const ModelGraph& g) { return g.aliases(); })
        .def("param_count", &ModelGraph::param_count, py::arg("trainable_only") = false)
        .def("structure_hash", [](const ModelGraph& g) { return structure_hash(g); })
        .def(
            "analyze",
            [](const ModelGraph& g, const std::string& convention) {
                const CostReport r = analyze_cost(g, flop_convention_from_name(convention));
                py::dict out;
                py::list layers;
                for (const auto& lc : r.layers) {
                    py::dict d;
                    d["name"] = lc.name;
                    d["kind"] = lc.kind;
                    d["params"] = lc.params;
                    d["flops"] = lc.flops;
                    d["activation"] = lc.activation;
                    layers.append(std::move(d));
                }
                out["layers"] = std::move(layers);
                out["total_params"] = r.total_params;
                out["total_flops"] = r.total_flops;
                out["activation_bytes"] = r.activation_bytes;
                return out;
            },
            py::arg("convention") = "mac2")
        .def(
            "cost_through",
            [](const ModelGraph& g, const std::string& layer, const std::string& convention) {
                const CostReport r = analyze_cost(g, flop_convention_from_name(convention));
                return py::make_tuple(params_through(g, r, layer), flops_through(g, r, layer));
            },
            py::arg("layer"), py::arg("convention") = "mac2",
            "(params, flops) of the sub-model ending at the layer.")
        .def(
            "forward",
            [](const ModelGraph& g, const F32Array& x) {
                const Tensor t = tensor_from_numpy(x);
                Tensor out;
                {
                    py::gil_scoped_release release;
                    out = forward(g, t);
                }
                return tensor_to_numpy(out);
            },
            py::arg("x"), "Inference pass on an already-normalized (B, H, W, C) batch.")
        .def(
            "extract",
            [](const ModelGraph& g, const U8Array& images, const std::string& layer,
               std::int64_t batch) {
                const ImageDataset ds = dataset_from_numpy(images, std::nullopt);
                FeatureMatrix f;
                {
                    py::gil_scoped_release release;
                    f = extract_features(g, layer, ds, batch);
                }
                return features_to_numpy(f);
            },
            py::arg("images"), py::arg("layer"), py::arg("batch") = 32,
            "Named-layer activations for raw uint8 images; the model's own pixel mean "
            "is subtracted internally.")
        .def(
            "train",
            [](ModelGraph& g, const U8Array& images, const std::optional<I64Array>& labels,
               double learning_rate, std::int64_t epochs, std::int64_t batch_size, bool augment,
               double shift_fraction, double flip_ud, double flip_lr, std::uint64_t seed,
               std::optional<double> pixel_mean, bool early_stop, double stop_accuracy,
               double stop_loss, bool verbose) {
                const ImageDataset ds = dataset_from_numpy(images, labels);
                const TrainConfig tc = train_config_from_kwargs(
                    learning_rate, epochs, batch_size, augment, shift_fraction, flip_ud, flip_lr,
                    seed, pixel_mean, early_stop, stop_accuracy, stop_loss, verbose, ds);
                const bool classifier = g.meta.family != "autoencoder";
                TrainLog log;
                {
                    py::gil_scoped_release release;
                    log = classifier ? train_classifier(g, ds, tc) : train_autoencoder(g, ds, tc);
                }
                return log_to_list(log, classifier);
            },
            py::arg("images"), py::arg("labels") = std::nullopt,
            py::arg("learning_rate") = 0.001, py::arg("epochs") = 200, py::arg("batch_size") = 32,
            py::arg("augment") = true, py::arg("shift_fraction") = 0.1, py::arg("flip_ud") = 0.5,
            py::arg("flip_lr") = 0.5, py::arg("seed") = 0, py::arg("pixel_mean") = std::nullopt,
            py::arg("early_stop") = false, py::arg("stop_accuracy") = 1.0,
            py::arg("stop_loss") = 0.0, py::arg("verbose") = false,
            "Train in place; returns per-epoch stats. Labels are ignored by the "
            "autoencoder. pixel_mean defaults to the mean of the given images.")
        .def(
            "evaluate",
            [](const ModelGraph& g, const U8Array& images, const I64Array& labels,
               std::int64_t batch) {
                const ImageDataset ds = dataset_from_numpy(images, labels);
                py::gil_scoped_release release;
                return evaluate_accuracy(g, ds, batch);
            },
            py::arg("images"), py::arg("labels"), py::arg("batch") = 32)
        .def(
            "evaluate_mse",
            [](const ModelGraph& g, const U8Array& images, std::int64_t batch) {
                const ImageDataset ds = dataset_from_numpy(images, std::nullopt);
                py::gil_scoped_release release;
                return evaluate_mse(g, ds, batch);
            },
            py::arg("images"), py::arg("batch") = 32)
        .def("__repr__", [](const ModelGraph& g) {
            return "<sonarzoo.Model " + g.meta.family + " w=" +
                   std::to_string(g.meta.width_param) + " input=" +
                   std::to_string(g.meta.input_size) + " nodes=" + std::to_string(g.size()) + ">";
        });

    py::class_<SvmModel>(m, "Svm")
        .def_property_readonly("classes", [](const SvmModel& s) { return s.classes; })
        .def_property_readonly("feature_dim", [](const SvmModel& s) { return s.feature_dim; })
        .def(
            "predict",
            [](const SvmModel& s, const F32Array& x) {
                I64Array dummy(std::vector<py::ssize_t>{x.shape(0)});
                std::fill(dummy.mutable_data(), dummy.mutable_data() + x.shape(0), 0LL);
                const FeatureMatrix f = features_from_numpy(x, dummy);
                const auto pred = svm_predict(s, f);
                I64Array out(std::vector<py::ssize_t>{static_cast<py::ssize_t>(pred.size())});
                std::copy(pred.begin(), pred.end(), out.mutable_data());
                return out;
            },
            py::arg("x"))
        .def(
            "accuracy",
            [](const SvmModel& s, const F32Array& x, const I64Array& y) {
                return svm_accuracy(s, features_from_numpy(x, y));
            },
            py::arg("x"), py::arg("y"));

    m.def(
        "fit_svm",
        [](const F32Array& x, const I64Array& y, double C, double tolerance,
           std::int64_t max_epochs, bool squared_hinge, bool standardize) {
            const FeatureMatrix f = features_from_numpy(x, y);
            SvmConfig cfg;
            cfg.C = C;
            cfg.tolerance = tolerance;
            cfg.max_epochs = max_epochs;
            cfg.squared_hinge = squared_hinge;
            cfg.standardize = standardize;
            py::gil_scoped_release release;
            return train_linear_svm(f, cfg);
        },
        py::arg("x"), py::arg("y"), py::arg("C") = 1.0, py::arg("tolerance") = 1e-4,
        py::arg("max_epochs") = 1000, py::arg("squared_hinge") = false,
        py::arg("standardize") = false,
        "One-vs-rest linear SVM via deterministic dual coordinate descent.");

    m.def("families", &model_families);
    m.def("default_width", &default_width, py::arg("family"));
    m.def(
        "synth",
        [](std::int64_t classes, std::int64_t per_class, std::int64_t size, std::uint64_t seed) {
            const ImageDataset ds = synth_generate(classes, per_class, size, seed);
            I64Array labels(std::vector<py::ssize_t>{static_cast<py::ssize_t>(ds.size())});
            std::copy(ds.labels.begin(), ds.labels.end(), labels.mutable_data());
            return py::make_tuple(dataset_to_numpy(ds), labels);
        },
        py::arg("classes") = 4, py::arg("per_class") = 10, py::arg("size") = 32,
        py::arg("seed") = 1234,
        "Deterministic synthetic sonar-like dataset: (images uint8 (N,s,s), labels int64).");
    m.def(
        "load_dataset",
        [](const std::string& root, std::int64_t size) {
            const ImageDataset ds = load_dataset(root, size);
            I64Array labels(std::vector<py::ssize_t>{static_cast<py::ssize_t>(ds.size())});
            std::copy(ds.labels.begin(), ds.labels.end(), labels.mutable_data());
            return py::make_tuple(dataset_to_numpy(ds), labels, ds.class_names);
        },
        py::arg("root"), py::arg("size"),
        "PNG tree root/<class>/<object>/<seq>.png -> (images, labels, class_names).");
    m.def(
        "pixel_mean",
        [](const U8Array& images) {
            return compute_pixel_mean(dataset_from_numpy(images, std::nullopt));
        },
        py::arg("images"));
    m.def(
        "compute_auscc",
        [](const std::vector<std::pair<double, double>>& points) {
            return compute_auscc(points);
        },
        py::arg("points"), "Trapezoid area under (x, y) points, normalized by the x range.");
    m.def(
        "lowshot",
        [](const F32Array& train_x, const I64Array& train_y, const F32Array& test_x,
           const I64Array& test_y, const std::vector<std::int64_t>& spc, std::int64_t runs,
           std::uint64_t seed, double C, double tolerance, std::int64_t max_epochs,
           bool squared_hinge, bool standardize) {
            const FeatureMatrix train = features_from_numpy(train_x, train_y);
            const FeatureMatrix test = features_from_numpy(test_x, test_y);
            SvmConfig svm;
            svm.C = C;
            svm.tolerance = tolerance;
            svm.max_epochs = max_epochs;
            svm.squared_hinge = squared_hinge;
            svm.standardize = standardize;
            SampleComplexityCurve curve;
            {
                py::gil_scoped_release release;
                curve = run_lowshot(train, test, spc, runs, seed, svm);
            }
            return curve_to_dict(curve);
        },
        py::arg("train_x"), py::arg("train_y"), py::arg("test_x"), py::arg("test_y"),
        py::arg("spc") = std::vector<std::int64_t>{1, 5, 10, 20, 30, 40, 50},
        py::arg("runs") = 10, py::arg("seed") = 0, py::arg("C") = 1.0,
        py::arg("tolerance") = 1e-4, py::arg("max_epochs") = 1000,
        py::arg("squared_hinge") = false, py::arg("standardize") = false,
        "Low-shot protocol over precomputed features; accuracies are fractions.");
    m.def(
        "save_features",
        [](const std::string& path, const F32Array& x, const I64Array& y,
           const std::string& layer, const std::string& model_id) {
            FeatureMatrix f = features_from_numpy(x, y);
            f.layer = layer;
            f.model_id = model_id;
            save_features(f, path);
        },
        py::arg("path"), py::arg("x"), py::arg("y"), py::arg("layer") = "",
        py::arg("model_id") = "");
    m.def(
        "load_features",
        [](const std::string& path) {
            const FeatureMatrix f = load_features(path);
            I64Array labels(std::vector<py::ssize_t>{static_cast<py::ssize_t>(f.labels.size())});
            std::copy(f.labels.begin(), f.labels.end(), labels.mutable_data());
            return py::make_tuple(features_to_numpy(f), labels, f.layer, f.model_id);
        },
        py::arg("path"), "-> (features, labels, layer, model_id)");

    m.attr("__version__") = "0.1.0";
}

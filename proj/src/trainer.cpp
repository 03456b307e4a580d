#include "sonarzoo/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "sonarzoo/csv.hpp"
#include "sonarzoo/errors.hpp"
#include "sonarzoo/kernels.hpp"
#include "sonarzoo/runtime.hpp"
#include "sonarzoo/zoo.hpp"

namespace sonarzoo {

namespace {

void check_train_inputs(const ModelGraph& g, const ImageDataset& ds, const TrainConfig& cfg) {
    if (ds.size() == 0) throw ConfigError("training set is empty");
    if (ds.image_size != g.meta.input_size)
        throw ConfigError("dataset is " + std::to_string(ds.image_size) + "px but the model wants " +
                          std::to_string(g.meta.input_size) + "px");
    if (cfg.batch_size < 1) throw ConfigError("batch size must be at least 1");
    if (cfg.epochs < 0) throw ConfigError("epoch count cannot be negative");
    if (cfg.learning_rate <= 0.0) throw ConfigError("learning rate must be positive");
}

std::vector<std::int64_t> batch_targets(const ImageDataset& ds,
                                        const std::vector<std::int64_t>& indices) {
    std::vector<std::int64_t> t;
    t.reserve(indices.size());
    for (std::int64_t i : indices) t.push_back(ds.labels[static_cast<std::size_t>(i)]);
    return t;
}

std::int64_t argmax_row(const float* row, std::int64_t n) {
    std::int64_t best = 0;
    for (std::int64_t c = 1; c < n; ++c)
        if (row[c] > row[best]) best = c; // ties keep the lowest index
    return best;
}

struct ParamSet {
    std::vector<std::pair<int, int>> ids;
    std::vector<Tensor*> values;
};

ParamSet collect_params(ModelGraph& g) {
    ParamSet ps;
    ps.ids = g.trainable_params();
    ps.values.reserve(ps.ids.size());
    for (const auto& [id, j] : ps.ids)
        ps.values.push_back(&g.node(id).params[static_cast<std::size_t>(j)].value);
    return ps;
}

void print_epoch(std::int64_t e, std::int64_t total, const EpochStats& s, bool classifier) {
    if (classifier)
        std::printf("epoch %lld/%lld  loss %.6f  acc %.4f  (%.1fs)\n",
                    static_cast<long long>(e + 1), static_cast<long long>(total), s.loss,
                    s.accuracy, s.seconds);
    else
        std::printf("epoch %lld/%lld  mse %.6f  (%.1fs)\n", static_cast<long long>(e + 1),
                    static_cast<long long>(total), s.loss, s.seconds);
    std::fflush(stdout);
}

TrainLog train_impl(ModelGraph& g, const ImageDataset& ds, const TrainConfig& cfg,
                    bool classifier) {
    check_train_inputs(g, ds, cfg);
    if (classifier) {
        if (g.meta.num_classes < 2) throw ConfigError("model has no classification head");
        for (std::int64_t l : ds.labels)
            if (l < 0 || l >= g.meta.num_classes)
                throw ConfigError("label " + std::to_string(l) + " outside the model's " +
                                  std::to_string(g.meta.num_classes) + " classes");
    }
    g.meta.pixel_mean = cfg.pixel_mean;

    ParamSet ps = collect_params(g);
    std::vector<const Tensor*> grad_ptrs(ps.values.size());
    AdamState<float> adam({cfg.learning_rate, 0.9, 0.999, 1e-7});
    SeededRng rng(cfg.seed);

    const std::int64_t n = ds.size();
    std::vector<std::int64_t> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);

    TrainLog log;
    for (std::int64_t e = 0; e < cfg.epochs; ++e) {
        const auto t0 = std::chrono::steady_clock::now();
        rng.shuffle(order);

        double loss_sum = 0.0;
        std::int64_t loss_den = 0;
        std::int64_t correct = 0;
        for (std::int64_t start = 0; start < n; start += cfg.batch_size) {
            const std::int64_t stop = std::min(n, start + cfg.batch_size);
            const std::vector<std::int64_t> batch(order.begin() + start, order.begin() + stop);
            const std::int64_t B = stop - start;

            Tensor x = batch_tensor(ds, batch);
            if (cfg.augment) x = augment(x, cfg.aug, rng);
            normalize_inplace(x, cfg.pixel_mean);

            ForwardTape tape;
            Tensor pred = forward_train(g, x, tape);

            LossResult<float> loss;
            if (classifier) {
                loss = cross_entropy_loss(pred, batch_targets(ds, batch));
                const std::int64_t classes = pred.dim(1);
                for (std::int64_t b = 0; b < B; ++b)
                    if (argmax_row(pred.data() + b * classes, classes) ==
                        ds.labels[static_cast<std::size_t>(batch[static_cast<std::size_t>(b)])])
                        ++correct;
                loss_sum += loss.value * static_cast<double>(B);
                loss_den += B;
            } else {
                loss = mse_loss(pred, x);
                loss_sum += loss.value * static_cast<double>(pred.size());
                loss_den += pred.size();
            }
            if (!std::isfinite(loss.value))
                throw TrainAbort("loss diverged at epoch " + std::to_string(e + 1) + ", batch " +
                                 std::to_string(start / cfg.batch_size + 1));

            const std::vector<Tensor> grads = backward(g, tape, loss.grad, ps.ids);
            for (std::size_t i = 0; i < grads.size(); ++i) grad_ptrs[i] = &grads[i];
            adam.update(ps.values, grad_ptrs);
        }

        EpochStats s;
        s.loss = loss_sum / static_cast<double>(loss_den);
        s.accuracy = classifier ? static_cast<double>(correct) / static_cast<double>(n) : 0.0;
        s.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (cfg.verbose) print_epoch(e, cfg.epochs, s, classifier);
        log.epochs.push_back(s);

        if (cfg.early_stop &&
            (classifier ? s.accuracy >= cfg.stop_accuracy : s.loss <= cfg.stop_loss))
            break;
    }
    return log;
}

double evaluate_impl(const ModelGraph& g, const ImageDataset& ds, std::int64_t batch,
                     bool classifier) {
    if (ds.size() == 0) throw ConfigError("evaluation set is empty");
    if (batch < 1) throw ConfigError("batch size must be at least 1");
    const std::int64_t n = ds.size();
    std::int64_t correct = 0;
    double se_sum = 0.0;
    std::int64_t se_den = 0;
    for (std::int64_t start = 0; start < n; start += batch) {
        const std::int64_t stop = std::min(n, start + batch);
        std::vector<std::int64_t> idx(static_cast<std::size_t>(stop - start));
        std::iota(idx.begin(), idx.end(), start);
        Tensor x = batch_tensor(ds, idx);
        normalize_inplace(x, g.meta.pixel_mean);
        const Tensor pred = forward(g, x);
        if (classifier) {
            const std::int64_t classes = pred.dim(1);
            for (std::int64_t b = 0; b < stop - start; ++b)
                if (argmax_row(pred.data() + b * classes, classes) ==
                    ds.labels[static_cast<std::size_t>(start + b)])
                    ++correct;
        } else {
            for (std::int64_t i = 0; i < pred.size(); ++i) {
                const double d = static_cast<double>(pred.data()[i]) - x.data()[i];
                se_sum += d * d;
            }
            se_den += pred.size();
        }
    }
    return classifier ? static_cast<double>(correct) / static_cast<double>(n)
                      : se_sum / static_cast<double>(se_den);
}

} // namespace

TrainLog train_classifier(ModelGraph& g, const ImageDataset& train, const TrainConfig& cfg) {
    return train_impl(g, train, cfg, true);
}

TrainLog train_autoencoder(ModelGraph& g, const ImageDataset& train, const TrainConfig& cfg) {
    return train_impl(g, train, cfg, false);
}

double evaluate_accuracy(const ModelGraph& g, const ImageDataset& ds, std::int64_t batch) {
    return evaluate_impl(g, ds, batch, true);
}

double evaluate_mse(const ModelGraph& g, const ImageDataset& ds, std::int64_t batch) {
    return evaluate_impl(g, ds, batch, false);
}

WidthSearchResult width_search(const std::string& family,
                               const std::vector<std::int64_t>& widths, const ImageDataset& ds,
                               std::int64_t k, const TrainConfig& cfg) {
    if (family == "autoencoder")
        throw ConfigError("width search scores classification accuracy; pick a classifier family");
    if (!is_model_family(family)) throw ConfigError("unknown model family: " + family);
    if (widths.empty()) throw ConfigError("width grid is empty");
    const auto [lo, hi] = width_range(family);
    for (std::int64_t w : widths)
        if (w < lo || w > hi)
            throw ConfigError("width " + std::to_string(w) + " outside [" + std::to_string(lo) +
                              ", " + std::to_string(hi) + "] for " + family);

    const auto folds = kfold_indices(ds.size(), k, cfg.seed);

    WidthSearchResult result;
    for (std::int64_t w : widths) {
        WidthSearchRow row;
        row.width = w;
        for (std::int64_t f = 0; f < k; ++f) {
            const std::uint64_t cell_seed =
                SeededRng::derive(cfg.seed, static_cast<std::uint64_t>(w),
                                  static_cast<std::uint64_t>(f));
            try {
                const ImageDataset fold_train = subset(ds, folds[static_cast<std::size_t>(f)].first);
                const ImageDataset fold_val = subset(ds, folds[static_cast<std::size_t>(f)].second);
                ModelGraph g = build_model({family, w, ds.image_size, ds.num_classes()});
                initialize_weights(g, cell_seed);
                TrainConfig cell = cfg;
                cell.seed = cell_seed;
                cell.pixel_mean = compute_pixel_mean(fold_train);
                train_classifier(g, fold_train, cell);
                row.fold_accuracy.push_back(evaluate_accuracy(g, fold_val, cfg.batch_size));
            } catch (const std::exception& e) {
                row.errors.push_back("width " + std::to_string(w) + " fold " + std::to_string(f) +
                                     ": " + e.what());
            }
        }
        if (!row.fold_accuracy.empty()) {
            const auto& a = row.fold_accuracy;
            const double nn = static_cast<double>(a.size());
            row.mean = std::accumulate(a.begin(), a.end(), 0.0) / nn;
            double var = 0.0;
            for (double v : a) var += (v - row.mean) * (v - row.mean);
            row.stddev = std::sqrt(var / nn);
            row.max = *std::max_element(a.begin(), a.end());
            row.min = *std::min_element(a.begin(), a.end());
        }
        result.rows.push_back(std::move(row));
    }

    double best = -1.0;
    for (const auto& row : result.rows) {
        if (row.fold_accuracy.empty()) continue;
        if (row.mean > best || (row.mean == best && row.width < result.selected_width)) {
            best = row.mean;
            result.selected_width = row.width;
        }
    }
    if (result.selected_width == 0) throw TrainAbort("every width failed in cross-validation");
    return result;
}

std::string width_search_csv(const WidthSearchResult& r) {
    std::string csv = "width_param;acc_mean;acc_std;acc_max;acc_min\n";
    for (const auto& row : r.rows) {
        csv += format_int(row.width) + ";" + format_fixed(row.mean * 100.0, 4) + ";" +
               format_fixed(row.stddev * 100.0, 4) + ";" + format_fixed(row.max * 100.0, 4) +
               ";" + format_fixed(row.min * 100.0, 4) + "\n";
    }
    return csv;
}

} // namespace sonarzoo

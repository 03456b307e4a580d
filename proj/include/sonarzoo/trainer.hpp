#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sonarzoo/dataset.hpp"
#include "sonarzoo/graph.hpp"

// From-scratch training: Adam, online augmentation, per-epoch shuffling, all
// driven by one seed so a rerun is bit-identical.
namespace sonarzoo {

struct TrainConfig {
    double learning_rate = 0.001;
    std::int64_t epochs = 200;
    std::int64_t batch_size = 32;
    bool augment = true;
    AugmentConfig aug;
    double pixel_mean = 0.0;
    std::uint64_t seed = 0;
    // Early stop is off by default; when on, training ends after the first
    // epoch whose running accuracy reaches the target (loss target for MSE).
    bool early_stop = false;
    double stop_accuracy = 1.0;
    double stop_loss = 0.0;
    bool verbose = false; // epoch lines to stdout (timing never reaches files)
};

struct EpochStats {
    double loss = 0.0;
    double accuracy = 0.0;     // running over training batches; 0 for MSE runs
    double val_accuracy = -1.0; // -1 when no validation set
    double seconds = 0.0;
};

struct TrainLog {
    std::vector<EpochStats> epochs;
};

// Weights update in place. NaN loss aborts with epoch/batch in the message.
TrainLog train_classifier(ModelGraph& g, const ImageDataset& train, const TrainConfig& cfg);
TrainLog train_autoencoder(ModelGraph& g, const ImageDataset& train, const TrainConfig& cfg);

// Top-1 accuracy; argmax ties go to the lowest class index.
double evaluate_accuracy(const ModelGraph& g, const ImageDataset& ds, std::int64_t batch = 32);
// Mean squared reconstruction error over the dataset.
double evaluate_mse(const ModelGraph& g, const ImageDataset& ds, std::int64_t batch = 32);

struct WidthSearchRow {
    std::int64_t width = 0;
    double mean = 0.0, stddev = 0.0, max = 0.0, min = 0.0; // fractions
    std::vector<double> fold_accuracy;
    std::vector<std::string> errors; // per-fold failures, search continues
};

struct WidthSearchResult {
    std::vector<WidthSearchRow> rows; // width order as given
    std::int64_t selected_width = 0;  // argmax mean, ties to the smaller width
};

// k-fold cross-validated accuracy per width. Each (width, fold) cell derives
// its seed from the base seed so any execution order gives the same result.
WidthSearchResult width_search(const std::string& family,
                               const std::vector<std::int64_t>& widths, const ImageDataset& ds,
                               std::int64_t k, const TrainConfig& cfg);

// CSV with header width_param;acc_mean;acc_std;acc_max;acc_min, percent
// values with 4 decimals.
std::string width_search_csv(const WidthSearchResult& r);

} // namespace sonarzoo

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sonarzoo/tensor.hpp"

// One-vs-rest linear SVM trained by deterministic dual coordinate descent
// (cyclic sweep order, no shrinking), hinge loss by default. The bias is an
// augmented always-one feature, so it is regularized like the weights.
namespace sonarzoo {

struct FeatureMatrix {
    std::int64_t rows = 0;
    std::int64_t cols = 0;
    std::vector<float> data; // row-major
    std::vector<std::int64_t> labels;
    std::string model_id; // provenance, free-form
    std::string layer;

    const float* row(std::int64_t i) const { return data.data() + i * cols; }
    float* row(std::int64_t i) { return data.data() + i * cols; }
};

struct SvmConfig {
    double C = 1.0;
    double tolerance = 1e-4;     // on the max projected gradient per sweep
    std::int64_t max_epochs = 1000; // full sweeps over the dual variables
    bool squared_hinge = false;
    bool standardize = false; // per-column mean/std scaling before training
};

struct SvmModel {
    std::int64_t feature_dim = 0;
    std::int64_t classes = 0;
    std::vector<std::vector<double>> weights; // per class
    std::vector<double> bias;                 // per class
    // standardization applied at train time, replayed at predict time
    bool standardized = false;
    std::vector<double> feat_mean, feat_scale;
};

SvmModel train_linear_svm(const FeatureMatrix& features, const SvmConfig& cfg = {});

// argmax over w_k . x + b_k; ties go to the lowest class index.
std::vector<std::int64_t> svm_predict(const SvmModel& model, const FeatureMatrix& features);

double svm_accuracy(const SvmModel& model, const FeatureMatrix& features);

} // namespace sonarzoo

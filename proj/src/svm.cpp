#include "sonarzoo/svm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "sonarzoo/errors.hpp"

namespace sonarzoo {

namespace {

void check_features(const FeatureMatrix& f) {
    if (f.rows < 1 || f.cols < 1) throw ConfigError("empty feature matrix");
    if (static_cast<std::int64_t>(f.data.size()) != f.rows * f.cols)
        throw ShapeError("feature matrix buffer does not match rows x cols");
}

// Dual coordinate descent on one binary problem (labels +/-1), cyclic order,
// no shrinking. x is row-major with the constant-one bias feature appended,
// qii its per-row squared norms (plus the quadratic-loss diagonal).
std::vector<double> solve_binary(const std::vector<double>& x, std::int64_t n, std::int64_t d,
                                 const std::vector<double>& qii, const std::vector<double>& y,
                                 const SvmConfig& cfg) {
    const double U = cfg.squared_hinge ? std::numeric_limits<double>::infinity() : cfg.C;
    const double D = cfg.squared_hinge ? 1.0 / (2.0 * cfg.C) : 0.0;

    std::vector<double> alpha(static_cast<std::size_t>(n), 0.0);
    std::vector<double> w(static_cast<std::size_t>(d), 0.0);

    for (std::int64_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        double max_pg = 0.0;
        for (std::int64_t i = 0; i < n; ++i) {
            const double* xi = x.data() + i * d;
            double dot = 0.0;
            for (std::int64_t j = 0; j < d; ++j) dot += w[static_cast<std::size_t>(j)] * xi[j];
            const double a = alpha[static_cast<std::size_t>(i)];
            const double G = y[static_cast<std::size_t>(i)] * dot - 1.0 + D * a;

            double pg;
            if (a <= 0.0)
                pg = std::min(G, 0.0);
            else if (a >= U)
                pg = std::max(G, 0.0);
            else
                pg = G;
            max_pg = std::max(max_pg, std::abs(pg));

            if (std::abs(pg) > 1e-12) {
                const double a_new =
                    std::clamp(a - G / qii[static_cast<std::size_t>(i)], 0.0, U);
                const double step = (a_new - a) * y[static_cast<std::size_t>(i)];
                for (std::int64_t j = 0; j < d; ++j)
                    w[static_cast<std::size_t>(j)] += step * xi[j];
                alpha[static_cast<std::size_t>(i)] = a_new;
            }
        }
        if (max_pg < cfg.tolerance) break;
    }
    return w;
}

} // namespace

SvmModel train_linear_svm(const FeatureMatrix& features, const SvmConfig& cfg) {
    check_features(features);
    if (static_cast<std::int64_t>(features.labels.size()) != features.rows)
        throw ShapeError("feature matrix has " + std::to_string(features.rows) + " rows but " +
                         std::to_string(features.labels.size()) + " labels");
    if (cfg.C <= 0.0) throw ConfigError("C must be positive");
    if (cfg.max_epochs < 1) throw ConfigError("need at least one sweep over the dual variables");
    if (cfg.tolerance < 0.0) throw ConfigError("tolerance must be non-negative");

    std::int64_t classes = 0;
    for (std::int64_t l : features.labels) {
        if (l < 0) throw ConfigError("negative class label");
        classes = std::max(classes, l + 1);
    }
    if (classes < 2) throw ConfigError("need at least two classes");

    const std::int64_t n = features.rows;
    const std::int64_t cols = features.cols;
    const std::int64_t d = cols + 1; // + constant-one bias feature

    SvmModel model;
    model.feature_dim = cols;
    model.classes = classes;
    model.standardized = cfg.standardize;

    if (cfg.standardize) {
        model.feat_mean.assign(static_cast<std::size_t>(cols), 0.0);
        model.feat_scale.assign(static_cast<std::size_t>(cols), 1.0);
        for (std::int64_t i = 0; i < n; ++i) {
            const float* r = features.row(i);
            for (std::int64_t j = 0; j < cols; ++j)
                model.feat_mean[static_cast<std::size_t>(j)] += r[j];
        }
        for (auto& m : model.feat_mean) m /= static_cast<double>(n);
        std::vector<double> var(static_cast<std::size_t>(cols), 0.0);
        for (std::int64_t i = 0; i < n; ++i) {
            const float* r = features.row(i);
            for (std::int64_t j = 0; j < cols; ++j) {
                const double dv = r[j] - model.feat_mean[static_cast<std::size_t>(j)];
                var[static_cast<std::size_t>(j)] += dv * dv;
            }
        }
        for (std::int64_t j = 0; j < cols; ++j) {
            const double sd = std::sqrt(var[static_cast<std::size_t>(j)] / static_cast<double>(n));
            // feat_scale is the multiplier: x' = (x - mean) * scale
            model.feat_scale[static_cast<std::size_t>(j)] = sd > 0.0 ? 1.0 / sd : 1.0;
        }
    }

    std::vector<double> x(static_cast<std::size_t>(n * d));
    for (std::int64_t i = 0; i < n; ++i) {
        const float* r = features.row(i);
        double* xi = x.data() + i * d;
        for (std::int64_t j = 0; j < cols; ++j) {
            double v = r[j];
            if (cfg.standardize)
                v = (v - model.feat_mean[static_cast<std::size_t>(j)]) *
                    model.feat_scale[static_cast<std::size_t>(j)];
            xi[j] = v;
        }
        xi[cols] = 1.0;
    }

    const double diag = cfg.squared_hinge ? 1.0 / (2.0 * cfg.C) : 0.0;
    std::vector<double> qii(static_cast<std::size_t>(n), diag);
    for (std::int64_t i = 0; i < n; ++i) {
        const double* xi = x.data() + i * d;
        for (std::int64_t j = 0; j < d; ++j) qii[static_cast<std::size_t>(i)] += xi[j] * xi[j];
    }

    std::vector<double> y(static_cast<std::size_t>(n));
    for (std::int64_t k = 0; k < classes; ++k) {
        for (std::int64_t i = 0; i < n; ++i)
            y[static_cast<std::size_t>(i)] =
                features.labels[static_cast<std::size_t>(i)] == k ? 1.0 : -1.0;
        std::vector<double> w = solve_binary(x, n, d, qii, y, cfg);
        model.bias.push_back(w.back());
        w.pop_back();
        model.weights.push_back(std::move(w));
    }
    return model;
}

std::vector<std::int64_t> svm_predict(const SvmModel& model, const FeatureMatrix& features) {
    check_features(features);
    if (features.cols != model.feature_dim)
        throw ShapeError("feature dim " + std::to_string(features.cols) +
                         " does not match the model's " + std::to_string(model.feature_dim));

    std::vector<std::int64_t> pred(static_cast<std::size_t>(features.rows));
    std::vector<double> xi(static_cast<std::size_t>(features.cols));
    for (std::int64_t i = 0; i < features.rows; ++i) {
        const float* r = features.row(i);
        for (std::int64_t j = 0; j < features.cols; ++j) {
            double v = r[j];
            if (model.standardized)
                v = (v - model.feat_mean[static_cast<std::size_t>(j)]) *
                    model.feat_scale[static_cast<std::size_t>(j)];
            xi[static_cast<std::size_t>(j)] = v;
        }
        std::int64_t best = 0;
        double best_score = -std::numeric_limits<double>::infinity();
        for (std::int64_t k = 0; k < model.classes; ++k) {
            double score = model.bias[static_cast<std::size_t>(k)];
            const auto& w = model.weights[static_cast<std::size_t>(k)];
            for (std::int64_t j = 0; j < features.cols; ++j)
                score += w[static_cast<std::size_t>(j)] * xi[static_cast<std::size_t>(j)];
            if (score > best_score) { // ties keep the lowest class index
                best_score = score;
                best = k;
            }
        }
        pred[static_cast<std::size_t>(i)] = best;
    }
    return pred;
}

double svm_accuracy(const SvmModel& model, const FeatureMatrix& features) {
    if (static_cast<std::int64_t>(features.labels.size()) != features.rows)
        throw ShapeError("feature matrix is missing labels");
    const auto pred = svm_predict(model, features);
    std::int64_t correct = 0;
    for (std::int64_t i = 0; i < features.rows; ++i)
        if (pred[static_cast<std::size_t>(i)] == features.labels[static_cast<std::size_t>(i)])
            ++correct;
    return static_cast<double>(correct) / static_cast<double>(features.rows);
}

} // namespace sonarzoo

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sonarzoo/dataset.hpp"
#include "sonarzoo/graph.hpp"
#include "sonarzoo/svm.hpp"

// Low-shot transfer protocol: extract a named layer once, subsample the
// training rows per class, fit the linear SVM, score on the full test rows,
// repeat over runs, and summarize the curve by its normalized area.
namespace sonarzoo {

// Raw pixels in, the model's own mean subtraction applied inside. The layer
// may be a canonical name or alias; "input" yields the normalized-pixel
// baseline.
FeatureMatrix extract_features(const ModelGraph& g, const std::string& layer,
                               const ImageDataset& ds, std::int64_t batch = 32);

struct CurvePoint {
    std::int64_t spc = 0;
    double mean = 0.0;   // fraction
    double stddev = 0.0; // population std over runs
    std::vector<double> runs;
    std::int64_t shortfall = 0; // classes smaller than spc, summed over runs
};

struct SampleComplexityCurve {
    std::vector<CurvePoint> points; // spc ascending
    std::int64_t runs = 0;
    double auscc = 0.0;
};

// Trapezoid over (x, y) pairs normalized by the x range. Unit-preserving:
// percent in, percent out.
double compute_auscc(const std::vector<std::pair<double, double>>& points);

// Per (spc, run) cell the subsampling seed is derived from the base seed, so
// cells are order-independent.
SampleComplexityCurve run_lowshot(const FeatureMatrix& train, const FeatureMatrix& test,
                                  const std::vector<std::int64_t>& spc_list, std::int64_t runs,
                                  std::uint64_t seed, const SvmConfig& svm = {});

// CSV with header spc;accuracy;std, percent values with 4 decimals.
std::string lowshot_csv(const SampleComplexityCurve& curve);
// JSON report with per-run raw accuracies and the AUSCC.
std::string lowshot_json(const SampleComplexityCurve& curve, const std::string& model_id,
                         const std::string& layer);

// Feature container: magic "SZFEATS1", little-endian u64 header length, JSON
// header (rows, cols, layer, model id, labels), float32 row-major blob,
// CRC-32 of everything before the checksum.
void save_features(const FeatureMatrix& f, const std::string& path);
FeatureMatrix load_features(const std::string& path);

} // namespace sonarzoo

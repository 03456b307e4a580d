#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sonarzoo/graph.hpp"

// Builders for the six architecture families, parameterized by the width
// hyper-parameter w (code size c for the autoencoder), the square input size
// and the class count. Families: resnet20, mobilenet, densenet121,
// squeezenet, minixception, autoencoder.
namespace sonarzoo {

struct ArchSpec {
    std::string family;
    std::int64_t width = 0;      // w, or code size c for the autoencoder
    std::int64_t input_size = 96;
    std::int64_t classes = 12;   // ignored by the autoencoder
};

ModelGraph build_model(const ArchSpec& spec);

std::vector<std::string> model_families();
bool is_model_family(const std::string& family);

// Published width choice per family (w, or c for the autoencoder).
std::int64_t default_width(const std::string& family);

// Documented width range, inclusive. Classifiers: 8..64; autoencoder: 4..128.
std::pair<std::int64_t, std::int64_t> width_range(const std::string& family);

} // namespace sonarzoo

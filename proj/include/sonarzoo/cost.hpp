#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sonarzoo/graph.hpp"

// Static cost model. Parameter counts come from the materialized tensors and
// are exact. FLOPs follow the mac2 convention by default: one multiply-
// accumulate counts as 2 FLOPs, bias adds included, while batch norm,
// activations, pooling and other elementwise work count zero. The mac2-elem
// convention adds those elementwise costs for diagnostics.
namespace sonarzoo {

enum class FlopConvention { Mac2, Mac2Elem };

const char* flop_convention_name(FlopConvention c);
FlopConvention flop_convention_from_name(const std::string& name);

struct LayerCost {
    std::string name;
    std::string kind;
    std::int64_t params = 0;
    std::int64_t flops = 0;
    std::int64_t activation = 0; // output elements at batch 1
};

struct CostReport {
    std::vector<LayerCost> layers; // graph order
    std::int64_t total_params = 0;
    std::int64_t total_flops = 0;
    std::int64_t activation_bytes = 0; // 4 bytes per activation element, batch 1
};

CostReport analyze_cost(const ModelGraph& g, FlopConvention conv = FlopConvention::Mac2);

// Totals for the model truncated at the named node: the node itself plus its
// ancestors, matching what truncate_at would keep.
std::int64_t params_through(const ModelGraph& g, const CostReport& r,
                            const std::string& name_or_alias);
std::int64_t flops_through(const ModelGraph& g, const CostReport& r,
                           const std::string& name_or_alias);

// One CSV per input size, rows `width_param;flops` over the width grid.
struct SweepTable {
    std::int64_t size = 0;
    std::string filename; // width-flops-<family>-imagesize-<s>x<s>.csv
    std::string csv;
};

std::vector<SweepTable> sweep_width_flops(const std::string& family,
                                          const std::vector<std::int64_t>& widths,
                                          const std::vector<std::int64_t>& sizes,
                                          std::int64_t classes,
                                          FlopConvention conv = FlopConvention::Mac2);

} // namespace sonarzoo

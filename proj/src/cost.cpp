#include "sonarzoo/cost.hpp"

#include <numeric>

#include "sonarzoo/csv.hpp"
#include "sonarzoo/errors.hpp"
#include "sonarzoo/zoo.hpp"

namespace sonarzoo {

namespace {

std::int64_t elems(const std::vector<std::int64_t>& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::int64_t{1},
                           std::multiplies<std::int64_t>());
}

std::int64_t node_params(const LayerNode& n) {
    std::int64_t total = 0;
    for (const auto& p : n.params) total += p.value.size();
    return total;
}

std::int64_t node_flops(const ModelGraph& g, const LayerNode& n, FlopConvention conv) {
    const std::int64_t out = elems(n.out_shape);
    std::int64_t macs = 0;
    std::int64_t bias_adds = 0;
    std::int64_t elem = 0;
    switch (n.kind) {
    case LayerKind::Conv2D: {
        const std::int64_t cin = g.node(n.inputs[0]).out_shape.back();
        macs = out * n.hp.kernel_h * n.hp.kernel_w * cin;
        if (n.hp.use_bias) bias_adds = out;
        break;
    }
    case LayerKind::DepthwiseConv2D:
        macs = out * n.hp.kernel_h * n.hp.kernel_w;
        if (n.hp.use_bias) bias_adds = out;
        break;
    case LayerKind::Dense: {
        const std::int64_t in = g.node(n.inputs[0]).out_shape.back();
        macs = out * in;
        if (n.hp.use_bias) bias_adds = out;
        break;
    }
    case LayerKind::BatchNorm:
        elem = 2 * out;
        break;
    case LayerKind::ReLU:
        elem = out;
        break;
    case LayerKind::Softmax:
        elem = 3 * out;
        break;
    case LayerKind::MaxPool:
    case LayerKind::AvgPool:
        elem = out * n.hp.kernel_h * n.hp.kernel_w;
        break;
    case LayerKind::GlobalAvgPool:
        elem = elems(g.node(n.inputs[0]).out_shape);
        break;
    case LayerKind::Add:
        elem = out;
        break;
    default:
        break; // input, upsample, flatten, reshape, concat: free
    }
    std::int64_t flops = 2 * macs + bias_adds;
    if (conv == FlopConvention::Mac2Elem) flops += elem;
    return flops;
}

// Cost of the model truncated at `name`: the node itself plus its ancestors.
std::int64_t through(const ModelGraph& g, const CostReport& r, const std::string& name,
                     std::int64_t LayerCost::*field) {
    const int target = g.require(name);
    std::vector<char> keep(static_cast<std::size_t>(g.size()), 0);
    std::vector<int> stack{target};
    keep[static_cast<std::size_t>(target)] = 1;
    while (!stack.empty()) {
        const int id = stack.back();
        stack.pop_back();
        for (int src : g.node(id).inputs)
            if (!keep[static_cast<std::size_t>(src)]) {
                keep[static_cast<std::size_t>(src)] = 1;
                stack.push_back(src);
            }
    }
    std::int64_t total = 0;
    for (int i = 0; i < g.size(); ++i)
        if (keep[static_cast<std::size_t>(i)]) total += r.layers[static_cast<std::size_t>(i)].*field;
    return total;
}

} // namespace

const char* flop_convention_name(FlopConvention c) {
    return c == FlopConvention::Mac2 ? "mac2" : "mac2-elem";
}

FlopConvention flop_convention_from_name(const std::string& name) {
    if (name == "mac2") return FlopConvention::Mac2;
    if (name == "mac2-elem") return FlopConvention::Mac2Elem;
    throw ConfigError("unknown flop convention: " + name);
}

CostReport analyze_cost(const ModelGraph& g, FlopConvention conv) {
    CostReport r;
    r.layers.reserve(g.size());
    for (int id = 0; id < g.size(); ++id) {
        const LayerNode& n = g.node(id);
        LayerCost c;
        c.name = n.name;
        c.kind = kind_name(n.kind);
        c.params = node_params(n);
        c.flops = node_flops(g, n, conv);
        c.activation = elems(n.out_shape);
        r.total_params += c.params;
        r.total_flops += c.flops;
        r.activation_bytes += 4 * c.activation;
        r.layers.push_back(std::move(c));
    }
    return r;
}

std::int64_t params_through(const ModelGraph& g, const CostReport& r,
                            const std::string& name_or_alias) {
    return through(g, r, name_or_alias, &LayerCost::params);
}

std::int64_t flops_through(const ModelGraph& g, const CostReport& r,
                           const std::string& name_or_alias) {
    return through(g, r, name_or_alias, &LayerCost::flops);
}

std::vector<SweepTable> sweep_width_flops(const std::string& family,
                                          const std::vector<std::int64_t>& widths,
                                          const std::vector<std::int64_t>& sizes,
                                          std::int64_t classes, FlopConvention conv) {
    if (!is_model_family(family)) throw ConfigError("unknown model family: " + family);
    if (widths.empty()) throw ConfigError("width grid is empty");
    if (sizes.empty()) throw ConfigError("size grid is empty");
    const auto [lo, hi] = width_range(family);
    for (std::int64_t w : widths)
        if (w < lo || w > hi)
            throw ConfigError("width " + std::to_string(w) + " outside [" + std::to_string(lo) +
                              ", " + std::to_string(hi) + "] for " + family);

    std::vector<SweepTable> tables;
    tables.reserve(sizes.size());
    for (std::int64_t s : sizes) {
        SweepTable t;
        t.size = s;
        t.filename = "width-flops-" + family + "-imagesize-" + std::to_string(s) + "x" +
                     std::to_string(s) + ".csv";
        std::string csv = "width_param;flops\n";
        for (std::int64_t w : widths) {
            const ModelGraph g = build_model({family, w, s, classes});
            const CostReport r = analyze_cost(g, conv);
            csv += format_int(w) + ";" + format_int(r.total_flops) + "\n";
        }
        t.csv = std::move(csv);
        tables.push_back(std::move(t));
    }
    return tables;
}

} // namespace sonarzoo

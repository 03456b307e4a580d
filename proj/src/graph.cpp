#include "sonarzoo/graph.hpp"

#include <array>
#include <cmath>

#include "sonarzoo/errors.hpp"
#include "sonarzoo/rng.hpp"

namespace sonarzoo {

namespace {

struct KindEntry {
    LayerKind kind;
    const char* name;
};

constexpr std::array<KindEntry, 15> kKinds{{
    {LayerKind::Input, "input"},
    {LayerKind::Conv2D, "conv2d"},
    {LayerKind::DepthwiseConv2D, "depthwise_conv2d"},
    {LayerKind::Dense, "dense"},
    {LayerKind::BatchNorm, "batch_norm"},
    {LayerKind::ReLU, "relu"},
    {LayerKind::Softmax, "softmax"},
    {LayerKind::MaxPool, "max_pool"},
    {LayerKind::AvgPool, "avg_pool"},
    {LayerKind::GlobalAvgPool, "global_avg_pool"},
    {LayerKind::Upsample2x, "upsample2x"},
    {LayerKind::Flatten, "flatten"},
    {LayerKind::Reshape, "reshape"},
    {LayerKind::Add, "add"},
    {LayerKind::Concat, "concat"},
}};

std::int64_t product(const std::vector<std::int64_t>& dims) {
    std::int64_t p = 1;
    for (auto d : dims) p *= d;
    return p;
}

} // namespace

const char* kind_name(LayerKind kind) {
    for (const auto& e : kKinds)
        if (e.kind == kind) return e.name;
    throw GraphError("unknown layer kind");
}

LayerKind kind_from_name(const std::string& name) {
    for (const auto& e : kKinds)
        if (name == e.name) return e.kind;
    throw GraphError("unknown layer kind: " + name);
}

const char* padding_name(Padding p) { return p == Padding::Same ? "same" : "valid"; }

Padding padding_from_name(const std::string& name) {
    if (name == "same") return Padding::Same;
    if (name == "valid") return Padding::Valid;
    throw GraphError("unknown padding: " + name);
}

bool LayerNode::has_param(const std::string& pname) const {
    for (const auto& p : params)
        if (p.name == pname) return true;
    return false;
}

Param& LayerNode::param(const std::string& pname) {
    for (auto& p : params)
        if (p.name == pname) return p;
    throw GraphError("layer " + name + " has no parameter " + pname);
}

const Param& LayerNode::param(const std::string& pname) const {
    for (const auto& p : params)
        if (p.name == pname) return p;
    throw GraphError("layer " + name + " has no parameter " + pname);
}

int ModelGraph::add_input(std::int64_t h, std::int64_t w, std::int64_t c) {
    if (input_ >= 0) throw GraphError("graph already has an input node");
    if (h < 1 || w < 1 || c < 1) throw ShapeError("input extents must be positive");
    LayerNode n;
    n.name = "input";
    n.kind = LayerKind::Input;
    n.out_shape = {h, w, c};
    nodes_.push_back(std::move(n));
    input_ = static_cast<int>(nodes_.size()) - 1;
    by_name_["input"] = input_;
    return input_;
}

int ModelGraph::add(LayerKind kind, const Hyper& hp, std::vector<int> inputs) {
    if (kind == LayerKind::Input) throw GraphError("use add_input for the input node");
    if (input_ < 0) throw GraphError("add the input node first");
    for (int id : inputs)
        if (id < 0 || id >= size()) throw GraphError("layer input id out of range");
    LayerNode n;
    n.kind = kind;
    n.hp = hp;
    n.inputs = inputs;
    n.out_shape = infer_shape(kind, hp, inputs);
    n.name = next_name(kind);
    materialize_params(n, inputs);
    nodes_.push_back(std::move(n));
    const int id = static_cast<int>(nodes_.size()) - 1;
    by_name_[nodes_.back().name] = id;
    return id;
}

void ModelGraph::set_alias(const std::string& alias, int id) {
    if (id < 0 || id >= size()) throw GraphError("alias target out of range");
    if (by_name_.count(alias) || aliases_.count(alias))
        throw GraphError("alias collides with an existing name: " + alias);
    aliases_[alias] = nodes_[static_cast<std::size_t>(id)].name;
}

void ModelGraph::set_output(int id) {
    if (id < 0 || id >= size()) throw GraphError("output id out of range");
    output_ = id;
}

const LayerNode& ModelGraph::node(int id) const {
    if (id < 0 || id >= size()) throw GraphError("node id out of range");
    return nodes_[static_cast<std::size_t>(id)];
}

LayerNode& ModelGraph::node(int id) {
    if (id < 0 || id >= size()) throw GraphError("node id out of range");
    return nodes_[static_cast<std::size_t>(id)];
}

int ModelGraph::find(const std::string& name_or_alias) const {
    auto it = by_name_.find(name_or_alias);
    if (it != by_name_.end()) return it->second;
    auto al = aliases_.find(name_or_alias);
    if (al != aliases_.end()) {
        auto target = by_name_.find(al->second);
        if (target != by_name_.end()) return target->second;
    }
    return -1;
}

int ModelGraph::require(const std::string& name_or_alias) const {
    const int id = find(name_or_alias);
    if (id < 0) throw GraphError("unknown layer: " + name_or_alias);
    return id;
}

std::vector<std::pair<int, int>> ModelGraph::trainable_params() {
    std::vector<std::pair<int, int>> out;
    for (int id = 0; id < size(); ++id) {
        const auto& ps = nodes_[static_cast<std::size_t>(id)].params;
        for (int j = 0; j < static_cast<int>(ps.size()); ++j)
            if (ps[static_cast<std::size_t>(j)].trainable) out.emplace_back(id, j);
    }
    return out;
}

std::int64_t ModelGraph::param_count(bool trainable_only) const {
    std::int64_t total = 0;
    for (const auto& n : nodes_)
        for (const auto& p : n.params)
            if (!trainable_only || p.trainable) total += p.value.size();
    return total;
}

void ModelGraph::rebuild_lookup() {
    by_name_.clear();
    counters_.clear();
    for (int id = 0; id < size(); ++id) {
        const std::string& name = nodes_[static_cast<std::size_t>(id)].name;
        if (by_name_.count(name)) throw GraphError("duplicate node name: " + name);
        by_name_[name] = id;
        const auto sep = name.rfind('_');
        if (sep != std::string::npos) {
            int num = 0;
            bool numeric = sep + 1 < name.size();
            for (std::size_t i = sep + 1; i < name.size(); ++i) {
                if (name[i] < '0' || name[i] > '9') {
                    numeric = false;
                    break;
                }
                num = num * 10 + (name[i] - '0');
            }
            if (numeric) {
                int& c = counters_[name.substr(0, sep)];
                c = std::max(c, num);
            }
        }
    }
}

std::string ModelGraph::next_name(LayerKind kind) {
    const std::string base = kind_name(kind);
    const int n = ++counters_[base];
    return base + "_" + std::to_string(n);
}

std::vector<std::int64_t> ModelGraph::infer_shape(LayerKind kind, const Hyper& hp,
                                                  const std::vector<int>& inputs) const {
    auto arity = [&](std::size_t lo, std::size_t hi) {
        if (inputs.size() < lo || inputs.size() > hi)
            throw GraphError(std::string(kind_name(kind)) + ": bad input count " +
                             std::to_string(inputs.size()));
    };
    auto in_shape = [&](std::size_t i) -> const std::vector<std::int64_t>& {
        return nodes_[static_cast<std::size_t>(inputs[i])].out_shape;
    };
    auto spatial = [&](std::size_t i) -> const std::vector<std::int64_t>& {
        const auto& s = in_shape(i);
        if (s.size() != 3)
            throw ShapeError(std::string(kind_name(kind)) + ": needs a (H,W,C) input");
        return s;
    };
    auto pooled = [&](const std::vector<std::int64_t>& s, std::int64_t kh, std::int64_t kw,
                      std::int64_t stride, Padding pad, std::int64_t out_c) {
        if (kh < 1 || kw < 1 || stride < 1)
            throw GraphError(std::string(kind_name(kind)) + ": bad window/stride");
        const std::int64_t ho = conv_out_extent(s[0], kh, stride, pad);
        const std::int64_t wo = conv_out_extent(s[1], kw, stride, pad);
        if (ho < 1 || wo < 1)
            throw ShapeError(std::string(kind_name(kind)) + ": window does not fit " +
                             std::to_string(s[0]) + "x" + std::to_string(s[1]));
        return std::vector<std::int64_t>{ho, wo, out_c};
    };

    switch (kind) {
    case LayerKind::Input:
        throw GraphError("input cannot be inferred");
    case LayerKind::Conv2D: {
        arity(1, 1);
        const auto& s = spatial(0);
        if (hp.filters < 1) throw GraphError("conv2d: filters must be positive");
        return pooled(s, hp.kernel_h, hp.kernel_w, hp.stride, hp.padding, hp.filters);
    }
    case LayerKind::DepthwiseConv2D: {
        arity(1, 1);
        const auto& s = spatial(0);
        return pooled(s, hp.kernel_h, hp.kernel_w, hp.stride, hp.padding, s[2]);
    }
    case LayerKind::Dense: {
        arity(1, 1);
        const auto& s = in_shape(0);
        if (s.size() != 1) throw ShapeError("dense: needs a flat input, got rank " +
                                            std::to_string(s.size()));
        if (hp.filters < 1) throw GraphError("dense: filters must be positive");
        return {hp.filters};
    }
    case LayerKind::BatchNorm: {
        arity(1, 1);
        return spatial(0);
    }
    case LayerKind::ReLU: {
        arity(1, 1);
        return in_shape(0);
    }
    case LayerKind::Softmax: {
        arity(1, 1);
        const auto& s = in_shape(0);
        if (s.size() != 1) throw ShapeError("softmax: needs a flat input");
        return s;
    }
    case LayerKind::MaxPool:
    case LayerKind::AvgPool: {
        arity(1, 1);
        const auto& s = spatial(0);
        return pooled(s, hp.kernel_h, hp.kernel_w, hp.stride, hp.padding, s[2]);
    }
    case LayerKind::GlobalAvgPool: {
        arity(1, 1);
        const auto& s = spatial(0);
        return {1, 1, s[2]};
    }
    case LayerKind::Upsample2x: {
        arity(1, 1);
        const auto& s = spatial(0);
        return {2 * s[0], 2 * s[1], s[2]};
    }
    case LayerKind::Flatten: {
        arity(1, 1);
        const auto& s = in_shape(0);
        return {product(s)};
    }
    case LayerKind::Reshape: {
        arity(1, 1);
        if (hp.target.empty()) throw GraphError("reshape: no target shape");
        for (auto d : hp.target)
            if (d < 1) throw GraphError("reshape: target extents must be positive");
        if (product(hp.target) != product(in_shape(0)))
            throw ShapeError("reshape: element count changes");
        return hp.target;
    }
    case LayerKind::Add: {
        arity(2, SIZE_MAX);
        const auto& first = in_shape(0);
        for (std::size_t i = 1; i < inputs.size(); ++i)
            if (in_shape(i) != first) throw ShapeError("add: input shapes differ");
        return first;
    }
    case LayerKind::Concat: {
        arity(2, SIZE_MAX);
        const auto& first = spatial(0);
        std::int64_t c = 0;
        for (std::size_t i = 0; i < inputs.size(); ++i) {
            const auto& s = spatial(i);
            if (s[0] != first[0] || s[1] != first[1])
                throw ShapeError("concat: spatial extents differ");
            c += s[2];
        }
        return {first[0], first[1], c};
    }
    }
    throw GraphError("unhandled layer kind");
}

void ModelGraph::materialize_params(LayerNode& n, const std::vector<int>& inputs) {
    const auto& in = nodes_[static_cast<std::size_t>(inputs.empty() ? 0 : inputs[0])].out_shape;
    switch (n.kind) {
    case LayerKind::Conv2D: {
        const std::int64_t cin = in[2];
        n.params.push_back({"kernel", Tensor({n.hp.kernel_h, n.hp.kernel_w, cin, n.hp.filters}), true});
        if (n.hp.use_bias) n.params.push_back({"bias", Tensor({n.hp.filters}), true});
        break;
    }
    case LayerKind::DepthwiseConv2D: {
        const std::int64_t c = in[2];
        n.params.push_back({"kernel", Tensor({n.hp.kernel_h, n.hp.kernel_w, c}), true});
        if (n.hp.use_bias) n.params.push_back({"bias", Tensor({c}), true});
        break;
    }
    case LayerKind::Dense: {
        n.params.push_back({"kernel", Tensor({in[0], n.hp.filters}), true});
        if (n.hp.use_bias) n.params.push_back({"bias", Tensor({n.hp.filters}), true});
        break;
    }
    case LayerKind::BatchNorm: {
        const std::int64_t c = n.out_shape[2];
        n.params.push_back({"gamma", Tensor::full({c}, 1.0f), true});
        n.params.push_back({"beta", Tensor({c}), true});
        n.params.push_back({"moving_mean", Tensor({c}), false});
        n.params.push_back({"moving_var", Tensor::full({c}, 1.0f), false});
        break;
    }
    default:
        break;
    }
}

void initialize_weights(ModelGraph& graph, std::uint64_t seed) {
    for (int id = 0; id < graph.size(); ++id) {
        auto& n = graph.node(id);
        for (int j = 0; j < static_cast<int>(n.params.size()); ++j) {
            auto& p = n.params[static_cast<std::size_t>(j)];
            if (p.name != "kernel") continue;
            double fan_in = 0, fan_out = 0;
            const auto& d = p.value.dims();
            if (n.kind == LayerKind::Conv2D) {
                fan_in = static_cast<double>(d[0] * d[1] * d[2]);
                fan_out = static_cast<double>(d[0] * d[1] * d[3]);
            } else if (n.kind == LayerKind::DepthwiseConv2D) {
                fan_in = static_cast<double>(d[0] * d[1] * d[2]);
                fan_out = static_cast<double>(d[0] * d[1]);
            } else { // dense
                fan_in = static_cast<double>(d[0]);
                fan_out = static_cast<double>(d[1]);
            }
            const double limit = std::sqrt(6.0 / (fan_in + fan_out));
            SeededRng rng(SeededRng::derive(seed, static_cast<std::uint64_t>(id),
                                            static_cast<std::uint64_t>(j)));
            for (std::int64_t i = 0; i < p.value.size(); ++i)
                p.value[i] = static_cast<float>(rng.uniform(-limit, limit));
        }
    }
}

ModelGraph truncate_at(const ModelGraph& g, const std::string& name_or_alias) {
    const int target = g.require(name_or_alias);

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
    if (g.input_id() < 0 || !keep[static_cast<std::size_t>(g.input_id())])
        throw GraphError("node " + name_or_alias + " is not reachable from the input");

    ModelGraph t;
    t.meta = g.meta;
    std::vector<int> remap(static_cast<std::size_t>(g.size()), -1);
    for (int id = 0; id < g.size(); ++id) {
        if (!keep[static_cast<std::size_t>(id)]) continue;
        LayerNode n = g.node(id);
        for (int& src : n.inputs) src = remap[static_cast<std::size_t>(src)];
        remap[static_cast<std::size_t>(id)] = static_cast<int>(t.nodes_.size());
        t.nodes_.push_back(std::move(n));
    }
    t.input_ = remap[static_cast<std::size_t>(g.input_id())];
    t.output_ = remap[static_cast<std::size_t>(target)];
    for (const auto& [alias, canon] : g.aliases()) {
        const int id = g.find(canon);
        if (id >= 0 && keep[static_cast<std::size_t>(id)]) t.aliases_[alias] = canon;
    }
    t.rebuild_lookup();
    return t;
}

} // namespace sonarzoo

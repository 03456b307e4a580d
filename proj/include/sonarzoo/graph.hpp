#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "sonarzoo/kernels.hpp"
#include "sonarzoo/tensor.hpp"

// A model is a DAG of named layer nodes. Shapes are propagated while the
// graph is built (batch axis excluded, it stays dynamic), parameters are
// materialized with their final shapes at add() time, and names are assigned
// from per-kind counters so two builds of the same architecture agree layer
// by layer. Well-known layers additionally carry aliases so they can be
// addressed by their published names.
namespace sonarzoo {

enum class LayerKind {
    Input,
    Conv2D,
    DepthwiseConv2D,
    Dense,
    BatchNorm,
    ReLU,
    Softmax,
    MaxPool,
    AvgPool,
    GlobalAvgPool,
    Upsample2x,
    Flatten,
    Reshape,
    Add,
    Concat,
};

const char* kind_name(LayerKind kind);
LayerKind kind_from_name(const std::string& name);

const char* padding_name(Padding p);
Padding padding_from_name(const std::string& name);

struct Hyper {
    std::int64_t kernel_h = 0;
    std::int64_t kernel_w = 0;
    std::int64_t filters = 0; // conv2d / dense output width
    std::int64_t stride = 1;
    Padding padding = Padding::Same;
    bool use_bias = true;
    double momentum = 0.99; // batch norm running-stat decay
    double epsilon = 1e-3;  // batch norm variance floor
    std::vector<std::int64_t> target; // reshape target shape, batch excluded
};

struct Param {
    std::string name;
    Tensor value;
    bool trainable = true;
};

struct LayerNode {
    std::string name;
    LayerKind kind = LayerKind::Input;
    Hyper hp;
    std::vector<int> inputs;
    std::vector<Param> params;
    std::vector<std::int64_t> out_shape; // batch excluded

    bool has_param(const std::string& pname) const;
    Param& param(const std::string& pname);
    const Param& param(const std::string& pname) const;
};

struct ModelMeta {
    std::string family;
    std::int64_t width_param = 0;
    std::int64_t input_size = 0;
    std::int64_t num_classes = 0; // 0 for reconstruction models
    double pixel_mean = 0.0;      // subtracted from raw pixels before the net
};

class ModelGraph {
public:
    ModelMeta meta;

    int add_input(std::int64_t h, std::int64_t w, std::int64_t c);
    int add(LayerKind kind, const Hyper& hp, std::vector<int> inputs);
    void set_alias(const std::string& alias, int id);
    void set_output(int id);

    int input_id() const { return input_; }
    int output_id() const { return output_; }
    int size() const { return static_cast<int>(nodes_.size()); }
    const LayerNode& node(int id) const;
    LayerNode& node(int id);
    const std::vector<LayerNode>& nodes() const { return nodes_; }

    // Lookup by canonical name or alias; find() returns -1 when absent.
    int find(const std::string& name_or_alias) const;
    int require(const std::string& name_or_alias) const;
    const std::map<std::string, std::string>& aliases() const { return aliases_; }

    // (node id, param index) for every trainable tensor, in graph order.
    std::vector<std::pair<int, int>> trainable_params();
    std::int64_t param_count(bool trainable_only = false) const;

    // Restores naming counters after deserialization.
    void rebuild_lookup();

private:
    friend ModelGraph truncate_at(const ModelGraph& g, const std::string& name_or_alias);

    std::string next_name(LayerKind kind);
    std::vector<std::int64_t> infer_shape(LayerKind kind, const Hyper& hp,
                                          const std::vector<int>& inputs) const;
    void materialize_params(LayerNode& n, const std::vector<int>& inputs);

    std::vector<LayerNode> nodes_;
    std::map<std::string, int> by_name_;
    std::map<std::string, std::string> aliases_; // alias -> canonical name
    std::map<std::string, int> counters_;        // per-kind name counters
    int input_ = -1;
    int output_ = -1;
};

// Glorot-uniform for conv/dense kernels, zeros for biases; batch-norm tensors
// keep their deterministic init (gamma=1, beta=0, mean=0, var=1). Parameters
// are visited in graph order with one fresh draw sequence per kernel.
void initialize_weights(ModelGraph& graph, std::uint64_t seed);

// Independent sub-graph computing the named layer's activation as its output.
// Only that layer's ancestors are kept; names, aliases into the kept set, and
// weight values carry over unchanged.
ModelGraph truncate_at(const ModelGraph& g, const std::string& name_or_alias);

} // namespace sonarzoo

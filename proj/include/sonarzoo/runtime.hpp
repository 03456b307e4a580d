#pragma once

#include <vector>

#include "sonarzoo/graph.hpp"

// Graph execution. Node ids are already topologically ordered (add() only
// accepts existing inputs), so forward walks ids ascending and backward walks
// them descending.
namespace sonarzoo {

// Inference mode: batch norm uses its moving statistics. Activations are
// dropped as soon as their last consumer has run; the requested ids are kept.
std::vector<Tensor> forward_collect(const ModelGraph& g, const Tensor& input,
                                    const std::vector<int>& wanted);
Tensor forward(const ModelGraph& g, const Tensor& input);

// Training mode: batch norm normalizes with batch statistics, caches them for
// the backward pass, and folds them into the moving averages.
struct ForwardTape {
    std::vector<Tensor> acts;                // indexed by node id
    std::vector<BatchNormCache<float>> bn;   // indexed by node id, BN nodes only
};

Tensor forward_train(ModelGraph& g, const Tensor& input, ForwardTape& tape);

// d(loss)/d(param) for each (node, param index) pair, same order as `params`.
std::vector<Tensor> backward(const ModelGraph& g, const ForwardTape& tape, const Tensor& dout,
                             const std::vector<std::pair<int, int>>& params);

} // namespace sonarzoo

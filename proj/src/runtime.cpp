#include "sonarzoo/runtime.hpp"

#include <algorithm>

#include "sonarzoo/errors.hpp"

namespace sonarzoo {

namespace {

void check_input(const ModelGraph& g, const Tensor& input) {
    if (g.input_id() < 0 || g.output_id() < 0)
        throw GraphError("graph has no input/output set");
    const auto& want = g.node(g.input_id()).out_shape;
    if (input.rank() != 4 || input.dim(1) != want[0] || input.dim(2) != want[1] ||
        input.dim(3) != want[2])
        throw ShapeError("input tensor " + input.shape_string() + " does not match model input (" +
                         std::to_string(want[0]) + "," + std::to_string(want[1]) + "," +
                         std::to_string(want[2]) + ")");
}

Tensor apply_node(const LayerNode& n, const std::vector<const Tensor*>& in, bool training,
                  BatchNormCache<float>* bn_cache) {
    const Tensor& x = *in[0];
    switch (n.kind) {
    case LayerKind::Conv2D:
        return conv2d_forward(x, n.param("kernel").value,
                              n.hp.use_bias ? &n.param("bias").value : nullptr, n.hp.stride,
                              n.hp.padding);
    case LayerKind::DepthwiseConv2D:
        return depthwise_forward(x, n.param("kernel").value,
                                 n.hp.use_bias ? &n.param("bias").value : nullptr, n.hp.stride,
                                 n.hp.padding);
    case LayerKind::Dense:
        return dense_forward(x, n.param("kernel").value,
                             n.hp.use_bias ? &n.param("bias").value : nullptr);
    case LayerKind::BatchNorm:
        if (training)
            return batchnorm_forward_train(x, n.param("gamma").value, n.param("beta").value,
                                           n.hp.epsilon, bn_cache);
        return batchnorm_forward_infer(x, n.param("gamma").value, n.param("beta").value,
                                       n.param("moving_mean").value, n.param("moving_var").value,
                                       n.hp.epsilon);
    case LayerKind::ReLU:
        return relu_forward(x);
    case LayerKind::Softmax:
        return softmax_forward(x);
    case LayerKind::MaxPool:
        return maxpool_forward(x, n.hp.kernel_h, n.hp.kernel_w, n.hp.stride, n.hp.padding);
    case LayerKind::AvgPool:
        return avgpool_forward(x, n.hp.kernel_h, n.hp.kernel_w, n.hp.stride, n.hp.padding);
    case LayerKind::GlobalAvgPool:
        return global_avgpool_forward(x);
    case LayerKind::Upsample2x:
        return upsample2x_forward(x);
    case LayerKind::Flatten:
        return x.reshaped({x.dim(0), x.size() / x.dim(0)});
    case LayerKind::Reshape: {
        std::vector<std::int64_t> dims{x.dim(0)};
        dims.insert(dims.end(), n.hp.target.begin(), n.hp.target.end());
        return x.reshaped(dims);
    }
    case LayerKind::Add: {
        Tensor y = add_forward(*in[0], *in[1]);
        for (std::size_t i = 2; i < in.size(); ++i) y = add_forward(y, *in[i]);
        return y;
    }
    case LayerKind::Concat:
        return concat_forward(in);
    case LayerKind::Input:
        break;
    }
    throw GraphError("cannot execute node " + n.name);
}

} // namespace

std::vector<Tensor> forward_collect(const ModelGraph& g, const Tensor& input,
                                    const std::vector<int>& wanted) {
    check_input(g, input);
    const int last = *std::max_element(wanted.begin(), wanted.end());
    if (last >= g.size()) throw GraphError("requested node out of range");

    // Free each activation after its last consumer within the executed prefix.
    std::vector<int> consumers(static_cast<std::size_t>(g.size()), 0);
    for (int id = 0; id <= last; ++id)
        for (int in : g.node(id).inputs) ++consumers[static_cast<std::size_t>(in)];
    for (int id : wanted) ++consumers[static_cast<std::size_t>(id)];

    std::vector<Tensor> acts(static_cast<std::size_t>(last) + 1);
    std::vector<Tensor> out;
    out.reserve(wanted.size());

    for (int id = 0; id <= last; ++id) {
        const LayerNode& n = g.node(id);
        Tensor y;
        if (n.kind == LayerKind::Input) {
            y = input;
        } else {
            std::vector<const Tensor*> in;
            in.reserve(n.inputs.size());
            for (int src : n.inputs) in.push_back(&acts[static_cast<std::size_t>(src)]);
            y = apply_node(n, in, false, nullptr);
            for (int src : n.inputs) {
                if (--consumers[static_cast<std::size_t>(src)] == 0)
                    acts[static_cast<std::size_t>(src)] = Tensor();
            }
        }
        acts[static_cast<std::size_t>(id)] = std::move(y);
    }
    for (int id : wanted) {
        out.push_back(acts[static_cast<std::size_t>(id)]);
        if (--consumers[static_cast<std::size_t>(id)] == 0)
            acts[static_cast<std::size_t>(id)] = Tensor();
    }
    return out;
}

Tensor forward(const ModelGraph& g, const Tensor& input) {
    return forward_collect(g, input, {g.output_id()})[0];
}

Tensor forward_train(ModelGraph& g, const Tensor& input, ForwardTape& tape) {
    check_input(g, input);
    tape.acts.assign(static_cast<std::size_t>(g.size()), Tensor());
    tape.bn.assign(static_cast<std::size_t>(g.size()), BatchNormCache<float>{});

    for (int id = 0; id <= g.output_id(); ++id) {
        LayerNode& n = g.node(id);
        Tensor y;
        if (n.kind == LayerKind::Input) {
            y = input;
        } else {
            std::vector<const Tensor*> in;
            in.reserve(n.inputs.size());
            for (int src : n.inputs) in.push_back(&tape.acts[static_cast<std::size_t>(src)]);
            y = apply_node(n, in, true, &tape.bn[static_cast<std::size_t>(id)]);
            if (n.kind == LayerKind::BatchNorm)
                batchnorm_update_running(n.param("moving_mean").value, n.param("moving_var").value,
                                         tape.bn[static_cast<std::size_t>(id)], n.hp.momentum);
        }
        tape.acts[static_cast<std::size_t>(id)] = std::move(y);
    }
    return tape.acts[static_cast<std::size_t>(g.output_id())];
}

std::vector<Tensor> backward(const ModelGraph& g, const ForwardTape& tape, const Tensor& dout,
                             const std::vector<std::pair<int, int>>& params) {
    if (static_cast<int>(tape.acts.size()) != g.size())
        throw GraphError("tape does not match graph");

    std::vector<Tensor> node_grad(static_cast<std::size_t>(g.size()));
    auto accumulate = [&](int id, Tensor&& t) {
        Tensor& slot = node_grad[static_cast<std::size_t>(id)];
        if (slot.empty()) {
            slot = std::move(t);
        } else {
            for (std::int64_t i = 0; i < slot.size(); ++i) slot[i] += t[i];
        }
    };

    // param grads keyed by (node, param index)
    std::vector<std::vector<Tensor>> pgrads(static_cast<std::size_t>(g.size()));
    node_grad[static_cast<std::size_t>(g.output_id())] = dout;

    for (int id = g.output_id(); id >= 0; --id) {
        Tensor gy = std::move(node_grad[static_cast<std::size_t>(id)]);
        node_grad[static_cast<std::size_t>(id)] = Tensor();
        if (gy.empty()) continue;
        const LayerNode& n = g.node(id);
        if (n.kind == LayerKind::Input) continue;
        const Tensor& x = tape.acts[static_cast<std::size_t>(n.inputs[0])];

        switch (n.kind) {
        case LayerKind::Conv2D: {
            auto grads = conv2d_backward(x, n.param("kernel").value, n.hp.use_bias, n.hp.stride,
                                         n.hp.padding, gy);
            pgrads[static_cast<std::size_t>(id)].push_back(std::move(grads.dkernel));
            if (n.hp.use_bias)
                pgrads[static_cast<std::size_t>(id)].push_back(std::move(grads.dbias));
            accumulate(n.inputs[0], std::move(grads.dx));
            break;
        }
        case LayerKind::DepthwiseConv2D: {
            auto grads = depthwise_backward(x, n.param("kernel").value, n.hp.use_bias, n.hp.stride,
                                            n.hp.padding, gy);
            pgrads[static_cast<std::size_t>(id)].push_back(std::move(grads.dkernel));
            if (n.hp.use_bias)
                pgrads[static_cast<std::size_t>(id)].push_back(std::move(grads.dbias));
            accumulate(n.inputs[0], std::move(grads.dx));
            break;
        }
        case LayerKind::Dense: {
            auto grads = dense_backward(x, n.param("kernel").value, n.hp.use_bias, gy);
            pgrads[static_cast<std::size_t>(id)].push_back(std::move(grads.dkernel));
            if (n.hp.use_bias)
                pgrads[static_cast<std::size_t>(id)].push_back(std::move(grads.dbias));
            accumulate(n.inputs[0], std::move(grads.dx));
            break;
        }
        case LayerKind::BatchNorm: {
            auto grads = batchnorm_backward_train(x, n.param("gamma").value,
                                                  tape.bn[static_cast<std::size_t>(id)],
                                                  n.hp.epsilon, gy);
            pgrads[static_cast<std::size_t>(id)].push_back(std::move(grads.dgamma));
            pgrads[static_cast<std::size_t>(id)].push_back(std::move(grads.dbeta));
            accumulate(n.inputs[0], std::move(grads.dx));
            break;
        }
        case LayerKind::ReLU:
            accumulate(n.inputs[0], relu_backward(x, gy));
            break;
        case LayerKind::Softmax:
            accumulate(n.inputs[0],
                       softmax_backward(tape.acts[static_cast<std::size_t>(id)], gy));
            break;
        case LayerKind::MaxPool:
            accumulate(n.inputs[0],
                       maxpool_backward(x, n.hp.kernel_h, n.hp.kernel_w, n.hp.stride,
                                        n.hp.padding, gy));
            break;
        case LayerKind::AvgPool:
            accumulate(n.inputs[0],
                       avgpool_backward(x, n.hp.kernel_h, n.hp.kernel_w, n.hp.stride,
                                        n.hp.padding, gy));
            break;
        case LayerKind::GlobalAvgPool:
            accumulate(n.inputs[0], global_avgpool_backward(x, gy));
            break;
        case LayerKind::Upsample2x:
            accumulate(n.inputs[0], upsample2x_backward(x, gy));
            break;
        case LayerKind::Flatten:
        case LayerKind::Reshape:
            accumulate(n.inputs[0], gy.reshaped(x.dims()));
            break;
        case LayerKind::Add:
            for (std::size_t i = 0; i < n.inputs.size(); ++i) {
                Tensor copy = gy;
                accumulate(n.inputs[i], std::move(copy));
            }
            break;
        case LayerKind::Concat: {
            std::vector<const Tensor*> ins;
            ins.reserve(n.inputs.size());
            for (int src : n.inputs) ins.push_back(&tape.acts[static_cast<std::size_t>(src)]);
            auto grads = concat_backward(ins, gy);
            for (std::size_t i = 0; i < n.inputs.size(); ++i)
                accumulate(n.inputs[i], std::move(grads[i]));
            break;
        }
        case LayerKind::Input:
            break;
        }
    }

    std::vector<Tensor> out;
    out.reserve(params.size());
    // pgrads for a node were pushed in parameter order, trainable ones first
    // in every kind we differentiate, so index by the param slot directly.
    for (const auto& [node_id, param_idx] : params) {
        auto& list = pgrads[static_cast<std::size_t>(node_id)];
        if (param_idx < static_cast<int>(list.size()) &&
            !list[static_cast<std::size_t>(param_idx)].empty()) {
            out.push_back(std::move(list[static_cast<std::size_t>(param_idx)]));
        } else {
            // node never received a gradient (downstream of the output)
            out.push_back(Tensor(g.node(node_id).params[static_cast<std::size_t>(param_idx)]
                                     .value.dims()));
        }
    }
    return out;
}

} // namespace sonarzoo

#include "sonarzoo/zoo.hpp"

#include <algorithm>

#include "sonarzoo/errors.hpp"

namespace sonarzoo {

namespace {

Hyper conv_hp(std::int64_t k, std::int64_t filters, std::int64_t stride, Padding pad, bool bias) {
    Hyper hp;
    hp.kernel_h = k;
    hp.kernel_w = k;
    hp.filters = filters;
    hp.stride = stride;
    hp.padding = pad;
    hp.use_bias = bias;
    return hp;
}

Hyper pool_hp(std::int64_t k, std::int64_t stride, Padding pad) {
    Hyper hp;
    hp.kernel_h = k;
    hp.kernel_w = k;
    hp.stride = stride;
    hp.padding = pad;
    return hp;
}

// conv -> batch norm -> relu; returns the relu id.
int conv_bn_relu(ModelGraph& g, int x, std::int64_t k, std::int64_t filters, std::int64_t stride,
                 bool bias) {
    x = g.add(LayerKind::Conv2D, conv_hp(k, filters, stride, Padding::Same, bias), {x});
    x = g.add(LayerKind::BatchNorm, Hyper{}, {x});
    return g.add(LayerKind::ReLU, Hyper{}, {x});
}

int classifier_head(ModelGraph& g, int x, std::int64_t classes, const char* flatten_alias) {
    x = g.add(LayerKind::GlobalAvgPool, Hyper{}, {x});
    x = g.add(LayerKind::Flatten, Hyper{}, {x});
    if (flatten_alias) g.set_alias(flatten_alias, x);
    Hyper dense;
    dense.filters = classes;
    x = g.add(LayerKind::Dense, dense, {x});
    x = g.add(LayerKind::Softmax, Hyper{}, {x});
    g.set_output(x);
    return x;
}

// Three stages of three basic blocks on widths w, 2w, 4w; stride-2 entry to
// stages 2 and 3 with 1x1 projection shortcuts (no norm on the projection).
ModelGraph build_resnet20(const ArchSpec& s) {
    ModelGraph g;
    int x = g.add_input(s.input_size, s.input_size, 1);
    x = conv_bn_relu(g, x, 3, s.width, 1, true);

    for (int stage = 0; stage < 3; ++stage) {
        const std::int64_t f = s.width << stage;
        for (int block = 0; block < 3; ++block) {
            const std::int64_t stride = (stage > 0 && block == 0) ? 2 : 1;
            int shortcut = x;
            int y = g.add(LayerKind::Conv2D, conv_hp(3, f, stride, Padding::Same, true), {x});
            y = g.add(LayerKind::BatchNorm, Hyper{}, {y});
            y = g.add(LayerKind::ReLU, Hyper{}, {y});
            // The two deepest mid-block activations are published feature layers.
            if (stage == 2 && block == 1) g.set_alias("activation_91", y);
            if (stage == 2 && block == 2) g.set_alias("activation_93", y);
            y = g.add(LayerKind::Conv2D, conv_hp(3, f, 1, Padding::Same, true), {y});
            y = g.add(LayerKind::BatchNorm, Hyper{}, {y});
            if (stride != 1)
                shortcut = g.add(LayerKind::Conv2D, conv_hp(1, f, stride, Padding::Same, true), {x});
            x = g.add(LayerKind::Add, Hyper{}, {y, shortcut});
            x = g.add(LayerKind::ReLU, Hyper{}, {x});
        }
    }
    classifier_head(g, x, s.classes, "flatten_5");
    return g;
}

// Standard 13-block depthwise-separable stack; pointwise widths climb
// 2w,4w,4w,8w,... and the depthwise strides downsample four times.
ModelGraph build_mobilenet(const ArchSpec& s) {
    const std::int64_t w = s.width;
    const std::int64_t pw[13] = {2 * w, 4 * w,  4 * w,  8 * w,  8 * w,  16 * w, 16 * w,
                                 16 * w, 16 * w, 16 * w, 16 * w, 32 * w, 32 * w};
    const std::int64_t dw_stride[13] = {1, 2, 1, 2, 1, 2, 1, 1, 1, 1, 1, 2, 1};

    ModelGraph g;
    int x = g.add_input(s.input_size, s.input_size, 1);
    x = g.add(LayerKind::Conv2D, conv_hp(3, w, 2, Padding::Same, false), {x});
    x = g.add(LayerKind::BatchNorm, Hyper{}, {x});
    x = g.add(LayerKind::ReLU, Hyper{}, {x});
    g.set_alias("conv1_relu", x);

    for (int i = 0; i < 13; ++i) {
        Hyper dw = pool_hp(3, dw_stride[i], Padding::Same);
        dw.use_bias = false;
        x = g.add(LayerKind::DepthwiseConv2D, dw, {x});
        x = g.add(LayerKind::BatchNorm, Hyper{}, {x});
        x = g.add(LayerKind::ReLU, Hyper{}, {x});
        g.set_alias("conv_dw_" + std::to_string(i + 1) + "_relu", x);
        x = g.add(LayerKind::Conv2D, conv_hp(1, pw[i], 1, Padding::Same, false), {x});
        x = g.add(LayerKind::BatchNorm, Hyper{}, {x});
        x = g.add(LayerKind::ReLU, Hyper{}, {x});
        g.set_alias("conv_pw_" + std::to_string(i + 1) + "_relu", x);
    }
    classifier_head(g, x, s.classes, "flatten_5");
    return g;
}

// Growth-rate-w dense blocks of [6,12,24,16] bottleneck layers with
// half-compression transitions; block/layer aliases follow the usual
// convN_blockM_* naming.
ModelGraph build_densenet121(const ArchSpec& s) {
    const std::int64_t k = s.width;
    const int block_sizes[4] = {6, 12, 24, 16};

    ModelGraph g;
    int x = g.add_input(s.input_size, s.input_size, 1);
    x = g.add(LayerKind::Conv2D, conv_hp(7, 2 * k, 2, Padding::Same, false), {x});
    x = g.add(LayerKind::BatchNorm, Hyper{}, {x});
    x = g.add(LayerKind::ReLU, Hyper{}, {x});
    x = g.add(LayerKind::MaxPool, pool_hp(3, 2, Padding::Same), {x});

    std::int64_t channels = 2 * k;
    for (int b = 0; b < 4; ++b) {
        const std::string block_prefix = "conv" + std::to_string(b + 2) + "_block";
        for (int l = 0; l < block_sizes[b]; ++l) {
            const std::string prefix = block_prefix + std::to_string(l + 1) + "_";
            int y = g.add(LayerKind::BatchNorm, Hyper{}, {x});
            g.set_alias(prefix + "0_bn", y);
            y = g.add(LayerKind::ReLU, Hyper{}, {y});
            g.set_alias(prefix + "0_relu", y);
            y = g.add(LayerKind::Conv2D, conv_hp(1, 4 * k, 1, Padding::Same, false), {y});
            y = g.add(LayerKind::BatchNorm, Hyper{}, {y});
            y = g.add(LayerKind::ReLU, Hyper{}, {y});
            y = g.add(LayerKind::Conv2D, conv_hp(3, k, 1, Padding::Same, false), {y});
            x = g.add(LayerKind::Concat, Hyper{}, {x, y});
            channels += k;
        }
        if (b < 3) {
            x = g.add(LayerKind::BatchNorm, Hyper{}, {x});
            x = g.add(LayerKind::ReLU, Hyper{}, {x});
            channels /= 2;
            x = g.add(LayerKind::Conv2D,
                      conv_hp(1, channels, 1, Padding::Same, false), {x});
            x = g.add(LayerKind::AvgPool, pool_hp(2, 2, Padding::Valid), {x});
        }
    }
    x = g.add(LayerKind::BatchNorm, Hyper{}, {x});
    x = g.add(LayerKind::ReLU, Hyper{}, {x});
    x = g.add(LayerKind::GlobalAvgPool, Hyper{}, {x});
    g.set_alias("avg_pool", x);
    x = g.add(LayerKind::Flatten, Hyper{}, {x});
    Hyper dense;
    dense.filters = s.classes;
    x = g.add(LayerKind::Dense, dense, {x});
    x = g.add(LayerKind::Softmax, Hyper{}, {x});
    g.set_output(x);
    return g;
}

// Eight fire modules in stacks {1,2}, {3,4}, {5..8} with squeeze widths
// w, 2w, 4w and per-branch expansion 2x the squeeze; batch norm closes each
// fire. Pools are 3x3/2 valid, after the stem conv, fire 4 and fire 8.
ModelGraph build_squeezenet(const ArchSpec& s) {
    const std::int64_t w = s.width;
    const std::int64_t squeeze[8] = {w, w, 2 * w, 2 * w, 4 * w, 4 * w, 4 * w, 4 * w};

    ModelGraph g;
    int x = g.add_input(s.input_size, s.input_size, 1);
    x = conv_bn_relu(g, x, 3, 2 * w, 2, true);
    x = g.add(LayerKind::MaxPool, pool_hp(3, 2, Padding::Valid), {x});

    for (int i = 0; i < 8; ++i) {
        const std::int64_t sq = squeeze[i];
        const std::int64_t ex = 2 * sq;
        int y = g.add(LayerKind::Conv2D, conv_hp(1, sq, 1, Padding::Same, true), {x});
        y = g.add(LayerKind::ReLU, Hyper{}, {y});
        int e1 = g.add(LayerKind::Conv2D, conv_hp(1, ex, 1, Padding::Same, true), {y});
        e1 = g.add(LayerKind::ReLU, Hyper{}, {e1});
        int e3 = g.add(LayerKind::Conv2D, conv_hp(3, ex, 1, Padding::Same, true), {y});
        e3 = g.add(LayerKind::ReLU, Hyper{}, {e3});
        x = g.add(LayerKind::Concat, Hyper{}, {e1, e3});
        x = g.add(LayerKind::BatchNorm, Hyper{}, {x});
        // The deepest three fire norms are published feature layers.
        if (i >= 5) g.set_alias("batch_norm_" + std::to_string(48 + i - 5), x);
        if (i == 3) x = g.add(LayerKind::MaxPool, pool_hp(3, 2, Padding::Valid), {x});
    }
    x = g.add(LayerKind::MaxPool, pool_hp(3, 2, Padding::Valid), {x});
    x = g.add(LayerKind::Conv2D, conv_hp(1, s.classes, 1, Padding::Same, true), {x});
    x = g.add(LayerKind::ReLU, Hyper{}, {x});
    classifier_head(g, x, s.classes, nullptr);
    return g;
}

// Two stem convs (w/2, w) and four depthwise-separable residual blocks on
// widths w..8w. Within a block the main path is laid down before the
// projection shortcut, which keeps prefix parameter totals aligned with the
// published per-layer counts.
ModelGraph build_minixception(const ArchSpec& s) {
    const std::int64_t w = s.width;
    ModelGraph g;
    int x = g.add_input(s.input_size, s.input_size, 1);
    x = conv_bn_relu(g, x, 3, w / 2, 1, false);
    x = conv_bn_relu(g, x, 3, w, 1, false);

    for (int b = 0; b < 4; ++b) {
        const std::int64_t f = w << b;
        // separable conv = depthwise + pointwise, both unbiased
        Hyper dw = pool_hp(3, 1, Padding::Same);
        dw.use_bias = false;
        int y = g.add(LayerKind::DepthwiseConv2D, dw, {x});
        y = g.add(LayerKind::Conv2D, conv_hp(1, f, 1, Padding::Same, false), {y});
        y = g.add(LayerKind::BatchNorm, Hyper{}, {y});
        y = g.add(LayerKind::ReLU, Hyper{}, {y});
        y = g.add(LayerKind::DepthwiseConv2D, dw, {y});
        y = g.add(LayerKind::Conv2D, conv_hp(1, f, 1, Padding::Same, false), {y});
        y = g.add(LayerKind::BatchNorm, Hyper{}, {y});
        if (b == 3) g.set_alias("conv2d_35", y);
        y = g.add(LayerKind::MaxPool, pool_hp(3, 2, Padding::Same), {y});
        int res = g.add(LayerKind::Conv2D, conv_hp(1, f, 2, Padding::Same, false), {x});
        res = g.add(LayerKind::BatchNorm, Hyper{}, {res});
        x = g.add(LayerKind::Add, Hyper{}, {y, res});
        if (b == 1) g.set_alias("add_18", x);
        if (b == 2) g.set_alias("add_19", x);
    }
    x = g.add(LayerKind::Conv2D, conv_hp(3, s.classes, 1, Padding::Same, true), {x});
    classifier_head(g, x, s.classes, nullptr);
    return g;
}

// conv(32)-pool, conv(16)-pool, conv(8)-pool, dense code; the decoder mirrors
// the pooling with nearest upsampling but keeps the conv widths 32,16,8 in
// that order, ending in a linear 1-channel conv.
ModelGraph build_autoencoder(const ArchSpec& s) {
    if (s.input_size % 8 != 0)
        throw ConfigError("autoencoder input size must be divisible by 8, got " +
                          std::to_string(s.input_size));
    const std::int64_t small = s.input_size / 8;
    const std::int64_t flat = 8 * small * small;

    ModelGraph g;
    int x = g.add_input(s.input_size, s.input_size, 1);
    for (std::int64_t f : {32, 16, 8}) {
        x = g.add(LayerKind::Conv2D, conv_hp(3, f, 1, Padding::Same, true), {x});
        x = g.add(LayerKind::ReLU, Hyper{}, {x});
        x = g.add(LayerKind::MaxPool, pool_hp(2, 2, Padding::Valid), {x});
    }
    x = g.add(LayerKind::Flatten, Hyper{}, {x});
    Hyper code;
    code.filters = s.width;
    x = g.add(LayerKind::Dense, code, {x});
    x = g.add(LayerKind::ReLU, Hyper{}, {x});
    g.set_alias("enc_code", x);

    Hyper expand;
    expand.filters = flat;
    x = g.add(LayerKind::Dense, expand, {x});
    x = g.add(LayerKind::ReLU, Hyper{}, {x});
    Hyper reshape;
    reshape.target = {small, small, 8};
    x = g.add(LayerKind::Reshape, reshape, {x});
    for (std::int64_t f : {32, 16, 8}) {
        x = g.add(LayerKind::Conv2D, conv_hp(3, f, 1, Padding::Same, true), {x});
        x = g.add(LayerKind::ReLU, Hyper{}, {x});
        x = g.add(LayerKind::Upsample2x, Hyper{}, {x});
    }
    x = g.add(LayerKind::Conv2D, conv_hp(3, 1, 1, Padding::Same, true), {x});
    g.set_output(x);
    return g;
}

} // namespace

std::vector<std::string> model_families() {
    return {"autoencoder", "densenet121", "minixception", "mobilenet", "resnet20", "squeezenet"};
}

bool is_model_family(const std::string& family) {
    const auto fams = model_families();
    return std::find(fams.begin(), fams.end(), family) != fams.end();
}

std::int64_t default_width(const std::string& family) {
    if (family == "resnet20") return 32;
    if (family == "mobilenet") return 32;
    if (family == "densenet121") return 16;
    if (family == "squeezenet") return 32;
    if (family == "minixception") return 16;
    if (family == "autoencoder") return 128;
    throw ConfigError("unknown model family: " + family);
}

std::pair<std::int64_t, std::int64_t> width_range(const std::string& family) {
    if (!is_model_family(family)) throw ConfigError("unknown model family: " + family);
    if (family == "autoencoder") return {4, 128};
    return {8, 64};
}

ModelGraph build_model(const ArchSpec& spec) {
    if (!is_model_family(spec.family)) throw ConfigError("unknown model family: " + spec.family);
    if (spec.width < 1) throw ConfigError("width must be positive");
    if (spec.input_size < 8) throw ConfigError("input size must be at least 8");
    if (spec.family != "autoencoder" && spec.classes < 2)
        throw ConfigError("classifiers need at least 2 classes");
    if (spec.family == "minixception" && spec.width % 2 != 0)
        throw ConfigError("minixception width must be even (stem uses w/2)");

    ModelGraph g;
    if (spec.family == "resnet20") g = build_resnet20(spec);
    else if (spec.family == "mobilenet") g = build_mobilenet(spec);
    else if (spec.family == "densenet121") g = build_densenet121(spec);
    else if (spec.family == "squeezenet") g = build_squeezenet(spec);
    else if (spec.family == "minixception") g = build_minixception(spec);
    else g = build_autoencoder(spec);

    g.meta.family = spec.family;
    g.meta.width_param = spec.width;
    g.meta.input_size = spec.input_size;
    g.meta.num_classes = spec.family == "autoencoder" ? 0 : spec.classes;
    return g;
}

} // namespace sonarzoo

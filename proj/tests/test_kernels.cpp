#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <vector>

#include "fd_check.hpp"
#include "sonarzoo/kernels.hpp"

using namespace sonarzoo;
using fdtest::DTensor;
using fdtest::dot;
using fdtest::fd_compare;
using fdtest::random_tensor;
using fdtest::random_tensor_away_from_zero;

namespace {

constexpr double kRelTol = 1e-4;
const std::vector<std::uint64_t> kSeeds = {11, 22, 33, 44, 55};

void check_report(const fdtest::FdReport& rep, const char* what, std::uint64_t seed) {
    INFO(what << " seed " << seed << ": worst index " << rep.worst_index << ", fd " << rep.fd
              << " vs analytic " << rep.analytic);
    CHECK(rep.max_rel_err <= kRelTol);
}

} // namespace

// ---------------------------------------------------------------------------
// padding / extent arithmetic

TEST_CASE("conv extent and padding tables") {
    // same: ceil(in/stride); valid: floor((in-k)/stride)+1
    CHECK(conv_out_extent(5, 3, 1, Padding::Same) == 5);
    CHECK(conv_out_extent(5, 3, 2, Padding::Same) == 3);
    CHECK(conv_out_extent(5, 2, 2, Padding::Same) == 3);
    CHECK(conv_out_extent(5, 3, 1, Padding::Valid) == 3);
    CHECK(conv_out_extent(5, 3, 2, Padding::Valid) == 2);
    CHECK(conv_out_extent(5, 2, 2, Padding::Valid) == 2);
    CHECK(conv_out_extent(96, 3, 2, Padding::Same) == 48);

    // same padding puts the extra cell after, never before
    CHECK(pad_before(3, 3, 2, 1, Padding::Same) == 0);  // total pad 1 -> (0, 1)
    CHECK(pad_before(5, 5, 3, 1, Padding::Same) == 1);  // total pad 2 -> (1, 1)
    CHECK(pad_before(3, 2, 2, 2, Padding::Same) == 0);  // total pad 1 -> (0, 1)
    CHECK(pad_before(5, 3, 3, 2, Padding::Valid) == 0);
}

// ---------------------------------------------------------------------------
// conv2d

TEST_CASE("conv2d forward by hand, valid and asymmetric same padding") {
    DTensor x({1, 3, 3, 1}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
    DTensor k({2, 2, 1, 1}, {1, 0, 0, 1}); // picks x[i][j] + x[i+1][j+1]
    DTensor b({1}, {10});

    const DTensor valid = conv2d_forward(x, k, &b, 1, Padding::Valid);
    REQUIRE(valid.dims() == std::vector<std::int64_t>{1, 2, 2, 1});
    CHECK(valid[0] == 16); // 1+5+10
    CHECK(valid[1] == 18); // 2+6+10
    CHECK(valid[2] == 22); // 4+8+10
    CHECK(valid[3] == 24); // 5+9+10

    // same with k=2, s=1 pads one row/col after only: windows anchored at (i, j)
    const DTensor same = conv2d_forward(x, k, &b, 1, Padding::Same);
    REQUIRE(same.dims() == std::vector<std::int64_t>{1, 3, 3, 1});
    CHECK(same[0] == 16);                 // interior, same as valid
    CHECK(same.at(0, 0, 2, 0) == 3 + 10); // right edge: only x[0][2] in window
    CHECK(same.at(0, 2, 2, 0) == 9 + 10); // corner: only x[2][2]

    // stride 2 same on 3 -> out 2, pad total 1 after: window rows {0, 2}
    const DTensor s2 = conv2d_forward(x, k, &b, 2, Padding::Same);
    REQUIRE(s2.dims() == std::vector<std::int64_t>{1, 2, 2, 1});
    CHECK(s2.at(0, 0, 0, 0) == 1 + 5 + 10);
    CHECK(s2.at(0, 1, 1, 0) == 9 + 10); // anchored at (2,2), rest out of range
}

TEST_CASE("conv2d gradients match finite differences") {
    struct Cfg {
        std::int64_t stride;
        Padding pad;
        bool bias;
    };
    const Cfg cfgs[] = {{1, Padding::Same, true},
                        {2, Padding::Same, false},
                        {1, Padding::Valid, true},
                        {2, Padding::Valid, true}};
    for (std::uint64_t seed : kSeeds) {
        for (const Cfg& c : cfgs) {
            SeededRng rng(seed * 1000 + c.stride + (c.pad == Padding::Same ? 7 : 0));
            DTensor x = random_tensor({2, 5, 6, 3}, rng);
            DTensor k = random_tensor({3, 3, 3, 4}, rng, 0.5);
            DTensor b = random_tensor({4}, rng, 0.5);
            DTensor* bp = c.bias ? &b : nullptr;
            const DTensor y0 = conv2d_forward(x, k, bp, c.stride, c.pad);
            const DTensor w = random_tensor(y0.dims(), rng);
            auto scalar = [&] { return dot(w, conv2d_forward(x, k, bp, c.stride, c.pad)); };
            const ConvGrads<double> g = conv2d_backward(x, k, c.bias, c.stride, c.pad, w);
            check_report(fd_compare(x, scalar, g.dx), "conv2d dx", seed);
            check_report(fd_compare(k, scalar, g.dkernel), "conv2d dkernel", seed);
            if (c.bias) {
                check_report(fd_compare(b, scalar, g.dbias), "conv2d dbias", seed);
            } else {
                CHECK(g.dbias.empty());
            }
        }
    }
}

// ---------------------------------------------------------------------------
// depthwise conv

TEST_CASE("depthwise conv gradients match finite differences") {
    struct Cfg {
        std::int64_t stride;
        Padding pad;
        bool bias;
    };
    const Cfg cfgs[] = {{1, Padding::Same, true}, {2, Padding::Same, true}, {1, Padding::Valid, false}};
    for (std::uint64_t seed : kSeeds) {
        for (const Cfg& c : cfgs) {
            SeededRng rng(seed * 2000 + c.stride);
            DTensor x = random_tensor({2, 5, 5, 3}, rng);
            DTensor k = random_tensor({3, 3, 3}, rng, 0.5);
            DTensor b = random_tensor({3}, rng, 0.5);
            DTensor* bp = c.bias ? &b : nullptr;
            const DTensor y0 = depthwise_forward(x, k, bp, c.stride, c.pad);
            const DTensor w = random_tensor(y0.dims(), rng);
            auto scalar = [&] { return dot(w, depthwise_forward(x, k, bp, c.stride, c.pad)); };
            const ConvGrads<double> g = depthwise_backward(x, k, c.bias, c.stride, c.pad, w);
            check_report(fd_compare(x, scalar, g.dx), "depthwise dx", seed);
            check_report(fd_compare(k, scalar, g.dkernel), "depthwise dkernel", seed);
            if (c.bias) check_report(fd_compare(b, scalar, g.dbias), "depthwise dbias", seed);
        }
    }
}

TEST_CASE("depthwise conv keeps channels independent") {
    SeededRng rng(9);
    DTensor x = random_tensor({1, 4, 4, 2}, rng);
    DTensor k({3, 3, 2});
    for (std::int64_t i = 0; i < 9; ++i) k[i * 2] = 1.0; // channel 0: box filter, channel 1: zeros
    const DTensor y = depthwise_forward(x, k, static_cast<const DTensor*>(nullptr), 1,
                                        Padding::Same);
    for (std::int64_t i = 0; i < y.size() / 2; ++i) CHECK(y[i * 2 + 1] == 0.0);
}

// ---------------------------------------------------------------------------
// dense

TEST_CASE("dense gradients match finite differences") {
    for (std::uint64_t seed : kSeeds) {
        for (bool bias : {true, false}) {
            SeededRng rng(seed * 3000 + (bias ? 1 : 0));
            DTensor x = random_tensor({3, 7}, rng);
            DTensor k = random_tensor({7, 4}, rng, 0.5);
            DTensor b = random_tensor({4}, rng, 0.5);
            DTensor* bp = bias ? &b : nullptr;
            const DTensor w = random_tensor({3, 4}, rng);
            auto scalar = [&] { return dot(w, dense_forward(x, k, bp)); };
            const ConvGrads<double> g = dense_backward(x, k, bias, w);
            check_report(fd_compare(x, scalar, g.dx), "dense dx", seed);
            check_report(fd_compare(k, scalar, g.dkernel), "dense dkernel", seed);
            if (bias) check_report(fd_compare(b, scalar, g.dbias), "dense dbias", seed);
        }
    }
}

TEST_CASE("dense forward by hand") {
    DTensor x({1, 2}, {1, 2});
    DTensor k({2, 3}, {1, 2, 3, 4, 5, 6});
    DTensor b({3}, {10, 20, 30});
    const DTensor y = dense_forward(x, k, &b);
    CHECK(y[0] == 1 * 1 + 2 * 4 + 10);
    CHECK(y[1] == 1 * 2 + 2 * 5 + 20);
    CHECK(y[2] == 1 * 3 + 2 * 6 + 30);
}

// ---------------------------------------------------------------------------
// batch norm

TEST_CASE("batch norm training statistics are biased, by hand") {
    DTensor x({2, 1, 1, 1}, {1, 3});
    DTensor gamma({1}, {1});
    DTensor beta({1}, {0});
    const double eps = 1e-3;
    BatchNormCache<double> cache;
    const DTensor y = batchnorm_forward_train(x, gamma, beta, eps, &cache);
    CHECK(cache.mean[0] == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(cache.var[0] == doctest::Approx(1.0).epsilon(1e-12)); // /N, not /(N-1)
    CHECK(y[0] == doctest::Approx(-1.0 / std::sqrt(1.0 + eps)).epsilon(1e-12));
    CHECK(y[1] == doctest::Approx(+1.0 / std::sqrt(1.0 + eps)).epsilon(1e-12));

    DTensor mm({1}, {0.5}), mv({1}, {2.0});
    batchnorm_update_running(mm, mv, cache, 0.99);
    CHECK(mm[0] == doctest::Approx(0.99 * 0.5 + 0.01 * 2.0).epsilon(1e-12));
    CHECK(mv[0] == doctest::Approx(0.99 * 2.0 + 0.01 * 1.0).epsilon(1e-12));
}

TEST_CASE("batch norm training gradients match finite differences") {
    const double eps = 1e-3;
    for (std::uint64_t seed : kSeeds) {
        SeededRng rng(seed * 4000);
        DTensor x = random_tensor({3, 2, 2, 4}, rng);
        DTensor gamma = random_tensor({4}, rng, 0.3, 1.0);
        DTensor beta = random_tensor({4}, rng, 0.3);
        const DTensor w = random_tensor({3, 2, 2, 4}, rng);
        BatchNormCache<double> scratch;
        auto scalar = [&] {
            return dot(w, batchnorm_forward_train(x, gamma, beta, eps, &scratch));
        };
        BatchNormCache<double> cache;
        batchnorm_forward_train(x, gamma, beta, eps, &cache);
        const BatchNormGrads<double> g = batchnorm_backward_train(x, gamma, cache, eps, w);
        check_report(fd_compare(x, scalar, g.dx), "batchnorm train dx", seed);
        check_report(fd_compare(gamma, scalar, g.dgamma), "batchnorm train dgamma", seed);
        check_report(fd_compare(beta, scalar, g.dbeta), "batchnorm train dbeta", seed);
    }
}

TEST_CASE("batch norm inference gradients match finite differences") {
    const double eps = 1e-3;
    for (std::uint64_t seed : kSeeds) {
        SeededRng rng(seed * 5000);
        DTensor x = random_tensor({2, 3, 3, 3}, rng);
        DTensor gamma = random_tensor({3}, rng, 0.3, 1.0);
        DTensor beta = random_tensor({3}, rng, 0.3);
        DTensor mm = random_tensor({3}, rng, 0.5);
        DTensor mv = random_tensor({3}, rng, 0.2, 1.5); // stays well positive
        const DTensor w = random_tensor({2, 3, 3, 3}, rng);
        auto scalar = [&] {
            return dot(w, batchnorm_forward_infer(x, gamma, beta, mm, mv, eps));
        };
        const BatchNormGrads<double> g = batchnorm_backward_infer(x, gamma, mm, mv, eps, w);
        check_report(fd_compare(x, scalar, g.dx), "batchnorm infer dx", seed);
        check_report(fd_compare(gamma, scalar, g.dgamma), "batchnorm infer dgamma", seed);
        check_report(fd_compare(beta, scalar, g.dbeta), "batchnorm infer dbeta", seed);
    }
}

// ---------------------------------------------------------------------------
// activations

TEST_CASE("relu gradients match finite differences away from the kink") {
    for (std::uint64_t seed : kSeeds) {
        SeededRng rng(seed * 6000);
        DTensor x = random_tensor_away_from_zero({2, 4, 4, 3}, rng);
        const DTensor w = random_tensor({2, 4, 4, 3}, rng);
        auto scalar = [&] { return dot(w, relu_forward(x)); };
        const DTensor dx = relu_backward(x, w);
        check_report(fd_compare(x, scalar, dx), "relu dx", seed);
    }
}

TEST_CASE("softmax rows are distributions and gradients match finite differences") {
    for (std::uint64_t seed : kSeeds) {
        SeededRng rng(seed * 7000);
        DTensor x = random_tensor({3, 5}, rng);
        const DTensor y = softmax_forward(x);
        for (std::int64_t b = 0; b < 3; ++b) {
            double s = 0.0;
            for (std::int64_t k = 0; k < 5; ++k) {
                CHECK(y.at(b, k) > 0.0);
                s += y.at(b, k);
            }
            CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
        }
        const DTensor w = random_tensor({3, 5}, rng);
        auto scalar = [&] { return dot(w, softmax_forward(x)); };
        const DTensor dx = softmax_backward(y, w);
        check_report(fd_compare(x, scalar, dx), "softmax dx", seed);
    }
}

TEST_CASE("softmax is shift invariant") {
    DTensor x({1, 3}, {1.0, 2.0, 3.0});
    DTensor xs({1, 3}, {1001.0, 1002.0, 1003.0});
    const DTensor a = softmax_forward(x);
    const DTensor b = softmax_forward(xs);
    for (std::int64_t i = 0; i < 3; ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-12));
}

// ---------------------------------------------------------------------------
// pooling

TEST_CASE("max pool routes gradient to the first maximum in row-major order") {
    DTensor x({1, 2, 2, 1}, {7, 7, 7, 7});
    DTensor dy({1, 1, 1, 1}, {1});
    const DTensor dx = maxpool_backward(x, 2, 2, 2, Padding::Valid, dy);
    CHECK(dx[0] == 1.0);
    CHECK(dx[1] == 0.0);
    CHECK(dx[2] == 0.0);
    CHECK(dx[3] == 0.0);
}

TEST_CASE("max pool gradients match finite differences") {
    struct Cfg {
        std::int64_t k, stride;
        Padding pad;
    };
    const Cfg cfgs[] = {{2, 2, Padding::Same}, {3, 2, Padding::Valid}, {2, 1, Padding::Same}};
    for (std::uint64_t seed : kSeeds) {
        for (const Cfg& c : cfgs) {
            SeededRng rng(seed * 8000 + c.k * 10 + c.stride);
            DTensor x = random_tensor({2, 5, 5, 3}, rng);
            const DTensor y0 = maxpool_forward(x, c.k, c.k, c.stride, c.pad);
            const DTensor w = random_tensor(y0.dims(), rng);
            auto scalar = [&] { return dot(w, maxpool_forward(x, c.k, c.k, c.stride, c.pad)); };
            const DTensor dx = maxpool_backward(x, c.k, c.k, c.stride, c.pad, w);
            check_report(fd_compare(x, scalar, dx), "maxpool dx", seed);
        }
    }
}

TEST_CASE("avg pool with same padding divides by the valid cell count") {
    const DTensor x = DTensor::full({1, 3, 3, 1}, 1.0);
    const DTensor y = avgpool_forward(x, 2, 2, 2, Padding::Same);
    REQUIRE(y.dims() == std::vector<std::int64_t>{1, 2, 2, 1});
    for (std::int64_t i = 0; i < 4; ++i) CHECK(y[i] == 1.0); // padded cells are not counted
}

TEST_CASE("avg pool gradients match finite differences") {
    struct Cfg {
        std::int64_t k, stride;
        Padding pad;
    };
    const Cfg cfgs[] = {{2, 2, Padding::Same}, {3, 1, Padding::Valid}};
    for (std::uint64_t seed : kSeeds) {
        for (const Cfg& c : cfgs) {
            SeededRng rng(seed * 9000 + c.k);
            DTensor x = random_tensor({2, 5, 5, 3}, rng);
            const DTensor y0 = avgpool_forward(x, c.k, c.k, c.stride, c.pad);
            const DTensor w = random_tensor(y0.dims(), rng);
            auto scalar = [&] { return dot(w, avgpool_forward(x, c.k, c.k, c.stride, c.pad)); };
            const DTensor dx = avgpool_backward(x, c.k, c.k, c.stride, c.pad, w);
            check_report(fd_compare(x, scalar, dx), "avgpool dx", seed);
        }
    }
}

TEST_CASE("global average pool gradients match finite differences") {
    for (std::uint64_t seed : kSeeds) {
        SeededRng rng(seed * 10000);
        DTensor x = random_tensor({2, 4, 5, 3}, rng);
        const DTensor w = random_tensor({2, 1, 1, 3}, rng);
        auto scalar = [&] { return dot(w, global_avgpool_forward(x)); };
        const DTensor dx = global_avgpool_backward(x, w);
        check_report(fd_compare(x, scalar, dx), "global avgpool dx", seed);
    }
}

// ---------------------------------------------------------------------------
// structural ops

TEST_CASE("upsample2x forward repeats pixels and gradients match finite differences") {
    DTensor t({1, 2, 2, 1}, {1, 2, 3, 4});
    const DTensor up = upsample2x_forward(t);
    REQUIRE(up.dims() == std::vector<std::int64_t>{1, 4, 4, 1});
    CHECK(up.at(0, 0, 0, 0) == 1);
    CHECK(up.at(0, 0, 1, 0) == 1);
    CHECK(up.at(0, 1, 1, 0) == 1);
    CHECK(up.at(0, 2, 3, 0) == 4);

    for (std::uint64_t seed : kSeeds) {
        SeededRng rng(seed * 11000);
        DTensor x = random_tensor({2, 3, 4, 2}, rng);
        const DTensor w = random_tensor({2, 6, 8, 2}, rng);
        auto scalar = [&] { return dot(w, upsample2x_forward(x)); };
        const DTensor dx = upsample2x_backward(x, w);
        check_report(fd_compare(x, scalar, dx), "upsample2x dx", seed);
    }
}

TEST_CASE("add and concat gradients match finite differences") {
    for (std::uint64_t seed : kSeeds) {
        SeededRng rng(seed * 12000);
        DTensor a = random_tensor({2, 3, 3, 4}, rng);
        DTensor b = random_tensor({2, 3, 3, 4}, rng);
        const DTensor w = random_tensor({2, 3, 3, 4}, rng);
        auto scalar_add = [&] { return dot(w, add_forward(a, b)); };
        // d(add)/da = d(add)/db = identity, so both analytic grads equal w
        check_report(fd_compare(a, scalar_add, w), "add da", seed);
        check_report(fd_compare(b, scalar_add, w), "add db", seed);

        DTensor c1 = random_tensor({2, 3, 3, 2}, rng);
        DTensor c2 = random_tensor({2, 3, 3, 3}, rng);
        DTensor c3 = random_tensor({2, 3, 3, 1}, rng);
        const std::vector<const DTensor*> xs = {&c1, &c2, &c3};
        const DTensor y0 = concat_forward(xs);
        REQUIRE(y0.dims() == std::vector<std::int64_t>{2, 3, 3, 6});
        const DTensor wc = random_tensor(y0.dims(), rng);
        auto scalar_cat = [&] { return dot(wc, concat_forward(xs)); };
        const std::vector<DTensor> g = concat_backward(xs, wc);
        check_report(fd_compare(c1, scalar_cat, g[0]), "concat dx0", seed);
        check_report(fd_compare(c2, scalar_cat, g[1]), "concat dx1", seed);
        check_report(fd_compare(c3, scalar_cat, g[2]), "concat dx2", seed);
    }
}

TEST_CASE("concat interleaves channels per spatial cell") {
    DTensor a({1, 1, 2, 1}, {1, 3});
    DTensor b({1, 1, 2, 2}, {10, 11, 30, 31});
    const DTensor y = concat_forward(std::vector<const DTensor*>{&a, &b});
    REQUIRE(y.dims() == std::vector<std::int64_t>{1, 1, 2, 3});
    CHECK(y[0] == 1);
    CHECK(y[1] == 10);
    CHECK(y[2] == 11);
    CHECK(y[3] == 3);
    CHECK(y[4] == 30);
    CHECK(y[5] == 31);
}

// ---------------------------------------------------------------------------
// losses

TEST_CASE("cross entropy by hand") {
    DTensor p({1, 2}, {0.7, 0.3});
    const LossResult<double> r = cross_entropy_loss(p, {0});
    CHECK(r.value == doctest::Approx(-std::log(0.7)).epsilon(1e-12));
    CHECK(r.grad[0] == doctest::Approx(-1.0 / 0.7).epsilon(1e-12));
    CHECK(r.grad[1] == 0.0);

    DTensor p2({2, 2}, {0.7, 0.3, 0.2, 0.8});
    const LossResult<double> r2 = cross_entropy_loss(p2, {0, 1});
    CHECK(r2.value == doctest::Approx(-(std::log(0.7) + std::log(0.8)) / 2.0).epsilon(1e-12));
    CHECK(r2.grad[0] == doctest::Approx(-1.0 / 0.7 / 2.0).epsilon(1e-12));
    CHECK(r2.grad[3] == doctest::Approx(-1.0 / 0.8 / 2.0).epsilon(1e-12));

    CHECK_THROWS_AS(cross_entropy_loss(p, {2}), ShapeError);
    CHECK_THROWS_AS(cross_entropy_loss(p, {0, 1}), ShapeError);
}

TEST_CASE("cross entropy clamps predictions before the log") {
    DTensor p({1, 2}, {0.0, 1.0});
    const LossResult<double> r = cross_entropy_loss(p, {0});
    CHECK(r.value == doctest::Approx(-std::log(1e-7)).epsilon(1e-9));
    CHECK(std::isfinite(r.grad[0]));
}

TEST_CASE("cross entropy gradients match finite differences") {
    for (std::uint64_t seed : kSeeds) {
        SeededRng rng(seed * 13000);
        DTensor p = random_tensor({3, 5}, rng, 0.1, 0.5); // stays inside (0.2, 0.8)-ish
        std::vector<std::int64_t> targets;
        for (int b = 0; b < 3; ++b) targets.push_back(rng.uniform_int(5));
        auto scalar = [&] { return cross_entropy_loss(p, targets).value; };
        const LossResult<double> r = cross_entropy_loss(p, targets);
        check_report(fd_compare(p, scalar, r.grad), "cross entropy dpred", seed);
    }
}

TEST_CASE("softmax feeding cross entropy matches finite differences end to end") {
    for (std::uint64_t seed : kSeeds) {
        SeededRng rng(seed * 14000);
        DTensor logits = random_tensor({4, 6}, rng);
        std::vector<std::int64_t> targets;
        for (int b = 0; b < 4; ++b) targets.push_back(rng.uniform_int(6));
        auto scalar = [&] {
            return cross_entropy_loss(softmax_forward(logits), targets).value;
        };
        const DTensor y = softmax_forward(logits);
        const LossResult<double> r = cross_entropy_loss(y, targets);
        const DTensor dlogits = softmax_backward(y, r.grad);
        check_report(fd_compare(logits, scalar, dlogits), "softmax+ce dlogits", seed);
    }
}

TEST_CASE("mse by hand and against finite differences") {
    DTensor p({1, 2}, {1.0, 2.0});
    DTensor t({1, 2}, {0.0, 4.0});
    const LossResult<double> r = mse_loss(p, t);
    CHECK(r.value == doctest::Approx((1.0 + 4.0) / 2.0).epsilon(1e-12));
    CHECK(r.grad[0] == doctest::Approx(2.0 * 1.0 / 2.0).epsilon(1e-12));
    CHECK(r.grad[1] == doctest::Approx(2.0 * -2.0 / 2.0).epsilon(1e-12));

    for (std::uint64_t seed : kSeeds) {
        SeededRng rng(seed * 15000);
        DTensor pred = random_tensor({3, 4, 4, 2}, rng);
        const DTensor target = random_tensor({3, 4, 4, 2}, rng);
        auto scalar = [&] { return mse_loss(pred, target).value; };
        const LossResult<double> rr = mse_loss(pred, target);
        check_report(fd_compare(pred, scalar, rr.grad), "mse dpred", seed);
    }
}

// ---------------------------------------------------------------------------
// Adam

TEST_CASE("adam first steps replicate the update formula exactly") {
    AdamConfig cfg; // defaults: lr 1e-3, b1 0.9, b2 0.999, eps 1e-7
    AdamState<double> adam(cfg);
    TensorT<double> p({2}, {1.0, -2.0});
    const TensorT<double> g1({2}, {0.5, -0.25});
    const TensorT<double> g2({2}, {-0.125, 1.0});

    double m[2] = {0, 0}, v[2] = {0, 0}, ref[2] = {1.0, -2.0};
    auto hand_step = [&](const TensorT<double>& g, int t) {
        const double c1 = 1.0 - std::pow(cfg.beta1, t);
        const double c2 = 1.0 - std::pow(cfg.beta2, t);
        for (int j = 0; j < 2; ++j) {
            m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
            v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
            ref[j] -= cfg.learning_rate * (m[j] / c1) / (std::sqrt(v[j] / c2) + cfg.epsilon);
        }
    };

    adam.update({&p}, {&g1});
    hand_step(g1, 1);
    CHECK(adam.step() == 1);
    CHECK(p[0] == doctest::Approx(ref[0]).epsilon(1e-15));
    CHECK(p[1] == doctest::Approx(ref[1]).epsilon(1e-15));

    adam.update({&p}, {&g2});
    hand_step(g2, 2);
    CHECK(adam.step() == 2);
    CHECK(p[0] == doctest::Approx(ref[0]).epsilon(1e-15));
    CHECK(p[1] == doctest::Approx(ref[1]).epsilon(1e-15));
}

TEST_CASE("adam adds epsilon outside the square root") {
    // With a tiny constant gradient g, vhat = g^2 exactly, so the step is
    // lr*g/(g + eps) under the outside convention but lr*g/sqrt(g^2 + eps)
    // under the inside one -- about 31000x smaller for g = 1e-8.
    AdamState<double> adam({0.001, 0.9, 0.999, 1e-7});
    TensorT<double> p({1}, {0.0});
    const TensorT<double> g({1}, {1e-8});
    adam.update({&p}, {&g});
    const double outside = 0.001 * 1e-8 / (1e-8 + 1e-7);
    CHECK(-p[0] == doctest::Approx(outside).epsilon(1e-9));
    const double inside = 0.001 * 1e-8 / std::sqrt(1e-16 + 1e-7);
    CHECK(std::abs(-p[0] - inside) > 100 * inside);
}

TEST_CASE("adam keeps one shared step counter across parameters") {
    AdamState<double> adam;
    TensorT<double> a({1}, {1.0}), b({3}, {1.0, 2.0, 3.0});
    const TensorT<double> ga({1}, {1.0}), gb({3}, {1.0, 1.0, 1.0});
    adam.update({&a, &b}, {&ga, &gb});
    CHECK(adam.step() == 1);
    // with constant gradient 1: mhat = vhat = 1 after bias correction
    CHECK(a[0] == doctest::Approx(1.0 - 0.001 * 1.0 / (1.0 + 1e-7)).epsilon(1e-12));
    CHECK(b[0] == doctest::Approx(a[0]).epsilon(1e-15));

    adam.update({&a, &b}, {&ga, &gb});
    CHECK(adam.step() == 2);
    CHECK(b[0] == doctest::Approx(a[0]).epsilon(1e-15));

    // changing the parameter count afterwards is an error
    CHECK_THROWS_AS(adam.update({&a}, {&ga}), ShapeError);
}

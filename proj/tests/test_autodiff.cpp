// Finite-difference gradient checks for every autodiff op, plus tape
// semantics (no-grad mode, detach, accumulation, deterministic ordering).
//
// Methodology: most ops are (piece-wise) linear in each argument, so a
// central difference is exact in real arithmetic as long as the step does
// not cross a kink; inputs are kept away from kinks (|x| >= 0.2 for
// relu/abs, fractional warp coordinates in [0.2, 0.8]) and the remaining
// error is float rounding. Smooth nonlinear ops (tanh, instance norm,
// spectral scale) use a smaller step and a modest tolerance.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <functional>
#include <vector>

#include "doctest.h"
#include "headgan/autodiff.hpp"
#include "headgan/rng.hpp"
#include "headgan/tensor.hpp"

using headgan::Rng;
using headgan::Tensor;
namespace ad = headgan::ad;

namespace {

Tensor random_tensor(std::vector<int> shape, Rng& rng, float lo = -1.0f, float hi = 1.0f) {
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.numel(); ++i)
        t[i] = static_cast<float>(rng.uniform(lo, hi));
    return t;
}

// Random values bounded away from zero: |x| in [margin, 1].
Tensor random_away_from_zero(std::vector<int> shape, Rng& rng, float margin) {
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.numel(); ++i) {
        const float mag = margin + (1.0f - margin) * static_cast<float>(rng.uniform());
        t[i] = rng.uniform() < 0.5 ? -mag : mag;
    }
    return t;
}

float eval_loss(const std::function<ad::Var()>& f) {
    ad::NoGradGuard guard;
    return f().scalar();
}

// Analytic gradient of f() w.r.t. p, recomputed from a fresh forward pass.
Tensor analytic_grad(ad::Var& p, const std::function<ad::Var()>& f) {
    p.zero_grad();
    ad::Var loss = f();
    ad::backward(loss);
    REQUIRE(p.has_grad());
    return p.grad();
}

// Central-difference check of every element of p against the tape gradient.
void check_grad(ad::Var& p, const std::function<ad::Var()>& f, float h, float tol,
                const char* what) {
    INFO("op under test: " << what);
    const Tensor g = analytic_grad(p, f);
    REQUIRE(g.same_shape(p.value()));
    double gmax = 1.0;
    for (std::size_t i = 0; i < g.numel(); ++i) gmax = std::max(gmax, std::abs(static_cast<double>(g[i])));
    double worst = 0.0;
    for (std::size_t i = 0; i < p.value().numel(); ++i) {
        const float orig = p.value_mut()[i];
        p.value_mut()[i] = orig + h;
        const double lp = eval_loss(f);
        p.value_mut()[i] = orig - h;
        const double lm = eval_loss(f);
        p.value_mut()[i] = orig;
        const double fd = (lp - lm) / (2.0 * static_cast<double>(h));
        worst = std::max(worst, std::abs(fd - static_cast<double>(g[i])));
    }
    CHECK(worst <= tol * gmax);
}

// Wraps an op output y into scalar mean(y * C) with a fixed random cotangent
// C, so the upstream gradient reaching the op is non-uniform.
struct Probe {
    ad::Var cot;
    explicit Probe(const Tensor& like, std::uint64_t seed) {
        Rng rng(seed);
        Tensor c = random_tensor(like.shape(), rng, 0.25f, 1.0f);
        cot = ad::Var::constant(std::move(c));
    }
    ad::Var loss(const ad::Var& y) const { return ad::mean_all(ad::mul(y, cot)); }
};

}  // namespace

TEST_CASE("elementwise add/sub/mul/affine gradients") {
    Rng rng(21);
    ad::Var a = ad::Var::param(random_tensor({2, 3, 4}, rng));
    ad::Var b = ad::Var::param(random_tensor({2, 3, 4}, rng));
    Probe pr(a.value(), 91);

    check_grad(a, [&] { return pr.loss(ad::add(a, b)); }, 0.05f, 2e-3f, "add/a");
    check_grad(b, [&] { return pr.loss(ad::add(a, b)); }, 0.05f, 2e-3f, "add/b");
    check_grad(a, [&] { return pr.loss(ad::sub(a, b)); }, 0.05f, 2e-3f, "sub/a");
    check_grad(b, [&] { return pr.loss(ad::sub(a, b)); }, 0.05f, 2e-3f, "sub/b");
    check_grad(a, [&] { return pr.loss(ad::mul(a, b)); }, 0.05f, 3e-3f, "mul/a");
    check_grad(b, [&] { return pr.loss(ad::mul(a, b)); }, 0.05f, 3e-3f, "mul/b");
    check_grad(a, [&] { return pr.loss(ad::affine(a, -1.75f, 0.4f)); }, 0.05f, 2e-3f, "affine");
}

TEST_CASE("activation gradients away from kinks") {
    Rng rng(22);
    ad::Var x = ad::Var::param(random_away_from_zero({3, 4, 4}, rng, 0.2f));
    Probe pr(x.value(), 92);

    check_grad(x, [&] { return pr.loss(ad::relu(x)); }, 0.05f, 2e-3f, "relu");
    check_grad(x, [&] { return pr.loss(ad::leaky_relu(x, 0.2f)); }, 0.05f, 2e-3f, "leaky_relu");
    check_grad(x, [&] { return pr.loss(ad::abs_act(x)); }, 0.05f, 2e-3f, "abs");
    check_grad(x, [&] { return pr.loss(ad::tanh_act(x)); }, 0.01f, 6e-3f, "tanh");
}

TEST_CASE("reduction gradients are exact") {
    Rng rng(23);
    ad::Var x = ad::Var::param(random_tensor({2, 5, 3}, rng));
    const float n = static_cast<float>(x.value().numel());

    x.zero_grad();
    ad::backward(ad::mean_all(x));
    for (std::size_t i = 0; i < x.grad().numel(); ++i)
        CHECK(x.grad()[i] == doctest::Approx(1.0f / n).epsilon(1e-6));

    x.zero_grad();
    ad::backward(ad::sum_all(x));
    for (std::size_t i = 0; i < x.grad().numel(); ++i) CHECK(x.grad()[i] == 1.0f);
}

TEST_CASE("conv2d gradients: input, weight, bias; stride 1 and 2") {
    Rng rng(24);
    for (const int stride : {1, 2}) {
        CAPTURE(stride);
        ad::Var x = ad::Var::param(random_tensor({3, 6, 6}, rng));
        ad::Var w = ad::Var::param(random_tensor({4, 3, 3, 3}, rng, -0.5f, 0.5f));
        ad::Var b = ad::Var::param(random_tensor({4}, rng));
        Tensor shape_probe;
        {
            ad::NoGradGuard guard;
            shape_probe = ad::conv2d(x, w, b, stride, 1).value();
        }
        Probe pr(shape_probe, 93);
        auto f = [&] { return pr.loss(ad::conv2d(x, w, b, stride, 1)); };
        check_grad(x, f, 0.05f, 4e-3f, "conv2d/x");
        check_grad(w, f, 0.05f, 4e-3f, "conv2d/w");
        check_grad(b, f, 0.05f, 4e-3f, "conv2d/b");
    }
}

TEST_CASE("linear gradients") {
    Rng rng(25);
    ad::Var x = ad::Var::param(random_tensor({5}, rng));
    ad::Var w = ad::Var::param(random_tensor({4, 5}, rng));
    ad::Var b = ad::Var::param(random_tensor({4}, rng));
    Probe pr(Tensor({4}), 94);
    auto f = [&] { return pr.loss(ad::linear(x, w, b)); };
    check_grad(x, f, 0.05f, 2e-3f, "linear/x");
    check_grad(w, f, 0.05f, 2e-3f, "linear/w");
    check_grad(b, f, 0.05f, 2e-3f, "linear/b");
}

TEST_CASE("instance_norm gradient") {
    Rng rng(26);
    ad::Var x = ad::Var::param(random_tensor({2, 4, 4}, rng));
    Probe pr(x.value(), 95);
    auto f = [&] { return pr.loss(ad::instance_norm(x, 1e-5f)); };
    check_grad(x, f, 0.01f, 2e-2f, "instance_norm");
}

TEST_CASE("chan_affine and spatial_affine gradients") {
    Rng rng(27);
    ad::Var x = ad::Var::param(random_tensor({3, 4, 4}, rng));
    ad::Var gc = ad::Var::param(random_tensor({3}, rng));
    ad::Var bc = ad::Var::param(random_tensor({3}, rng));
    Probe pr(x.value(), 96);
    auto fc = [&] { return pr.loss(ad::chan_affine(x, gc, bc)); };
    check_grad(x, fc, 0.05f, 3e-3f, "chan_affine/x");
    check_grad(gc, fc, 0.05f, 3e-3f, "chan_affine/gamma");
    check_grad(bc, fc, 0.05f, 3e-3f, "chan_affine/beta");

    ad::Var gs = ad::Var::param(random_tensor({3, 4, 4}, rng));
    ad::Var bs = ad::Var::param(random_tensor({3, 4, 4}, rng));
    auto fs = [&] { return pr.loss(ad::spatial_affine(x, gs, bs)); };
    check_grad(x, fs, 0.05f, 3e-3f, "spatial_affine/x");
    check_grad(gs, fs, 0.05f, 3e-3f, "spatial_affine/gamma");
    check_grad(bs, fs, 0.05f, 3e-3f, "spatial_affine/beta");
}

TEST_CASE("pixel_shuffle forward layout and gradient") {
    // Forward oracle: out(c, y*r+dy, x*r+dx) = in(c*r*r + dy*r + dx, y, x).
    Tensor in({4, 2, 2});
    for (std::size_t i = 0; i < in.numel(); ++i) in[i] = static_cast<float>(i);
    {
        ad::NoGradGuard guard;
        Tensor out = ad::pixel_shuffle(ad::Var::constant(in), 2).value();
        REQUIRE(out.dim(0) == 1);
        REQUIRE(out.dim(1) == 4);
        REQUIRE(out.dim(2) == 4);
        for (int y = 0; y < 2; ++y)
            for (int x = 0; x < 2; ++x)
                for (int dy = 0; dy < 2; ++dy)
                    for (int dx = 0; dx < 2; ++dx)
                        CHECK(out.at(0, y * 2 + dy, x * 2 + dx) == in.at(dy * 2 + dx, y, x));
    }

    Rng rng(28);
    ad::Var x = ad::Var::param(random_tensor({8, 3, 3}, rng));
    Probe pr(Tensor({2, 6, 6}), 97);
    check_grad(x, [&] { return pr.loss(ad::pixel_shuffle(x, 2)); }, 0.05f, 2e-3f, "pixel_shuffle");
}

TEST_CASE("avg_pool2 forward average and gradient") {
    Tensor in({1, 2, 2});
    in[0] = 1.0f; in[1] = 2.0f; in[2] = 3.0f; in[3] = 6.0f;
    {
        ad::NoGradGuard guard;
        Tensor out = ad::avg_pool2(ad::Var::constant(in)).value();
        REQUIRE(out.numel() == 1);
        CHECK(out[0] == doctest::Approx(3.0f));
    }

    Rng rng(29);
    ad::Var x = ad::Var::param(random_tensor({2, 6, 6}, rng));
    Probe pr(Tensor({2, 3, 3}), 98);
    check_grad(x, [&] { return pr.loss(ad::avg_pool2(x)); }, 0.05f, 2e-3f, "avg_pool2");
}

TEST_CASE("bilinear_warp gradients w.r.t. input and flow") {
    Rng rng(30);
    const int h = 6, w = 6;
    ad::Var x = ad::Var::param(random_tensor({2, h, w}, rng));
    // Flow with strictly interior, non-integer sample points: target (y,xx)
    // samples from (xx + dx, y + dy) where the fractional part stays in
    // [0.25, 0.75] and the integer part stays at least 1 px from the border,
    // so a 0.05 FD step never crosses a bilinear kink or the clamp region.
    Tensor flow_init({2, h, w});
    for (int y = 0; y < h; ++y)
        for (int xx = 0; xx < w; ++xx) {
            const double tx = 1 + rng.uniform_int(w - 3) + rng.uniform(0.25, 0.75);
            const double ty = 1 + rng.uniform_int(h - 3) + rng.uniform(0.25, 0.75);
            flow_init.at(0, y, xx) = static_cast<float>(tx - xx);
            flow_init.at(1, y, xx) = static_cast<float>(ty - y);
        }
    ad::Var flow = ad::Var::param(flow_init);
    Probe pr(x.value(), 99);
    auto f = [&] { return pr.loss(ad::bilinear_warp(x, flow)); };
    check_grad(x, f, 0.05f, 3e-3f, "warp/input");
    check_grad(flow, f, 0.05f, 3e-3f, "warp/flow");
}

TEST_CASE("bilinear_warp: saturated flow gets zero gradient") {
    // A flow that points far outside the image is clamped in the forward
    // pass; its gradient must be exactly zero (the clamp is flat).
    Tensor img({1, 4, 4});
    for (std::size_t i = 0; i < img.numel(); ++i) img[i] = static_cast<float>(i) * 0.1f;
    Tensor fl = Tensor::full({2, 4, 4}, 50.0f);
    ad::Var x = ad::Var::constant(img);
    ad::Var flow = ad::Var::param(fl);
    ad::Var loss = ad::sum_all(ad::bilinear_warp(x, flow));
    ad::backward(loss);
    REQUIRE(flow.has_grad());
    for (std::size_t i = 0; i < flow.grad().numel(); ++i) CHECK(flow.grad()[i] == 0.0f);
}

TEST_CASE("concat_ch, crop, tile_vector gradients") {
    Rng rng(31);
    ad::Var a = ad::Var::param(random_tensor({2, 4, 4}, rng));
    ad::Var b = ad::Var::param(random_tensor({3, 4, 4}, rng));
    Probe prc(Tensor({5, 4, 4}), 100);
    auto fcat = [&] { return prc.loss(ad::concat_ch({a, b})); };
    check_grad(a, fcat, 0.05f, 2e-3f, "concat/a");
    check_grad(b, fcat, 0.05f, 2e-3f, "concat/b");

    ad::Var x = ad::Var::param(random_tensor({2, 6, 6}, rng));
    Probe prk(Tensor({2, 3, 2}), 101);
    check_grad(x, [&] { return prk.loss(ad::crop(x, 1, 2, 3, 2)); }, 0.05f, 2e-3f, "crop");

    ad::Var v = ad::Var::param(random_tensor({3}, rng));
    Probe prt(Tensor({3, 4, 5}), 102);
    check_grad(v, [&] { return prt.loss(ad::tile_vector(v, 4, 5)); }, 0.05f, 2e-3f, "tile_vector");
}

TEST_CASE("spectral_scale gradient") {
    Rng rng(32);
    ad::Var w = ad::Var::param(random_tensor({4, 6}, rng, 0.2f, 1.0f));
    Rng uv(33);
    Tensor u = random_tensor({4}, uv, 0.2f, 1.0f);
    Tensor v = random_tensor({6}, uv, 0.2f, 1.0f);
    Probe pr(w.value(), 103);
    check_grad(w, [&] { return pr.loss(ad::spectral_scale(w, u, v)); }, 0.002f, 2e-2f,
               "spectral_scale");

    // Forward oracle: out = W / (u^T W v).
    {
        ad::NoGradGuard guard;
        double sigma = 0.0;
        for (std::size_t i = 0; i < 4; ++i)
            for (std::size_t j = 0; j < 6; ++j)
                sigma += static_cast<double>(u[i]) * w.value()[i * 6 + j] * v[j];
        Tensor out = ad::spectral_scale(w, u, v).value();
        for (std::size_t k = 0; k < out.numel(); ++k)
            CHECK(out[k] == doctest::Approx(w.value()[k] / sigma).epsilon(1e-4));
    }
}

TEST_CASE("gradient accumulates across backward calls and zero_grad resets") {
    Rng rng(34);
    ad::Var x = ad::Var::param(random_tensor({2, 3, 3}, rng));
    auto run = [&] { ad::backward(ad::sum_all(x)); };
    run();
    Tensor g1 = x.grad();
    run();
    for (std::size_t i = 0; i < g1.numel(); ++i)
        CHECK(x.grad()[i] == doctest::Approx(2.0f * g1[i]));
    x.zero_grad();
    CHECK(!x.has_grad());
}

TEST_CASE("NoGradGuard suppresses recording; detach cuts the graph") {
    Rng rng(35);
    ad::Var x = ad::Var::param(random_tensor({2, 3, 3}, rng));
    {
        ad::NoGradGuard guard;
        CHECK(!ad::grad_enabled());
        ad::Var y = ad::relu(x);
        CHECK(!y.requires_grad());
        ad::backward(ad::sum_all(y));
        CHECK(!x.has_grad());
    }
    CHECK(ad::grad_enabled());

    ad::Var d = x.detach();
    CHECK(!d.requires_grad());
    CHECK(d.value().same_shape(x.value()));
    ad::backward(ad::sum_all(ad::mul(d, d)));
    CHECK(!x.has_grad());

    // The detached value aliases nothing in the tape but must equal x.
    for (std::size_t i = 0; i < d.value().numel(); ++i) CHECK(d.value()[i] == x.value()[i]);
}

TEST_CASE("backward is deterministic on a diamond graph") {
    auto build_and_grad = [] {
        Rng rng(36);
        ad::Var x = ad::Var::param(random_tensor({4, 8, 8}, rng));
        ad::Var shared = ad::instance_norm(x, 1e-5f);
        ad::Var left = ad::relu(shared);
        ad::Var right = ad::tanh_act(shared);
        ad::Var loss = ad::add(ad::mean_all(ad::mul(left, right)), ad::mean_all(shared));
        ad::backward(loss);
        return x.grad();
    };
    Tensor g1 = build_and_grad();
    Tensor g2 = build_and_grad();
    REQUIRE(g1.same_shape(g2));
    for (std::size_t i = 0; i < g1.numel(); ++i) CHECK(g1[i] == g2[i]);
}

TEST_CASE("shape validation throws") {
    ad::Var x = ad::Var::constant(Tensor({3, 6, 6}));
    ad::Var w = ad::Var::constant(Tensor({4, 2, 3, 3}));  // wrong cin
    ad::Var b = ad::Var::constant(Tensor({4}));
    CHECK_THROWS_AS(ad::conv2d(x, w, b, 1, 1), std::invalid_argument);

    CHECK_THROWS_AS(ad::pixel_shuffle(ad::Var::constant(Tensor({6, 4, 4})), 2),
                    std::invalid_argument);
    CHECK_THROWS_AS(ad::avg_pool2(ad::Var::constant(Tensor({1, 5, 4}))), std::invalid_argument);
    CHECK_THROWS_AS(ad::bilinear_warp(ad::Var::constant(Tensor({1, 4, 4})),
                                      ad::Var::constant(Tensor({2, 3, 4}))),
                    std::invalid_argument);
    CHECK_THROWS_AS(ad::concat_ch({ad::Var::constant(Tensor({1, 4, 4})),
                                   ad::Var::constant(Tensor({1, 3, 4}))}),
                    std::invalid_argument);
    CHECK_THROWS_AS(ad::crop(ad::Var::constant(Tensor({1, 4, 4})), 2, 2, 4, 4),
                    std::invalid_argument);
    CHECK_THROWS_AS(ad::add(ad::Var::constant(Tensor({1, 2, 2})),
                            ad::Var::constant(Tensor({1, 2, 3}))),
                    std::invalid_argument);
}

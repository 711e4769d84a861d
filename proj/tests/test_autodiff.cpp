#include <doctest.h>

#include <cmath>

#include "trip/autodiff/gradcheck.hpp"
#include "trip/autodiff/ops.hpp"
#include "trip/autodiff/optim.hpp"
#include "trip/core/rng.hpp"

using namespace trip;
using namespace trip::ad;

namespace {

Tensor<double> randn(const Shape& shape, Rng& rng, double scale = 1.0) {
    Tensor<double> t(shape);
    for (size_t i = 0; i < t.numel(); ++i) t[i] = rng.normal() * scale;
    return t;
}

// Random values kept away from the given points so finite differences
// never straddle a kink.
Tensor<double> randn_away(const Shape& shape, Rng& rng, std::vector<double> kinks,
                          double margin = 0.05) {
    Tensor<double> t(shape);
    for (size_t i = 0; i < t.numel(); ++i) {
        double v;
        bool ok;
        do {
            v = rng.normal();
            ok = true;
            for (double k : kinks)
                if (std::abs(v - k) < margin) ok = false;
        } while (!ok);
        t[i] = v;
    }
    return t;
}

// Reduces an arbitrary output to a scalar through a fixed random weighting
// so every output element is probed with a distinct sensitivity.
Var<double> weighted(Tape<double>& t, Var<double> y, uint64_t seed) {
    Rng rng(seed);
    Tensor<double> w(y.shape());
    for (size_t i = 0; i < w.numel(); ++i) w[i] = rng.normal();
    (void)t;
    return sum_all(mul_const(y, std::move(w)));
}

void expect_ok(const GradCheckReport& r) {
    CAPTURE(r.worst_input);
    CAPTURE(r.worst_element);
    CAPTURE(r.analytic);
    CAPTURE(r.numeric);
    CHECK(r.max_rel_error < 1e-3);
}

}  // namespace

TEST_CASE("elementwise binary ops match finite differences") {
    for (uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(seed);
        Tensor<double> a = randn({3, 4}, rng);
        Tensor<double> b = randn_away({3, 4}, rng, {0.0}, 0.3);
        auto check = [&](auto opfn) {
            auto r = grad_check(
                [&](Tape<double>& t, std::vector<Var<double>>& in) {
                    return weighted(t, opfn(in[0], in[1]), 7 * seed + 1);
                },
                {a, b});
            expect_ok(r);
        };
        check([](Var<double> x, Var<double> y) { return add(x, y); });
        check([](Var<double> x, Var<double> y) { return sub(x, y); });
        check([](Var<double> x, Var<double> y) { return mul(x, y); });
        check([](Var<double> x, Var<double> y) { return divide(x, y); });
    }
}

TEST_CASE("scalar and broadcast ops match finite differences") {
    for (uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(seed + 100);
        Tensor<double> x = randn({3, 5}, rng);
        Tensor<double> bias = randn({5}, rng);
        Tensor<double> chan = randn({3}, rng);
        Tensor<double> cst = randn({3, 5}, rng);

        expect_ok(grad_check(
            [&](Tape<double>& t, std::vector<Var<double>>& in) {
                return weighted(t, add_scalar(scale(in[0], 1.7), -0.3), seed);
            },
            {x}));
        expect_ok(grad_check(
            [&](Tape<double>& t, std::vector<Var<double>>& in) {
                return weighted(t, neg(in[0]), seed);
            },
            {x}));
        expect_ok(grad_check(
            [&](Tape<double>& t, std::vector<Var<double>>& in) {
                return weighted(t, mul_const(in[0], cst), seed);
            },
            {x}));
        expect_ok(grad_check(
            [&](Tape<double>& t, std::vector<Var<double>>& in) {
                return weighted(t, sub_const(in[0], cst), seed);
            },
            {x}));
        expect_ok(grad_check(
            [&](Tape<double>& t, std::vector<Var<double>>& in) {
                return weighted(t, add_rowvec(in[0], in[1]), seed);
            },
            {x, bias}));
        expect_ok(grad_check(
            [&](Tape<double>& t, std::vector<Var<double>>& in) {
                return weighted(t, add_channel(in[0], in[1]), seed);
            },
            {x, chan}));
        expect_ok(grad_check(
            [&](Tape<double>& t, std::vector<Var<double>>& in) {
                return weighted(t, channel_scale(in[0], in[1]), seed);
            },
            {x, chan}));
    }
}

TEST_CASE("activations and pointwise functions match finite differences") {
    for (uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(seed + 200);
        Tensor<double> x = randn_away({4, 3}, rng, {0.0});
        Tensor<double> pos = randn({4, 3}, rng);
        for (size_t i = 0; i < pos.numel(); ++i) pos[i] = 0.2 + std::abs(pos[i]);
        Tensor<double> xc = randn_away({4, 3}, rng, {-0.5, 0.5}, 0.05);

        auto unary = [&](auto opfn, const Tensor<double>& input) {
            expect_ok(grad_check(
                [&](Tape<double>& t, std::vector<Var<double>>& in) {
                    return weighted(t, opfn(in[0]), seed + 3);
                },
                {input}));
        };
        unary([](Var<double> v) { return relu(v); }, x);
        unary([](Var<double> v) { return sigmoid(v); }, x);
        unary([](Var<double> v) { return tanh_op(v); }, x);
        unary([](Var<double> v) { return exp_op(v); }, x);
        unary([](Var<double> v) { return log_op(v); }, pos);
        unary([](Var<double> v) { return square_op(v); }, x);
        unary([](Var<double> v) { return abs_op(v); }, x);
        unary([](Var<double> v) { return clamp_op(v, -0.5, 0.5); }, xc);
    }
}

TEST_CASE("sigmoid gradient at zero is one quarter") {
    Tape<double> t;
    Var<double> x = t.leaf(Tensor<double>::scalar(0.0));
    Var<double> y = sigmoid(x);
    t.backward(y);
    CHECK(y.val()[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(x.grad()[0] == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("matmul matches finite differences") {
    for (uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(seed + 300);
        Tensor<double> a = randn({3, 4}, rng);
        Tensor<double> b = randn({4, 5}, rng);
        expect_ok(grad_check(
            [&](Tape<double>& t, std::vector<Var<double>>& in) {
                return weighted(t, matmul(in[0], in[1]), seed);
            },
            {a, b}));
    }
}

TEST_CASE("batched matmul matches finite differences in both layouts") {
    for (uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(seed + 400);
        Tensor<double> a = randn({2, 3, 4}, rng);
        Tensor<double> b = randn({2, 4, 5}, rng);
        Tensor<double> bt = randn({2, 5, 4}, rng);
        expect_ok(grad_check(
            [&](Tape<double>& t, std::vector<Var<double>>& in) {
                return weighted(t, batched_matmul(in[0], in[1]), seed);
            },
            {a, b}));
        expect_ok(grad_check(
            [&](Tape<double>& t, std::vector<Var<double>>& in) {
                return weighted(t, batched_matmul(in[0], in[1], true), seed);
            },
            {a, bt}));
    }
}

TEST_CASE("batched matmul transpose flag matches explicit transpose") {
    Rng rng(42);
    Tensor<double> a = randn({2, 3, 4}, rng);
    Tensor<double> b = randn({2, 5, 4}, rng);
    Tape<double> t;
    Var<double> av = t.leaf(a), bv = t.leaf(b);
    Var<double> direct = batched_matmul(av, bv, true);
    for (int bb = 0; bb < 2; ++bb)
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 5; ++j) {
                double want = 0;
                for (int k = 0; k < 4; ++k)
                    want += a[size_t(bb) * 12 + size_t(i) * 4 + k] *
                            b[size_t(bb) * 20 + size_t(j) * 4 + k];
                CHECK(direct.val()[size_t(bb) * 15 + size_t(i) * 5 + j] ==
                      doctest::Approx(want).epsilon(1e-12));
            }
}

TEST_CASE("convolutions match finite differences") {
    for (uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(seed + 500);
        Tensor<double> x1 = randn({3, 7}, rng);
        Tensor<double> w1 = randn({2, 3, 3}, rng);
        Tensor<double> b1 = randn({2}, rng);
        expect_ok(grad_check(
            [&](Tape<double>& t, std::vector<Var<double>>& in) {
                return weighted(t, conv1d(in[0], in[1], in[2]), seed);
            },
            {x1, w1, b1}));

        Tensor<double> x2 = randn({2, 4, 5}, rng);
        Tensor<double> w2 = randn({3, 2, 3, 3}, rng);
        Tensor<double> b2 = randn({3}, rng);
        expect_ok(grad_check(
            [&](Tape<double>& t, std::vector<Var<double>>& in) {
                return weighted(t, conv2d(in[0], in[1], in[2]), seed);
            },
            {x2, w2, b2}));
    }
}

TEST_CASE("pointwise conv1d equals a per-position linear map") {
    Rng rng(9);
    Tensor<double> x = randn({3, 4}, rng);
    Tensor<double> w = randn({2, 3, 1}, rng);
    Tensor<double> b = randn({2}, rng);
    Tape<double> t;
    Var<double> y = conv1d(t.leaf(x), t.leaf(w), t.leaf(b));
    for (int co = 0; co < 2; ++co)
        for (int l = 0; l < 4; ++l) {
            double want = b[size_t(co)];
            for (int ci = 0; ci < 3; ++ci)
                want += w[size_t(co) * 3 + ci] * x[size_t(ci) * 4 + l];
            CHECK(y.val()[size_t(co) * 4 + l] == doctest::Approx(want).epsilon(1e-12));
        }
}

TEST_CASE("upsampling matches finite differences") {
    for (uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(seed + 600);
        Tensor<double> x = randn({2, 3, 4}, rng);
        expect_ok(grad_check(
            [&](Tape<double>& t, std::vector<Var<double>>& in) {
                return weighted(t, upsample2d_nearest(in[0], 2), seed);
            },
            {x}));
        expect_ok(grad_check(
            [&](Tape<double>& t, std::vector<Var<double>>& in) {
                return weighted(t, upsample2d_bilinear(in[0], 2), seed);
            },
            {x}));
    }
}

TEST_CASE("nearest upsample replicates blocks") {
    Tensor<double> x({1, 2, 2}, {1.0, 2.0, 3.0, 4.0});
    Tape<double> t;
    Var<double> y = upsample2d_nearest(t.leaf(x), 2);
    std::vector<double> want = {1, 1, 2, 2, 1, 1, 2, 2, 3, 3, 4, 4, 3, 3, 4, 4};
    REQUIRE(y.numel() == want.size());
    for (size_t i = 0; i < want.size(); ++i) CHECK(y.val()[i] == want[i]);
}

TEST_CASE("normalization matches finite differences") {
    for (uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(seed + 700);
        Tensor<double> x = randn({4, 3, 2}, rng);
        Tensor<double> gamma = randn({4}, rng, 0.5);
        for (size_t i = 0; i < gamma.numel(); ++i) gamma[i] += 1.0;
        Tensor<double> beta = randn({4}, rng, 0.3);
        expect_ok(grad_check(
            [&](Tape<double>& t, std::vector<Var<double>>& in) {
                return weighted(t, group_norm(in[0], 2, in[1], in[2]), seed);
            },
            {x, gamma, beta}));
        expect_ok(grad_check(
            [&](Tape<double>& t, std::vector<Var<double>>& in) {
                return weighted(t, instance_norm(in[0], in[1], in[2]), seed);
            },
            {x, gamma, beta}));
    }
}

TEST_CASE("normalized output has zero mean and unit variance before affine") {
    Rng rng(71);
    Tensor<float> x({6, 40});
    for (size_t i = 0; i < x.numel(); ++i) x[i] = float(rng.normal() * 2.0 + 0.7);
    Tensor<float> gamma({6}, 1.0f), beta({6}, 0.0f);
    Tape<float> t;
    Var<float> y = group_norm(t.leaf(x), 3, t.leaf(gamma), t.leaf(beta));
    for (int g = 0; g < 3; ++g) {
        double s1 = 0, s2 = 0;
        size_t n = 2 * 40;
        const float* p = y.val().ptr() + size_t(g) * n;
        for (size_t i = 0; i < n; ++i) {
            s1 += p[i];
            s2 += double(p[i]) * p[i];
        }
        double mean = s1 / double(n);
        double var = s2 / double(n) - mean * mean;
        CHECK(std::abs(mean) < 1e-5);
        CHECK(std::abs(var - 1.0) < 1e-4);
    }
}

TEST_CASE("softmax rows sum to one and gradients check") {
    for (uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(seed + 800);
        Tensor<double> x = randn({3, 5}, rng, 2.0);
        Tape<double> t;
        Var<double> y = softmax_lastdim(t.leaf(x));
        for (int r = 0; r < 3; ++r) {
            double s = 0;
            for (int c = 0; c < 5; ++c) s += y.val()[size_t(r) * 5 + c];
            CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
        }
        expect_ok(grad_check(
            [&](Tape<double>& t2, std::vector<Var<double>>& in) {
                return weighted(t2, softmax_lastdim(in[0]), seed);
            },
            {x}));
    }
}

TEST_CASE("reductions match finite differences") {
    for (uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(seed + 900);
        Tensor<double> x = randn({4, 6}, rng);
        Tensor<double> chw = randn({3, 2, 4}, rng);
        expect_ok(grad_check(
            [&](Tape<double>&, std::vector<Var<double>>& in) { return sum_all(in[0]); }, {x}));
        expect_ok(grad_check(
            [&](Tape<double>&, std::vector<Var<double>>& in) { return mean_all(in[0]); }, {x}));
        expect_ok(grad_check(
            [&](Tape<double>& t, std::vector<Var<double>>& in) {
                return weighted(t, mean_rows(in[0]), seed);
            },
            {x}));
        expect_ok(grad_check(
            [&](Tape<double>& t, std::vector<Var<double>>& in) {
                return weighted(t, spatial_mean(in[0]), seed);
            },
            {chw}));
    }
}

TEST_CASE("shape ops match finite differences") {
    for (uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(seed + 1000);
        Tensor<double> x = randn({4, 6}, rng);
        Tensor<double> x3 = randn({2, 3, 4}, rng);
        Tensor<double> y2 = randn({2, 6}, rng);
        expect_ok(grad_check(
            [&](Tape<double>& t, std::vector<Var<double>>& in) {
                return weighted(t, reshape(in[0], {2, 12}), seed);
            },
            {x}));
        expect_ok(grad_check(
            [&](Tape<double>& t, std::vector<Var<double>>& in) {
                return weighted(t, transpose2d(in[0]), seed);
            },
            {x}));
        expect_ok(grad_check(
            [&](Tape<double>& t, std::vector<Var<double>>& in) {
                return weighted(t, transpose_01_3d(in[0]), seed);
            },
            {x3}));
        expect_ok(grad_check(
            [&](Tape<double>& t, std::vector<Var<double>>& in) {
                return weighted(t, slice_rows(in[0], 1, 3), seed);
            },
            {x}));
        expect_ok(grad_check(
            [&](Tape<double>& t, std::vector<Var<double>>& in) {
                return weighted(t, concat_rows<double>({in[0], in[1]}), seed);
            },
            {x, y2}));
        expect_ok(grad_check(
            [&](Tape<double>& t, std::vector<Var<double>>& in) {
                return weighted(t, concat_cols<double>({in[0], in[1]}), seed);
            },
            {x, randn({4, 3}, rng)}));
    }
}

TEST_CASE("grid sampling interpolates and clamps") {
    Tensor<double> plane({1, 2, 2}, {0.0, 1.0, 2.0, 3.0});
    auto sample_at = [&](double u, double v) {
        Tape<double> t;
        Tensor<double> coords({1, 2}, {u, v});
        Var<double> y = grid_sample_plane(t.leaf(plane), coords);
        return y.val()[0];
    };
    CHECK(sample_at(0.0, 0.0) == doctest::Approx(1.5).epsilon(1e-12));
    CHECK(sample_at(-1.0, -1.0) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(sample_at(1.0, -1.0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(sample_at(-1.0, 1.0) == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(sample_at(1.0, 1.0) == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(sample_at(5.0, 5.0) == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(sample_at(-5.0, 0.3) == sample_at(-1.0, 0.3));
}

TEST_CASE("grid sampling gradients flow into the plane") {
    for (uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(seed + 1100);
        Tensor<double> plane = randn({3, 4, 4}, rng);
        Tensor<double> coords({5, 2});
        for (size_t i = 0; i < coords.numel(); ++i) coords[i] = rng.uniform(-1.2, 1.2);
        expect_ok(grad_check(
            [&](Tape<double>& t, std::vector<Var<double>>& in) {
                return weighted(t, grid_sample_plane(in[0], coords), seed);
            },
            {plane}));
    }
}

TEST_CASE("dropout scales kept values and is identity in eval mode") {
    Rng data_rng(5);
    Tensor<double> x = randn({8, 50}, data_rng);
    {
        Tape<double> t;
        Rng rng(3);
        Var<double> xv = t.leaf(x);
        Var<double> y = dropout(xv, 0.4, rng, false);
        CHECK(y.id == xv.id);
    }
    {
        Tape<double> t;
        Rng rng(3);
        Var<double> y = dropout(t.leaf(x), 0.4, rng, true);
        int zeros = 0;
        for (size_t i = 0; i < y.numel(); ++i) {
            double ratio = y.val()[i] / x[i];
            if (y.val()[i] == 0.0) {
                ++zeros;
            } else {
                CHECK(ratio == doctest::Approx(1.0 / 0.6).epsilon(1e-9));
            }
        }
        CHECK(zeros > 100);
        CHECK(zeros < 220);
    }
    expect_ok(grad_check(
        [&](Tape<double>& t, std::vector<Var<double>>& in) {
            Rng rng(11);
            return weighted(t, dropout(in[0], 0.3, rng, true), 17);
        },
        {x}));
}

TEST_CASE("gradients accumulate across fan-out") {
    {
        Tape<double> t;
        Var<double> x = t.leaf(Tensor<double>::scalar(3.0));
        Var<double> y = sum_all(mul(x, x));
        t.backward(y);
        CHECK(x.grad()[0] == doctest::Approx(6.0).epsilon(1e-12));
    }
    {
        Tape<double> t;
        Var<double> x = t.leaf(Tensor<double>::scalar(1.25));
        Var<double> y = sum_all(add(x, x));
        t.backward(y);
        CHECK(x.grad()[0] == doctest::Approx(2.0).epsilon(1e-12));
    }
}

TEST_CASE("backward rejects non-scalar roots") {
    Tape<double> t;
    Var<double> x = t.leaf(Tensor<double>({2, 2}, 1.0));
    Var<double> y = relu(x);
    CHECK_THROWS_AS(t.backward(y), Error);
}

TEST_CASE("composed network matches finite differences end to end") {
    Rng rng(2024);
    Tensor<double> x = randn({2, 4, 4}, rng, 0.7);
    Tensor<double> wc = randn({3, 2, 3, 3}, rng, 0.4);
    Tensor<double> bc = randn({3}, rng, 0.1);
    Tensor<double> gamma({3}, 1.0);
    Tensor<double> beta({3}, 0.0);
    Tensor<double> w1 = randn({3, 4}, rng, 0.5);
    Tensor<double> b1 = randn({4}, rng, 0.1);
    Tensor<double> w2 = randn({4, 1}, rng, 0.5);
    Tensor<double> b2 = randn({1}, rng, 0.1);
    Tensor<double> coords({5, 2});
    for (size_t i = 0; i < coords.numel(); ++i) coords[i] = rng.uniform(-0.9, 0.9);

    auto net = [&](Tape<double>& t, std::vector<Var<double>>& in) {
        Var<double> h = conv2d(in[0], in[1], in[2]);
        h = instance_norm(h, in[3], in[4]);
        h = relu(h);
        h = upsample2d_nearest(h, 2);
        Var<double> feats = grid_sample_plane(h, coords);
        Var<double> m = relu(add_rowvec(matmul(feats, in[5]), in[6]));
        m = add_rowvec(matmul(m, in[7]), in[8]);
        return mean_all(m);
    };
    auto r = grad_check(net, {x, wc, bc, gamma, beta, w1, b1, w2, b2});
    expect_ok(r);
}

TEST_CASE("adamw applies pure decoupled decay on zero gradient") {
    AdamWConfig cfg;
    cfg.lr = 1e-2;
    cfg.weight_decay = 0.1;
    AdamW<float> opt(cfg);
    Tensor<float> p({3}, {1.5f, -2.0f, 0.25f});
    Tensor<float> g({3}, 0.0f);
    Tensor<float> before = p;
    opt.update("p", p, g);
    float shrink = float(1.0 - cfg.lr * cfg.weight_decay);
    for (size_t i = 0; i < p.numel(); ++i) CHECK(p[i] == before[i] * shrink);
}

TEST_CASE("adamw step magnitude approaches lr under a constant gradient") {
    AdamWConfig cfg;
    cfg.lr = 1e-2;
    cfg.weight_decay = 0.0;
    AdamW<double> opt(cfg);
    Tensor<double> p({1}, {0.7});
    Tensor<double> g({1}, {1e-3});
    double prev = p[0];
    double step = 0;
    for (int i = 0; i < 50; ++i) {
        opt.update("p", p, g);
        step = prev - p[0];
        prev = p[0];
    }
    CHECK(step > 0);
    CHECK(step == doctest::Approx(cfg.lr).epsilon(0.02));
}

TEST_CASE("adamw keeps untouched parameters byte-stable") {
    AdamW<float> opt;
    Tensor<float> p({4}, {0.1f, 0.2f, 0.3f, 0.4f});
    Tensor<float> copy = p;
    for (size_t i = 0; i < p.numel(); ++i) CHECK(p[i] == copy[i]);
}

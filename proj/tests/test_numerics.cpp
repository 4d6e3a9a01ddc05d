#include <doctest.h>

#include <cmath>

#include "cobra/ops.hpp"
#include "cobra/optim.hpp"
#include "test_util.hpp"

using namespace cobra;
using namespace cobra::ops;
using cobra::testutil::gradcheck;

namespace {

// Independent triple-loop product in double precision.
std::vector<double> matmul_oracle(const std::vector<float>& a, const std::vector<float>& b,
                                  int m, int k, int n) {
    std::vector<double> out(static_cast<size_t>(m) * n, 0.0);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
            for (int t = 0; t < k; ++t)
                out[static_cast<size_t>(i) * n + j] +=
                    static_cast<double>(a[static_cast<size_t>(i) * k + t]) *
                    b[static_cast<size_t>(t) * n + j];
    return out;
}

}  // namespace

TEST_CASE("matmul identity and selection cases") {
    auto eye = Tensor::from_data({2, 2}, {1, 0, 0, 1});
    auto m = Tensor::from_data({2, 2}, {1, 2, 3, 4});
    auto r = matmul(eye, m);
    CHECK(r.data() == std::vector<float>{1, 2, 3, 4});

    auto sel = Tensor::from_data({1, 2}, {1, 0});
    auto col = Tensor::from_data({2, 1}, {0, 5});
    CHECK(matmul(sel, col).item() == doctest::Approx(0.0));
}

TEST_CASE("matmul matches triple-loop oracle") {
    Rng rng(7);
    auto a = Tensor::randn({3, 4}, rng, 1.0f);
    auto b = Tensor::randn({4, 2}, rng, 1.0f);
    auto r = matmul(a, b);
    auto expect = matmul_oracle(a.data(), b.data(), 3, 4, 2);
    for (size_t i = 0; i < expect.size(); ++i)
        CHECK(std::abs(r.data()[i] - expect[i]) < 1e-6);
}

TEST_CASE("matmul shape mismatch throws") {
    auto a = Tensor::zeros({2, 3});
    auto b = Tensor::zeros({2, 3});
    CHECK_THROWS_AS(matmul(a, b), DimensionError);
}

TEST_CASE("softmax basics") {
    auto x = Tensor::from_data({1, 2}, {0, 0});
    auto y = softmax_rows(x, 1.0f);
    CHECK(y.data()[0] == doctest::Approx(0.5));
    CHECK(y.data()[1] == doctest::Approx(0.5));

    auto big = Tensor::from_data({1, 2}, {1000, 0});
    auto yb = softmax_rows(big, 1.0f);
    CHECK(yb.data()[0] == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(yb.data()[1] == doctest::Approx(0.0).epsilon(1e-6));
    CHECK(std::isfinite(yb.data()[0]));

    // High-precision oracle for [1,2,3].
    auto t = Tensor::from_data({1, 3}, {1, 2, 3});
    auto yt = softmax_rows(t, 1.0f);
    long double z = expl(1.0L) + expl(2.0L) + expl(3.0L);
    CHECK(yt.data()[0] == doctest::Approx(static_cast<double>(expl(1.0L) / z)).epsilon(1e-6));
    CHECK(yt.data()[1] == doctest::Approx(static_cast<double>(expl(2.0L) / z)).epsilon(1e-6));
    CHECK(yt.data()[2] == doctest::Approx(static_cast<double>(expl(3.0L) / z)).epsilon(1e-6));

    CHECK_THROWS_AS(softmax_rows(x, 0.0f), ParameterError);
}

TEST_CASE("softmax rows sum to one for random finite inputs") {
    Rng rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        auto x = Tensor::randn({4, 7}, rng, 10.0f);
        auto y = softmax_rows(x, 0.5f);
        for (int i = 0; i < 4; ++i) {
            double sum = 0.0;
            for (int j = 0; j < 7; ++j) sum += y.at(i, j);
            CHECK(std::abs(sum - 1.0) < 1e-6);
        }
    }
}

TEST_CASE("layer_norm statistics") {
    Rng rng(3);
    auto x = Tensor::randn({5, 16}, rng, 2.0f);
    auto y = layer_norm_rows(x);
    for (int i = 0; i < 5; ++i) {
        double mean = 0.0, var = 0.0;
        for (int j = 0; j < 16; ++j) mean += y.at(i, j);
        mean /= 16;
        for (int j = 0; j < 16; ++j) var += (y.at(i, j) - mean) * (y.at(i, j) - mean);
        var /= 16;
        CHECK(std::abs(mean) < 1e-5);
        CHECK(std::abs(var - 1.0) < 1e-5);
    }
}

TEST_CASE("gather_rows identity selection and bounds") {
    Rng rng(5);
    auto p = Tensor::randn({6, 4}, rng, 1.0f);
    auto all = gather_rows(p, {0, 1, 2, 3, 4, 5});
    CHECK(all.data() == p.data());
    CHECK_THROWS_AS(gather_rows(p, {6}), IndexError);
}

TEST_CASE("gather_rows backward conserves gradient mass") {
    Rng rng(9);
    auto p = Tensor::randn({6, 4}, rng, 1.0f, true);
    auto picked = gather_rows(p, {1, 3, 3});
    auto w = Tensor::randn({3, 4}, rng, 1.0f);
    auto loss = sum_all(mul(picked, w));
    backward(loss);
    double grad_sum = 0.0, w_sum = 0.0;
    for (float g : p.grad()) grad_sum += g;
    for (float x : w.data()) w_sum += x;
    CHECK(grad_sum == doctest::Approx(w_sum).epsilon(1e-5));
    // Unselected rows get exactly zero.
    for (int j = 0; j < 4; ++j) {
        CHECK(p.grad()[0 * 4 + j] == 0.0f);
        CHECK(p.grad()[2 * 4 + j] == 0.0f);
    }
}

TEST_CASE("mean_pool of identical rows returns the row") {
    auto r = Tensor::from_data({3, 3}, {1, 2, 3, 1, 2, 3, 1, 2, 3});
    auto p = mean_pool_rows(r);
    CHECK(p.data()[0] == doctest::Approx(1));
    CHECK(p.data()[1] == doctest::Approx(2));
    CHECK(p.data()[2] == doctest::Approx(3));
}

TEST_CASE("backward analytic cases") {
    auto x = Tensor::from_data({1, 2}, {1, 2}, true);
    auto loss = sum_all(mul(x, x));
    backward(loss);
    CHECK(x.grad()[0] == doctest::Approx(2));
    CHECK(x.grad()[1] == doctest::Approx(4));

    // Disconnected parameter receives no gradient.
    auto p = Tensor::from_data({1, 1}, {3}, true);
    CHECK_FALSE(p.has_grad());

    // Non-scalar loss rejected.
    auto m = Tensor::zeros({2, 2}, true);
    CHECK_THROWS_AS(backward(m), ContractError);
}

TEST_CASE("finite differences across every primitive") {
    Rng rng(21);
    for (int trial = 0; trial < 20; ++trial) {
        auto a = Tensor::randn({3, 4}, rng, 1.0f, true);
        auto b = Tensor::randn({4, 3}, rng, 1.0f, true);
        auto row = Tensor::randn({1, 4}, rng, 1.0f, true);

        auto check = [&](const std::function<Tensor()>& f, const std::vector<Tensor>& ps) {
            auto res = gradcheck(ps, f);
            CAPTURE(res.detail);
            CHECK(res.ok);
        };

        check([&] { return sum_all(matmul(a, b)); }, {a, b});
        check([&] { return sum_all(mul(transpose(a), b)); }, {a, b});
        check([&] { return sum_all(gelu(a)); }, {a});
        check([&] { return sum_all(sigmoid(a)); }, {a});
        check([&] { return sum_all(softmax_rows(a, 0.7f)); }, {a});
        check([&] { return sum_all(mul(log_softmax_rows(a), transpose(b))); }, {a, b});
        check([&] { return sum_all(layer_norm_rows(a)); }, {a});
        check([&] { return mean_all(add_rowvec(a, row)); }, {a, row});
        check([&] { return sum_all(mul_rowvec(a, row)); }, {a, row});
        check([&] { return sum_all(mean_pool_rows(a)); }, {a});
        check([&] { return sum_all(gather_rows(a, {2, 0})); }, {a});
        check([&] { return sum_all(slice_cols(a, 1, 2)); }, {a});
        check([&] { return sum_all(concat_rows({a, transpose(b)})); }, {a, b});
        check([&] { return sum_all(concat_cols({a, transpose(b)})); }, {a, b});
        check([&] { return sum_all(l2_normalize_flat(a)); }, {a});
        check([&] { return sum_all(div_scalar(a, sum_all(mul(row, row)))); }, {a, row});
        check([&] { return sum_all(ops::sqrt(add(mul(a, a), Tensor::full({3, 4}, 0.1f)))); },
              {a});
    }
}

TEST_CASE("finite differences on a composed mini-network") {
    Rng rng(33);
    for (int trial = 0; trial < 5; ++trial) {
        auto x = Tensor::randn({2, 6}, rng, 1.0f);
        auto w1 = Tensor::randn({6, 6}, rng, 0.5f, true);
        auto b1 = Tensor::randn({1, 6}, rng, 0.5f, true);
        auto w2 = Tensor::randn({6, 3}, rng, 0.5f, true);
        auto forward = [&] {
            auto h = gelu(add_rowvec(matmul(x, w1), b1));
            auto n = layer_norm_rows(h);
            return mean_all(mul(matmul(n, w2), matmul(n, w2)));
        };
        auto res = gradcheck({w1, b1, w2}, forward);
        CAPTURE(res.detail);
        CHECK(res.ok);
    }
}

TEST_CASE("adamw fixed point with zero grad") {
    auto w = Tensor::from_data({1, 2}, {1.0f, -2.0f}, true);
    AdamWConfig cfg;
    cfg.weight_decay = 0.0f;
    AdamW opt({w}, cfg);
    opt.step();  // no grad buffer -> untouched
    CHECK(w.data()[0] == 1.0f);
    CHECK(w.data()[1] == -2.0f);
}

TEST_CASE("adamw descends on a quadratic") {
    auto w = Tensor::from_data({1, 1}, {1.0f}, true);
    AdamWConfig cfg;
    cfg.lr = 0.1f;
    AdamW opt({w}, cfg);
    auto loss = sum_all(mul(w, w));
    backward(loss);
    opt.step();
    CHECK(std::abs(w.data()[0]) < 1.0f);
}

TEST_CASE("adamw matches a hand-stepped reference trace") {
    // Three steps on f(w) = w^2 from w = 1, lr 0.1, defaults otherwise.
    auto w = Tensor::from_data({1, 1}, {1.0f}, true);
    AdamWConfig cfg;
    cfg.lr = 0.1f;
    AdamW opt({w}, cfg);

    double wr = 1.0, m = 0.0, v = 0.0;
    for (int t = 1; t <= 3; ++t) {
        auto loss = sum_all(mul(w, w));
        backward(loss);
        opt.step();
        const double g = 2.0 * wr;
        m = 0.9 * m + 0.1 * g;
        v = 0.999 * v + 0.001 * g * g;
        const double mh = m / (1.0 - std::pow(0.9, t));
        const double vh = v / (1.0 - std::pow(0.999, t));
        wr -= 0.1 * mh / (std::sqrt(vh) + 1e-8);
        CHECK(std::abs(w.data()[0] - wr) < 1e-6);
        w.zero_grad();
    }
}

TEST_CASE("cosine schedule endpoints and monotonicity") {
    CosineSchedule s{0.01f, 100};
    CHECK(s.lr(0) == doctest::Approx(0.01));
    CHECK(s.lr(100) == doctest::Approx(0.0));
    for (int t = 1; t <= 100; ++t) CHECK(s.lr(t) <= s.lr(t - 1) + 1e-12f);
}

TEST_CASE("rng determinism") {
    Rng a(123), b(123);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
    Rng g1(5), g2(5);
    for (int i = 0; i < 100; ++i) CHECK(g1.gaussian() == g2.gaussian());
}

TEST_CASE("clamp gradient gates outside the range") {
    auto x = Tensor::from_data({1, 3}, {-1.0f, 0.5f, 2.0f}, true);
    auto loss = sum_all(clamp(x, 0.0f, 1.0f));
    backward(loss);
    CHECK(x.grad()[0] == 0.0f);
    CHECK(x.grad()[1] == 1.0f);
    CHECK(x.grad()[2] == 0.0f);
}

#include <benchmark/benchmark.h>

#include "cobra/model.hpp"
#include "cobra/ops.hpp"

using namespace cobra;

namespace {

Tensor random_mat(int r, int c, Rng& rng, bool grad = false) {
    return Tensor::randn({r, c}, rng, 1.0f, grad);
}

void BM_matmul(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    Rng rng(1);
    auto a = random_mat(n, n, rng);
    auto b = random_mat(n, n, rng);
    for (auto _ : state) {
        auto c = ops::matmul(a, b);
        benchmark::DoNotOptimize(c.data().data());
    }
    state.SetItemsProcessed(state.iterations() * 2LL * n * n * n);
}
BENCHMARK(BM_matmul)->Arg(32)->Arg(64)->Arg(128);

void BM_matmul_backward(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    Rng rng(2);
    auto a = random_mat(n, n, rng, true);
    auto b = random_mat(n, n, rng, true);
    for (auto _ : state) {
        a.zero_grad();
        b.zero_grad();
        auto loss = ops::sum_all(ops::matmul(a, b));
        backward(loss);
        benchmark::DoNotOptimize(a.grad().data());
    }
}
BENCHMARK(BM_matmul_backward)->Arg(32)->Arg(64);

void BM_softmax_rows(benchmark::State& state) {
    Rng rng(3);
    auto a = random_mat(64, 64, rng);
    for (auto _ : state) {
        auto y = ops::softmax_rows(a, 1.0f);
        benchmark::DoNotOptimize(y.data().data());
    }
}
BENCHMARK(BM_softmax_rows);

ModelConfig bench_config() {
    ModelConfig cfg;  // desk-scale defaults: 32x32 grid, d_model 32
    return cfg;
}

void BM_model_forward(benchmark::State& state) {
    auto cfg = bench_config();
    Rng rng(4);
    CobraModel model(cfg, rng);
    model.add_step(rng);
    model.registry.add_subject(1, cfg.d_model, rng);
    model.routing[1] = 0;
    std::vector<float> grid(static_cast<size_t>(cfg.grid_h) * cfg.grid_w);
    for (auto& g : grid) g = static_cast<float>(rng.gaussian());
    for (auto _ : state) {
        auto out = model.forward_full(grid, 1);
        benchmark::DoNotOptimize(out.f_mri.data().data());
    }
}
BENCHMARK(BM_model_forward);

void BM_model_train_step(benchmark::State& state) {
    auto cfg = bench_config();
    Rng rng(5);
    CobraModel model(cfg, rng);
    model.add_step(rng);
    model.registry.add_subject(1, cfg.d_model, rng);
    model.routing[1] = 0;
    std::vector<float> grid(static_cast<size_t>(cfg.grid_h) * cfg.grid_w);
    for (auto& g : grid) g = static_cast<float>(rng.gaussian());
    std::vector<float> labels(static_cast<size_t>(cfg.classes), 0.0f);
    labels[0] = labels[3] = 1.0f;
    auto clip = Tensor::randn({cfg.l_clip, cfg.d_model}, rng, 1.0f);
    std::vector<Tensor> params;
    model.visit([&params](const std::string&, Tensor& t) {
        if (t.requires_grad()) params.push_back(t);
    });
    for (auto _ : state) {
        for (auto& p : params) p.zero_grad();
        auto out = model.forward_full(grid, 1);
        auto loss = total_loss(commonality_loss(out.y_c, labels),
                               subject_loss(out.f_s, 1, model.registry),
                               contrastive_loss({out.f_mri}, {clip}, cfg.sigma),
                               center_regularization(model.registry, cfg.margin),
                               1, 1, 1, 1);
        backward(loss);
        benchmark::DoNotOptimize(loss.item());
    }
}
BENCHMARK(BM_model_train_step);

}  // namespace

BENCHMARK_MAIN();

#pragma once

#include <cmath>
#include <vector>

#include "cobra/tensor.hpp"

namespace cobra {

// Cosine decay from initial_lr at step 0 to exactly 0 at total_steps.
struct CosineSchedule {
    float initial_lr = 1e-3f;
    int64_t total_steps = 1;

    float lr(int64_t step) const {
        if (step >= total_steps) return 0.0f;
        const double x = static_cast<double>(step) / static_cast<double>(total_steps);
        return static_cast<float>(initial_lr * 0.5 * (1.0 + std::cos(x * M_PI)));
    }
};

struct AdamWConfig {
    float lr = 1e-3f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float eps = 1e-8f;
    float weight_decay = 0.0f;
};

// Decoupled weight decay Adam over a fixed parameter set. Parameters with a
// missing grad buffer are treated as zero-gradient (weight decay still off for
// them, matching "no grad, no update" semantics used by the trainer).
class AdamW {
public:
    AdamW(std::vector<Tensor> params, AdamWConfig cfg);

    // Applies one update using each parameter's accumulated .grad.
    void step();
    void set_lr(float lr) { cfg_.lr = lr; }
    void zero_grad();
    int64_t step_count() const { return t_; }
    const std::vector<Tensor>& params() const { return params_; }

private:
    std::vector<Tensor> params_;
    std::vector<std::vector<float>> m_, v_;
    AdamWConfig cfg_;
    int64_t t_ = 0;
};

}  // namespace cobra

#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "cobra/tensor.hpp"

namespace cobra::testutil {

struct GradCheckResult {
    bool ok = true;
    double worst = 0.0;
    std::string detail;
};

// Central finite differences (h = 1e-3) against the tape gradients. An entry
// passes when |fd - an| <= tol * max(1, |fd|, |an|).
inline GradCheckResult gradcheck(const std::vector<Tensor>& params,
                                 const std::function<Tensor()>& forward,
                                 double tol = 1e-3, double h = 1e-3) {
    GradCheckResult res;
    for (auto p : params) p.zero_grad();
    Tensor loss = forward();
    backward(loss);
    std::vector<std::vector<float>> analytic;
    for (const auto& p : params) {
        if (p.has_grad())
            analytic.push_back(p.grad());
        else
            analytic.emplace_back(p.data().size(), 0.0f);
    }
    for (size_t pi = 0; pi < params.size(); ++pi) {
        Tensor p = params[pi];
        for (size_t i = 0; i < p.data().size(); ++i) {
            const float orig = p.data()[i];
            p.data()[i] = orig + static_cast<float>(h);
            const double up = forward().item();
            p.data()[i] = orig - static_cast<float>(h);
            const double dn = forward().item();
            p.data()[i] = orig;
            const double fd = (up - dn) / (2.0 * h);
            const double an = analytic[pi][i];
            const double err = std::abs(fd - an);
            const double scale = std::max({1.0, std::abs(fd), std::abs(an)});
            res.worst = std::max(res.worst, err / scale);
            if (err > tol * scale) {
                res.ok = false;
                res.detail = "param " + std::to_string(pi) + " entry " + std::to_string(i) +
                             ": fd=" + std::to_string(fd) + " an=" + std::to_string(an);
                return res;
            }
        }
    }
    return res;
}

inline Tensor random_tensor(std::vector<int> shape, Rng& rng, bool requires_grad = true,
                            float stddev = 1.0f) {
    return Tensor::randn(std::move(shape), rng, stddev, requires_grad);
}

}  // namespace cobra::testutil

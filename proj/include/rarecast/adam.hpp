#pragma once

#include <cmath>
#include <vector>

#include "rarecast/errors.hpp"
#include "rarecast/nn.hpp"

namespace rarecast {

struct AdamState {
    std::vector<double> m, v;
    long steps = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    void init(std::size_t n) {
        m.assign(n, 0.0);
        v.assign(n, 0.0);
        steps = 0;
    }
};

// Bias-corrected Adam update over a parameter set and its gradient mirror.
// Tensors in `grads` must match `params` shape-for-shape.
void adam_step(AdamState& state, const ParamSet& params, const ParamSet& grads, double lr);

// Warmup then exponential decay, both per epoch.
struct LrSchedule {
    double base_lr = 1e-3;
    int warmup_epochs = 10;
    double decay_rate = 0.95;

    double lr(int epoch) const {
        if (epoch < warmup_epochs) return base_lr;
        return base_lr * std::pow(decay_rate, double(epoch - warmup_epochs + 1));
    }
};

}  // namespace rarecast

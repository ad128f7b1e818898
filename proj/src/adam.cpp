#include "rarecast/adam.hpp"

namespace rarecast {

void adam_step(AdamState& state, const ParamSet& params, const ParamSet& grads, double lr) {
    if (params.items.size() != grads.items.size())
        throw ShapeMismatch("adam_step: param/grad set size mismatch");
    const std::size_t total = params.total();
    if (state.m.size() != total)
        throw ShapeMismatch("adam_step: optimizer state does not match parameters");

    ++state.steps;
    const double bc1 = 1.0 - std::pow(state.beta1, double(state.steps));
    const double bc2 = 1.0 - std::pow(state.beta2, double(state.steps));

    std::size_t k = 0;
    for (std::size_t i = 0; i < params.items.size(); ++i) {
        Tensor& p = *params.items[i].second;
        const Tensor& g = *grads.items[i].second;
        p.check_same_shape(g, "adam_step");
        for (std::size_t j = 0; j < p.size(); ++j, ++k) {
            const double grad = g.v[j];
            state.m[k] = state.beta1 * state.m[k] + (1.0 - state.beta1) * grad;
            state.v[k] = state.beta2 * state.v[k] + (1.0 - state.beta2) * grad * grad;
            const double mhat = state.m[k] / bc1;
            const double vhat = state.v[k] / bc2;
            p.v[j] -= lr * mhat / (std::sqrt(vhat) + state.eps);
        }
    }
}

}  // namespace rarecast

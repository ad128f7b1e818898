#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

namespace rarecast {

// Central-difference gradient check. `coords` are the live parameter
// locations, `analytic` the claimed gradient in the same order. Returns the
// max relative error with denominators floored at 1e-8.
inline double grad_check(const std::function<double()>& f,
                         std::span<double* const> coords,
                         std::span<const double> analytic, double eps) {
    double worst = 0.0;
    for (std::size_t i = 0; i < coords.size(); ++i) {
        double* p = coords[i];
        const double saved = *p;
        *p = saved + eps;
        const double up = f();
        *p = saved - eps;
        const double down = f();
        *p = saved;
        const double numeric = (up - down) / (2.0 * eps);
        const double denom = std::max(1e-8, std::max(std::abs(numeric), std::abs(analytic[i])));
        worst = std::max(worst, std::abs(numeric - analytic[i]) / denom);
    }
    return worst;
}

}  // namespace rarecast

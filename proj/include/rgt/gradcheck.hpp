#pragma once

#include <functional>

#include "rgt/tensor.hpp"

namespace rgt {

// Compares the reverse-mode gradient of a scalar-valued function against
// central finite differences, elementwise. Returns the max relative error
// with denominator max(|g|, |g_fd|, 1e-8). f must be pure; step should sit
// in [1e-6, 1e-4] for 64-bit floats.
inline double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                         double step = 1e-5) {
    Tensor xp = Tensor::param(x.shape(), x.data());
    Tensor out = f(xp);
    if (out.numel() != 1) throw ShapeError("grad_check: f must return a scalar");
    out.backward();
    Tensor g = xp.grad();

    std::vector<double> base = x.data();
    double worst = 0.0;
    for (size_t i = 0; i < base.size(); ++i) {
        std::vector<double> plus = base, minus = base;
        plus[i] += step;
        minus[i] -= step;
        double fp = f(Tensor::from_data(x.shape(), std::move(plus))).item();
        double fm = f(Tensor::from_data(x.shape(), std::move(minus))).item();
        if (!std::isfinite(fp) || !std::isfinite(fm)) {
            throw NumericError("grad_check: non-finite output from f");
        }
        double fd = (fp - fm) / (2.0 * step);
        double gi = g.data()[i];
        double rel = std::fabs(gi - fd) / std::max({std::fabs(gi), std::fabs(fd), 1e-8});
        worst = std::max(worst, rel);
    }
    return worst;
}

} // namespace rgt

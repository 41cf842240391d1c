#pragma once

#include <map>
#include <utility>
#include <vector>

#include "rgt/imaging.hpp"
#include "rgt/model.hpp"

namespace rgt {

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.99;
    double eps = 1e-8;
};

struct AdamState {
    int64_t step = 0;
    std::map<std::string, std::vector<double>> m;
    std::map<std::string, std::vector<double>> v;
};

namespace detail {

// in-place bias-corrected Adam update; step is 1-based
inline void adam_apply(std::vector<double>& w, const std::vector<double>& g,
                       std::vector<double>& m, std::vector<double>& v, int64_t step,
                       double lr_rate, const AdamConfig& adam) {
    double bc1 = 1.0 - std::pow(adam.beta1, double(step));
    double bc2 = 1.0 - std::pow(adam.beta2, double(step));
    for (size_t i = 0; i < w.size(); ++i) {
        m[i] = adam.beta1 * m[i] + (1.0 - adam.beta1) * g[i];
        v[i] = adam.beta2 * v[i] + (1.0 - adam.beta2) * g[i] * g[i];
        double mhat = m[i] / bc1;
        double vhat = v[i] / bc2;
        w[i] -= lr_rate * mhat / (std::sqrt(vhat) + adam.eps);
    }
}

} // namespace detail

// One optimization step: mean L1 over the batch, backward, bias-corrected
// Adam on every trainable parameter. Weights are replaced functionally so
// readers of the old store are unaffected.
inline double train_step(WeightStore& store, const std::vector<std::pair<Tensor, Tensor>>& batch,
                         AdamState& state, double lr_rate, const ModelConfig& cfg,
                         const AdamConfig& adam = {}) {
    if (batch.empty()) throw ConfigError("train_step: empty batch");
    Tensor total = Tensor::scalar(0.0);
    for (const auto& [lr_img, hr_img] : batch) {
        Tensor pred = rgt_forward(lr_img, store, cfg);
        if (pred.shape() != hr_img.shape()) {
            throw ShapeError("train_step: target shape " + shape_str(hr_img.shape()) +
                             " does not match prediction " + shape_str(pred.shape()));
        }
        total = add(total, l1_loss(pred, hr_img));
    }
    Tensor loss = scalar_mul(total, 1.0 / double(batch.size()));
    double loss_value = loss.item();
    if (!std::isfinite(loss_value)) throw NumericError("train_step: non-finite loss");
    if (!loss.requires_grad()) {
        throw ConfigError("train_step: weights are not trainable (no tape)");
    }
    loss.backward();

    ++state.step;
    for (auto& [path, param] : store.entries()) {
        Tensor g = param.grad();
        auto& m = state.m[path];
        auto& v = state.v[path];
        if (m.empty()) m.assign(size_t(param.numel()), 0.0);
        if (v.empty()) v.assign(size_t(param.numel()), 0.0);
        std::vector<double> next = param.data();
        detail::adam_apply(next, g.data(), m, v, state.step, lr_rate, adam);
        param = Tensor::param(param.shape(), std::move(next));
    }
    return loss_value;
}

// Step-wise learning-rate schedule: halve (or scale by `factor`) at each
// milestone, e.g. the 500K-iteration recipe [250K, 400K, 450K, 475K].
inline double scheduled_lr(double base, int64_t step, const std::vector<int64_t>& milestones,
                           double factor = 0.5) {
    double lr = base;
    for (int64_t ms : milestones) {
        if (step >= ms) lr *= factor;
    }
    return lr;
}

// Smooth synthetic training pairs: HR is a seeded mixture of low-frequency
// sinusoids in [0.15, 0.85], LR is its antialiased bicubic downscale.
inline std::vector<std::pair<Tensor, Tensor>> make_toy_pairs(int64_t count, int64_t lr_size,
                                                             int64_t scale, uint64_t seed) {
    detail::GaussianRng rng(seed);
    std::vector<std::pair<Tensor, Tensor>> pairs;
    pairs.reserve(size_t(count));
    int64_t hr_size = lr_size * scale;
    for (int64_t p = 0; p < count; ++p) {
        std::vector<double> hr(size_t(hr_size * hr_size * 3));
        for (int64_t c = 0; c < 3; ++c) {
            double fy1 = 0.5 + rng.uniform(), fx1 = 0.5 + rng.uniform();
            double fy2 = 1.0 + rng.uniform(), fx2 = 1.0 + rng.uniform();
            double ph1 = 2.0 * M_PI * rng.uniform(), ph2 = 2.0 * M_PI * rng.uniform();
            double a1 = 0.20 + 0.10 * rng.uniform(), a2 = 0.05 + 0.05 * rng.uniform();
            for (int64_t y = 0; y < hr_size; ++y) {
                for (int64_t x = 0; x < hr_size; ++x) {
                    double uy = double(y) / double(hr_size), ux = double(x) / double(hr_size);
                    double v = 0.5 + a1 * std::sin(2.0 * M_PI * (fy1 * uy + fx1 * ux) + ph1) +
                               a2 * std::sin(2.0 * M_PI * (fy2 * uy - fx2 * ux) + ph2);
                    hr[size_t((y * hr_size + x) * 3 + c)] = std::min(0.85, std::max(0.15, v));
                }
            }
        }
        Tensor hr_t = Tensor::from_data({hr_size, hr_size, 3}, std::move(hr));
        Tensor lr_t = bicubic_resize_tensor(hr_t, lr_size, lr_size);
        // bicubic lobes may overshoot slightly; clamp back into [0,1]
        std::vector<double> lr_data = lr_t.data();
        for (double& v : lr_data) v = std::min(1.0, std::max(0.0, v));
        pairs.emplace_back(Tensor::from_data(lr_t.shape(), std::move(lr_data)), std::move(hr_t));
    }
    return pairs;
}

} // namespace rgt

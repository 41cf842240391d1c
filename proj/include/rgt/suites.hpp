#pragma once

#include <functional>
#include <random>
#include <string>
#include <vector>

#include "rgt/analysis.hpp"
#include "rgt/gradcheck.hpp"
#include "rgt/model.hpp"
#include "rgt/train.hpp"

// Self-check suites shared by the CLI verification commands and the
// acceptance tests.

namespace rgt {

struct CheckResult {
    std::string name;
    double value = 0.0;      // measured error / quantity
    double tolerance = 0.0;  // pass when value <= tolerance
    bool pass = false;
};

namespace detail {

inline Tensor random_uniform(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> dist(lo, hi);
    std::vector<double> data(size_t(shape_numel(shape)));
    for (double& v : data) v = dist(rng);
    return Tensor::from_data(std::move(shape), std::move(data));
}

} // namespace detail

// Central-difference check of every tape-backed op on three random shapes.
inline std::vector<CheckResult> gradcheck_ops(uint64_t seed, double tol = 1e-4) {
    std::mt19937_64 rng(seed);
    std::vector<CheckResult> results;
    auto run = [&](const std::string& name, const std::function<Tensor(const Tensor&)>& f,
                   Shape shape) {
        Tensor x = detail::random_uniform(std::move(shape), rng);
        double err = grad_check(f, x, 1e-5);
        CheckResult r{name, err, tol, err <= tol};
        // merge the three shape runs into one row, keeping the worst error
        for (CheckResult& prev : results) {
            if (prev.name == name) {
                prev.value = std::max(prev.value, err);
                prev.pass = prev.pass && err <= tol;
                return;
            }
        }
        results.push_back(r);
    };

    for (Shape s : {Shape{3, 4}, Shape{1, 7}, Shape{5, 2}}) {
        Tensor other = detail::random_uniform(s, rng);
        run("add", [other](const Tensor& t) { return sum(add(t, other)); }, s);
        run("sub", [other](const Tensor& t) { return sum(sub(other, t)); }, s);
        run("mul", [other](const Tensor& t) { return sum(mul(t, other)); }, s);
        run("scalar_mul", [](const Tensor& t) { return sum(scalar_mul(t, 0.37)); }, s);
        Tensor probe = detail::random_uniform(s, rng);
        run("softmax",
            [probe](const Tensor& t) { return sum(mul(softmax(t, 1), probe)); }, s);
        run("transpose2d",
            [probe](const Tensor& t) { return sum(mul(transpose2d(t), transpose2d(probe))); }, s);
    }
    for (Shape s : {Shape{2, 3, 4}, Shape{6, 4}, Shape{1, 1, 8}}) {
        int64_t C = s.back();
        Tensor gamma = detail::random_uniform({C}, rng, 0.5, 1.5);
        Tensor beta = detail::random_uniform({C}, rng);
        Tensor probe = detail::random_uniform(s, rng);
        run("layer_norm",
            [gamma, beta, probe](const Tensor& t) {
                return sum(mul(layer_norm(t, gamma, beta, 1e-5), probe));
            },
            s);
        run("add_bias", [beta, probe](const Tensor& t) { return sum(mul(add_bias(t, beta), probe)); },
            s);
        run("channel_scale",
            [gamma, probe](const Tensor& t) { return sum(mul(channel_scale(t, gamma), probe)); }, s);
        run("gelu", [](const Tensor& t) { return sum(gelu(t)); }, s);
        run("leaky_relu", [](const Tensor& t) { return sum(leaky_relu(t, 0.01)); }, s);
        run("abs", [](const Tensor& t) { return mean(abs(t)); }, s);
    }
    for (auto [m, k, n] : {std::tuple<int64_t, int64_t, int64_t>{2, 3, 4}, {5, 1, 2}, {3, 6, 3}}) {
        Tensor b = detail::random_uniform({k, n}, rng);
        Tensor bt = detail::random_uniform({n, k}, rng);
        Tensor a = detail::random_uniform({m, k}, rng);
        run("matmul", [b](const Tensor& t) { return sum(matmul(t, b)); }, {m, k});
        run("matmul_rhs", [a](const Tensor& t) { return sum(matmul(a, t)); }, {k, n});
        run("matmul_nt", [bt](const Tensor& t) { return sum(matmul_nt(t, bt)); }, {m, k});
    }
    for (auto [h, w, cin, cout, stride, pad, groups] :
         {std::tuple<int64_t, int64_t, int64_t, int64_t, int64_t, int64_t, int64_t>{5, 5, 2, 3, 1, 1, 1},
          {7, 6, 2, 2, 2, 1, 1},
          {4, 5, 4, 4, 1, 1, 4}}) {
        Tensor k = detail::random_uniform({3, 3, cin / groups, cout}, rng);
        Tensor b = detail::random_uniform({cout}, rng);
        int64_t s2 = stride, p2 = pad, g2 = groups;
        run("conv2d",
            [k, b, s2, p2, g2](const Tensor& t) { return sum(conv2d(t, k, b, s2, p2, g2)); },
            {h, w, cin});
        Tensor x = detail::random_uniform({h, w, cin}, rng);
        run("conv2d_kernel",
            [x, b, s2, p2, g2](const Tensor& t) { return sum(conv2d(x, t, b, s2, p2, g2)); },
            {3, 3, cin / groups, cout});
        run("conv2d_bias",
            [x, k, s2, p2, g2](const Tensor& t) { return sum(conv2d(x, k, t, s2, p2, g2)); },
            {cout});
    }
    for (Shape s : {Shape{2, 2, 4}, Shape{1, 3, 8}, Shape{3, 1, 16}}) {
        Tensor probe = detail::random_uniform({s[0] * 2, s[1] * 2, s[2] / 4}, rng);
        run("pixel_shuffle",
            [probe](const Tensor& t) { return sum(mul(pixel_shuffle(t, 2), probe)); }, s);
    }
    for (Shape s : {Shape{4, 3}, Shape{2, 6}, Shape{5, 5}}) {
        Tensor other = detail::random_uniform({s[0], 2}, rng);
        run("slice2d", [s](const Tensor& t) { return sum(abs(slice2d(t, 0, s[0], 1, s[1]))); }, s);
        run("concat_cols",
            [other](const Tensor& t) { return sum(abs(concat_cols({t, other}))); }, s);
        run("concat_rows",
            [s](const Tensor& t) { return sum(abs(concat_rows({t, t}))); }, s);
        run("reshape", [s](const Tensor& t) { return sum(abs(reshape(t, {s[1], s[0]}))); }, s);
        std::vector<int64_t> idx;
        for (int64_t i = 0; i < s[0] * s[1]; ++i) idx.push_back(i % 3 == 0 ? -1 : (i * 7) % (s[0] * s[1]));
        run("gather_pad",
            [idx, s](const Tensor& t) { return sum(abs(gather_pad(t, idx, {s[0] * s[1]}))); }, s);
    }
    return results;
}

// End-to-end finite differences on sampled parameters of a tiny model.
inline CheckResult gradcheck_end_to_end(uint64_t seed, int64_t samples = 50, double tol = 1e-3) {
    std::mt19937_64 rng(seed);
    ModelConfig cfg;
    cfg.num_groups = 1;
    cfg.blocks_per_group = 2;
    cfg.embed_dim = 8;
    cfg.heads = 2;
    cfg.win = WindowSpec{4, 4};
    cfg.rep_size = 2;
    cfg.scale = 2;
    WeightStore s = init_weights(cfg, seed);
    Tensor lr = detail::random_uniform({8, 8, 3}, rng, 0.0, 1.0);
    Tensor hr = detail::random_uniform({16, 16, 3}, rng, 0.0, 1.0);
    Tensor loss = l1_loss(rgt_forward(lr, s, cfg), hr);
    loss.backward();

    std::vector<std::pair<std::string, int64_t>> coords;
    for (const auto& [path, t] : s.entries())
        for (int64_t i = 0; i < t.numel(); ++i) coords.emplace_back(path, i);
    std::shuffle(coords.begin(), coords.end(), rng);

    double worst = 0.0;
    const double step = 1e-5;
    for (int64_t k = 0; k < samples && k < int64_t(coords.size()); ++k) {
        const auto& [path, idx] = coords[size_t(k)];
        double g = s.get(path).grad().data()[size_t(idx)];
        auto eval_at = [&](double delta) {
            WeightStore probe;
            for (const auto& [p, t] : s.entries()) {
                std::vector<double> d = t.data();
                if (p == path) d[size_t(idx)] += delta;
                probe.put(p, Tensor::from_data(t.shape(), std::move(d)));
            }
            return l1_loss(rgt_forward(lr, probe, cfg), hr).item();
        };
        double fd = (eval_at(step) - eval_at(-step)) / (2.0 * step);
        double rel = std::fabs(g - fd) / std::max({std::fabs(g), std::fabs(fd), 1e-8});
        worst = std::max(worst, rel);
    }
    return {"end_to_end_tiny_model", worst, tol, worst <= tol};
}

// Shape and invariant spot checks used by the `shapes` CLI command.
inline std::vector<CheckResult> shape_invariant_suite(uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<CheckResult> out;
    auto check = [&](const std::string& name, bool ok) {
        out.push_back({name, ok ? 0.0 : 1.0, 0.0, ok});
    };

    check("recursion_count(64,64,4,4) == 2", recursion_count(64, 64, 4, 4) == 2);
    check("recursion_count(128,128,4,16) == 1", recursion_count(128, 128, 4, 16) == 1);
    check("recursion_count(16,16,4,16) == 0", recursion_count(16, 16, 4, 16) == 0);

    {
        RgsaConfig cfg;
        cfg.embed_dim = 8;
        cfg.heads = 2;
        cfg.rep_size = 3;
        cfg.channel_factor = 0.5;
        RgsaWeights w;
        auto t = [&](Shape s) { return detail::random_uniform(std::move(s), rng, -0.3, 0.3); };
        w.wr = t({4, 4, 1, 8});
        w.br = t({8});
        w.wd = t({3, 3, 1, 8});
        w.bd = t({8});
        w.wp = t({1, 1, 8, 4});
        w.bp = t({4});
        bool band_ok = true;
        for (int64_t size : {7, 23, 50, 143}) {
            Tensor xr = rgm_forward(detail::random_uniform({size, size, 8}, rng), w, cfg);
            int64_t longest = std::max(xr.dim(0), xr.dim(1));
            int64_t T = recursion_count(size, size, cfg.stride, cfg.rep_size);
            if (T >= 1 && (longest < cfg.rep_size || longest >= cfg.stride * cfg.rep_size)) {
                band_ok = false;
            }
        }
        check("rgm size band h <= h_eff < s_r*h", band_ok);
    }
    {
        Tensor x = detail::random_uniform({10, 10, 2}, rng);
        auto [wins, info] = window_partition(x, WindowSpec{8, 32});
        Tensor back = window_reverse(wins, info);
        bool same = back.shape() == x.shape();
        if (same) {
            for (size_t i = 0; i < x.data().size(); ++i) same = same && back.data()[i] == x.data()[i];
        }
        check("window partition round trip (10x10 into 8x32)", same && info.num_windows() == 2);
    }
    {
        ModelConfig cfg;
        cfg.num_groups = 1;
        cfg.blocks_per_group = 2;
        cfg.embed_dim = 16;
        cfg.heads = 2;
        cfg.win = WindowSpec{4, 4};
        cfg.rep_size = 2;
        for (int64_t scale : {2, 3, 4}) {
            cfg.scale = scale;
            WeightStore s = init_weights(cfg, seed + uint64_t(scale));
            Tensor lr = detail::random_uniform({9, 7, 3}, rng, 0.0, 1.0);
            Tensor y = rgt_forward(lr, s, cfg);
            check("rgt output shape x" + std::to_string(scale),
                  y.shape() == (Shape{9 * scale, 7 * scale, 3}));
        }
        cfg.scale = 2;
        WeightStore s = init_weights(cfg, seed);
        check("count_params == init_weights scalar total",
              count_params(cfg).total().params == s.scalar_count());
    }
    {
        RgsaConfig cfg;
        cfg.embed_dim = 8;
        cfg.heads = 2;
        cfg.rep_size = 2;
        cfg.channel_factor = 0.5;
        RgsaWeights w;
        auto t = [&](Shape s) { return detail::random_uniform(std::move(s), rng, -0.3, 0.3); };
        w.wr = t({4, 4, 1, 8});
        w.br = t({8});
        w.wd = t({3, 3, 1, 8});
        w.bd = t({8});
        w.wp = t({1, 1, 8, 4});
        w.bp = t({4});
        w.wq = t({8, 4});
        w.bq = t({4});
        w.wk = t({4, 4});
        w.bk = t({4});
        w.wv = t({4, 8});
        w.bv = t({8});
        w.wm = t({8, 8});
        w.bm = t({8});
        AttentionProbe probe;
        rgsa_forward(detail::random_uniform({8, 8, 8}, rng), w, cfg, &probe);
        double worst = 0.0;
        for (const Tensor& a : probe.attn) {
            for (int64_t r = 0; r < a.dim(0); ++r) {
                double srow = 0.0;
                for (int64_t c = 0; c < a.dim(1); ++c) srow += a.at({r, c});
                worst = std::max(worst, std::fabs(srow - 1.0));
            }
        }
        out.push_back({"attention rows sum to 1", worst, 1e-12, worst <= 1e-12});
    }
    return out;
}

} // namespace rgt

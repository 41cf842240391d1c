#pragma once

// Test-only reference implementations, written as straight-line loops with
// no calls into the library's operator stack. They define what the
// attention modules are checked against.

#include <cmath>
#include <vector>

#include "rgt/attention.hpp"

namespace oracles {

inline std::vector<double> project(const std::vector<double>& in, int64_t rows, int64_t cin,
                                   const std::vector<double>& wt, const std::vector<double>& bias,
                                   int64_t cout) {
    std::vector<double> out(size_t(rows * cout), 0.0);
    for (int64_t i = 0; i < rows; ++i)
        for (int64_t o = 0; o < cout; ++o) {
            double s = bias[size_t(o)];
            for (int64_t k = 0; k < cin; ++k) s += in[size_t(i * cin + k)] * wt[size_t(k * cout + o)];
            out[size_t(i * cout + o)] = s;
        }
    return out;
}

// multi-head cross-attention: queries from x (n tokens), keys/values from
// the representative map xr (m tokens)
inline std::vector<double> dense_cross_attention(const std::vector<double>& x, int64_t n,
                                                 const std::vector<double>& xr, int64_t m,
                                                 const rgt::RgsaWeights& w, int64_t C, int64_t Cr,
                                                 int64_t heads) {
    std::vector<double> q = project(x, n, C, w.wq.data(), w.bq.data(), Cr);
    std::vector<double> k = project(xr, m, Cr, w.wk.data(), w.bk.data(), Cr);
    std::vector<double> v = project(xr, m, Cr, w.wv.data(), w.bv.data(), C);
    int64_t dq = Cr / heads, dv = C / heads;
    std::vector<double> fused(size_t(n * C), 0.0);
    for (int64_t h = 0; h < heads; ++h) {
        for (int64_t i = 0; i < n; ++i) {
            std::vector<double> logits(static_cast<size_t>(m));
            double mx = -1e300;
            for (int64_t j = 0; j < m; ++j) {
                double s = 0.0;
                for (int64_t d = 0; d < dq; ++d)
                    s += q[size_t(i * Cr + h * dq + d)] * k[size_t(j * Cr + h * dq + d)];
                logits[size_t(j)] = s / std::sqrt(double(dq));
                mx = std::max(mx, logits[size_t(j)]);
            }
            double denom = 0.0;
            for (double& l : logits) {
                l = std::exp(l - mx);
                denom += l;
            }
            for (int64_t j = 0; j < m; ++j) {
                double a = logits[size_t(j)] / denom;
                for (int64_t d = 0; d < dv; ++d)
                    fused[size_t(i * C + h * dv + d)] += a * v[size_t(j * C + h * dv + d)];
            }
        }
    }
    return project(fused, n, C, w.wm.data(), w.bm.data(), C);
}

// plain multi-head self-attention over all n tokens
inline std::vector<double> dense_self_attention(const std::vector<double>& x, int64_t n,
                                                const rgt::LsaWeights& w, int64_t C,
                                                int64_t heads) {
    std::vector<double> q = project(x, n, C, w.wq.data(), w.bq.data(), C);
    std::vector<double> k = project(x, n, C, w.wk.data(), w.bk.data(), C);
    std::vector<double> v = project(x, n, C, w.wv.data(), w.bv.data(), C);
    int64_t dh = C / heads;
    std::vector<double> fused(size_t(n * C), 0.0);
    for (int64_t h = 0; h < heads; ++h) {
        for (int64_t i = 0; i < n; ++i) {
            std::vector<double> logits(static_cast<size_t>(n));
            double mx = -1e300;
            for (int64_t j = 0; j < n; ++j) {
                double s = 0.0;
                for (int64_t d = 0; d < dh; ++d)
                    s += q[size_t(i * C + h * dh + d)] * k[size_t(j * C + h * dh + d)];
                logits[size_t(j)] = s / std::sqrt(double(dh));
                mx = std::max(mx, logits[size_t(j)]);
            }
            double denom = 0.0;
            for (double& l : logits) {
                l = std::exp(l - mx);
                denom += l;
            }
            for (int64_t j = 0; j < n; ++j) {
                double a = logits[size_t(j)] / denom;
                for (int64_t d = 0; d < dh; ++d)
                    fused[size_t(i * C + h * dh + d)] += a * v[size_t(j * C + h * dh + d)];
            }
        }
    }
    return project(fused, n, C, w.wm.data(), w.bm.data(), C);
}

inline rgt::RgsaWeights random_rgsa_weights(const rgt::RgsaConfig& cfg, std::mt19937_64& rng) {
    auto t = [&rng](rgt::Shape s, double lo, double hi) {
        std::uniform_real_distribution<double> dist(lo, hi);
        std::vector<double> data(size_t(rgt::shape_numel(s)));
        for (double& v : data) v = dist(rng);
        return rgt::Tensor::from_data(std::move(s), std::move(data));
    };
    int64_t C = cfg.embed_dim, Cr = cfg.reduced_dim(), s = cfg.stride;
    rgt::RgsaWeights w;
    w.wr = t({s, s, 1, C}, -0.3, 0.3);
    w.br = t({C}, -0.1, 0.1);
    w.wd = t({3, 3, 1, C}, -0.3, 0.3);
    w.bd = t({C}, -0.1, 0.1);
    w.wp = t({1, 1, C, Cr}, -0.3, 0.3);
    w.bp = t({Cr}, -0.1, 0.1);
    w.wq = t({C, Cr}, -0.3, 0.3);
    w.bq = t({Cr}, -0.1, 0.1);
    w.wk = t({Cr, Cr}, -0.3, 0.3);
    w.bk = t({Cr}, -0.1, 0.1);
    w.wv = t({Cr, C}, -0.3, 0.3);
    w.bv = t({C}, -0.1, 0.1);
    w.wm = t({C, C}, -0.3, 0.3);
    w.bm = t({C}, -0.1, 0.1);
    return w;
}

inline rgt::LsaWeights random_lsa_weights(int64_t C, std::mt19937_64& rng) {
    auto t = [&rng](rgt::Shape s, double lo, double hi) {
        std::uniform_real_distribution<double> dist(lo, hi);
        std::vector<double> data(size_t(rgt::shape_numel(s)));
        for (double& v : data) v = dist(rng);
        return rgt::Tensor::from_data(std::move(s), std::move(data));
    };
    rgt::LsaWeights w;
    w.wq = t({C, C}, -0.3, 0.3);
    w.bq = t({C}, -0.1, 0.1);
    w.wk = t({C, C}, -0.3, 0.3);
    w.bk = t({C}, -0.1, 0.1);
    w.wv = t({C, C}, -0.3, 0.3);
    w.bv = t({C}, -0.1, 0.1);
    w.wm = t({C, C}, -0.3, 0.3);
    w.bm = t({C}, -0.1, 0.1);
    return w;
}

} // namespace oracles

#pragma once

#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "rgt/model.hpp"

namespace rgt {

// Cost accounting conventions:
//   macs:  multiply-accumulate count of the matrix/conv products
//   flops: 2 * macs plus per-element costs (layer norm 5, softmax 8,
//          GELU 8, LeakyReLU 2, residual/adaptor adds)
// Published totals for models of this family count 1 "FLOP" per MAC, so the
// macs column is the number comparable against reported figures.
struct CostEntry {
    std::string path;
    long long params = 0;
    long long macs = 0;
    long long flops = 0;
};

struct CostReport {
    std::vector<CostEntry> entries;
    int64_t input_h = 0, input_w = 0, scale = 1;
    long long vanilla_sa_reference_macs = 0;
    long long vanilla_sa_reference_flops = 0;

    CostEntry total() const {
        CostEntry t;
        t.path = "total";
        for (const CostEntry& e : entries) {
            t.params += e.params;
            t.macs += e.macs;
            t.flops += e.flops;
        }
        return t;
    }

    long long params_with_prefix(const std::string& prefix) const {
        long long n = 0;
        for (const CostEntry& e : entries) {
            if (e.path.rfind(prefix, 0) == 0) n += e.params;
        }
        return n;
    }

    long long macs_with_prefix(const std::string& prefix) const {
        long long n = 0;
        for (const CostEntry& e : entries) {
            if (e.path.rfind(prefix, 0) == 0) n += e.macs;
        }
        return n;
    }

    std::string to_table() const {
        size_t width = 8;
        for (const CostEntry& e : entries) width = std::max(width, e.path.size());
        std::ostringstream os;
        os << std::left << std::setw(int(width + 2)) << "layer" << std::right << std::setw(14)
           << "params" << std::setw(18) << "flops" << "\n";
        auto row = [&](const CostEntry& e) {
            os << std::left << std::setw(int(width + 2)) << e.path << std::right << std::setw(14)
               << e.params << std::setw(18) << e.flops << "\n";
        };
        for (const CostEntry& e : entries) row(e);
        row(total());
        return os.str();
    }

    std::string to_csv() const {
        std::ostringstream os;
        os << "path,params,flops\n";
        for (const CostEntry& e : entries) {
            os << e.path << "," << e.params << "," << e.flops << "\n";
        }
        CostEntry t = total();
        os << t.path << "," << t.params << "," << t.flops << "\n";
        return os.str();
    }
};

// Analytic parameter count: folds over the same enumeration init_weights
// materializes, so the two agree exactly by construction.
inline CostReport count_params(const ModelConfig& cfg) {
    CostReport report;
    report.scale = cfg.scale;
    for_each_param(cfg, [&](const std::string& path, const Shape& shape, ParamKind) {
        report.entries.push_back({path, shape_numel(shape), 0, 0});
    });
    return report;
}

// ---- closed-form component costs ----

// Cross-attention macs for HW query tokens against an hw-token
// representative map: q/k/v projections, Q K^T, A V, fusion projection.
// Affine in HW for fixed hw.
inline long long rgsa_attention_macs(long long HW, long long hw, long long C, long long Cr) {
    return HW * C * Cr        // Q projection
           + hw * Cr * Cr     // K projection
           + hw * Cr * C      // V projection
           + HW * hw * Cr     // Q K^T
           + HW * hw * C      // A V
           + HW * C * C;      // fusion
}

// Vanilla dense self-attention reference at the same geometry:
// quadratic Q K^T and A V plus the four projections.
inline long long vanilla_sa_macs(long long HW, long long C) {
    return 2 * HW * HW * C + 4 * HW * C * C;
}

namespace detail {

// Idealized representative-map extents for the cost model: the linear
// complexity argument treats the map as a constant size, long side h and
// short side scaled by the aspect ratio. The runtime map differs by at
// most the stride rounding band; with recursion disabled it is exactly one
// strided step.
inline std::pair<int64_t, int64_t> cost_rep_size(const ModelConfig& cfg, int64_t H, int64_t W) {
    int64_t longest = std::max(H, W), shortest = std::min(H, W);
    if (longest <= cfg.rep_size) return {H, W};
    if (!cfg.recursion_enabled) {
        return {std::max<int64_t>(1, H / cfg.stride), std::max<int64_t>(1, W / cfg.stride)};
    }
    int64_t rep_long = cfg.rep_size;
    int64_t rep_short = std::max<int64_t>(
        1, int64_t(std::llround(double(shortest) * double(cfg.rep_size) / double(longest))));
    return H >= W ? std::pair<int64_t, int64_t>{rep_long, rep_short}
                  : std::pair<int64_t, int64_t>{rep_short, rep_long};
}

} // namespace detail

// Full-network closed-form cost at a given input geometry. Per-component
// entries carry the component's parameters too, so the params total matches
// count_params exactly.
inline CostReport count_flops(const ModelConfig& cfg, int64_t H, int64_t W) {
    cfg.validate();
    if (H < 1 || W < 1) throw ConfigError("count_flops: extents must be positive");
    const int64_t C = cfg.embed_dim;
    const int64_t Cr = cfg.rgsa().reduced_dim();
    const int64_t hid = cfg.mlp_hidden();
    const int64_t nb = cfg.bottleneck_dim();
    const int64_t nf = cfg.recon_dim();
    const long long HW = (long long)H * W;

    // leaf params, grouped by prefix on demand
    CostReport leaf = count_params(cfg);

    CostReport report;
    report.input_h = H;
    report.input_w = W;
    report.scale = cfg.scale;

    auto push = [&](const std::string& path, const std::string& param_prefix, long long macs,
                    long long extra_elementwise) {
        CostEntry e;
        e.path = path;
        e.params = leaf.params_with_prefix(param_prefix);
        e.macs = macs;
        e.flops = 2 * macs + extra_elementwise;
        report.entries.push_back(e);
    };

    push("shallow", "shallow", 9LL * 3 * C * HW, 0);

    // L-SA window geometry: padded window counts per orientation
    auto window_cost = [&](int64_t wh, int64_t ww) {
        long long wins = ((H + wh - 1) / wh) * ((W + ww - 1) / ww);
        long long tokens = (long long)wh * ww;
        long long per_head = wins * tokens * tokens * (C / cfg.heads);
        long long qk_av = 2 * per_head * (cfg.heads / 2);  // half the heads per orientation
        long long softmax_elems = wins * tokens * tokens * (cfg.heads / 2);
        return std::pair<long long, long long>{qk_av, softmax_elems};
    };
    auto [qkav_a, sm_a] = window_cost(cfg.win.wh, cfg.win.ww);
    auto [qkav_b, sm_b] = window_cost(cfg.win.ww, cfg.win.wh);
    long long lsa_macs = 4 * HW * (long long)C * C + qkav_a + qkav_b;
    long long lsa_elem = 8 * (sm_a + sm_b);

    // RG-SA: recursion ladder at exact strided sizes, attention at the
    // idealized representative size
    auto [rep_h, rep_w] = detail::cost_rep_size(cfg, H, W);
    long long hw_rep = (long long)rep_h * rep_w;
    long long rgm_macs = 0;
    {
        int64_t T = cfg.recursion_enabled
                        ? recursion_count(H, W, cfg.stride, cfg.rep_size)
                        : (std::max(H, W) > cfg.rep_size ? 1 : 0);
        int64_t sh = H, sw = W;
        for (int64_t t = 0; t < T; ++t) {
            sh = std::max<int64_t>(1, sh / cfg.stride);
            sw = std::max<int64_t>(1, sw / cfg.stride);
            rgm_macs += (long long)cfg.stride * cfg.stride * C * sh * sw;
        }
        rgm_macs += 9LL * C * hw_rep;       // 3x3 depth-wise refinement
        rgm_macs += (long long)C * Cr * hw_rep;  // 1x1 point-wise
    }
    long long rgsa_macs = rgm_macs + rgsa_attention_macs(HW, hw_rep, C, Cr);
    long long rgsa_elem = 8 * HW * hw_rep;  // softmax rows

    long long mlp_macs = 2 * HW * (long long)C * hid;
    long long mlp_elem = 8 * HW * hid;                     // GELU
    long long norm_elem = 2 * 5 * HW * (long long)C;       // two layer norms
    long long hai_elem = cfg.skip_mode == SkipMode::None ? 0 : 2 * HW * (long long)C;

    for (int64_t g = 0; g < cfg.num_groups; ++g) {
        std::string gp = "rg" + std::to_string(g);
        for (int64_t b = 0; b < cfg.blocks_per_group; ++b) {
            std::string bp = gp + ".blk" + std::to_string(b);
            if (block_is_lsa(b)) {
                push(bp + ".attn", bp + ".lsa", lsa_macs, lsa_elem);
            } else {
                push(bp + ".attn", bp + ".rgsa", rgsa_macs, rgsa_elem);
            }
            push(bp + ".mlp", bp + ".mlp", mlp_macs, mlp_elem);
            push(bp + ".norm", bp + ".ln", 0, norm_elem);
            if (cfg.skip_mode == SkipMode::Hai) {
                push(bp + ".hai", bp + ".alpha", 0, hai_elem);
            }
        }
        push(gp + ".conv", gp + ".conv", (9LL * C * nb + (long long)nb * nb + 9LL * nb * C) * HW,
             0);
    }
    push("body.conv", "body.conv", (9LL * C * nb + (long long)nb * nb + 9LL * nb * C) * HW, 0);

    push("recon.pre", "recon.pre", 9LL * C * nf * HW, 2 * HW * nf);
    if (cfg.scale == 4) {
        push("recon.up0", "recon.up0", 9LL * nf * 4 * nf * HW, 0);
        push("recon.up1", "recon.up1", 9LL * nf * 4 * nf * (4 * HW), 0);
    } else {
        push("recon.up0", "recon.up0",
             9LL * nf * cfg.scale * cfg.scale * nf * HW, 0);
    }
    push("recon.last", "recon.last", 9LL * nf * 3 * (cfg.scale * cfg.scale * HW), 0);

    report.vanilla_sa_reference_macs = vanilla_sa_macs(HW, C);
    report.vanilla_sa_reference_flops = 2 * report.vanilla_sa_reference_macs;
    return report;
}

// ---- centered kernel alignment ----

// Linear CKA between activation matrices X (n x d1) and Y (n x d2):
// ||Y^T X||_F^2 / (||X^T X||_F ||Y^T Y||_F) after column centering.
inline double cka(const Tensor& X, const Tensor& Y) {
    if (X.rank() != 2 || Y.rank() != 2) throw ShapeError("cka: inputs must be 2-D");
    int64_t n = X.dim(0);
    if (Y.dim(0) != n) throw ShapeError("cka: row counts differ");
    if (n < 2) throw ShapeError("cka: need at least 2 samples");
    int64_t d1 = X.dim(1), d2 = Y.dim(1);

    auto centered = [n](const Tensor& t, int64_t d) {
        std::vector<double> c = t.data();
        double maxabs = 0.0;
        for (double v : c) maxabs = std::max(maxabs, std::fabs(v));
        for (int64_t j = 0; j < d; ++j) {
            double mu = 0.0;
            for (int64_t i = 0; i < n; ++i) mu += c[size_t(i * d + j)];
            mu /= double(n);
            for (int64_t i = 0; i < n; ++i) c[size_t(i * d + j)] -= mu;
        }
        // cancellation residue of an all-constant column is not variance
        double thresh = 4.0 * std::numeric_limits<double>::epsilon() * (1.0 + maxabs);
        bool constant = true;
        for (double v : c) constant = constant && std::fabs(v) <= thresh;
        if (constant) throw NumericError("cka: zero-variance input (all-constant features)");
        return c;
    };
    std::vector<double> xc = centered(X, d1);
    std::vector<double> yc = centered(Y, d2);

    auto gram_fro = [n](const std::vector<double>& a, int64_t da, const std::vector<double>& b,
                        int64_t db) {
        // ||B^T A||_F^2 with A (n x da), B (n x db)
        double sum = 0.0;
        for (int64_t p = 0; p < db; ++p) {
            for (int64_t q = 0; q < da; ++q) {
                double s = 0.0;
                for (int64_t i = 0; i < n; ++i) s += b[size_t(i * db + p)] * a[size_t(i * da + q)];
                sum += s * s;
            }
        }
        return sum;
    };
    double cross = gram_fro(xc, d1, yc, d2);
    double xx = std::sqrt(gram_fro(xc, d1, xc, d1));
    double yy = std::sqrt(gram_fro(yc, d2, yc, d2));
    if (xx == 0.0 || yy == 0.0) {
        throw NumericError("cka: zero-variance input (all-constant features)");
    }
    return cross / (xx * yy);
}

// One flattened activation matrix per Transformer block, in block order.
inline std::vector<Tensor> collect_block_activations(const WeightStore& store,
                                                     const ModelConfig& cfg, const Tensor& input) {
    std::vector<Tensor> trace;
    rgt_forward(input, store, cfg, &trace);
    return trace;
}

// Pairwise CKA over a list of activation matrices.
inline std::vector<std::vector<double>> cka_matrix(const std::vector<Tensor>& acts) {
    size_t n = acts.size();
    std::vector<std::vector<double>> m(n, std::vector<double>(n, 0.0));
    for (size_t i = 0; i < n; ++i) {
        for (size_t j = i; j < n; ++j) {
            double v = cka(acts[i], acts[j]);
            m[i][j] = v;
            m[j][i] = v;
        }
    }
    return m;
}

} // namespace rgt

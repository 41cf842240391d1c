#pragma once

#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "rgt/attention.hpp"
#include "rgt/ops.hpp"
#include "rgt/tensor.hpp"

namespace rgt {

enum class SkipMode { None, Vanilla, Hai };

inline const char* skip_mode_name(SkipMode m) {
    switch (m) {
        case SkipMode::None: return "none";
        case SkipMode::Vanilla: return "vanilla";
        case SkipMode::Hai: return "hai";
    }
    return "?";
}

struct ModelConfig {
    int64_t num_groups = 6;        // N1
    int64_t blocks_per_group = 6;  // N2, even: strict L-SA/RG-SA alternation
    int64_t embed_dim = 180;       // C
    int64_t heads = 6;
    double mlp_ratio = 2.0;
    WindowSpec win{8, 32};
    int64_t stride = 4;            // s_r
    int64_t rep_size = 4;          // h (4 for training, 16 at test time)
    double channel_factor = 0.5;   // c_r
    int64_t scale = 4;
    bool hai_enabled = true;
    SkipMode skip_mode = SkipMode::Hai;
    bool recursion_enabled = true;

    int64_t mlp_hidden() const { return int64_t(double(embed_dim) * mlp_ratio); }
    int64_t recon_dim() const { return std::min<int64_t>(64, embed_dim); }
    int64_t bottleneck_dim() const { return embed_dim / 4; }

    RgsaConfig rgsa() const {
        RgsaConfig c;
        c.stride = stride;
        c.rep_size = rep_size;
        c.channel_factor = channel_factor;
        c.heads = heads;
        c.embed_dim = embed_dim;
        c.recursion = recursion_enabled;
        return c;
    }

    void validate() const {
        if (num_groups < 1) throw ConfigError("n1 must be >= 1");
        if (blocks_per_group < 2 || blocks_per_group % 2 != 0) {
            throw ConfigError("n2 must be even for the L-SA/RG-SA alternation");
        }
        if (scale != 2 && scale != 3 && scale != 4) throw ConfigError("scale must be 2, 3 or 4");
        if (embed_dim % 4 != 0) throw ConfigError("embed dim must be divisible by 4");
        if (mlp_ratio <= 0.0) throw ConfigError("mlp ratio must be positive");
        if (heads % 2 != 0) throw ConfigError("head count must be even (L-SA orientation split)");
        if (hai_enabled != (skip_mode == SkipMode::Hai)) {
            throw ConfigError("hai_enabled must agree with skip_mode");
        }
        win.validate();
        rgsa().validate();
    }
};

// 1-based odd blocks are L-SA, so 0-based even indices.
inline bool block_is_lsa(int64_t block_index) { return block_index % 2 == 0; }

// ---- named parameter storage ----

class WeightStore {
public:
    void put(std::string path, Tensor t) {
        auto [it, inserted] = entries_.emplace(std::move(path), std::move(t));
        if (!inserted) throw ConfigError("duplicate parameter path: " + it->first);
    }

    const Tensor& get(const std::string& path) const {
        auto it = entries_.find(path);
        if (it == entries_.end()) throw ConfigError("missing parameter: " + path);
        return it->second;
    }

    void replace(const std::string& path, Tensor t) {
        auto it = entries_.find(path);
        if (it == entries_.end()) throw ConfigError("missing parameter: " + path);
        it->second = std::move(t);
    }

    bool contains(const std::string& path) const { return entries_.count(path) != 0; }

    // lexicographic by construction (std::map)
    const std::map<std::string, Tensor>& entries() const { return entries_; }
    std::map<std::string, Tensor>& entries() { return entries_; }

    int64_t scalar_count() const {
        int64_t n = 0;
        for (const auto& [path, t] : entries_) n += t.numel();
        return n;
    }

private:
    std::map<std::string, Tensor> entries_;
};

// ---- parameter enumeration ----
// Single source of truth for the layer list: init_weights materializes it,
// the analytic parameter count folds over it, so the two can never drift.

enum class ParamKind { ConvKernel, LinearWeight, Gamma, Beta, BiasZero, Alpha };

template <typename F>
void for_each_param(const ModelConfig& cfg, F&& fn) {
    cfg.validate();
    const int64_t C = cfg.embed_dim;
    const int64_t Cr = cfg.rgsa().reduced_dim();
    const int64_t hid = cfg.mlp_hidden();
    const int64_t nb = cfg.bottleneck_dim();
    const int64_t nf = cfg.recon_dim();

    auto conv = [&](const std::string& p, int64_t kh, int64_t kw, int64_t cpg, int64_t cout) {
        fn(p + ".w", Shape{kh, kw, cpg, cout}, ParamKind::ConvKernel);
        fn(p + ".b", Shape{cout}, ParamKind::BiasZero);
    };
    auto lin = [&](const std::string& p, int64_t in, int64_t out) {
        fn(p + ".w", Shape{in, out}, ParamKind::LinearWeight);
        fn(p + ".b", Shape{out}, ParamKind::BiasZero);
    };
    auto lnorm = [&](const std::string& p) {
        fn(p + ".g", Shape{C}, ParamKind::Gamma);
        fn(p + ".b", Shape{C}, ParamKind::Beta);
    };
    auto bottleneck = [&](const std::string& p) {
        conv(p + ".conv1", 3, 3, C, nb);
        conv(p + ".conv2", 1, 1, nb, nb);
        conv(p + ".conv3", 3, 3, nb, C);
    };

    conv("shallow", 3, 3, 3, C);
    for (int64_t g = 0; g < cfg.num_groups; ++g) {
        std::string gp = "rg" + std::to_string(g);
        for (int64_t b = 0; b < cfg.blocks_per_group; ++b) {
            std::string bp = gp + ".blk" + std::to_string(b);
            lnorm(bp + ".ln1");
            if (block_is_lsa(b)) {
                lin(bp + ".lsa.q", C, C);
                lin(bp + ".lsa.k", C, C);
                lin(bp + ".lsa.v", C, C);
                lin(bp + ".lsa.m", C, C);
            } else {
                conv(bp + ".rgsa.wr", cfg.stride, cfg.stride, 1, C);  // shared across recursions
                conv(bp + ".rgsa.wd", 3, 3, 1, C);
                conv(bp + ".rgsa.wp", 1, 1, C, Cr);
                lin(bp + ".rgsa.q", C, Cr);
                lin(bp + ".rgsa.k", Cr, Cr);
                lin(bp + ".rgsa.v", Cr, C);
                lin(bp + ".rgsa.m", C, C);
            }
            lnorm(bp + ".ln2");
            lin(bp + ".mlp.fc1", C, hid);
            lin(bp + ".mlp.fc2", hid, C);
            if (cfg.skip_mode == SkipMode::Hai) {
                fn(bp + ".alpha", Shape{C}, ParamKind::Alpha);
            }
        }
        bottleneck(gp);
    }
    bottleneck("body");
    conv("recon.pre", 3, 3, C, nf);
    if (cfg.scale == 4) {
        conv("recon.up0", 3, 3, nf, 4 * nf);
        conv("recon.up1", 3, 3, nf, 4 * nf);
    } else {
        conv("recon.up0", 3, 3, nf, cfg.scale * cfg.scale * nf);
    }
    conv("recon.last", 3, 3, nf, 3);
}

// ---- initialization ----

namespace detail {

// self-contained Box-Muller so seeds mean the same thing everywhere
class GaussianRng {
public:
    explicit GaussianRng(uint64_t seed) : eng_(seed) {}

    double uniform() { return double(eng_() >> 11) * (1.0 / 9007199254740992.0); }

    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1;
        do {
            u1 = uniform();
        } while (u1 <= 1e-300);
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 2.0 * M_PI * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    // N(0, sigma^2) truncated at +-2 sigma
    double trunc_normal(double sigma) {
        double z;
        do {
            z = normal();
        } while (std::fabs(z) > 2.0);
        return z * sigma;
    }

private:
    std::mt19937_64 eng_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

} // namespace detail

inline WeightStore init_weights(const ModelConfig& cfg, uint64_t seed, bool trainable = true) {
    detail::GaussianRng rng(seed);
    WeightStore store;
    for_each_param(cfg, [&](const std::string& path, const Shape& shape, ParamKind kind) {
        int64_t n = shape_numel(shape);
        std::vector<double> data(size_t(n), 0.0);
        switch (kind) {
            case ParamKind::LinearWeight:
                for (double& v : data) v = rng.trunc_normal(0.02);
                break;
            case ParamKind::ConvKernel: {
                int64_t fan_in = shape[0] * shape[1] * shape[2];
                double sigma = std::sqrt(2.0 / double(fan_in));
                for (double& v : data) v = rng.normal() * sigma;
                break;
            }
            case ParamKind::Gamma:
                for (double& v : data) v = 1.0;
                break;
            case ParamKind::Beta:
            case ParamKind::BiasZero:
            case ParamKind::Alpha:
                break;  // zeros
        }
        store.put(path, trainable ? Tensor::param(shape, std::move(data))
                                  : Tensor::from_data(shape, std::move(data)));
    });
    return store;
}

// ---- forward pieces ----

struct BlockParams {
    Tensor ln1_g, ln1_b, ln2_g, ln2_b;
    std::optional<LsaWeights> lsa;
    std::optional<RgsaWeights> rgsa;
    Tensor fc1_w, fc1_b, fc2_w, fc2_b;
    Tensor alpha;  // empty unless skip_mode == hai
};

inline BlockParams bind_block(const WeightStore& s, const std::string& bp, bool is_lsa,
                              SkipMode skip) {
    BlockParams p;
    p.ln1_g = s.get(bp + ".ln1.g");
    p.ln1_b = s.get(bp + ".ln1.b");
    p.ln2_g = s.get(bp + ".ln2.g");
    p.ln2_b = s.get(bp + ".ln2.b");
    if (is_lsa) {
        LsaWeights w;
        w.wq = s.get(bp + ".lsa.q.w");
        w.bq = s.get(bp + ".lsa.q.b");
        w.wk = s.get(bp + ".lsa.k.w");
        w.bk = s.get(bp + ".lsa.k.b");
        w.wv = s.get(bp + ".lsa.v.w");
        w.bv = s.get(bp + ".lsa.v.b");
        w.wm = s.get(bp + ".lsa.m.w");
        w.bm = s.get(bp + ".lsa.m.b");
        p.lsa = std::move(w);
    } else {
        RgsaWeights w;
        w.wr = s.get(bp + ".rgsa.wr.w");
        w.br = s.get(bp + ".rgsa.wr.b");
        w.wd = s.get(bp + ".rgsa.wd.w");
        w.bd = s.get(bp + ".rgsa.wd.b");
        w.wp = s.get(bp + ".rgsa.wp.w");
        w.bp = s.get(bp + ".rgsa.wp.b");
        w.wq = s.get(bp + ".rgsa.q.w");
        w.bq = s.get(bp + ".rgsa.q.b");
        w.wk = s.get(bp + ".rgsa.k.w");
        w.bk = s.get(bp + ".rgsa.k.b");
        w.wv = s.get(bp + ".rgsa.v.w");
        w.bv = s.get(bp + ".rgsa.v.b");
        w.wm = s.get(bp + ".rgsa.m.w");
        w.bm = s.get(bp + ".rgsa.m.b");
        p.rgsa = std::move(w);
    }
    p.fc1_w = s.get(bp + ".mlp.fc1.w");
    p.fc1_b = s.get(bp + ".mlp.fc1.b");
    p.fc2_w = s.get(bp + ".mlp.fc2.w");
    p.fc2_b = s.get(bp + ".mlp.fc2.b");
    if (skip == SkipMode::Hai) p.alpha = s.get(bp + ".alpha");
    return p;
}

// Pre-norm Transformer block B(z) with two internal residuals, then the
// outer connection: B(z) + alpha . z for vanilla/hai, plain B(z) for none.
inline Tensor block_forward(const Tensor& z, const BlockParams& p, const ModelConfig& cfg,
                            bool is_lsa, AttentionProbe* probe = nullptr) {
    int64_t H = z.dim(0), W = z.dim(1), C = z.dim(2);
    Tensor normed = layer_norm(z, p.ln1_g, p.ln1_b);
    Tensor attn = is_lsa ? lsa_forward(normed, *p.lsa, cfg.win, cfg.heads, probe)
                         : rgsa_forward(normed, *p.rgsa, cfg.rgsa(), probe);
    Tensor u = add(z, attn);
    Tensor m = layer_norm(u, p.ln2_g, p.ln2_b);
    Tensor m2 = reshape(m, {H * W, C});
    Tensor h = gelu(linear(m2, p.fc1_w, p.fc1_b));
    Tensor mlp_out = reshape(linear(h, p.fc2_w, p.fc2_b), {H, W, C});
    Tensor b = add(u, mlp_out);
    if (cfg.skip_mode == SkipMode::None) return b;
    Tensor alpha = cfg.skip_mode == SkipMode::Hai ? p.alpha : Tensor::full({C}, 1.0);
    if (alpha.shape() != (Shape{C})) throw ShapeError("block_forward: alpha length must equal C");
    return add(b, channel_scale(z, alpha));
}

namespace detail {

inline Tensor bottleneck_forward(const Tensor& x, const WeightStore& s, const std::string& p) {
    Tensor y = conv2d(x, s.get(p + ".conv1.w"), s.get(p + ".conv1.b"), 1, 1, 1);
    y = leaky_relu(y, 0.01);
    y = conv2d(y, s.get(p + ".conv2.w"), s.get(p + ".conv2.b"), 1, 0, 1);
    y = leaky_relu(y, 0.01);
    return conv2d(y, s.get(p + ".conv3.w"), s.get(p + ".conv3.b"), 1, 1, 1);
}

[[noreturn]] inline void rethrow_with_path(const NumericError& e, const std::string& path) {
    throw NumericError(std::string(e.what()) + " [layer " + path + "]");
}

} // namespace detail

// N2 alternating blocks, a bottleneck conv stack, and the group residual.
inline Tensor residual_group_forward(const Tensor& f, const WeightStore& s, const ModelConfig& cfg,
                                     int64_t group_index,
                                     std::vector<Tensor>* block_trace = nullptr) {
    std::string gp = "rg" + std::to_string(group_index);
    Tensor x = f;
    for (int64_t b = 0; b < cfg.blocks_per_group; ++b) {
        std::string bp = gp + ".blk" + std::to_string(b);
        bool is_lsa = block_is_lsa(b);
        BlockParams params = bind_block(s, bp, is_lsa, cfg.skip_mode);
        try {
            x = block_forward(x, params, cfg, is_lsa);
        } catch (const NumericError& e) {
            detail::rethrow_with_path(e, bp);
        }
        if (block_trace) {
            block_trace->push_back(reshape(x, {x.dim(0) * x.dim(1), x.dim(2)}));
        }
    }
    Tensor y;
    try {
        y = detail::bottleneck_forward(x, s, gp);
    } catch (const NumericError& e) {
        detail::rethrow_with_path(e, gp + ".conv");
    }
    if (y.shape() != f.shape()) throw ShapeError("residual group changed the feature shape");
    return add(y, f);
}

// Shallow conv, N1 residual groups with a global body residual, then the
// pixel-shuffle reconstruction head. Output is (scale*H, scale*W, 3).
inline Tensor rgt_forward(const Tensor& lr, const WeightStore& s, const ModelConfig& cfg,
                          std::vector<Tensor>* block_trace = nullptr) {
    cfg.validate();
    if (lr.rank() != 3 || lr.dim(2) != 3) {
        throw ShapeError("rgt_forward: input must be HxWx3, got " + shape_str(lr.shape()));
    }
    for (double v : lr.data()) {
        if (v < -1e-9 || v > 1.0 + 1e-9) {
            throw NumericError("rgt_forward: input pixels must lie in [0,1]");
        }
    }
    Tensor f0;
    try {
        f0 = conv2d(lr, s.get("shallow.w"), s.get("shallow.b"), 1, 1, 1);
    } catch (const NumericError& e) {
        detail::rethrow_with_path(e, "shallow");
    }
    Tensor x = f0;
    for (int64_t g = 0; g < cfg.num_groups; ++g) {
        x = residual_group_forward(x, s, cfg, g, block_trace);
    }
    Tensor fd;
    try {
        fd = detail::bottleneck_forward(x, s, "body");
    } catch (const NumericError& e) {
        detail::rethrow_with_path(e, "body.conv");
    }
    Tensor deep = add(fd, f0);

    try {
        Tensor y = leaky_relu(conv2d(deep, s.get("recon.pre.w"), s.get("recon.pre.b"), 1, 1, 1), 0.01);
        if (cfg.scale == 4) {
            y = pixel_shuffle(conv2d(y, s.get("recon.up0.w"), s.get("recon.up0.b"), 1, 1, 1), 2);
            y = pixel_shuffle(conv2d(y, s.get("recon.up1.w"), s.get("recon.up1.b"), 1, 1, 1), 2);
        } else {
            y = pixel_shuffle(conv2d(y, s.get("recon.up0.w"), s.get("recon.up0.b"), 1, 1, 1), cfg.scale);
        }
        return conv2d(y, s.get("recon.last.w"), s.get("recon.last.b"), 1, 1, 1);
    } catch (const NumericError& e) {
        detail::rethrow_with_path(e, "recon");
    }
}

} // namespace rgt

#pragma once

#include <cmath>
#include <vector>

#include "rgt/ops.hpp"
#include "rgt/tensor.hpp"

namespace rgt {

// Logit offset for padded window tokens. exp(-1e30 - max) underflows to
// exactly 0, so masked tokens get exactly zero attention weight while all
// stored values stay finite.
inline constexpr double kMaskLogit = -1e30;

struct WindowSpec {
    int64_t wh = 8;
    int64_t ww = 32;

    void validate() const {
        if (wh < 1 || ww < 1) throw ConfigError("window extents must be positive");
    }
};

struct RgsaConfig {
    int64_t stride = 4;        // s_r
    int64_t rep_size = 4;      // h, the representative-map size target
    double channel_factor = 0.5;  // c_r
    int64_t heads = 6;
    int64_t embed_dim = 180;   // C
    bool recursion = true;     // ablation switch: false applies the strided conv once

    int64_t reduced_dim() const {  // C_r
        return int64_t(std::llround(double(embed_dim) * channel_factor));
    }

    void validate() const {
        if (stride < 2) throw ConfigError("rg-sa stride must be >= 2 so recursion shrinks");
        if (rep_size < 1) throw ConfigError("representative size must be >= 1");
        if (channel_factor <= 0.0 || channel_factor > 1.0) {
            throw ConfigError("channel factor must lie in (0, 1]");
        }
        if (heads < 1) throw ConfigError("head count must be >= 1");
        if (embed_dim % heads != 0) {
            throw ConfigError("embed dim " + std::to_string(embed_dim) +
                              " not divisible by heads " + std::to_string(heads));
        }
        if (reduced_dim() % heads != 0) {
            throw ConfigError("reduced dim " + std::to_string(reduced_dim()) +
                              " not divisible by heads " + std::to_string(heads));
        }
    }
};

// One shared strided depth-wise kernel per block: the recursion reuses it,
// it is never duplicated per level.
struct RgsaWeights {
    Tensor wr, br;  // depth-wise, kernel s_r x s_r, stride s_r
    Tensor wd, bd;  // depth-wise 3x3, stride 1, pad 1
    Tensor wp, bp;  // point-wise 1x1, C -> C_r
    Tensor wq, bq;  // C -> C_r
    Tensor wk, bk;  // C_r -> C_r
    Tensor wv, bv;  // C_r -> C
    Tensor wm, bm;  // C -> C
};

struct LsaWeights {
    Tensor wq, bq;
    Tensor wk, bk;
    Tensor wv, bv;
    Tensor wm, bm;
};

// Optional white-box hook: per-head attention matrices, value slices and
// pre-projection outputs, in evaluation order.
struct AttentionProbe {
    std::vector<Tensor> attn;
    std::vector<Tensor> values;
    std::vector<Tensor> pre_proj;
};

// T = max(0, floor(log_{s_r}(max(H, W) / h))); computed in exact integer
// arithmetic.
inline int64_t recursion_count(int64_t H, int64_t W, int64_t s_r, int64_t h) {
    if (H < 1 || W < 1 || h < 1) throw ConfigError("recursion_count: extents must be positive");
    if (s_r < 2) throw ConfigError("recursion_count: stride must be >= 2");
    int64_t longest = std::max(H, W);
    int64_t t = 0;
    int64_t reach = h;
    while (reach * s_r <= longest) {
        reach *= s_r;
        ++t;
    }
    return t;
}

namespace detail {

// zero-pad bottom/right up to (minH, minW); identity when already large enough
inline Tensor pad_image_to(const Tensor& x, int64_t minH, int64_t minW) {
    int64_t H = x.dim(0), W = x.dim(1), C = x.dim(2);
    int64_t Hp = std::max(H, minH), Wp = std::max(W, minW);
    if (Hp == H && Wp == W) return x;
    std::vector<int64_t> index(size_t(Hp * Wp * C), -1);
    for (int64_t y = 0; y < H; ++y)
        for (int64_t xc = 0; xc < W; ++xc)
            for (int64_t c = 0; c < C; ++c)
                index[size_t((y * Wp + xc) * C + c)] = (y * W + xc) * C + c;
    return gather_pad(x, std::move(index), {Hp, Wp, C});
}

} // namespace detail

// Recursive generalization module: the shared strided depth-wise conv T
// times, then 3x3 depth-wise refinement, then 1x1 point-wise C -> C_r.
// The long side follows the exact contraction floor(S / s_r) per step; a
// short side that drops under the kernel is zero-padded back up to it and
// floors at 1.
inline Tensor rgm_forward(const Tensor& x, const RgsaWeights& w, const RgsaConfig& cfg) {
    cfg.validate();
    if (x.rank() != 3 || x.dim(2) != cfg.embed_dim) {
        throw ShapeError("rgm_forward: input must be HxWxC with C = " + std::to_string(cfg.embed_dim));
    }
    int64_t T = cfg.recursion
                    ? recursion_count(x.dim(0), x.dim(1), cfg.stride, cfg.rep_size)
                    : (std::max(x.dim(0), x.dim(1)) > cfg.rep_size ? 1 : 0);
    Tensor cur = x;
    for (int64_t t = 0; t < T; ++t) {
        cur = detail::pad_image_to(cur, cfg.stride, cfg.stride);
        cur = conv2d(cur, w.wr, w.br, cfg.stride, 0, cfg.embed_dim);
    }
    cur = conv2d(cur, w.wd, w.bd, 1, 1, cfg.embed_dim);
    cur = conv2d(cur, w.wp, w.bp, 1, 0, 1);
    return cur;
}

namespace detail {

inline Tensor attention_heads(const Tensor& q2d, const Tensor& k2d, const Tensor& v2d,
                              int64_t heads, AttentionProbe* probe) {
    int64_t dq = q2d.dim(1) / heads;
    int64_t dv = v2d.dim(1) / heads;
    double scale = 1.0 / std::sqrt(double(dq));
    std::vector<Tensor> outs;
    outs.reserve(size_t(heads));
    for (int64_t h = 0; h < heads; ++h) {
        Tensor qh = slice2d(q2d, 0, q2d.dim(0), h * dq, (h + 1) * dq);
        Tensor kh = slice2d(k2d, 0, k2d.dim(0), h * dq, (h + 1) * dq);
        Tensor vh = slice2d(v2d, 0, v2d.dim(0), h * dv, (h + 1) * dv);
        Tensor a = softmax(scalar_mul(matmul_nt(qh, kh), scale), 1);
        Tensor oh = matmul(a, vh);
        if (probe) {
            probe->attn.push_back(a);
            probe->values.push_back(vh);
            probe->pre_proj.push_back(oh);
        }
        outs.push_back(oh);
    }
    return heads == 1 ? outs[0] : concat_cols(outs);
}

} // namespace detail

// Cross-attention between the full-resolution features (queries) and the
// representative map (keys/values), multi-head, followed by the fusion
// projection. Output matches the input extents.
inline Tensor rgsa_forward(const Tensor& x, const RgsaWeights& w, const RgsaConfig& cfg,
                           AttentionProbe* probe = nullptr) {
    cfg.validate();
    int64_t H = x.dim(0), W = x.dim(1), C = x.dim(2);
    if (C != cfg.embed_dim) throw ShapeError("rgsa_forward: channel mismatch");
    Tensor xr = rgm_forward(x, w, cfg);
    Tensor x2 = reshape(x, {H * W, C});
    Tensor xr2 = reshape(xr, {xr.dim(0) * xr.dim(1), xr.dim(2)});
    Tensor q = linear(x2, w.wq, w.bq);
    Tensor k = linear(xr2, w.wk, w.bk);
    Tensor v = linear(xr2, w.wv, w.bv);
    Tensor fused = detail::attention_heads(q, k, v, cfg.heads, probe);
    Tensor out = linear(fused, w.wm, w.bm);
    return reshape(out, {H, W, C});
}

// ---- rectangle-window partition ----

struct PadInfo {
    int64_t H = 0, W = 0, C = 0;
    int64_t wh = 0, ww = 0;
    int64_t Hp = 0, Wp = 0;      // padded extents
    int64_t wins_y = 0, wins_x = 0;
    int64_t tokens = 0;          // wh * ww

    int64_t num_windows() const { return wins_y * wins_x; }
    bool padded() const { return Hp != H || Wp != W; }

    // whether token t of window w maps to a real input position
    bool token_valid(int64_t w, int64_t t) const {
        int64_t wy = w / wins_x, wx = w % wins_x;
        int64_t y = wy * wh + t / ww;
        int64_t x = wx * ww + t % ww;
        return y < H && x < W;
    }
};

// Zero-pads bottom/right to window multiples and regroups into
// non-overlapping windows, row-major in window order. Result rows are
// window-major: row = w * tokens + t.
inline std::pair<Tensor, PadInfo> window_partition(const Tensor& x, const WindowSpec& win) {
    win.validate();
    if (x.rank() != 3) throw ShapeError("window_partition: input must be HxWxC");
    PadInfo info;
    info.H = x.dim(0);
    info.W = x.dim(1);
    info.C = x.dim(2);
    info.wh = win.wh;
    info.ww = win.ww;
    info.wins_y = (info.H + win.wh - 1) / win.wh;
    info.wins_x = (info.W + win.ww - 1) / win.ww;
    info.Hp = info.wins_y * win.wh;
    info.Wp = info.wins_x * win.ww;
    info.tokens = win.wh * win.ww;
    int64_t rows = info.num_windows() * info.tokens;
    std::vector<int64_t> index(size_t(rows * info.C));
    int64_t pos = 0;
    for (int64_t w = 0; w < info.num_windows(); ++w) {
        int64_t wy = w / info.wins_x, wx = w % info.wins_x;
        for (int64_t t = 0; t < info.tokens; ++t) {
            int64_t y = wy * win.wh + t / win.ww;
            int64_t xcoord = wx * win.ww + t % win.ww;
            bool inside = y < info.H && xcoord < info.W;
            for (int64_t c = 0; c < info.C; ++c) {
                index[size_t(pos++)] = inside ? (y * info.W + xcoord) * info.C + c : -1;
            }
        }
    }
    return {gather_pad(x, std::move(index), {rows, info.C}), info};
}

// Inverse of window_partition: padding stripped, real positions restored
// exactly. `channels` lets callers reverse a tensor whose channel count
// differs from the partitioned one (per-orientation head groups).
inline Tensor window_reverse(const Tensor& windows, const PadInfo& info, int64_t channels = -1) {
    int64_t C = channels > 0 ? channels : info.C;
    if (windows.rank() != 2 || windows.dim(0) != info.num_windows() * info.tokens ||
        windows.dim(1) != C) {
        throw ShapeError("window_reverse: tensor does not match partition info");
    }
    std::vector<int64_t> index(size_t(info.H * info.W * C));
    for (int64_t y = 0; y < info.H; ++y) {
        for (int64_t x = 0; x < info.W; ++x) {
            int64_t wy = y / info.wh, ly = y % info.wh;
            int64_t wx = x / info.ww, lx = x % info.ww;
            int64_t row = (wy * info.wins_x + wx) * info.tokens + ly * info.ww + lx;
            for (int64_t c = 0; c < C; ++c) {
                index[size_t((y * info.W + x) * C + c)] = row * C + c;
            }
        }
    }
    return gather_pad(windows, std::move(index), {info.H, info.W, C});
}

namespace detail {

// additive column mask for one window with padded tokens
inline Tensor window_mask(const PadInfo& info, int64_t w) {
    std::vector<double> m(size_t(info.tokens * info.tokens), 0.0);
    for (int64_t t = 0; t < info.tokens; ++t) {
        if (!info.token_valid(w, t)) {
            for (int64_t r = 0; r < info.tokens; ++r) m[size_t(r * info.tokens + t)] = kMaskLogit;
        }
    }
    return Tensor::from_data({info.tokens, info.tokens}, std::move(m));
}

// attention over every window of one orientation for one group of heads
inline Tensor lsa_orientation(const Tensor& q2d, const Tensor& k2d, const Tensor& v2d,
                              const Shape& img_shape, const WindowSpec& win, int64_t head_lo,
                              int64_t head_hi, int64_t head_dim, AttentionProbe* probe) {
    int64_t H = img_shape[0], W = img_shape[1];
    int64_t C = q2d.dim(1);
    auto [pq, info] = window_partition(reshape(q2d, {H, W, C}), win);
    Tensor pk = window_partition(reshape(k2d, {H, W, C}), win).first;
    Tensor pv = window_partition(reshape(v2d, {H, W, C}), win).first;
    double scale = 1.0 / std::sqrt(double(head_dim));
    int64_t T = info.tokens;
    std::vector<Tensor> win_rows;
    win_rows.reserve(size_t(info.num_windows()));
    for (int64_t w = 0; w < info.num_windows(); ++w) {
        bool needs_mask = false;
        for (int64_t t = 0; t < T && !needs_mask; ++t) needs_mask = !info.token_valid(w, t);
        Tensor mask = needs_mask ? window_mask(info, w) : Tensor();
        std::vector<Tensor> head_outs;
        head_outs.reserve(size_t(head_hi - head_lo));
        for (int64_t h = head_lo; h < head_hi; ++h) {
            Tensor qh = slice2d(pq, w * T, (w + 1) * T, h * head_dim, (h + 1) * head_dim);
            Tensor kh = slice2d(pk, w * T, (w + 1) * T, h * head_dim, (h + 1) * head_dim);
            Tensor vh = slice2d(pv, w * T, (w + 1) * T, h * head_dim, (h + 1) * head_dim);
            Tensor logits = scalar_mul(matmul_nt(qh, kh), scale);
            if (needs_mask) logits = add(logits, mask);
            Tensor a = softmax(logits, 1);
            Tensor oh = matmul(a, vh);
            if (probe) {
                probe->attn.push_back(a);
                probe->values.push_back(vh);
                probe->pre_proj.push_back(oh);
            }
            head_outs.push_back(oh);
        }
        win_rows.push_back(head_outs.size() == 1 ? head_outs[0] : concat_cols(head_outs));
    }
    Tensor stacked = win_rows.size() == 1 ? win_rows[0] : concat_rows(win_rows);
    int64_t group_c = (head_hi - head_lo) * head_dim;
    Tensor img = window_reverse(stacked, info, group_c);
    return reshape(img, {H * W, group_c});
}

} // namespace detail

// Rectangle-window local self-attention. Heads split half-and-half between
// the wh x ww and ww x wh orientations; positions in different windows of
// the same orientation never interact.
inline Tensor lsa_forward(const Tensor& x, const LsaWeights& w, const WindowSpec& win,
                          int64_t heads, AttentionProbe* probe = nullptr) {
    win.validate();
    if (x.rank() != 3) throw ShapeError("lsa_forward: input must be HxWxC");
    if (heads < 2 || heads % 2 != 0) {
        throw ConfigError("lsa_forward: head count must be even (orientation split), got " +
                          std::to_string(heads));
    }
    int64_t H = x.dim(0), W = x.dim(1), C = x.dim(2);
    if (C % heads != 0) throw ConfigError("lsa_forward: channels not divisible by heads");
    int64_t head_dim = C / heads;
    Tensor x2 = reshape(x, {H * W, C});
    Tensor q = linear(x2, w.wq, w.bq);
    Tensor k = linear(x2, w.wk, w.bk);
    Tensor v = linear(x2, w.wv, w.bv);
    WindowSpec flipped{win.ww, win.wh};
    Tensor lo = detail::lsa_orientation(q, k, v, x.shape(), win, 0, heads / 2, head_dim, probe);
    Tensor hi = detail::lsa_orientation(q, k, v, x.shape(), flipped, heads / 2, heads, head_dim, probe);
    Tensor fused = concat_cols({lo, hi});
    Tensor out = linear(fused, w.wm, w.bm);
    return reshape(out, {H, W, C});
}

} // namespace rgt

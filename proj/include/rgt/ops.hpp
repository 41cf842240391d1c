#pragma once

#include <cmath>
#include <cstring>
#include <limits>
#include <vector>

#include "rgt/tensor.hpp"

namespace rgt {

namespace detail {

// C[m x n] += A[m x k] * B[k x n], row-major, ikj order so the inner loop
// streams both C and B rows.
inline void mm_nn(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
    for (int64_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * n;
        for (int64_t p = 0; p < k; ++p) {
            double av = arow[p];
            if (av == 0.0) continue;
            const double* brow = b + p * n;
            for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// C[m x n] += A[m x k] * B[n x k]^T  (dot products of rows)
inline void mm_nt(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
    for (int64_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * n;
        for (int64_t j = 0; j < n; ++j) {
            const double* brow = b + j * k;
            double s = 0.0;
            for (int64_t p = 0; p < k; ++p) s += arow[p] * brow[p];
            crow[j] += s;
        }
    }
}

// C[k x n] += A[m x k]^T * B[m x n]  (rank-1 row updates)
inline void mm_tn(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
    for (int64_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        const double* brow = b + i * n;
        for (int64_t p = 0; p < k; ++p) {
            double av = arow[p];
            if (av == 0.0) continue;
            double* crow = c + p * n;
            for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

inline void require_2d(const Tensor& t, const char* op) {
    if (t.rank() != 2) throw ShapeError(std::string(op) + ": expected rank-2 tensor, got " + shape_str(t.shape()));
}

} // namespace detail

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    detail::require_2d(a, "matmul");
    detail::require_2d(b, "matmul");
    if (a.dim(1) != b.dim(0)) {
        throw ShapeError("matmul: inner dimensions disagree, " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
    }
    int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    std::vector<double> out(size_t(m * n), 0.0);
    detail::mm_nn(a.data().data(), b.data().data(), out.data(), m, k, n);
    return make_op({m, n}, std::move(out), {a, b}, [m, k, n](detail::Node& nd) {
        auto& na = nd.inputs[0];
        auto& nb = nd.inputs[1];
        // dA = dC * B^T ; dB = A^T * dC
        if (detail::wants_grad(na)) detail::mm_nt(nd.grad.data(), nb->value.data(), na->grad.data(), m, n, k);
        if (detail::wants_grad(nb)) detail::mm_tn(na->value.data(), nd.grad.data(), nb->grad.data(), m, k, n);
    }, "matmul");
}

// a * b^T without materializing the transpose; used for Q K^T.
inline Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    detail::require_2d(a, "matmul_nt");
    detail::require_2d(b, "matmul_nt");
    if (a.dim(1) != b.dim(1)) {
        throw ShapeError("matmul_nt: inner dimensions disagree, " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()) + "^T");
    }
    int64_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
    std::vector<double> out(size_t(m * n), 0.0);
    detail::mm_nt(a.data().data(), b.data().data(), out.data(), m, k, n);
    return make_op({m, n}, std::move(out), {a, b}, [m, k, n](detail::Node& nd) {
        auto& na = nd.inputs[0];
        auto& nb = nd.inputs[1];
        // C = A B^T: dA = dC * B ; dB = dC^T * A
        if (detail::wants_grad(na)) detail::mm_nn(nd.grad.data(), nb->value.data(), na->grad.data(), m, n, k);
        if (detail::wants_grad(nb)) detail::mm_tn(nd.grad.data(), na->value.data(), nb->grad.data(), m, n, k);
    }, "matmul_nt");
}

inline Tensor transpose2d(const Tensor& a) {
    detail::require_2d(a, "transpose2d");
    int64_t m = a.dim(0), n = a.dim(1);
    std::vector<double> out(size_t(m * n));
    const auto& av = a.data();
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) out[size_t(j * m + i)] = av[size_t(i * n + j)];
    return make_op({n, m}, std::move(out), {a}, [m, n](detail::Node& nd) {
        auto& na = nd.inputs[0];
        if (!detail::wants_grad(na)) return;
        for (int64_t i = 0; i < m; ++i)
            for (int64_t j = 0; j < n; ++j) na->grad[size_t(i * n + j)] += nd.grad[size_t(j * m + i)];
    }, "transpose2d");
}

inline Tensor reshape(const Tensor& a, Shape shape) {
    if (shape_numel(shape) != a.numel()) {
        throw ShapeError("reshape: element count mismatch " + shape_str(a.shape()) + " -> " +
                         shape_str(shape));
    }
    std::vector<double> out(a.data());
    return make_op(std::move(shape), std::move(out), {a}, [](detail::Node& nd) {
        auto& na = nd.inputs[0];
        if (!detail::wants_grad(na)) return;
        for (size_t i = 0; i < nd.grad.size(); ++i) na->grad[i] += nd.grad[i];
    }, "reshape");
}

// Rectangular block [r0,r1) x [c0,c1) of a 2-D tensor.
inline Tensor slice2d(const Tensor& a, int64_t r0, int64_t r1, int64_t c0, int64_t c1) {
    detail::require_2d(a, "slice2d");
    int64_t rows = a.dim(0), cols = a.dim(1);
    if (r0 < 0 || r1 > rows || c0 < 0 || c1 > cols || r0 >= r1 || c0 >= c1) {
        throw ShapeError("slice2d: invalid window on " + shape_str(a.shape()));
    }
    int64_t m = r1 - r0, n = c1 - c0;
    std::vector<double> out(size_t(m * n));
    const auto& av = a.data();
    for (int64_t i = 0; i < m; ++i)
        std::memcpy(out.data() + i * n, av.data() + (r0 + i) * cols + c0, size_t(n) * sizeof(double));
    return make_op({m, n}, std::move(out), {a}, [r0, c0, m, n, cols](detail::Node& nd) {
        auto& na = nd.inputs[0];
        if (!detail::wants_grad(na)) return;
        for (int64_t i = 0; i < m; ++i)
            for (int64_t j = 0; j < n; ++j)
                na->grad[size_t((r0 + i) * cols + c0 + j)] += nd.grad[size_t(i * n + j)];
    }, "slice2d");
}

// Horizontal concatenation of 2-D tensors with equal row counts.
inline Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ShapeError("concat_cols: empty input list");
    int64_t rows = parts[0].dim(0), total = 0;
    for (const Tensor& p : parts) {
        detail::require_2d(p, "concat_cols");
        if (p.dim(0) != rows) throw ShapeError("concat_cols: row count mismatch");
        total += p.dim(1);
    }
    std::vector<double> out(size_t(rows * total));
    int64_t off = 0;
    for (const Tensor& p : parts) {
        int64_t n = p.dim(1);
        for (int64_t i = 0; i < rows; ++i)
            std::memcpy(out.data() + i * total + off, p.data().data() + i * n, size_t(n) * sizeof(double));
        off += n;
    }
    std::vector<int64_t> widths;
    for (const Tensor& p : parts) widths.push_back(p.dim(1));
    return make_op({rows, total}, std::move(out), parts, [rows, total, widths](detail::Node& nd) {
        int64_t off = 0;
        for (size_t pi = 0; pi < nd.inputs.size(); ++pi) {
            auto& np = nd.inputs[pi];
            int64_t n = widths[pi];
            if (detail::wants_grad(np)) {
                for (int64_t i = 0; i < rows; ++i)
                    for (int64_t j = 0; j < n; ++j)
                        np->grad[size_t(i * n + j)] += nd.grad[size_t(i * total + off + j)];
            }
            off += n;
        }
    }, "concat_cols");
}

// Vertical concatenation of 2-D tensors with equal column counts.
inline Tensor concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ShapeError("concat_rows: empty input list");
    int64_t cols = parts[0].dim(1), total = 0;
    for (const Tensor& p : parts) {
        detail::require_2d(p, "concat_rows");
        if (p.dim(1) != cols) throw ShapeError("concat_rows: column count mismatch");
        total += p.dim(0);
    }
    std::vector<double> out;
    out.reserve(size_t(total * cols));
    for (const Tensor& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
    std::vector<int64_t> heights;
    for (const Tensor& p : parts) heights.push_back(p.dim(0));
    return make_op({total, cols}, std::move(out), parts, [cols, heights](detail::Node& nd) {
        int64_t off = 0;
        for (size_t pi = 0; pi < nd.inputs.size(); ++pi) {
            auto& np = nd.inputs[pi];
            int64_t n = heights[pi] * cols;
            if (detail::wants_grad(np)) {
                for (int64_t i = 0; i < n; ++i) np->grad[size_t(i)] += nd.grad[size_t(off + i)];
            }
            off += n;
        }
    }, "concat_rows");
}

// out[i] = x[index[i]] for index[i] >= 0, else 0. Pure data movement with
// zero padding; the scatter-add adjoint makes window partitioning
// differentiable.
inline Tensor gather_pad(const Tensor& x, std::vector<int64_t> index, Shape out_shape) {
    int64_t n_out = shape_numel(out_shape);
    if (int64_t(index.size()) != n_out) throw ShapeError("gather_pad: index size does not match output shape");
    const auto& xv = x.data();
    int64_t n_in = x.numel();
    std::vector<double> out(static_cast<size_t>(n_out));
    for (int64_t i = 0; i < n_out; ++i) {
        int64_t src = index[size_t(i)];
        if (src >= n_in) throw ShapeError("gather_pad: index out of range");
        out[size_t(i)] = src < 0 ? 0.0 : xv[size_t(src)];
    }
    auto idx = std::make_shared<std::vector<int64_t>>(std::move(index));
    return make_op(std::move(out_shape), std::move(out), {x}, [idx](detail::Node& nd) {
        auto& nx = nd.inputs[0];
        if (!detail::wants_grad(nx)) return;
        const auto& ix = *idx;
        for (size_t i = 0; i < nd.grad.size(); ++i) {
            int64_t src = ix[i];
            if (src >= 0) nx->grad[size_t(src)] += nd.grad[i];
        }
    }, "gather_pad");
}

// ---- nonlinearities and normalization ----

// Numerically stable softmax along `axis`; rows sum to 1 exactly up to
// rounding because each slice is divided by its own sum.
inline Tensor softmax(const Tensor& x, size_t axis) {
    if (axis >= x.rank()) throw ShapeError("softmax: axis out of range for " + shape_str(x.shape()));
    int64_t axis_len = x.dim(axis);
    int64_t inner = 1;
    for (size_t i = axis + 1; i < x.rank(); ++i) inner *= x.dim(i);
    int64_t outer = x.numel() / (axis_len * inner);
    std::vector<double> out(x.data().size());
    const auto& xv = x.data();
    for (int64_t o = 0; o < outer; ++o) {
        for (int64_t in = 0; in < inner; ++in) {
            int64_t base = o * axis_len * inner + in;
            double mx = -std::numeric_limits<double>::infinity();
            for (int64_t a = 0; a < axis_len; ++a) mx = std::max(mx, xv[size_t(base + a * inner)]);
            double denom = 0.0;
            for (int64_t a = 0; a < axis_len; ++a) {
                double e = std::exp(xv[size_t(base + a * inner)] - mx);
                out[size_t(base + a * inner)] = e;
                denom += e;
            }
            for (int64_t a = 0; a < axis_len; ++a) out[size_t(base + a * inner)] /= denom;
        }
    }
    return make_op(x.shape(), std::move(out), {x}, [axis_len, inner, outer](detail::Node& nd) {
        auto& nx = nd.inputs[0];
        if (!detail::wants_grad(nx)) return;
        // dx = y * (g - sum(g*y)) per slice
        for (int64_t o = 0; o < outer; ++o) {
            for (int64_t in = 0; in < inner; ++in) {
                int64_t base = o * axis_len * inner + in;
                double dot = 0.0;
                for (int64_t a = 0; a < axis_len; ++a) {
                    size_t i = size_t(base + a * inner);
                    dot += nd.grad[i] * nd.value[i];
                }
                for (int64_t a = 0; a < axis_len; ++a) {
                    size_t i = size_t(base + a * inner);
                    nx->grad[i] += nd.value[i] * (nd.grad[i] - dot);
                }
            }
        }
    }, "softmax");
}

// Per-token normalization over the trailing axis, then affine gamma/beta.
inline Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-6) {
    if (x.rank() < 1) throw ShapeError("layer_norm: scalar input");
    int64_t C = x.dim(x.rank() - 1);
    if (gamma.rank() != 1 || beta.rank() != 1 || gamma.dim(0) != C || beta.dim(0) != C) {
        throw ShapeError("layer_norm: channel mismatch, x " + shape_str(x.shape()) + " gamma " +
                         shape_str(gamma.shape()) + " beta " + shape_str(beta.shape()));
    }
    if (eps <= 0.0) throw ConfigError("layer_norm: eps must be positive");
    int64_t tokens = x.numel() / C;
    const auto& xv = x.data();
    const auto& gv = gamma.data();
    const auto& bv = beta.data();
    std::vector<double> out(xv.size());
    auto sigma = std::make_shared<std::vector<double>>(size_t(tokens));
    auto xhat = std::make_shared<std::vector<double>>(xv.size());
    for (int64_t t = 0; t < tokens; ++t) {
        const double* row = xv.data() + t * C;
        double mu = 0.0;
        for (int64_t c = 0; c < C; ++c) mu += row[c];
        mu /= double(C);
        double var = 0.0;
        for (int64_t c = 0; c < C; ++c) var += (row[c] - mu) * (row[c] - mu);
        var /= double(C);
        double sd = std::sqrt(var + eps);
        (*sigma)[size_t(t)] = sd;
        for (int64_t c = 0; c < C; ++c) {
            double xh = (row[c] - mu) / sd;
            (*xhat)[size_t(t * C + c)] = xh;
            out[size_t(t * C + c)] = gv[size_t(c)] * xh + bv[size_t(c)];
        }
    }
    return make_op(x.shape(), std::move(out), {x, gamma, beta},
                   [tokens, C, sigma, xhat](detail::Node& nd) {
        auto& nx = nd.inputs[0];
        auto& ng = nd.inputs[1];
        auto& nb = nd.inputs[2];
        for (int64_t t = 0; t < tokens; ++t) {
            const double* g = nd.grad.data() + t * C;
            const double* xh = xhat->data() + t * C;
            double sd = (*sigma)[size_t(t)];
            double mean_dxh = 0.0, mean_dxh_xh = 0.0;
            for (int64_t c = 0; c < C; ++c) {
                double dxh = g[c] * ng->value[size_t(c)];
                mean_dxh += dxh;
                mean_dxh_xh += dxh * xh[c];
                detail::add_grad(ng, size_t(c), g[c] * xh[c]);
                detail::add_grad(nb, size_t(c), g[c]);
            }
            mean_dxh /= double(C);
            mean_dxh_xh /= double(C);
            if (detail::wants_grad(nx)) {
                for (int64_t c = 0; c < C; ++c) {
                    double dxh = g[c] * ng->value[size_t(c)];
                    nx->grad[size_t(t * C + c)] += (dxh - mean_dxh - xh[c] * mean_dxh_xh) / sd;
                }
            }
        }
    }, "layer_norm");
}

namespace detail {
inline double norm_cdf(double x) { return 0.5 * (1.0 + std::erf(x / std::sqrt(2.0))); }
inline double norm_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI); }
} // namespace detail

// x * Phi(x), exact erf form.
inline Tensor gelu(const Tensor& x) {
    std::vector<double> out(x.data());
    for (double& v : out) v = v * detail::norm_cdf(v);
    return make_op(x.shape(), std::move(out), {x}, [](detail::Node& nd) {
        auto& nx = nd.inputs[0];
        if (!detail::wants_grad(nx)) return;
        for (size_t i = 0; i < nd.grad.size(); ++i) {
            double v = nx->value[i];
            nx->grad[i] += nd.grad[i] * (detail::norm_cdf(v) + v * detail::norm_pdf(v));
        }
    }, "gelu");
}

inline Tensor leaky_relu(const Tensor& x, double slope = 0.01) {
    std::vector<double> out(x.data());
    for (double& v : out) v = v >= 0.0 ? v : slope * v;
    return make_op(x.shape(), std::move(out), {x}, [slope](detail::Node& nd) {
        auto& nx = nd.inputs[0];
        if (!detail::wants_grad(nx)) return;
        for (size_t i = 0; i < nd.grad.size(); ++i) {
            nx->grad[i] += nd.grad[i] * (nx->value[i] >= 0.0 ? 1.0 : slope);
        }
    }, "leaky_relu");
}

// x (... x C) + bias (C), broadcast over leading axes.
inline Tensor add_bias(const Tensor& x, const Tensor& bias) {
    if (x.rank() < 1 || bias.rank() != 1 || x.dim(x.rank() - 1) != bias.dim(0)) {
        throw ShapeError("add_bias: trailing axis of " + shape_str(x.shape()) + " vs bias " +
                         shape_str(bias.shape()));
    }
    int64_t C = bias.dim(0);
    int64_t tokens = x.numel() / C;
    std::vector<double> out(x.data());
    const auto& bv = bias.data();
    for (int64_t t = 0; t < tokens; ++t)
        for (int64_t c = 0; c < C; ++c) out[size_t(t * C + c)] += bv[size_t(c)];
    return make_op(x.shape(), std::move(out), {x, bias}, [tokens, C](detail::Node& nd) {
        auto& nx = nd.inputs[0];
        auto& nb = nd.inputs[1];
        for (int64_t t = 0; t < tokens; ++t)
            for (int64_t c = 0; c < C; ++c) {
                double g = nd.grad[size_t(t * C + c)];
                detail::add_grad(nx, size_t(t * C + c), g);
                detail::add_grad(nb, size_t(c), g);
            }
    }, "add_bias");
}

// x (... x C) * alpha (C) per channel; the HAI adaptor path.
inline Tensor channel_scale(const Tensor& x, const Tensor& alpha) {
    if (x.rank() < 1 || alpha.rank() != 1 || x.dim(x.rank() - 1) != alpha.dim(0)) {
        throw ShapeError("channel_scale: trailing axis of " + shape_str(x.shape()) + " vs alpha " +
                         shape_str(alpha.shape()));
    }
    int64_t C = alpha.dim(0);
    int64_t tokens = x.numel() / C;
    std::vector<double> out(x.data());
    const auto& av = alpha.data();
    for (int64_t t = 0; t < tokens; ++t)
        for (int64_t c = 0; c < C; ++c) out[size_t(t * C + c)] *= av[size_t(c)];
    return make_op(x.shape(), std::move(out), {x, alpha}, [tokens, C](detail::Node& nd) {
        auto& nx = nd.inputs[0];
        auto& na = nd.inputs[1];
        for (int64_t t = 0; t < tokens; ++t)
            for (int64_t c = 0; c < C; ++c) {
                double g = nd.grad[size_t(t * C + c)];
                detail::add_grad(nx, size_t(t * C + c), g * na->value[size_t(c)]);
                detail::add_grad(na, size_t(c), g * nx->value[size_t(t * C + c)]);
            }
    }, "channel_scale");
}

// ---- convolution ----

inline int64_t conv_out_extent(int64_t in, int64_t k, int64_t stride, int64_t padding) {
    return (in + 2 * padding - k) / stride + 1;
}

// Cross-correlation on H x W x Cin with kernel kh x kw x (Cin/groups) x Cout,
// zero padding. Depth-wise is groups == Cin, point-wise is kh == kw == 1.
inline Tensor conv2d(const Tensor& x, const Tensor& kernel, const Tensor& bias, int64_t stride,
                     int64_t padding, int64_t groups = 1) {
    if (x.rank() != 3) throw ShapeError("conv2d: input must be HxWxC, got " + shape_str(x.shape()));
    if (kernel.rank() != 4) throw ShapeError("conv2d: kernel must be kh x kw x (Cin/groups) x Cout");
    int64_t H = x.dim(0), W = x.dim(1), Cin = x.dim(2);
    int64_t kh = kernel.dim(0), kw = kernel.dim(1), cpg = kernel.dim(2), Cout = kernel.dim(3);
    if (stride < 1 || padding < 0 || groups < 1) throw ConfigError("conv2d: bad stride/padding/groups");
    if (Cin % groups != 0 || Cout % groups != 0) {
        throw ConfigError("conv2d: channels not divisible by groups (Cin=" + std::to_string(Cin) +
                          ", Cout=" + std::to_string(Cout) + ", groups=" + std::to_string(groups) + ")");
    }
    if (cpg != Cin / groups) {
        throw ShapeError("conv2d: kernel input-channel extent " + std::to_string(cpg) +
                         " does not equal Cin/groups = " + std::to_string(Cin / groups));
    }
    if (bias.rank() != 1 || bias.dim(0) != Cout) throw ShapeError("conv2d: bias must have Cout entries");
    if (kh > H + 2 * padding || kw > W + 2 * padding) {
        throw ShapeError("conv2d: kernel larger than padded input");
    }
    int64_t Ho = conv_out_extent(H, kh, stride, padding);
    int64_t Wo = conv_out_extent(W, kw, stride, padding);
    int64_t out_per_group = Cout / groups;
    const auto& xv = x.data();
    const auto& kv = kernel.data();
    const auto& bv = bias.data();
    std::vector<double> out(size_t(Ho * Wo * Cout));
    for (int64_t oy = 0; oy < Ho; ++oy) {
        for (int64_t ox = 0; ox < Wo; ++ox) {
            double* orow = out.data() + (oy * Wo + ox) * Cout;
            for (int64_t oc = 0; oc < Cout; ++oc) orow[oc] = bv[size_t(oc)];
            for (int64_t ky = 0; ky < kh; ++ky) {
                int64_t iy = oy * stride + ky - padding;
                if (iy < 0 || iy >= H) continue;
                for (int64_t kx = 0; kx < kw; ++kx) {
                    int64_t ix = ox * stride + kx - padding;
                    if (ix < 0 || ix >= W) continue;
                    const double* xrow = xv.data() + (iy * W + ix) * Cin;
                    const double* krow = kv.data() + (ky * kw) * cpg * Cout + kx * cpg * Cout;
                    for (int64_t g = 0; g < groups; ++g) {
                        for (int64_t ci = 0; ci < cpg; ++ci) {
                            double xval = xrow[g * cpg + ci];
                            const double* kslice = krow + ci * Cout + g * out_per_group;
                            double* oslice = orow + g * out_per_group;
                            for (int64_t co = 0; co < out_per_group; ++co) oslice[co] += xval * kslice[co];
                        }
                    }
                }
            }
        }
    }
    auto back = [H, W, Cin, kh, kw, cpg, Cout, Ho, Wo, out_per_group, stride, padding,
                 groups](detail::Node& nd) {
        auto& nx = nd.inputs[0];
        auto& nk = nd.inputs[1];
        auto& nb = nd.inputs[2];
        bool gx = detail::wants_grad(nx), gk = detail::wants_grad(nk), gb = detail::wants_grad(nb);
        for (int64_t oy = 0; oy < Ho; ++oy) {
            for (int64_t ox = 0; ox < Wo; ++ox) {
                const double* grow = nd.grad.data() + (oy * Wo + ox) * Cout;
                if (gb) {
                    for (int64_t oc = 0; oc < Cout; ++oc) nb->grad[size_t(oc)] += grow[oc];
                }
                for (int64_t ky = 0; ky < kh; ++ky) {
                    int64_t iy = oy * stride + ky - padding;
                    if (iy < 0 || iy >= H) continue;
                    for (int64_t kx = 0; kx < kw; ++kx) {
                        int64_t ix = ox * stride + kx - padding;
                        if (ix < 0 || ix >= W) continue;
                        int64_t xoff = (iy * W + ix) * Cin;
                        int64_t koff = (ky * kw + kx) * cpg * Cout;
                        for (int64_t g = 0; g < groups; ++g) {
                            for (int64_t ci = 0; ci < cpg; ++ci) {
                                int64_t xi = xoff + g * cpg + ci;
                                int64_t kbase = koff + ci * Cout + g * out_per_group;
                                double xval = nx->value[size_t(xi)];
                                double acc = 0.0;
                                for (int64_t co = 0; co < out_per_group; ++co) {
                                    double gv = grow[g * out_per_group + co];
                                    if (gk) nk->grad[size_t(kbase + co)] += gv * xval;
                                    acc += gv * nk->value[size_t(kbase + co)];
                                }
                                if (gx) nx->grad[size_t(xi)] += acc;
                            }
                        }
                    }
                }
            }
        }
    };
    return make_op({Ho, Wo, Cout}, std::move(out), {x, kernel, bias}, std::move(back), "conv2d");
}

// ---- pixel shuffle ----

// H x W x (r^2 C) -> rH x rW x C.
// out(i,j,c) = in(i/r, j/r, c*r^2 + (i%r)*r + (j%r))
inline Tensor pixel_shuffle(const Tensor& x, int64_t r) {
    if (x.rank() != 3) throw ShapeError("pixel_shuffle: input must be HxWxC");
    if (r < 1) throw ConfigError("pixel_shuffle: scale must be >= 1");
    int64_t H = x.dim(0), W = x.dim(1), Cin = x.dim(2);
    if (Cin % (r * r) != 0) {
        throw ConfigError("pixel_shuffle: channel count " + std::to_string(Cin) +
                          " not divisible by r^2 = " + std::to_string(r * r));
    }
    int64_t C = Cin / (r * r);
    int64_t Ho = H * r, Wo = W * r;
    const auto& xv = x.data();
    std::vector<double> out(xv.size());
    for (int64_t i = 0; i < Ho; ++i) {
        for (int64_t j = 0; j < Wo; ++j) {
            for (int64_t c = 0; c < C; ++c) {
                int64_t src = ((i / r) * W + (j / r)) * Cin + c * r * r + (i % r) * r + (j % r);
                out[size_t((i * Wo + j) * C + c)] = xv[size_t(src)];
            }
        }
    }
    return make_op({Ho, Wo, C}, std::move(out), {x}, [H, W, Cin, C, r, Ho, Wo](detail::Node& nd) {
        auto& nx = nd.inputs[0];
        if (!detail::wants_grad(nx)) return;
        for (int64_t i = 0; i < Ho; ++i)
            for (int64_t j = 0; j < Wo; ++j)
                for (int64_t c = 0; c < C; ++c) {
                    int64_t src = ((i / r) * W + (j / r)) * Cin + c * r * r + (i % r) * r + (j % r);
                    nx->grad[size_t(src)] += nd.grad[size_t((i * Wo + j) * C + c)];
                }
    }, "pixel_shuffle");
}

// Exact inverse of the pixel_shuffle index map (value-level, no tape).
inline Tensor pixel_unshuffle_values(const Tensor& y, int64_t r) {
    if (y.rank() != 3) throw ShapeError("pixel_unshuffle: input must be HxWxC");
    int64_t Ho = y.dim(0), Wo = y.dim(1), C = y.dim(2);
    if (Ho % r != 0 || Wo % r != 0) throw ConfigError("pixel_unshuffle: extents not divisible by r");
    int64_t H = Ho / r, W = Wo / r, Cin = C * r * r;
    std::vector<double> out(y.data().size());
    const auto& yv = y.data();
    for (int64_t i = 0; i < Ho; ++i)
        for (int64_t j = 0; j < Wo; ++j)
            for (int64_t c = 0; c < C; ++c) {
                int64_t dst = ((i / r) * W + (j / r)) * Cin + c * r * r + (i % r) * r + (j % r);
                out[size_t(dst)] = yv[size_t((i * Wo + j) * C + c)];
            }
    return Tensor::from_data({H, W, Cin}, std::move(out));
}

// Linear layer helper: tokens (n x in) * W (in x out) + b.
inline Tensor linear(const Tensor& x2d, const Tensor& w, const Tensor& b) {
    return add_bias(matmul(x2d, w), b);
}

} // namespace rgt

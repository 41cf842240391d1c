#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "rgt/error.hpp"
#include "rgt/tensor.hpp"

namespace rgt {

enum class ColorSpace { RGB, Y, YCbCr };
enum class ValueRange { Byte255, Unit };

struct ImagePlane {
    int64_t height = 0;
    int64_t width = 0;
    int64_t channels = 0;  // 1 or 3
    std::vector<double> data;  // row-major, channel-interleaved
    ColorSpace space = ColorSpace::RGB;
    ValueRange range = ValueRange::Byte255;

    double at(int64_t y, int64_t x, int64_t c) const {
        return data[size_t((y * width + x) * channels + c)];
    }
    double& at(int64_t y, int64_t x, int64_t c) {
        return data[size_t((y * width + x) * channels + c)];
    }

    void validate() const {
        if (height < 1 || width < 1) throw ShapeError("image extents must be positive");
        if (channels != 1 && channels != 3) throw ShapeError("images carry 1 or 3 channels");
        if (space == ColorSpace::Y && channels != 1) {
            throw ShapeError("Y images must be single-channel");
        }
        if ((space == ColorSpace::RGB || space == ColorSpace::YCbCr) && channels != 3) {
            throw ShapeError("RGB/YCbCr images must have 3 channels");
        }
        if (int64_t(data.size()) != height * width * channels) {
            throw ShapeError("image buffer does not match extents");
        }
        double hi = range == ValueRange::Byte255 ? 255.0 : 1.0;
        for (double v : data) {
            if (!(v >= 0.0 && v <= hi)) {
                throw NumericError("image value outside declared range [0," +
                                   std::to_string(int(hi)) + "]");
            }
        }
    }
};

// ---- PPM / PGM (binary, maxval 255) ----

namespace detail {

inline int64_t ppm_read_int(std::istream& is) {
    // skip whitespace and '#' comments
    int ch = is.peek();
    while (ch == '#' || std::isspace(ch)) {
        if (ch == '#') {
            while (ch != '\n' && ch != EOF) ch = is.get();
        } else {
            is.get();
        }
        ch = is.peek();
    }
    int64_t v = -1;
    if (!(is >> v) || v < 0) throw IoError("malformed PPM header integer");
    return v;
}

} // namespace detail

inline ImagePlane read_ppm(std::istream& is) {
    char m0 = char(is.get()), m1 = char(is.get());
    if (is.gcount() == 0 || (m0 != 'P') || (m1 != '5' && m1 != '6')) {
        throw IoError("bad magic: expected binary P5 or P6");
    }
    int64_t channels = m1 == '6' ? 3 : 1;
    int64_t w = detail::ppm_read_int(is);
    int64_t h = detail::ppm_read_int(is);
    int64_t maxval = detail::ppm_read_int(is);
    if (maxval != 255) {
        throw IoError("unsupported depth: maxval " + std::to_string(maxval) + ", only 255");
    }
    is.get();  // the single whitespace byte before the payload
    ImagePlane img;
    img.height = h;
    img.width = w;
    img.channels = channels;
    img.space = channels == 3 ? ColorSpace::RGB : ColorSpace::Y;
    img.range = ValueRange::Byte255;
    int64_t n = h * w * channels;
    std::vector<char> buf(static_cast<size_t>(n));
    is.read(buf.data(), n);
    if (is.gcount() != n) throw IoError("truncated PPM payload");
    img.data.resize(size_t(n));
    for (int64_t i = 0; i < n; ++i) img.data[size_t(i)] = double(uint8_t(buf[size_t(i)]));
    img.validate();
    return img;
}

// One fixed header convention so writes are byte-stable:
// "P6\n<w> <h>\n255\n" followed by the payload.
inline void write_ppm(const ImagePlane& img, std::ostream& os) {
    img.validate();
    if (img.range != ValueRange::Byte255) throw IoError("PPM writer expects byte-range images");
    os << (img.channels == 3 ? "P6" : "P5") << "\n" << img.width << " " << img.height << "\n255\n";
    std::vector<char> buf(img.data.size());
    for (size_t i = 0; i < img.data.size(); ++i) {
        double v = std::min(255.0, std::max(0.0, img.data[i]));
        buf[i] = char(uint8_t(std::lround(v)));
    }
    os.write(buf.data(), std::streamsize(buf.size()));
    if (!os) throw IoError("PPM write failed");
}

inline ImagePlane read_ppm_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open: " + path);
    return read_ppm(is);
}

inline void write_ppm_file(const ImagePlane& img, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + path);
    write_ppm(img, os);
}

// ---- BT.601 studio-swing color transform ----

namespace detail {

inline const std::array<std::array<double, 3>, 3>& ycbcr_matrix() {
    static const std::array<std::array<double, 3>, 3> m = {{
        {65.481 / 255.0, 128.553 / 255.0, 24.966 / 255.0},
        {-37.797 / 255.0, -74.203 / 255.0, 112.0 / 255.0},
        {112.0 / 255.0, -93.786 / 255.0, -18.214 / 255.0},
    }};
    return m;
}

inline const std::array<std::array<double, 3>, 3>& ycbcr_inverse() {
    static const std::array<std::array<double, 3>, 3> inv = [] {
        const auto& m = ycbcr_matrix();
        double det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
                     m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
                     m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
        std::array<std::array<double, 3>, 3> r;
        r[0][0] = (m[1][1] * m[2][2] - m[1][2] * m[2][1]) / det;
        r[0][1] = (m[0][2] * m[2][1] - m[0][1] * m[2][2]) / det;
        r[0][2] = (m[0][1] * m[1][2] - m[0][2] * m[1][1]) / det;
        r[1][0] = (m[1][2] * m[2][0] - m[1][0] * m[2][2]) / det;
        r[1][1] = (m[0][0] * m[2][2] - m[0][2] * m[2][0]) / det;
        r[1][2] = (m[0][2] * m[1][0] - m[0][0] * m[1][2]) / det;
        r[2][0] = (m[1][0] * m[2][1] - m[1][1] * m[2][0]) / det;
        r[2][1] = (m[0][1] * m[2][0] - m[0][0] * m[2][1]) / det;
        r[2][2] = (m[0][0] * m[1][1] - m[0][1] * m[1][0]) / det;
        return r;
    }();
    return inv;
}

} // namespace detail

// Y = 16 + (65.481 R + 128.553 G + 24.966 B)/255, chroma offset 128.
inline ImagePlane rgb_to_ycbcr(const ImagePlane& img) {
    img.validate();
    if (img.space != ColorSpace::RGB || img.range != ValueRange::Byte255) {
        throw ShapeError("rgb_to_ycbcr expects an RGB image in [0,255]");
    }
    const auto& m = detail::ycbcr_matrix();
    ImagePlane out = img;
    out.space = ColorSpace::YCbCr;
    for (int64_t p = 0; p < img.height * img.width; ++p) {
        double r = img.data[size_t(p * 3)], g = img.data[size_t(p * 3 + 1)],
               b = img.data[size_t(p * 3 + 2)];
        out.data[size_t(p * 3)] = 16.0 + m[0][0] * r + m[0][1] * g + m[0][2] * b;
        out.data[size_t(p * 3 + 1)] = 128.0 + m[1][0] * r + m[1][1] * g + m[1][2] * b;
        out.data[size_t(p * 3 + 2)] = 128.0 + m[2][0] * r + m[2][1] * g + m[2][2] * b;
    }
    out.validate();
    return out;
}

inline ImagePlane ycbcr_to_rgb(const ImagePlane& img) {
    img.validate();
    if (img.space != ColorSpace::YCbCr) throw ShapeError("ycbcr_to_rgb expects a YCbCr image");
    const auto& inv = detail::ycbcr_inverse();
    ImagePlane out = img;
    out.space = ColorSpace::RGB;
    for (int64_t p = 0; p < img.height * img.width; ++p) {
        double y = img.data[size_t(p * 3)] - 16.0;
        double cb = img.data[size_t(p * 3 + 1)] - 128.0;
        double cr = img.data[size_t(p * 3 + 2)] - 128.0;
        for (int64_t c = 0; c < 3; ++c) {
            double v = inv[c][0] * y + inv[c][1] * cb + inv[c][2] * cr;
            out.data[size_t(p * 3 + c)] = std::min(255.0, std::max(0.0, v));
        }
    }
    out.validate();
    return out;
}

inline ImagePlane extract_y(const ImagePlane& img) {
    if (img.space == ColorSpace::Y) return img;
    ImagePlane ycc = img.space == ColorSpace::YCbCr ? img : rgb_to_ycbcr(img);
    ImagePlane out;
    out.height = ycc.height;
    out.width = ycc.width;
    out.channels = 1;
    out.space = ColorSpace::Y;
    out.range = ValueRange::Byte255;
    out.data.resize(size_t(ycc.height * ycc.width));
    for (int64_t p = 0; p < ycc.height * ycc.width; ++p) out.data[size_t(p)] = ycc.data[size_t(p * 3)];
    return out;
}

// ---- bicubic resampling ----

namespace detail {

// cubic convolution kernel, a = -0.5
inline double cubic_kernel(double t) {
    constexpr double a = -0.5;
    t = std::fabs(t);
    if (t <= 1.0) return (a + 2.0) * t * t * t - (a + 3.0) * t * t + 1.0;
    if (t < 2.0) return a * t * t * t - 5.0 * a * t * t + 8.0 * a * t - 4.0 * a;
    return 0.0;
}

struct ResampleTap {
    std::vector<int64_t> index;   // clamped source indices
    std::vector<double> weight;   // normalized, sums to 1
};

// Align-centers mapping src = (dst + 0.5) * scale - 0.5 with the kernel
// stretched by the scale factor when downscaling (antialiasing) and edges
// replicated.
inline std::vector<ResampleTap> resample_taps(int64_t in, int64_t out) {
    double scale = double(in) / double(out);
    double stretch = std::max(1.0, scale);
    int64_t radius = int64_t(std::ceil(2.0 * stretch));
    std::vector<ResampleTap> taps(static_cast<size_t>(out));
    for (int64_t i = 0; i < out; ++i) {
        double u = (double(i) + 0.5) * scale - 0.5;
        int64_t center = int64_t(std::floor(u));
        ResampleTap tap;
        double total = 0.0;
        for (int64_t j = center - radius + 1; j <= center + radius; ++j) {
            double w = cubic_kernel((u - double(j)) / stretch);
            if (w == 0.0) continue;
            int64_t src = std::min(in - 1, std::max<int64_t>(0, j));
            tap.index.push_back(src);
            tap.weight.push_back(w);
            total += w;
        }
        for (double& w : tap.weight) w /= total;
        taps[size_t(i)] = std::move(tap);
    }
    return taps;
}

} // namespace detail

// Separable cubic resampling on a raw channel-interleaved buffer.
inline std::vector<double> bicubic_resize_buffer(const std::vector<double>& src, int64_t h,
                                                 int64_t w, int64_t ch, int64_t out_h,
                                                 int64_t out_w) {
    if (out_h < 1 || out_w < 1) throw ShapeError("bicubic: target extents must be positive");
    auto rows = detail::resample_taps(h, out_h);
    auto cols = detail::resample_taps(w, out_w);
    // vertical pass
    std::vector<double> tmp(size_t(out_h * w * ch), 0.0);
    for (int64_t y = 0; y < out_h; ++y) {
        const auto& tap = rows[size_t(y)];
        for (size_t k = 0; k < tap.index.size(); ++k) {
            const double* srow = src.data() + tap.index[k] * w * ch;
            double* drow = tmp.data() + y * w * ch;
            double wt = tap.weight[k];
            for (int64_t i = 0; i < w * ch; ++i) drow[i] += wt * srow[i];
        }
    }
    // horizontal pass
    std::vector<double> out(size_t(out_h * out_w * ch), 0.0);
    for (int64_t y = 0; y < out_h; ++y) {
        const double* srow = tmp.data() + y * w * ch;
        double* drow = out.data() + y * out_w * ch;
        for (int64_t x = 0; x < out_w; ++x) {
            const auto& tap = cols[size_t(x)];
            for (size_t k = 0; k < tap.index.size(); ++k) {
                const double* s = srow + tap.index[k] * ch;
                double wt = tap.weight[k];
                for (int64_t c = 0; c < ch; ++c) drow[x * ch + c] += wt * s[c];
            }
        }
    }
    return out;
}

inline ImagePlane bicubic_resize(const ImagePlane& img, int64_t out_h, int64_t out_w) {
    img.validate();
    ImagePlane out = img;
    out.height = out_h;
    out.width = out_w;
    out.data = bicubic_resize_buffer(img.data, img.height, img.width, img.channels, out_h, out_w);
    // cubic lobes can overshoot; clamp back into the declared range
    double hi = img.range == ValueRange::Byte255 ? 255.0 : 1.0;
    for (double& v : out.data) v = std::min(hi, std::max(0.0, v));
    return out;
}

inline Tensor bicubic_resize_tensor(const Tensor& hwc, int64_t out_h, int64_t out_w) {
    if (hwc.rank() != 3) throw ShapeError("bicubic_resize_tensor: input must be HxWxC");
    return Tensor::from_data({out_h, out_w, hwc.dim(2)},
                             bicubic_resize_buffer(hwc.data(), hwc.dim(0), hwc.dim(1), hwc.dim(2),
                                                   out_h, out_w));
}

// ---- metrics ----

namespace detail {

inline void require_same_geometry(const ImagePlane& a, const ImagePlane& b, const char* op) {
    if (a.height != b.height || a.width != b.width || a.channels != b.channels) {
        throw ShapeError(std::string(op) + ": image shapes differ");
    }
}

} // namespace detail

// 10 log10(255^2 / MSE) over the crop-trimmed region; +inf for identical
// inputs. Callers follow the Y-channel protocol (see eval_psnr_y).
inline double psnr(const ImagePlane& a, const ImagePlane& b, int64_t crop = 0) {
    detail::require_same_geometry(a, b, "psnr");
    if (a.range != ValueRange::Byte255 || b.range != ValueRange::Byte255) {
        throw ShapeError("psnr expects byte-range images");
    }
    int64_t y0 = crop, y1 = a.height - crop, x0 = crop, x1 = a.width - crop;
    if (y0 >= y1 || x0 >= x1) throw ShapeError("psnr: crop leaves no pixels");
    double se = 0.0;
    int64_t n = 0;
    for (int64_t y = y0; y < y1; ++y)
        for (int64_t x = x0; x < x1; ++x)
            for (int64_t c = 0; c < a.channels; ++c) {
                double d = a.at(y, x, c) - b.at(y, x, c);
                se += d * d;
                ++n;
            }
    double mse = se / double(n);
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(255.0 * 255.0 / mse);
}

// Wang et al. SSIM: 11x11 Gaussian window sigma 1.5, K1 0.01, K2 0.03,
// L 255, averaged over valid window positions.
inline double ssim(const ImagePlane& a, const ImagePlane& b, int64_t crop = 0) {
    detail::require_same_geometry(a, b, "ssim");
    if (a.channels != 1) throw ShapeError("ssim expects single-channel (Y) images");
    constexpr int64_t win = 11;
    constexpr double sigma = 1.5, k1 = 0.01, k2 = 0.03, L = 255.0;
    const double c1 = (k1 * L) * (k1 * L), c2 = (k2 * L) * (k2 * L);
    int64_t H = a.height - 2 * crop, W = a.width - 2 * crop;
    if (H < win || W < win) throw ShapeError("ssim: image smaller than the 11x11 window");
    static const std::array<double, win> g = [] {
        std::array<double, win> w{};
        double s = 0.0;
        for (int64_t i = 0; i < win; ++i) {
            double d = double(i) - 5.0;
            w[size_t(i)] = std::exp(-d * d / (2.0 * sigma * sigma));
            s += w[size_t(i)];
        }
        for (double& v : w) v /= s;
        return w;
    }();
    auto px = [&](const ImagePlane& img, int64_t y, int64_t x) { return img.at(y + crop, x + crop, 0); };
    double total = 0.0;
    int64_t count = 0;
    for (int64_t y = 0; y + win <= H; ++y) {
        for (int64_t x = 0; x + win <= W; ++x) {
            double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
            for (int64_t i = 0; i < win; ++i) {
                for (int64_t j = 0; j < win; ++j) {
                    double w = g[size_t(i)] * g[size_t(j)];
                    double va = px(a, y + i, x + j), vb = px(b, y + i, x + j);
                    ma += w * va;
                    mb += w * vb;
                    saa += w * va * va;
                    sbb += w * vb * vb;
                    sab += w * va * vb;
                }
            }
            double var_a = saa - ma * ma, var_b = sbb - mb * mb, cov = sab - ma * mb;
            double s = ((2 * ma * mb + c1) * (2 * cov + c2)) /
                       ((ma * ma + mb * mb + c1) * (var_a + var_b + c2));
            total += s;
            ++count;
        }
    }
    return total / double(count);
}

// the evaluation protocol: BT.601 Y channel, border crop
inline double eval_psnr_y(const ImagePlane& a, const ImagePlane& b, int64_t crop) {
    return psnr(extract_y(a), extract_y(b), crop);
}

inline double eval_ssim_y(const ImagePlane& a, const ImagePlane& b, int64_t crop) {
    return ssim(extract_y(a), extract_y(b), crop);
}

struct MetricRow {
    std::string image;
    double psnr_db = 0.0;
    double ssim = 0.0;
};

// CSV report; infinite PSNR (identical images) renders as "inf", never as
// a float overflow.
inline std::string metric_report_csv(const std::vector<MetricRow>& rows) {
    std::ostringstream os;
    os << "image,psnr_db,ssim\n";
    os.precision(6);
    os << std::fixed;
    for (const MetricRow& r : rows) {
        os << r.image << ",";
        if (std::isinf(r.psnr_db)) {
            os << "inf";
        } else {
            os << r.psnr_db;
        }
        os << "," << r.ssim << "\n";
    }
    return os.str();
}

// ---- dihedral augmentation ----

// hflip first, then `rot` quarter-turns clockwise; the 8 combinations are
// the dihedral group of the rectangle.
inline Tensor augment(const Tensor& hwc, bool hflip, int rot) {
    if (hwc.rank() != 3) throw ShapeError("augment: input must be HxWxC");
    if (rot < 0 || rot > 3) throw ConfigError("augment: rot90 count must be 0..3");
    int64_t H = hwc.dim(0), W = hwc.dim(1), C = hwc.dim(2);
    std::vector<double> cur = hwc.data();
    int64_t h = H, w = W;
    if (hflip) {
        std::vector<double> next(cur.size());
        for (int64_t y = 0; y < h; ++y)
            for (int64_t x = 0; x < w; ++x)
                for (int64_t c = 0; c < C; ++c)
                    next[size_t((y * w + (w - 1 - x)) * C + c)] = cur[size_t((y * w + x) * C + c)];
        cur = std::move(next);
    }
    for (int r = 0; r < rot; ++r) {
        std::vector<double> next(cur.size());
        // clockwise: (y, x) -> (x, h-1-y)
        for (int64_t y = 0; y < h; ++y)
            for (int64_t x = 0; x < w; ++x)
                for (int64_t c = 0; c < C; ++c)
                    next[size_t((x * h + (h - 1 - y)) * C + c)] = cur[size_t((y * w + x) * C + c)];
        std::swap(h, w);
        cur = std::move(next);
    }
    return Tensor::from_data({h, w, C}, std::move(cur));
}

inline std::pair<Tensor, Tensor> augment_pair(const Tensor& lr, const Tensor& hr, bool hflip,
                                              int rot) {
    return {augment(lr, hflip, rot), augment(hr, hflip, rot)};
}

// ---- tensor/image bridging ----

inline Tensor image_to_unit_tensor(const ImagePlane& img) {
    img.validate();
    std::vector<double> data = img.data;
    if (img.range == ValueRange::Byte255) {
        for (double& v : data) v /= 255.0;
    }
    return Tensor::from_data({img.height, img.width, img.channels}, std::move(data));
}

inline ImagePlane unit_tensor_to_image(const Tensor& t, ColorSpace space = ColorSpace::RGB) {
    if (t.rank() != 3) throw ShapeError("unit_tensor_to_image: tensor must be HxWxC");
    ImagePlane img;
    img.height = t.dim(0);
    img.width = t.dim(1);
    img.channels = t.dim(2);
    img.space = space;
    img.range = ValueRange::Byte255;
    img.data.resize(t.data().size());
    for (size_t i = 0; i < img.data.size(); ++i) {
        img.data[i] = std::min(255.0, std::max(0.0, t.data()[i] * 255.0));
    }
    img.validate();
    return img;
}

} // namespace rgt

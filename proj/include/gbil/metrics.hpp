#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "gbil/image.hpp"

namespace gbil {

inline constexpr double kPsnrCap = 99.0;

namespace detail {

inline void check_same_size(const Image& a, const Image& b, const char* what) {
    if (a.width != b.width || a.height != b.height)
        throw std::invalid_argument(std::string(what) + ": image size mismatch");
}

inline Image clamped01(const Image& img) {
    Image out = img;
    for (double& v : out.data) v = std::clamp(v, 0.0, 1.0);
    return out;
}

// 11-tap Gaussian window, std 1.5, normalized (the Wang 2004 SSIM window).
inline const std::vector<double>& ssim_kernel() {
    static const std::vector<double> kernel = [] {
        std::vector<double> k(11);
        double sum = 0.0;
        for (int i = 0; i < 11; ++i) {
            const double d = i - 5.0;
            k[i] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
            sum += k[i];
        }
        for (double& v : k) v /= sum;
        return k;
    }();
    return kernel;
}

// Valid-region separable filter of one channel plane (W x H doubles,
// stride 1). Output is (W-10) x (H-10).
inline std::vector<double> filter_valid(const std::vector<double>& src, int w, int h) {
    const auto& k = ssim_kernel();
    const int ow = w - 10;
    const int oh = h - 10;
    std::vector<double> tmp(static_cast<std::size_t>(ow) * h, 0.0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < ow; ++x) {
            double s = 0.0;
            for (int i = 0; i < 11; ++i) s += k[i] * src[static_cast<std::size_t>(y) * w + x + i];
            tmp[static_cast<std::size_t>(y) * ow + x] = s;
        }
    std::vector<double> out(static_cast<std::size_t>(ow) * oh, 0.0);
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
            double s = 0.0;
            for (int i = 0; i < 11; ++i) s += k[i] * tmp[static_cast<std::size_t>(y + i) * ow + x];
            out[static_cast<std::size_t>(y) * ow + x] = s;
        }
    return out;
}

// Adjoint of filter_valid: scatter a (W-10) x (H-10) coefficient map back
// onto the W x H plane through the same separable kernel.
inline std::vector<double> scatter_valid(const std::vector<double>& coef, int w, int h) {
    const auto& k = ssim_kernel();
    const int ow = w - 10;
    const int oh = h - 10;
    std::vector<double> tmp(static_cast<std::size_t>(ow) * h, 0.0);
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
            const double c = coef[static_cast<std::size_t>(y) * ow + x];
            for (int i = 0; i < 11; ++i) tmp[static_cast<std::size_t>(y + i) * ow + x] += k[i] * c;
        }
    std::vector<double> out(static_cast<std::size_t>(w) * h, 0.0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < ow; ++x) {
            const double c = tmp[static_cast<std::size_t>(y) * ow + x];
            for (int i = 0; i < 11; ++i) out[static_cast<std::size_t>(y) * w + x + i] += k[i] * c;
        }
    return out;
}

inline std::vector<double> extract_channel(const Image& img, int c) {
    std::vector<double> plane(static_cast<std::size_t>(img.width) * img.height);
    for (std::size_t i = 0; i < plane.size(); ++i) plane[i] = img.data[i * 3 + c];
    return plane;
}

struct SsimResult {
    double value = 0.0;
    Image grad_a;  // d(mean ssim)/d(a), filled only when requested
};

inline SsimResult ssim_core(const Image& a, const Image& b, bool want_grad) {
    check_same_size(a, b, "ssim");
    if (a.width < 11 || a.height < 11)
        throw std::invalid_argument("ssim: image smaller than the 11x11 window");
    constexpr double kC1 = 0.01 * 0.01;  // (K1 * dynamic range)^2
    constexpr double kC2 = 0.03 * 0.03;

    const int w = a.width;
    const int h = a.height;
    const int ow = w - 10;
    const int oh = h - 10;
    const std::size_t n_pos = static_cast<std::size_t>(ow) * oh;

    SsimResult result;
    if (want_grad) result.grad_a = Image(w, h, 0.0);

    double total = 0.0;
    for (int c = 0; c < 3; ++c) {
        const std::vector<double> x = extract_channel(a, c);
        const std::vector<double> y = extract_channel(b, c);
        std::vector<double> xx(x.size()), yy(x.size()), xy(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) {
            xx[i] = x[i] * x[i];
            yy[i] = y[i] * y[i];
            xy[i] = x[i] * y[i];
        }
        const std::vector<double> mu_x = filter_valid(x, w, h);
        const std::vector<double> mu_y = filter_valid(y, w, h);
        const std::vector<double> f_xx = filter_valid(xx, w, h);
        const std::vector<double> f_yy = filter_valid(yy, w, h);
        const std::vector<double> f_xy = filter_valid(xy, w, h);

        std::vector<double> d_mu(want_grad ? n_pos : 0), d_xx(want_grad ? n_pos : 0),
            d_xy(want_grad ? n_pos : 0);

        for (std::size_t i = 0; i < n_pos; ++i) {
            const double sx = f_xx[i] - mu_x[i] * mu_x[i];
            const double sy = f_yy[i] - mu_y[i] * mu_y[i];
            const double sxy = f_xy[i] - mu_x[i] * mu_y[i];
            const double a1 = 2.0 * mu_x[i] * mu_y[i] + kC1;
            const double a2 = 2.0 * sxy + kC2;
            const double b1 = mu_x[i] * mu_x[i] + mu_y[i] * mu_y[i] + kC1;
            const double b2 = sx + sy + kC2;
            const double s = (a1 * a2) / (b1 * b2);
            total += s;
            if (want_grad) {
                // Derivatives w.r.t. the filtered moments of a; mu_x also
                // enters sigma_x^2 and sigma_xy.
                d_mu[i] = 2.0 * mu_y[i] * (a2 - a1) / (b1 * b2) + 2.0 * mu_x[i] * s * (1.0 / b2 - 1.0 / b1);
                d_xx[i] = -s / b2;
                d_xy[i] = 2.0 * a1 / (b1 * b2);
            }
        }

        if (want_grad) {
            const std::vector<double> s_mu = scatter_valid(d_mu, w, h);
            const std::vector<double> s_xx = scatter_valid(d_xx, w, h);
            const std::vector<double> s_xy = scatter_valid(d_xy, w, h);
            const double norm = 1.0 / (3.0 * static_cast<double>(n_pos));
            for (std::size_t i = 0; i < x.size(); ++i)
                result.grad_a.data[i * 3 + c] = norm * (s_mu[i] + 2.0 * x[i] * s_xx[i] + y[i] * s_xy[i]);
        }
    }
    result.value = total / (3.0 * static_cast<double>(n_pos));
    return result;
}

}  // namespace detail

// Peak signal-to-noise ratio in dB against a [0,1] dynamic range; both
// images are clamped first. Identical images report the 99 dB cap.
inline double psnr(const Image& a, const Image& b) {
    detail::check_same_size(a, b, "psnr");
    double sum = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double d = std::clamp(a.data[i], 0.0, 1.0) - std::clamp(b.data[i], 0.0, 1.0);
        sum += d * d;
    }
    const double mse = sum / static_cast<double>(a.data.size());
    if (mse == 0.0) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

// Mean SSIM, Wang 2004 defaults: 11x11 Gaussian window (std 1.5), K1=0.01,
// K2=0.03, dynamic range 1, valid-region windows only, channels averaged.
inline double ssim(const Image& a, const Image& b) {
    return detail::ssim_core(detail::clamped01(a), detail::clamped01(b), false).value;
}

// SSIM on raw (unclamped) values plus the gradient w.r.t. the first image;
// this is the loss-term entry point, where clamping would kill gradients.
inline detail::SsimResult ssim_with_gradient(const Image& a, const Image& b) {
    return detail::ssim_core(a, b, true);
}

}  // namespace gbil

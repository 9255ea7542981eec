#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "gbil/core.hpp"
#include "gbil/rng.hpp"

namespace gbil {

struct TexelIndex {
    int i_u = 0;
    int i_v = 0;
    double f_u = 0.0;
    double f_v = 0.0;
};

namespace detail {

// Map u in [-sigma, +sigma] to the fractional grid coordinate in [0, n-1],
// border-clamped. Indexing uses the fractional coordinate, not raw u, so that
// f = u' - i is a unitless fraction.
inline double uv_to_grid_coord(double u, int n, double sigma) {
    const double scaled = (n - 1) * (u + sigma) / (2.0 * sigma);
    return std::clamp(scaled, 0.0, static_cast<double>(n - 1));
}

// floor with the top edge folded in: at u' = n-1 exactly, use i = n-2, f = 1
// so the four-texel access pattern stays valid.
inline void split_coord(double coord, int n, int& i, double& f) {
    i = std::min(static_cast<int>(std::floor(coord)), n - 2);
    f = coord - i;
}

}  // namespace detail

inline TexelIndex uv_to_grid(double u, double v, const ColorGridConfig& cfg) {
    if (cfg.n == 1) return {0, 0, 0.0, 0.0};
    TexelIndex t;
    detail::split_coord(detail::uv_to_grid_coord(u, cfg.n, cfg.sigma), cfg.n, t.i_u, t.f_u);
    detail::split_coord(detail::uv_to_grid_coord(v, cfg.n, cfg.sigma), cfg.n, t.i_v, t.f_v);
    return t;
}

inline std::array<double, 3> bilinear(double u, double v, const ColorGridConfig& cfg,
                                      std::span<const double> grid) {
    const int n = cfg.n;
    if (n == 1) return {grid[0], grid[1], grid[2]};
    const TexelIndex t = uv_to_grid(u, v, cfg);
    const double w00 = (1.0 - t.f_u) * (1.0 - t.f_v);
    const double w10 = t.f_u * (1.0 - t.f_v);
    const double w01 = (1.0 - t.f_u) * t.f_v;
    const double w11 = t.f_u * t.f_v;
    std::array<double, 3> c;
    for (int ch = 0; ch < 3; ++ch) {
        c[ch] = grid[texel_offset(n, t.i_u, t.i_v, ch)] * w00 +
                grid[texel_offset(n, t.i_u + 1, t.i_v, ch)] * w10 +
                grid[texel_offset(n, t.i_u, t.i_v + 1, ch)] * w01 +
                grid[texel_offset(n, t.i_u + 1, t.i_v + 1, ch)] * w11;
    }
    return c;
}

struct UvAdjoint {
    double u_hat = 0.0;
    double v_hat = 0.0;
};

// Adjoint of bilinear(). Adds the four weighted copies of c_hat into
// grid_grad (which must be a full n*n*3 accumulator) and returns the
// cotangents of (u, v). Outside the open interval (-sigma, +sigma) the
// lookup is border-clamped, so the spatial gradient is zero there.
inline UvAdjoint adj_bilinear_accum(double u, double v, const ColorGridConfig& cfg,
                                    std::span<const double> grid, const std::array<double, 3>& c_hat,
                                    std::span<double> grid_grad) {
    const int n = cfg.n;
    if (n == 1) {
        for (int ch = 0; ch < 3; ++ch) grid_grad[ch] += c_hat[ch];
        return {0.0, 0.0};
    }
    const TexelIndex t = uv_to_grid(u, v, cfg);
    const double w00 = (1.0 - t.f_u) * (1.0 - t.f_v);
    const double w10 = t.f_u * (1.0 - t.f_v);
    const double w01 = (1.0 - t.f_u) * t.f_v;
    const double w11 = t.f_u * t.f_v;

    double f_u_hat = 0.0;
    double f_v_hat = 0.0;
    for (int ch = 0; ch < 3; ++ch) {
        const double c00 = grid[texel_offset(n, t.i_u, t.i_v, ch)];
        const double c10 = grid[texel_offset(n, t.i_u + 1, t.i_v, ch)];
        const double c01 = grid[texel_offset(n, t.i_u, t.i_v + 1, ch)];
        const double c11 = grid[texel_offset(n, t.i_u + 1, t.i_v + 1, ch)];
        grid_grad[texel_offset(n, t.i_u, t.i_v, ch)] += c_hat[ch] * w00;
        grid_grad[texel_offset(n, t.i_u + 1, t.i_v, ch)] += c_hat[ch] * w10;
        grid_grad[texel_offset(n, t.i_u, t.i_v + 1, ch)] += c_hat[ch] * w01;
        grid_grad[texel_offset(n, t.i_u + 1, t.i_v + 1, ch)] += c_hat[ch] * w11;
        f_u_hat += c_hat[ch] * ((c10 - c00) * (1.0 - t.f_v) + (c11 - c01) * t.f_v);
        f_v_hat += c_hat[ch] * ((c01 - c00) * (1.0 - t.f_u) + (c11 - c10) * t.f_u);
    }

    const double scale = (n - 1) / (2.0 * cfg.sigma);
    UvAdjoint adj;
    adj.u_hat = (u > -cfg.sigma && u < cfg.sigma) ? scale * f_u_hat : 0.0;
    adj.v_hat = (v > -cfg.sigma && v < cfg.sigma) ? scale * f_v_hat : 0.0;
    return adj;
}

struct BilinearAdjoint {
    std::vector<double> grid_grad;  // n*n*3, zero away from the touched texels
    double u_hat = 0.0;
    double v_hat = 0.0;
};

inline BilinearAdjoint adj_bilinear(double u, double v, const ColorGridConfig& cfg,
                                    std::span<const double> grid, const std::array<double, 3>& c_hat) {
    BilinearAdjoint out;
    out.grid_grad.assign(cfg.texels_per_splat(), 0.0);
    const UvAdjoint adj = adj_bilinear_accum(u, v, cfg, grid, c_hat, out.grid_grad);
    out.u_hat = adj.u_hat;
    out.v_hat = adj.v_hat;
    return out;
}

// Box-filter mip reduction: each level averages 2x2 blocks. Requesting at
// least log2(n) levels collapses any grid to its 1x1 mean; anything between
// that needs n divisible by 2^levels.
inline std::vector<double> downsample_grid(std::span<const double> grid, int n, int levels,
                                           int& n_out) {
    if (levels < 0) throw std::invalid_argument("downsample_grid: negative level count");
    std::vector<double> cur(grid.begin(), grid.end());
    int cur_n = n;
    for (int level = 0; level < levels && cur_n > 1; ++level) {
        if (cur_n % 2 != 0) {
            // Odd sizes cannot be halved; only the full collapse to 1x1 is defined.
            if ((1 << (levels - level)) < cur_n)
                throw std::invalid_argument("downsample_grid: grid size not divisible by 2^levels");
            double mean[3] = {0.0, 0.0, 0.0};
            for (int i = 0; i < cur_n * cur_n; ++i)
                for (int ch = 0; ch < 3; ++ch) mean[ch] += cur[i * 3 + ch];
            cur.assign(3, 0.0);
            for (int ch = 0; ch < 3; ++ch) cur[ch] = mean[ch] / (cur_n * cur_n);
            cur_n = 1;
            break;
        }
        const int half = cur_n / 2;
        std::vector<double> next(static_cast<std::size_t>(half) * half * 3, 0.0);
        for (int iu = 0; iu < half; ++iu)
            for (int iv = 0; iv < half; ++iv)
                for (int ch = 0; ch < 3; ++ch) {
                    const double sum = cur[texel_offset(cur_n, 2 * iu, 2 * iv, ch)] +
                                       cur[texel_offset(cur_n, 2 * iu + 1, 2 * iv, ch)] +
                                       cur[texel_offset(cur_n, 2 * iu, 2 * iv + 1, ch)] +
                                       cur[texel_offset(cur_n, 2 * iu + 1, 2 * iv + 1, ch)];
                    next[texel_offset(half, iu, iv, ch)] = sum * 0.25;
                }
        cur = std::move(next);
        cur_n = half;
    }
    n_out = cur_n;
    return cur;
}

// Apply downsample_grid to every splat in the set (the mip diagnostic).
inline SplatSet downsample_set(const SplatSet& set, int levels) {
    int n_out = set.grid_config.n;
    {
        // Dry run on one splat (or an empty grid) to learn the output size.
        std::vector<double> probe(set.grid_config.texels_per_splat(), 0.0);
        downsample_grid(probe, set.grid_config.n, levels, n_out);
    }
    SplatSet out(set.count, ColorGridConfig{n_out, set.grid_config.sigma});
    out.position = set.position;
    out.depth_key = set.depth_key;
    out.theta = set.theta;
    out.log_scale = set.log_scale;
    out.opacity_logit = set.opacity_logit;
    for (std::size_t k = 0; k < set.count; ++k) {
        int n_check = 0;
        const std::vector<double> small = downsample_grid(set.grid_of(k), set.grid_config.n, levels, n_check);
        std::copy(small.begin(), small.end(), out.grid_of(k).begin());
    }
    return out;
}

// Replace every grid with per-texel uniform random colors (splat-count and
// texel order fixed, so a seed fully determines the result).
inline SplatSet randomize_colors(const SplatSet& set, std::uint64_t seed) {
    SplatSet out = set;
    Rng rng(seed);
    for (double& g : out.grid) g = rng.uniform();
    return out;
}

}  // namespace gbil

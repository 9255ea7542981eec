#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <numeric>
#include <vector>

#include "gbil/core.hpp"
#include "gbil/raster.hpp"
#include "gbil/texture.hpp"

namespace gbil {

// Direct transcription of front-to-back compositing: every splat, every
// pixel, global depth order, no culling, no skip threshold, no early
// termination. Slow on purpose; this is the oracle the tiled renderer and
// the analytic backward pass are checked against.
inline RenderOutput render_naive(const SplatSet& set, const ImagePlaneCamera& camera) {
    camera.validate();
    std::vector<std::int32_t> order(set.count);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::int32_t a, std::int32_t b) {
        if (set.depth_key[a] != set.depth_key[b]) return set.depth_key[a] < set.depth_key[b];
        return a < b;
    });

    RenderOutput out;
    out.width = camera.width;
    out.height = camera.height;
    out.color.assign(static_cast<std::size_t>(camera.width) * camera.height * 3, 0.0);
    out.final_transmittance.assign(static_cast<std::size_t>(camera.width) * camera.height, 1.0);
    out.last_rank.assign(static_cast<std::size_t>(camera.width) * camera.height,
                         set.count == 0 ? -1 : static_cast<std::int32_t>(set.count) - 1);
    out.splat_count = set.count;
    out.grid_n = set.grid_config.n;
    out.tile_size = 0;  // not produced by the tiled path

    for (int y = 0; y < camera.height; ++y) {
        for (int x = 0; x < camera.width; ++x) {
            const double px = x + 0.5;
            const double py = y + 0.5;
            double t = 1.0;
            double acc[3] = {0.0, 0.0, 0.0};
            for (std::int32_t id : order) {
                const auto uv = intersect_ortho(set, id, px, py);
                const double alpha =
                    std::min(sigmoid(set.opacity_logit[id]) * gaussian_weight(uv[0], uv[1]), kMaxAlpha);
                const std::array<double, 3> c = bilinear(uv[0], uv[1], set.grid_config, set.grid_of(id));
                for (int ch = 0; ch < 3; ++ch) acc[ch] += c[ch] * alpha * t;
                t *= 1.0 - alpha;
            }
            const std::size_t px_idx = static_cast<std::size_t>(y) * camera.width + x;
            for (int ch = 0; ch < 3; ++ch) out.color[px_idx * 3 + ch] = acc[ch] + t * camera.background[ch];
            out.final_transmittance[px_idx] = t;
        }
    }
    return out;
}

using ImageLoss = std::function<double(const RenderOutput&)>;

namespace detail {

// Central difference over one scalar parameter, rendered with render_naive.
// The denominator uses the realized step (p+h and p-h after rounding), not
// the nominal one.
inline double fd_one(SplatSet& set, const ImagePlaneCamera& camera, const ImageLoss& loss,
                     double* param, double step) {
    const double saved = *param;
    const double hi = saved + step;
    const double lo = saved - step;
    *param = hi;
    const double loss_hi = loss(render_naive(set, camera));
    *param = lo;
    const double loss_lo = loss(render_naive(set, camera));
    *param = saved;
    return (loss_hi - loss_lo) / (hi - lo);
}

}  // namespace detail

// Finite-difference gradient oracle over every raw parameter, including the
// depth keys (whose derivative is almost-everywhere zero: perturbing a sort
// key changes nothing until it crosses another key).
inline GradientBuffer gradient_fd(const SplatSet& splats, const ImagePlaneCamera& camera,
                                  const ImageLoss& loss, double step) {
    if (!(step > 0.0)) throw std::invalid_argument("gradient_fd: step must be > 0");
    SplatSet work = splats;
    GradientBuffer g(work);
    for (std::size_t i = 0; i < work.position.size(); ++i)
        g.position[i] = detail::fd_one(work, camera, loss, &work.position[i], step);
    for (std::size_t i = 0; i < work.depth_key.size(); ++i)
        g.depth_key[i] = detail::fd_one(work, camera, loss, &work.depth_key[i], step);
    for (std::size_t i = 0; i < work.theta.size(); ++i)
        g.theta[i] = detail::fd_one(work, camera, loss, &work.theta[i], step);
    for (std::size_t i = 0; i < work.log_scale.size(); ++i)
        g.log_scale[i] = detail::fd_one(work, camera, loss, &work.log_scale[i], step);
    for (std::size_t i = 0; i < work.opacity_logit.size(); ++i)
        g.opacity_logit[i] = detail::fd_one(work, camera, loss, &work.opacity_logit[i], step);
    for (std::size_t i = 0; i < work.grid.size(); ++i)
        g.grid[i] = detail::fd_one(work, camera, loss, &work.grid[i], step);
    return g;
}

}  // namespace gbil

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <thread>
#include <vector>

#include "gbil/core.hpp"
#include "gbil/texture.hpp"

namespace gbil {

// The three thresholds are standard splatting defaults. Each can be disabled
// (<= 0) so oracle tests can compare against the naive renderer, which has
// none of them.
struct RasterConfig {
    int tile_size = 16;
    double cutoff_radius = 3.0;              // uv units; <= 0 puts every splat in every tile
    double alpha_skip = 1.0 / 255.0;         // <= 0 composites arbitrarily faint splats
    double early_stop_transmittance = 1e-4;  // <= 0 never terminates early
    int threads = 1;

    void validate() const {
        if (tile_size < 1) throw std::invalid_argument("RasterConfig: tile_size must be >= 1");
        if (threads < 1) throw std::invalid_argument("RasterConfig: threads must be >= 1");
    }
};

// Ray-splat intersection for the orthographic image-plane camera: undo the
// splat's rotation and scaling to land in its uv frame.
inline void intersect_ortho(double px, double py, double splat_x, double splat_y, double cos_t,
                            double sin_t, double inv_su, double inv_sv, double& u, double& v) {
    const double dx = px - splat_x;
    const double dy = py - splat_y;
    u = (cos_t * dx + sin_t * dy) * inv_su;
    v = (-sin_t * dx + cos_t * dy) * inv_sv;
}

inline std::array<double, 2> intersect_ortho(const SplatSet& set, std::size_t k, double px, double py) {
    const Activated act = activate(set, k);
    double u, v;
    intersect_ortho(px, py, set.position[2 * k], set.position[2 * k + 1], std::cos(set.theta[k]),
                    std::sin(set.theta[k]), 1.0 / act.s_u, 1.0 / act.s_v, u, v);
    return {u, v};
}

inline double gaussian_weight(double u, double v) { return std::exp(-0.5 * (u * u + v * v)); }

struct Aabb {
    double min_x, max_x, min_y, max_y;
};

// Conservative axis-aligned box of the cutoff-radius uv ellipse, clipped to
// the image. nullopt when the splat cannot touch any pixel (off-screen or
// below the opacity cull threshold).
inline std::optional<Aabb> cull(const SplatSet& set, std::size_t k, const ImagePlaneCamera& camera,
                                const RasterConfig& config) {
    if (config.alpha_skip > 0.0 && sigmoid(set.opacity_logit[k]) < config.alpha_skip)
        return std::nullopt;
    Aabb box;
    if (config.cutoff_radius > 0.0) {
        const Activated act = activate(set, k);
        const double suc = act.s_u * std::cos(set.theta[k]);
        const double sus = act.s_u * std::sin(set.theta[k]);
        const double svc = act.s_v * std::cos(set.theta[k]);
        const double svs = act.s_v * std::sin(set.theta[k]);
        const double hx = config.cutoff_radius * std::sqrt(suc * suc + svs * svs);
        const double hy = config.cutoff_radius * std::sqrt(sus * sus + svc * svc);
        const double x = set.position[2 * k];
        const double y = set.position[2 * k + 1];
        box = {x - hx, x + hx, y - hy, y + hy};
    } else {
        box = {0.0, static_cast<double>(camera.width), 0.0, static_cast<double>(camera.height)};
    }
    box.min_x = std::max(box.min_x, 0.0);
    box.min_y = std::max(box.min_y, 0.0);
    box.max_x = std::min(box.max_x, static_cast<double>(camera.width));
    box.max_y = std::min(box.max_y, static_cast<double>(camera.height));
    if (!(box.min_x < box.max_x) || !(box.min_y < box.max_y)) return std::nullopt;
    return box;
}

struct PixelRange {
    int x0, x1, y0, y1;  // inclusive pixel indices
};

// Pixel-center convention: pixel i is covered when i + 0.5 lies in the box.
inline std::optional<PixelRange> box_to_pixels(const Aabb& box, const ImagePlaneCamera& camera) {
    PixelRange r;
    r.x0 = std::max(0, static_cast<int>(std::ceil(box.min_x - 0.5)));
    r.y0 = std::max(0, static_cast<int>(std::ceil(box.min_y - 0.5)));
    r.x1 = std::min(camera.width - 1, static_cast<int>(std::floor(box.max_x - 0.5)));
    r.y1 = std::min(camera.height - 1, static_cast<int>(std::floor(box.max_y - 0.5)));
    if (r.x0 > r.x1 || r.y0 > r.y1) return std::nullopt;
    return r;
}

// Per-tile work lists, sorted ascending by (depth_key, splat index). The
// tie-breaker makes the order, and with it every composite, deterministic.
struct TileBinning {
    RasterConfig config;
    int width = 0;
    int height = 0;
    int tiles_x = 0;
    int tiles_y = 0;
    std::vector<std::vector<std::int32_t>> tiles;

    int tile_count() const { return tiles_x * tiles_y; }
};

inline TileBinning build_binning(const SplatSet& set, const ImagePlaneCamera& camera,
                                 const RasterConfig& config = {}) {
    camera.validate();
    config.validate();
    TileBinning bin;
    bin.config = config;
    bin.width = camera.width;
    bin.height = camera.height;
    bin.tiles_x = (camera.width + config.tile_size - 1) / config.tile_size;
    bin.tiles_y = (camera.height + config.tile_size - 1) / config.tile_size;
    bin.tiles.assign(bin.tile_count(), {});

    for (std::size_t k = 0; k < set.count; ++k) {
        const auto box = cull(set, k, camera, config);
        if (!box) continue;
        const auto pixels = box_to_pixels(*box, camera);
        if (!pixels) continue;
        const int tx0 = pixels->x0 / config.tile_size;
        const int tx1 = pixels->x1 / config.tile_size;
        const int ty0 = pixels->y0 / config.tile_size;
        const int ty1 = pixels->y1 / config.tile_size;
        for (int ty = ty0; ty <= ty1; ++ty)
            for (int tx = tx0; tx <= tx1; ++tx)
                bin.tiles[ty * bin.tiles_x + tx].push_back(static_cast<std::int32_t>(k));
    }
    for (auto& list : bin.tiles)
        std::sort(list.begin(), list.end(), [&](std::int32_t a, std::int32_t b) {
            if (set.depth_key[a] != set.depth_key[b]) return set.depth_key[a] < set.depth_key[b];
            return a < b;
        });
    return bin;
}

namespace detail {

// Precomputed per-splat quantities for the inner pixel loop.
struct SplatGeom {
    double x, y, cos_t, sin_t, inv_su, inv_sv, s_u, s_v, alpha_k;
    bool su_clamped, sv_clamped;
};

inline std::vector<SplatGeom> build_geometry(const SplatSet& set) {
    std::vector<SplatGeom> geom(set.count);
    for (std::size_t k = 0; k < set.count; ++k) {
        const Activated act = activate(set, k);
        SplatGeom& g = geom[k];
        g.x = set.position[2 * k];
        g.y = set.position[2 * k + 1];
        g.cos_t = std::cos(set.theta[k]);
        g.sin_t = std::sin(set.theta[k]);
        g.s_u = act.s_u;
        g.s_v = act.s_v;
        g.inv_su = 1.0 / act.s_u;
        g.inv_sv = 1.0 / act.s_v;
        g.alpha_k = act.alpha;
        g.su_clamped = std::exp(set.log_scale[2 * k + 0]) < kMinScale;
        g.sv_clamped = std::exp(set.log_scale[2 * k + 1]) < kMinScale;
    }
    return geom;
}

template <typename Fn>
void for_each_tile(int tile_count, int threads, Fn&& fn) {
    threads = std::max(1, std::min(threads, tile_count));
    if (threads <= 1) {
        for (int t = 0; t < tile_count; ++t) fn(t);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (int w = 0; w < threads; ++w) {
        const int begin = static_cast<int>(static_cast<std::int64_t>(tile_count) * w / threads);
        const int end = static_cast<int>(static_cast<std::int64_t>(tile_count) * (w + 1) / threads);
        pool.emplace_back([begin, end, &fn] {
            for (int t = begin; t < end; ++t) fn(t);
        });
    }
    for (auto& th : pool) th.join();
}

}  // namespace detail

// Front-to-back alpha compositing over each tile's depth-sorted list:
// c_acc += c * alpha * T, then T *= (1 - alpha). Color is left unclamped;
// the background is blended with whatever transmittance remains.
inline RenderOutput render_forward(const SplatSet& set, const ImagePlaneCamera& camera,
                                   const TileBinning& binning) {
    camera.validate();
    if (binning.width != camera.width || binning.height != camera.height)
        throw std::invalid_argument("render_forward: binning built for different image size");
    const RasterConfig& cfg = binning.config;
    const ColorGridConfig& grid_cfg = set.grid_config;

    RenderOutput out;
    out.width = camera.width;
    out.height = camera.height;
    out.color.assign(static_cast<std::size_t>(camera.width) * camera.height * 3, 0.0);
    out.final_transmittance.assign(static_cast<std::size_t>(camera.width) * camera.height, 1.0);
    out.last_rank.assign(static_cast<std::size_t>(camera.width) * camera.height, -1);
    out.splat_count = set.count;
    out.grid_n = grid_cfg.n;
    out.tile_size = cfg.tile_size;

    const std::vector<detail::SplatGeom> geom = detail::build_geometry(set);

    detail::for_each_tile(binning.tile_count(), cfg.threads, [&](int tile) {
        const int tx = tile % binning.tiles_x;
        const int ty = tile / binning.tiles_x;
        const int x0 = tx * cfg.tile_size;
        const int y0 = ty * cfg.tile_size;
        const int x1 = std::min(camera.width, x0 + cfg.tile_size);
        const int y1 = std::min(camera.height, y0 + cfg.tile_size);
        const std::vector<std::int32_t>& list = binning.tiles[tile];

        for (int y = y0; y < y1; ++y) {
            for (int x = x0; x < x1; ++x) {
                const double px = x + 0.5;
                const double py = y + 0.5;
                double t = 1.0;
                double acc[3] = {0.0, 0.0, 0.0};
                std::int32_t last = -1;
                for (std::size_t rank = 0; rank < list.size(); ++rank) {
                    const detail::SplatGeom& g = geom[list[rank]];
                    double u, v;
                    intersect_ortho(px, py, g.x, g.y, g.cos_t, g.sin_t, g.inv_su, g.inv_sv, u, v);
                    const double alpha = std::min(g.alpha_k * gaussian_weight(u, v), kMaxAlpha);
                    if (alpha < cfg.alpha_skip) continue;
                    const std::array<double, 3> c = bilinear(u, v, grid_cfg, set.grid_of(list[rank]));
                    const double w = alpha * t;
                    acc[0] += c[0] * w;
                    acc[1] += c[1] * w;
                    acc[2] += c[2] * w;
                    t *= 1.0 - alpha;
                    last = static_cast<std::int32_t>(rank);
                    if (cfg.early_stop_transmittance > 0.0 && t < cfg.early_stop_transmittance) break;
                }
                const std::size_t px_idx = static_cast<std::size_t>(y) * camera.width + x;
                for (int ch = 0; ch < 3; ++ch)
                    out.color[px_idx * 3 + ch] = acc[ch] + t * camera.background[ch];
                out.final_transmittance[px_idx] = t;
                out.last_rank[px_idx] = last;
            }
        }
    });
    return out;
}

// Adjoint of render_forward. Walks each pixel's composited list back to
// front, rewinding T from the stored final transmittance and rebuilding the
// color accumulated behind the current splat (seeded with the background,
// which the forward pass blends in with weight T_final).
//
// Per splat and pixel, with T the transmittance in front of the splat:
//   c_hat      = alpha * T * c_acc_hat              (into adj_bilinear)
//   alpha_hat  = sum_ch c_acc_hat * T * (c - behind)
//   u_hat     += -alpha * u * alpha_hat             (Gaussian opacity term)
// and (u_hat, v_hat) map to position/theta/scale through the transpose of
// the intersection Jacobian, followed by the activation chain rules.
//
// Gradients are accumulated into per-tile buffers and reduced in tile index
// order, so results are bit-identical for any thread count.
inline GradientBuffer render_backward(const SplatSet& set, const ImagePlaneCamera& camera,
                                      const TileBinning& binning, const RenderOutput& output,
                                      const std::vector<double>& image_grad) {
    if (output.splat_count != set.count || output.grid_n != set.grid_config.n ||
        output.tile_size != binning.config.tile_size)
        throw std::invalid_argument("render_backward: output does not match forward inputs");
    if (output.width != camera.width || output.height != camera.height ||
        binning.width != camera.width || binning.height != camera.height)
        throw std::invalid_argument("render_backward: image size mismatch");
    if (image_grad.size() != output.color.size())
        throw std::invalid_argument("render_backward: image_grad size mismatch");

    const RasterConfig& cfg = binning.config;
    const ColorGridConfig& grid_cfg = set.grid_config;
    const std::vector<detail::SplatGeom> geom = detail::build_geometry(set);

    // Record layout per tile-list entry: [x, y, theta, log_su, log_sv,
    // opacity_logit, grid...]
    const std::size_t stride = 6 + static_cast<std::size_t>(grid_cfg.texels_per_splat());
    std::vector<std::vector<double>> partials(binning.tile_count());

    detail::for_each_tile(binning.tile_count(), cfg.threads, [&](int tile) {
        const std::vector<std::int32_t>& list = binning.tiles[tile];
        if (list.empty()) return;
        std::vector<double>& partial = partials[tile];
        partial.assign(list.size() * stride, 0.0);

        const int tx = tile % binning.tiles_x;
        const int ty = tile / binning.tiles_x;
        const int x0 = tx * cfg.tile_size;
        const int y0 = ty * cfg.tile_size;
        const int x1 = std::min(camera.width, x0 + cfg.tile_size);
        const int y1 = std::min(camera.height, y0 + cfg.tile_size);

        for (int y = y0; y < y1; ++y) {
            for (int x = x0; x < x1; ++x) {
                const std::size_t px_idx = static_cast<std::size_t>(y) * camera.width + x;
                const std::int32_t last = output.last_rank[px_idx];
                if (last < 0) continue;
                const double* c_acc_hat = &image_grad[px_idx * 3];
                if (c_acc_hat[0] == 0.0 && c_acc_hat[1] == 0.0 && c_acc_hat[2] == 0.0) continue;

                const double px = x + 0.5;
                const double py = y + 0.5;
                double t = output.final_transmittance[px_idx];
                double behind[3] = {camera.background[0], camera.background[1], camera.background[2]};

                for (std::int32_t rank = last; rank >= 0; --rank) {
                    const std::int32_t id = list[rank];
                    const detail::SplatGeom& g = geom[id];
                    double u, v;
                    intersect_ortho(px, py, g.x, g.y, g.cos_t, g.sin_t, g.inv_su, g.inv_sv, u, v);
                    const double weight = gaussian_weight(u, v);
                    const double alpha_raw = g.alpha_k * weight;
                    const double alpha = std::min(alpha_raw, kMaxAlpha);
                    if (alpha < cfg.alpha_skip) continue;
                    t /= 1.0 - alpha;  // transmittance in front of this splat

                    const std::array<double, 3> c = bilinear(u, v, grid_cfg, set.grid_of(id));
                    double* rec = &partial[rank * stride];

                    const std::array<double, 3> c_hat = {alpha * t * c_acc_hat[0],
                                                         alpha * t * c_acc_hat[1],
                                                         alpha * t * c_acc_hat[2]};
                    const UvAdjoint uv_adj = adj_bilinear_accum(u, v, grid_cfg, set.grid_of(id), c_hat,
                                                                {rec + 6, stride - 6});

                    double alpha_hat = 0.0;
                    for (int ch = 0; ch < 3; ++ch)
                        alpha_hat += c_acc_hat[ch] * t * (c[ch] - behind[ch]);

                    double u_hat = uv_adj.u_hat;
                    double v_hat = uv_adj.v_hat;
                    if (alpha_raw < kMaxAlpha) {  // the cap, when active, blocks the alpha path
                        rec[5] += alpha_hat * weight * sigmoid_derivative_from_value(g.alpha_k);
                        u_hat -= alpha_hat * alpha * u;
                        v_hat -= alpha_hat * alpha * v;
                    }

                    rec[0] += u_hat * (-g.cos_t * g.inv_su) + v_hat * (g.sin_t * g.inv_sv);
                    rec[1] += u_hat * (-g.sin_t * g.inv_su) + v_hat * (-g.cos_t * g.inv_sv);
                    rec[2] += u_hat * (v * g.s_v * g.inv_su) - v_hat * (u * g.s_u * g.inv_sv);
                    if (!g.su_clamped) rec[3] += u_hat * -u;
                    if (!g.sv_clamped) rec[4] += v_hat * -v;

                    for (int ch = 0; ch < 3; ++ch) behind[ch] = alpha * c[ch] + (1.0 - alpha) * behind[ch];
                }
            }
        }
    });

    GradientBuffer grads(set);
    for (int tile = 0; tile < binning.tile_count(); ++tile) {
        const std::vector<std::int32_t>& list = binning.tiles[tile];
        const std::vector<double>& partial = partials[tile];
        if (partial.empty()) continue;
        for (std::size_t rank = 0; rank < list.size(); ++rank) {
            const std::int32_t id = list[rank];
            const double* rec = &partial[rank * stride];
            grads.position[2 * id + 0] += rec[0];
            grads.position[2 * id + 1] += rec[1];
            grads.theta[id] += rec[2];
            grads.log_scale[2 * id + 0] += rec[3];
            grads.log_scale[2 * id + 1] += rec[4];
            grads.opacity_logit[id] += rec[5];
            auto grid_grad = grads.grid_of(id);
            for (std::size_t i = 0; i < grid_grad.size(); ++i) grid_grad[i] += rec[6 + i];
        }
    }
    return grads;
}

inline RenderOutput render(const SplatSet& set, const ImagePlaneCamera& camera,
                           const RasterConfig& config = {}) {
    return render_forward(set, camera, build_binning(set, camera, config));
}

// Diagnostic from the overfitting experiments: same geometry, every grid
// replaced with seeded random texel colors.
inline RenderOutput render_random_colors(const SplatSet& set, const ImagePlaneCamera& camera,
                                         std::uint64_t seed, const RasterConfig& config = {}) {
    const SplatSet colored = randomize_colors(set, seed);
    return render(colored, camera, config);
}

}  // namespace gbil

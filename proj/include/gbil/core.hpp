#pragma once

#include <array>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace gbil {

// Activated opacity is kept strictly below 1 so the backward pass can divide
// by (1 - alpha) when it rewinds transmittance.
inline constexpr double kMaxAlpha = 0.999;
// Scales below this are clamped at activation; avoids 1/s blow-up for
// degenerate splats.
inline constexpr double kMinScale = 1e-8;

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline double logit(double p) { return std::log(p / (1.0 - p)); }

// d sigmoid(x) / dx, given the activated value
inline double sigmoid_derivative_from_value(double s) { return s * (1.0 - s); }

// Per-primitive texture grid setup: n texels per axis over [-sigma, +sigma]^2.
struct ColorGridConfig {
    int n = 1;
    double sigma = 0.5;
    static constexpr int channels = 3;

    int texels_per_splat() const { return n * n * channels; }

    void validate() const {
        if (n < 1)
            throw std::invalid_argument("ColorGridConfig: n must be >= 1");
        if (!(sigma > 0.0))
            throw std::invalid_argument("ColorGridConfig: sigma must be > 0");
    }
};

// Flat grid layout: row-major over (i_u, i_v), channels innermost. The splat
// file format uses the same order, so serialization is a plain copy.
inline std::size_t texel_offset(int n, int i_u, int i_v, int c) {
    return (static_cast<std::size_t>(i_u) * n + i_v) * ColorGridConfig::channels + c;
}

// K primitives in structure-of-arrays layout. position/log_scale are
// interleaved (x0, y0, x1, y1, ...). depth_key is a frozen sort key: it
// orders compositing but receives no gradient.
struct SplatSet {
    std::size_t count = 0;
    ColorGridConfig grid_config;

    std::vector<double> position;       // 2K
    std::vector<double> depth_key;      // K
    std::vector<double> theta;          // K
    std::vector<double> log_scale;      // 2K
    std::vector<double> opacity_logit;  // K
    std::vector<double> grid;           // K * n * n * 3

    SplatSet() = default;
    SplatSet(std::size_t k, const ColorGridConfig& cfg) { resize(k, cfg); }

    void resize(std::size_t k, const ColorGridConfig& cfg) {
        cfg.validate();
        count = k;
        grid_config = cfg;
        position.assign(2 * k, 0.0);
        depth_key.assign(k, 0.0);
        theta.assign(k, 0.0);
        log_scale.assign(2 * k, 0.0);
        opacity_logit.assign(k, 0.0);
        grid.assign(k * cfg.texels_per_splat(), 0.0);
    }

    std::span<double> grid_of(std::size_t k) {
        const std::size_t stride = grid_config.texels_per_splat();
        return {grid.data() + k * stride, stride};
    }
    std::span<const double> grid_of(std::size_t k) const {
        const std::size_t stride = grid_config.texels_per_splat();
        return {grid.data() + k * stride, stride};
    }
};

struct Activated {
    double alpha;  // sigmoid(opacity_logit), in (0, 1)
    double s_u;    // exp(log_scale_u), clamped at kMinScale
    double s_v;
};

inline Activated activate(const SplatSet& set, std::size_t index) {
    assert(index < set.count);
    return {sigmoid(set.opacity_logit[index]),
            std::max(std::exp(set.log_scale[2 * index + 0]), kMinScale),
            std::max(std::exp(set.log_scale[2 * index + 1]), kMinScale)};
}

// Orthographic fitting camera: pixel (i, j) samples the world point
// (i + 0.5, j + 0.5).
struct ImagePlaneCamera {
    int width = 0;
    int height = 0;
    std::array<double, 3> background = {0.0, 0.0, 0.0};

    void validate() const {
        if (width < 1 || height < 1)
            throw std::invalid_argument("ImagePlaneCamera: width and height must be >= 1");
        for (double b : background)
            if (!(b >= 0.0 && b <= 1.0))
                throw std::invalid_argument("ImagePlaneCamera: background must be in [0,1]");
    }
};

// Composited image plus the per-pixel state the backward pass needs: the
// final transmittance and the rank (within the pixel's sorted tile list) of
// the last composited splat. splat_count/grid_n/tile_size fingerprint the
// forward inputs so a mismatched backward call is caught instead of
// silently producing garbage.
struct RenderOutput {
    int width = 0;
    int height = 0;
    std::vector<double> color;                // W*H*3, unclamped
    std::vector<double> final_transmittance;  // W*H, in [0,1]
    std::vector<std::int32_t> last_rank;      // W*H, -1 if nothing composited

    std::size_t splat_count = 0;
    int grid_n = 0;
    int tile_size = 0;

    double& color_at(int x, int y, int c) { return color[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
    double color_at(int x, int y, int c) const { return color[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
};

// Gradients w.r.t. the raw (pre-activation) parameters, mirroring SplatSet.
// depth_key stays zero; it is carried so the layouts line up.
struct GradientBuffer {
    std::size_t count = 0;
    ColorGridConfig grid_config;

    std::vector<double> position;
    std::vector<double> depth_key;
    std::vector<double> theta;
    std::vector<double> log_scale;
    std::vector<double> opacity_logit;
    std::vector<double> grid;

    GradientBuffer() = default;
    explicit GradientBuffer(const SplatSet& like) { reset(like); }

    void reset(const SplatSet& like) {
        count = like.count;
        grid_config = like.grid_config;
        position.assign(2 * count, 0.0);
        depth_key.assign(count, 0.0);
        theta.assign(count, 0.0);
        log_scale.assign(2 * count, 0.0);
        opacity_logit.assign(count, 0.0);
        grid.assign(count * grid_config.texels_per_splat(), 0.0);
    }

    void add(const GradientBuffer& other) {
        assert(count == other.count);
        for (std::size_t i = 0; i < position.size(); ++i) position[i] += other.position[i];
        for (std::size_t i = 0; i < theta.size(); ++i) theta[i] += other.theta[i];
        for (std::size_t i = 0; i < log_scale.size(); ++i) log_scale[i] += other.log_scale[i];
        for (std::size_t i = 0; i < opacity_logit.size(); ++i) opacity_logit[i] += other.opacity_logit[i];
        for (std::size_t i = 0; i < grid.size(); ++i) grid[i] += other.grid[i];
    }

    std::span<double> grid_of(std::size_t k) {
        const std::size_t stride = grid_config.texels_per_splat();
        return {grid.data() + k * stride, stride};
    }
};

}  // namespace gbil

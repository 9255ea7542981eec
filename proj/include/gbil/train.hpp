#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "gbil/core.hpp"
#include "gbil/image.hpp"
#include "gbil/metrics.hpp"
#include "gbil/optim.hpp"
#include "gbil/raster.hpp"
#include "gbil/rng.hpp"
#include "gbil/serialize.hpp"

namespace gbil {

enum class LossKind { mse, mse_plus_ssim };

struct TrainConfig {
    std::size_t splat_count = 1000;
    std::int64_t iterations = 20000;
    LossKind loss = LossKind::mse;
    double ssim_weight = 0.2;
    std::uint64_t seed = 0;
    ColorGridConfig grid{4, 0.5};
    LearningRates lrs;
    // The position rate is a per-pixel base that fit() scales by
    // max(width, height) unless it was set as an absolute value.
    bool position_lr_absolute = false;
    AdamConfig adam;
    RasterConfig raster;
    std::array<double, 3> background = {0.0, 0.0, 0.0};
    std::int64_t log_every = 100;
    std::int64_t checkpoint_every = 0;  // 0 = no checkpoints
    std::string checkpoint_dir;
    bool allow_any_n = false;  // lift the N in {1,2,4,8} validation

    void validate() const {
        if (splat_count < 1) throw std::invalid_argument("TrainConfig: splat_count must be >= 1");
        if (iterations < 1) throw std::invalid_argument("TrainConfig: iterations must be >= 1");
        grid.validate();
        if (!allow_any_n && grid.n != 1 && grid.n != 2 && grid.n != 4 && grid.n != 8)
            throw std::invalid_argument(
                "TrainConfig: texture resolution must be one of 1, 2, 4, 8 (use the force flag for "
                "other values)");
        lrs.validate();
        raster.validate();
        if (log_every < 1) throw std::invalid_argument("TrainConfig: log_every must be >= 1");
        if (checkpoint_every < 0) throw std::invalid_argument("TrainConfig: negative checkpoint cadence");
    }
};

struct FitError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct MetricRecord {
    std::int64_t iter = 0;
    double loss = 0.0;
    double psnr = 0.0;
    double ssim = 0.0;
    double wall_ms = 0.0;
};

struct FitResult {
    SplatSet splats;
    std::vector<MetricRecord> history;
};

// Random initialization for image overfitting: uniform positions over the
// image plane, uniform orientation, distinct depth keys, scales sized so a
// splat's 3-unit footprint covers about W*H/K pixels (jittered x[0.5,2] per
// axis), opacity at 0.5, and a flat base color with slight per-texel
// variation.
inline SplatSet initialize(const Image& target, const TrainConfig& cfg) {
    cfg.validate();
    if (target.width < 1 || target.height < 1)
        throw std::invalid_argument("initialize: empty target image");
    const double w = target.width;
    const double h = target.height;
    if (static_cast<double>(cfg.splat_count) > w * h)
        std::fprintf(stderr, "warning: %zu splats exceed the %d x %d pixel count\n", cfg.splat_count,
                     target.width, target.height);

    SplatSet set(cfg.splat_count, cfg.grid);
    Rng rng(cfg.seed);
    const double s_init = std::sqrt(w * h / (M_PI * static_cast<double>(cfg.splat_count))) / 3.0;
    std::unordered_set<double> used_keys;

    for (std::size_t k = 0; k < set.count; ++k) {
        set.position[2 * k + 0] = rng.uniform(0.0, w);
        set.position[2 * k + 1] = rng.uniform(0.0, h);
        set.theta[k] = rng.uniform(0.0, 2.0 * M_PI);
        double key = rng.uniform();
        while (!used_keys.insert(key).second) key = rng.uniform();
        set.depth_key[k] = key;
        set.log_scale[2 * k + 0] = std::log(s_init * rng.uniform(0.5, 2.0));
        set.log_scale[2 * k + 1] = std::log(s_init * rng.uniform(0.5, 2.0));
        set.opacity_logit[k] = logit(0.5);
        double base[3];
        for (double& b : base) b = rng.uniform(0.2, 0.8);
        auto grid = set.grid_of(k);
        for (std::size_t i = 0; i < grid.size(); ++i) grid[i] = base[i % 3] + rng.normal(0.0, 0.05);
    }
    return set;
}

struct LossResult {
    double value = 0.0;
    Image grad;  // d loss / d rendered
};

// Mean squared error over all pixels and channels, on raw rendered values
// (no clamping here; dead gradients otherwise).
inline LossResult mse_loss(const Image& rendered, const Image& target) {
    detail::check_same_size(rendered, target, "mse_loss");
    LossResult res;
    res.grad = Image(rendered.width, rendered.height, 0.0);
    const double inv_n = 1.0 / static_cast<double>(rendered.data.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < rendered.data.size(); ++i) {
        const double d = rendered.data[i] - target.data[i];
        sum += d * d;
        res.grad.data[i] = 2.0 * d * inv_n;
    }
    res.value = sum * inv_n;
    return res;
}

inline LossResult photometric_loss(const Image& rendered, const Image& target,
                                   const TrainConfig& cfg) {
    LossResult res = mse_loss(rendered, target);
    if (cfg.loss == LossKind::mse_plus_ssim) {
        const auto s = ssim_with_gradient(rendered, target);
        res.value += cfg.ssim_weight * (1.0 - s.value);
        for (std::size_t i = 0; i < res.grad.data.size(); ++i)
            res.grad.data[i] -= cfg.ssim_weight * s.grad_a.data[i];
    }
    return res;
}

namespace detail {

inline void write_checkpoint(const std::string& dir, std::int64_t iter, const SplatSet& set,
                             const std::vector<MetricRecord>& history) {
    char name[64];
    std::snprintf(name, sizeof(name), "/checkpoint_%06lld", static_cast<long long>(iter));
    const std::string base = dir + name;
    try {
        save_splats(base + ".gbil", set);
        std::FILE* f = std::fopen((base + ".history.csv").c_str(), "w");
        if (!f) throw SplatIoError("cannot open " + base + ".history.csv");
        std::fprintf(f, "iter,loss,psnr\n");
        for (const auto& r : history)
            std::fprintf(f, "%lld,%.17g,%.17g\n", static_cast<long long>(r.iter), r.loss, r.psnr);
        std::fclose(f);
    } catch (const std::exception& e) {
        throw FitError(std::string("checkpoint write failed: ") + e.what());
    }
}

}  // namespace detail

// The image-overfitting loop: initialize, then repeat
// {rebin, forward, loss, backward, adam}. Splats move every step, so the
// binning is rebuilt every iteration. Single-threaded runs (and, with the
// tile-ordered gradient reduction, multi-threaded ones too) are bit-exact
// reproducible for a fixed seed.
inline FitResult fit(const Image& target, const TrainConfig& cfg) {
    cfg.validate();
    if (cfg.loss == LossKind::mse_plus_ssim && (target.width < 11 || target.height < 11))
        throw std::invalid_argument("fit: mse_plus_ssim needs images of at least 11x11");

    ImagePlaneCamera camera{target.width, target.height, cfg.background};
    camera.validate();

    LearningRates lrs = cfg.lrs;
    if (!cfg.position_lr_absolute) lrs.position *= std::max(target.width, target.height);

    FitResult result;
    result.splats = initialize(target, cfg);
    AdamState state(result.splats, cfg.adam);

    const auto start = std::chrono::steady_clock::now();
    for (std::int64_t iter = 1; iter <= cfg.iterations; ++iter) {
        const TileBinning binning = build_binning(result.splats, camera, cfg.raster);
        const RenderOutput out = render_forward(result.splats, camera, binning);
        const Image rendered = image_from_render(out);
        const LossResult loss = photometric_loss(rendered, target, cfg);
        if (!std::isfinite(loss.value))
            throw FitError("fit: non-finite loss at iteration " + std::to_string(iter) +
                           "; last checkpoint retained");

        const GradientBuffer grads = render_backward(result.splats, camera, binning, out, loss.grad.data);
        adam_step(result.splats, grads, state, lrs);

        if (iter == 1 || iter == cfg.iterations || iter % cfg.log_every == 0) {
            MetricRecord rec;
            rec.iter = iter;
            rec.loss = loss.value;
            rec.psnr = psnr(rendered, target);
            rec.ssim = (target.width >= 11 && target.height >= 11) ? ssim(rendered, target)
                                                                   : std::nan("");
            rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                                    start)
                              .count();
            result.history.push_back(rec);
        }
        if (cfg.checkpoint_every > 0 && !cfg.checkpoint_dir.empty() &&
            (iter % cfg.checkpoint_every == 0 || iter == cfg.iterations))
            detail::write_checkpoint(cfg.checkpoint_dir, iter, result.splats, result.history);
    }
    return result;
}

}  // namespace gbil

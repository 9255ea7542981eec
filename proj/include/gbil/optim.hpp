#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "gbil/core.hpp"

namespace gbil {

// One learning rate per parameter group. Defaults are the usual Gaussian
// splatting bundle; position is meant to be scaled by the scene extent
// (see scaled_for_image).
struct LearningRates {
    double position = 1.6e-4;
    double theta = 1e-3;
    double log_scale = 5e-3;
    double opacity_logit = 5e-2;
    double color_grid = 2.5e-3;

    // Optional exponential position-LR decay, applied as gamma^t. 1 = off.
    double position_gamma = 1.0;

    static LearningRates scaled_for_image(int width, int height) {
        LearningRates lrs;
        lrs.position *= std::max(width, height);
        return lrs;
    }

    void validate() const {
        if (!(position > 0.0 && theta > 0.0 && log_scale > 0.0 && opacity_logit > 0.0 &&
              color_grid > 0.0))
            throw std::invalid_argument("LearningRates: all rates must be positive");
        if (!(position_gamma > 0.0 && position_gamma <= 1.0))
            throw std::invalid_argument("LearningRates: position_gamma must be in (0, 1]");
    }
};

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

// First/second moment accumulators matching the gradient layout; t counts
// completed steps.
struct AdamState {
    std::int64_t t = 0;
    AdamConfig config;
    std::vector<double> m_position, v_position;
    std::vector<double> m_theta, v_theta;
    std::vector<double> m_log_scale, v_log_scale;
    std::vector<double> m_opacity, v_opacity;
    std::vector<double> m_grid, v_grid;

    AdamState() = default;
    explicit AdamState(const SplatSet& like, const AdamConfig& cfg = {}) : config(cfg) {
        m_position.assign(like.position.size(), 0.0);
        v_position.assign(like.position.size(), 0.0);
        m_theta.assign(like.theta.size(), 0.0);
        v_theta.assign(like.theta.size(), 0.0);
        m_log_scale.assign(like.log_scale.size(), 0.0);
        v_log_scale.assign(like.log_scale.size(), 0.0);
        m_opacity.assign(like.opacity_logit.size(), 0.0);
        v_opacity.assign(like.opacity_logit.size(), 0.0);
        m_grid.assign(like.grid.size(), 0.0);
        v_grid.assign(like.grid.size(), 0.0);
    }
};

namespace detail {

inline void adam_group(std::span<double> params, std::span<const double> grads, std::span<double> m,
                       std::span<double> v, double lr, const AdamConfig& cfg, double bias1,
                       double bias2, const char* group_name) {
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grads[i];
        if (std::isnan(g) || std::isinf(g))
            throw std::runtime_error(std::string("adam_step: non-finite gradient in group '") +
                                     group_name + "' at index " + std::to_string(i));
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
        const double m_hat = m[i] / bias1;
        const double v_hat = v[i] / bias2;
        params[i] -= lr * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
    }
}

}  // namespace detail

// One Adam step with bias correction, per group with its group learning
// rate. depth_key is a frozen sort key and is never updated.
inline void adam_step(SplatSet& params, const GradientBuffer& grads, AdamState& state,
                      const LearningRates& lrs) {
    if (grads.count != params.count || grads.grid.size() != params.grid.size())
        throw std::invalid_argument("adam_step: gradient shape mismatch");
    lrs.validate();
    const AdamConfig& cfg = state.config;
    state.t += 1;
    const double bias1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
    const double bias2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
    const double pos_lr = lrs.position * std::pow(lrs.position_gamma, static_cast<double>(state.t - 1));

    detail::adam_group(params.position, grads.position, state.m_position, state.v_position, pos_lr,
                       cfg, bias1, bias2, "position");
    detail::adam_group(params.theta, grads.theta, state.m_theta, state.v_theta, lrs.theta, cfg, bias1,
                       bias2, "theta");
    detail::adam_group(params.log_scale, grads.log_scale, state.m_log_scale, state.v_log_scale,
                       lrs.log_scale, cfg, bias1, bias2, "log_scale");
    detail::adam_group(params.opacity_logit, grads.opacity_logit, state.m_opacity, state.v_opacity,
                       lrs.opacity_logit, cfg, bias1, bias2, "opacity_logit");
    detail::adam_group(params.grid, grads.grid, state.m_grid, state.v_grid, lrs.color_grid, cfg,
                       bias1, bias2, "color_grid");
}

}  // namespace gbil

#pragma once

// Layer-wise weight-decay control from per-module OUI.
//
// Control law (multiplicative, clipped):
//   wd <- clip(wd * exp(eta * (oui_smoothed - target)), wd_min, wd_max)
//
// With eta > 0, OUI above target raises decay and OUI below target lowers it.
// A negative eta flips the convention. eta = 0 is the identity.

#include "oui/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>

namespace oui {

struct ControllerConfig {
    double target = 0.5;
    double eta = 1.0;
    std::int64_t cadence = 50;  // steps between updates
    double wd_min = 1e-6;
    double wd_max = 1e-1;
    double alpha = 0.1;         // EMA smoothing of the per-module OUI signal

    bool operator==(const ControllerConfig&) const = default;
};

inline void validate(const ControllerConfig& cfg) {
    if (!(cfg.target > 0.0 && cfg.target < 1.0))
        throw ConfigError("controller: target must be in (0, 1), got " + std::to_string(cfg.target));
    if (!std::isfinite(cfg.eta)) throw ConfigError("controller: eta must be finite");
    if (cfg.cadence < 1) throw ConfigError("controller: cadence must be >= 1");
    if (!(cfg.wd_min > 0.0) || !std::isfinite(cfg.wd_max))
        throw ConfigError("controller: bounds must be positive and finite");
    if (!(cfg.wd_min <= cfg.wd_max))
        throw ConfigError("controller: wd_min (" + std::to_string(cfg.wd_min) + ") exceeds wd_max (" +
                          std::to_string(cfg.wd_max) + ")");
    if (!(cfg.alpha > 0.0 && cfg.alpha <= 1.0)) throw ConfigError("controller: alpha must be in (0, 1]");
}

// Whether this convention raises decay when OUI exceeds the target.
inline const char* sign_convention(const ControllerConfig& cfg) noexcept {
    if (cfg.eta > 0.0) return "oui_above_target_increases_decay";
    if (cfg.eta < 0.0) return "oui_above_target_decreases_decay";
    return "identity";
}

inline double controller_step(double current_wd, double smoothed_oui, const ControllerConfig& cfg) {
    validate(cfg);
    if (!(current_wd > 0.0) || !std::isfinite(current_wd))
        throw ConfigError("controller_step: current weight decay must be positive");
    if (!(smoothed_oui >= 0.0 && smoothed_oui <= 1.0))
        throw ConfigError("controller_step: OUI must be in [0, 1]");
    if (cfg.eta == 0.0) return current_wd;
    const double proposed = current_wd * std::exp(cfg.eta * (smoothed_oui - cfg.target));
    return std::clamp(proposed, cfg.wd_min, cfg.wd_max);
}

}  // namespace oui

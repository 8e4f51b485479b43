#pragma once

#include <cmath>

#include "bodyfit/linalg.hpp"

namespace bodyfit {

struct AdamConfig {
    double learning_rate = 1e-2;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

// Bias-corrected Adam state for a flat parameter vector.
struct AdamState {
    Vec m;
    Vec v;
    long step = 0;

    explicit AdamState(Eigen::Index size) : m(Vec::Zero(size)), v(Vec::Zero(size)) {}
};

inline void adam_step(AdamState& state, Vec& params, const Vec& gradient,
                      const AdamConfig& config) {
    state.step += 1;
    state.m = config.beta1 * state.m + (1.0 - config.beta1) * gradient;
    state.v = config.beta2 * state.v + (1.0 - config.beta2) * gradient.cwiseProduct(gradient);
    const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
    params -= config.learning_rate *
              ((state.m / c1).array() / ((state.v / c2).array().sqrt() + config.epsilon))
                  .matrix();
}

}  // namespace bodyfit

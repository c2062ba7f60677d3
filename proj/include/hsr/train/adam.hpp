#pragma once

#include "hsr/core/types.hpp"
#include "hsr/error.hpp"

#include <cstdint>

namespace hsr {

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-15;
};

/// Per-tensor adaptive-moment state. Shapes follow the parameter tensor.
struct AdamState {
    MatX m, v;
    std::int64_t step = 0;
    int skipped = 0;

    static AdamState zero(Index rows, Index cols) {
        AdamState s;
        s.m = MatX::Zero(rows, cols);
        s.v = MatX::Zero(rows, cols);
        return s;
    }

    bool matches(Index rows, Index cols) const {
        return m.rows() == rows && m.cols() == cols;
    }
};

/// Bias-corrected adaptive-moment update. Non-finite gradients skip the whole
/// step (parameters and moments untouched) and bump the skip counter.
/// Returns whether the step was applied.
template <typename ParamT, typename GradT>
bool adam_step(ParamT& params, const GradT& grads, AdamState& state, double lr,
               const AdamConfig& cfg = {}) {
    if (params.rows() != grads.rows() || params.cols() != grads.cols())
        throw PreconditionError("adam_step: parameter/gradient shape mismatch");
    if (!state.matches(params.rows(), params.cols()))
        throw PreconditionError("adam_step: state shape mismatch");
    if (!grads.allFinite()) {
        ++state.skipped;
        return false;
    }
    ++state.step;
    state.m = cfg.beta1 * state.m + (1.0 - cfg.beta1) * grads;
    state.v.array() = cfg.beta2 * state.v.array() + (1.0 - cfg.beta2) * grads.array().square();
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    params.array() -=
        (lr / bc1) * state.m.array() / ((state.v.array() / bc2).sqrt() + cfg.eps);
    return true;
}

} // namespace hsr

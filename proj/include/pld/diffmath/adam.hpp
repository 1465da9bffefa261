#pragma once

#include "pld/diffmath/tape.hpp"

#include <cmath>
#include <vector>

namespace pld {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    std::vector<Matrix> m;
    std::vector<Matrix> v;
    long step = 0;
};

/// One bias-corrected Adam update of every parameter from its accumulated grad.
inline void adam_step(const std::vector<Parameter*>& params, AdamState& state, const AdamConfig& cfg) {
    if (state.m.empty()) {
        for (const Parameter* p : params) {
            state.m.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
            state.v.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
        }
    }
    if (state.m.size() != params.size()) throw ShapeError("adam_step: state does not match parameter list");
    ++state.step;
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Parameter& p = *params[i];
        require_same_shape(p.value, p.grad, "adam_step");
        require_same_shape(p.value, state.m[i], "adam_step");
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * p.grad;
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * p.grad.cwiseAbs2();
        p.value.array() -= cfg.lr * (state.m[i].array() / c1) / ((state.v[i].array() / c2).sqrt() + cfg.eps);
        require_finite(p.value, "adam_step");
    }
}

/// Parameter list bound to its optimiser state.
class Adam {
public:
    Adam() = default;
    Adam(std::vector<Parameter*> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {}

    void zero_grad() {
        for (Parameter* p : params_) p->zero_grad();
    }
    void step() { adam_step(params_, state_, cfg_); }

    const std::vector<Parameter*>& parameters() const { return params_; }
    AdamConfig& config() { return cfg_; }
    const AdamState& state() const { return state_; }

private:
    std::vector<Parameter*> params_;
    AdamConfig cfg_;
    AdamState state_;
};

}  // namespace pld

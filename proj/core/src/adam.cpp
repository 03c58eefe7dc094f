// Copyright (c) 2026 bonefield contributors
// SPDX-License-Identifier: Apache-2.0
#include "bonefield/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace bonefield {

void adam_step(std::vector<double>& param, const std::vector<double>& grad, AdamSlot& slot,
               const AdamConfig& cfg, int64_t t) {
    if (param.size() != grad.size()) throw std::runtime_error("adam_step: size mismatch");
    if (slot.m.empty()) {
        slot.m.assign(param.size(), 0.0);
        slot.v.assign(param.size(), 0.0);
    }
    if (slot.m.size() != param.size()) throw std::runtime_error("adam_step: stale moment arrays");
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
    for (size_t i = 0; i < param.size(); ++i) {
        const double g = grad[i];
        if (!std::isfinite(g)) throw std::runtime_error("adam_step: non-finite gradient");
        slot.m[i] = cfg.beta1 * slot.m[i] + (1.0 - cfg.beta1) * g;
        slot.v[i] = cfg.beta2 * slot.v[i] + (1.0 - cfg.beta2) * g * g;
        const double mhat = slot.m[i] / bc1;
        const double vhat = slot.v[i] / bc2;
        param[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
}

void AdamOptimizer::add_group(std::vector<Tensor> params, AdamConfig cfg) {
    Group g;
    g.params = std::move(params);
    g.slots.resize(g.params.size());
    g.cfg = cfg;
    groups_.push_back(std::move(g));
}

void AdamOptimizer::zero_grad() {
    for (auto& g : groups_)
        for (auto& p : g.params) p.zero_grad();
}

void AdamOptimizer::step() {
    ++step_count_;
    for (auto& g : groups_) {
        for (size_t i = 0; i < g.params.size(); ++i) {
            Tensor& p = g.params[i];
            if (!p.has_grad()) continue;
            adam_step(p.mutable_data(), p.grad(), g.slots[i], g.cfg, step_count_);
        }
    }
}

}  // namespace bonefield

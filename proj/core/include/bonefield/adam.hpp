// Copyright (c) 2026 bonefield contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "bonefield/tensor.hpp"

namespace bonefield {

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Per-parameter moment estimates; arrays always match the parameter size.
struct AdamSlot {
    std::vector<double> m;
    std::vector<double> v;
};

// One bias-corrected Adam update, in place. `t` is the 1-based step count.
void adam_step(std::vector<double>& param, const std::vector<double>& grad, AdamSlot& slot,
               const AdamConfig& cfg, int64_t t);

// Groups share a step counter but each carries its own learning rate
// (network weights and latent codes train at different rates).
class AdamOptimizer {
public:
    void add_group(std::vector<Tensor> params, AdamConfig cfg);
    void zero_grad();
    void step();
    int64_t step_count() const { return step_count_; }

private:
    struct Group {
        std::vector<Tensor> params;
        std::vector<AdamSlot> slots;
        AdamConfig cfg;
    };
    std::vector<Group> groups_;
    int64_t step_count_ = 0;
};

}  // namespace bonefield

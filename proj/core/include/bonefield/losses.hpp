// Copyright (c) 2026 bonefield contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <vector>

#include "bonefield/dataset.hpp"
#include "bonefield/kinematics.hpp"
#include "bonefield/rendering.hpp"
#include "bonefield/tensor.hpp"

namespace bonefield {

struct LossWeights {
    double color = 1.0;
    double eikonal = 0.1;
    double skinning = 0.1;
    double latent_reg = 1e-3;
    double surface = 1.0;
    double normal = 1.0;
    double joints = 1e-2;
};

// Mean absolute error over every element (pixels x channels).
Tensor loss_color(const Tensor& rendered, const Tensor& target);

// Mean over rows of the L1 distance between weight vectors on the simplex.
Tensor loss_weights(const Tensor& predicted, const Tensor& reference);

// ||shape||_2 + ||color||_2.
Tensor loss_reg(const Tensor& shape_code, const Tensor& color_code);

// Batched scalar field: [N,3] -> [N,1], differentiable w.r.t. its input.
using FieldFn = std::function<Tensor(const Tensor& points)>;

// mean (||grad G|| - 1)^2 over the sample points, via double backward.
Tensor loss_eikonal(const FieldFn& field, const Tensor& points_leaf);

struct PriorLossTerms {
    Tensor surface;  // mean |G(x_surf)|
    Tensor normal;   // mean ||grad G(x_surf) - N||_1
};
// One field evaluation serves both terms; `normals` is [N,3] constant.
PriorLossTerms loss_prior(const FieldFn& field, const Tensor& surface_points_leaf,
                          const Tensor& normals);

// L1 between detections and projected joints, summed over joints and views.
// Joints at or behind a camera plane are excluded; their count is returned
// through `skipped` when non-null.
Tensor loss_joints(const std::vector<JointDetections>& detections,
                   const std::vector<Camera>& cameras, const Skeleton& skel, const Pose& pose,
                   int* skipped = nullptr);

}  // namespace bonefield

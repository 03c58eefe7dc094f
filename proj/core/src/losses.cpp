// Copyright (c) 2026 bonefield contributors
// SPDX-License-Identifier: Apache-2.0
#include "bonefield/losses.hpp"

#include <stdexcept>

namespace bonefield {

Tensor loss_color(const Tensor& rendered, const Tensor& target) {
    if (rendered.shape() != target.shape()) {
        throw std::runtime_error("loss_color: shape mismatch");
    }
    return mean(abs(sub(rendered, target)));
}

Tensor loss_weights(const Tensor& predicted, const Tensor& reference) {
    if (predicted.shape() != reference.shape()) {
        throw std::runtime_error("loss_weights: shape mismatch");
    }
    return mean(sum_rows(abs(sub(predicted, reference))));
}

Tensor loss_reg(const Tensor& shape_code, const Tensor& color_code) {
    return add(l2_norm(shape_code), l2_norm(color_code));
}

Tensor loss_eikonal(const FieldFn& field, const Tensor& points_leaf) {
    if (!points_leaf.requires_grad()) {
        throw std::runtime_error("loss_eikonal: points must require gradients");
    }
    Tensor s = field(points_leaf);
    Tensor g = grad(sum(s), {points_leaf}, /*create_graph=*/true)[0];
    Tensor norm = sqrt(add_scalar(sum_rows(mul(g, g)), 1e-18));
    return mean(mul(add_scalar(norm, -1.0), add_scalar(norm, -1.0)));
}

PriorLossTerms loss_prior(const FieldFn& field, const Tensor& surface_points_leaf,
                          const Tensor& normals) {
    if (!surface_points_leaf.requires_grad()) {
        throw std::runtime_error("loss_prior: surface points must require gradients");
    }
    if (normals.shape() != surface_points_leaf.shape()) {
        throw std::runtime_error("loss_prior: normal/point shape mismatch");
    }
    Tensor s = field(surface_points_leaf);
    Tensor g = grad(sum(s), {surface_points_leaf}, /*create_graph=*/true)[0];
    PriorLossTerms out;
    out.surface = mean(abs(s));
    out.normal = mean(sum_rows(abs(sub(g, normals))));
    return out;
}

Tensor loss_joints(const std::vector<JointDetections>& detections,
                   const std::vector<Camera>& cameras, const Skeleton& skel, const Pose& pose,
                   int* skipped) {
    if (detections.empty() || detections.size() != cameras.size()) {
        throw std::runtime_error("loss_joints: need one detection set per camera");
    }
    const int nj = skel.joint_count();
    Tensor j3d = joints_3d(skel, pose);
    Tensor total;
    int skip_count = 0;
    for (size_t v = 0; v < cameras.size(); ++v) {
        const JointDetections& det = detections[v];
        if (static_cast<int>(det.x.size()) != nj) {
            throw std::runtime_error("loss_joints: detection count does not match skeleton");
        }
        std::vector<bool> valid;
        Tensor proj = project_points(cameras[v], j3d, &valid);
        std::vector<double> det_v(static_cast<size_t>(nj) * 2);
        std::vector<double> mask_v(static_cast<size_t>(nj) * 2, 1.0);
        for (int j = 0; j < nj; ++j) {
            det_v[static_cast<size_t>(j * 2)] = det.x[static_cast<size_t>(j)];
            det_v[static_cast<size_t>(j * 2 + 1)] = det.y[static_cast<size_t>(j)];
            if (!valid[static_cast<size_t>(j)]) {
                mask_v[static_cast<size_t>(j * 2)] = 0.0;
                mask_v[static_cast<size_t>(j * 2 + 1)] = 0.0;
                ++skip_count;
            }
        }
        Tensor det_t = Tensor::from_data({nj, 2}, std::move(det_v));
        Tensor mask = Tensor::from_data({nj, 2}, std::move(mask_v));
        Tensor term = sum(mul(mask, abs(sub(proj, det_t))));
        total = total.defined() ? add(total, term) : term;
    }
    if (skipped) *skipped = skip_count;
    return total;
}

}  // namespace bonefield

// Copyright (c) 2026 bonefield contributors
// SPDX-License-Identifier: Apache-2.0
//
// Glue between the implicit model and the renderer/mesher: closures that
// evaluate the field in batches, full-image rendering, and mesh extraction.
#pragma once

#include <vector>

#include "bonefield/io_image.hpp"
#include "bonefield/meshing.hpp"
#include "bonefield/model.hpp"
#include "bonefield/rendering.hpp"

namespace bonefield {

// Density+color closure for render_rays; differentiable through the model,
// the latents and (when the pose tensor requires grad) the pose.
DensityColorFn make_density_color_fn(const ImplicitModel& model, const PoseContext& ctx,
                                     const Tensor& shape_code, const Tensor& color_code);

// Plain-double sigma evaluator for the fine-sampling pass (no gradients).
SigmaEvalFn make_sigma_eval(const ImplicitModel& model, const PoseContext& ctx,
                            const Tensor& shape_code);

// Plain-double SDF for marching cubes and oracles of our own field.
ScalarFieldFn make_sdf_fn(const ImplicitModel& model, const PoseContext& ctx,
                          const Tensor& shape_code);

// Marching-cubes mesh of the model's zero level set at the given pose.
// When with_attributes is set, per-vertex colors and skinning weights are
// sampled from the field. An empty level set returns an empty mesh.
TriMesh extract_mesh(const ImplicitModel& model, const Skeleton& skel,
                     const std::vector<double>& theta, const Tensor& shape_code,
                     const Tensor& color_code, int resolution, double pad = 0.05,
                     bool with_attributes = false);

// Full-frame render (no gradients), stratified+refined sampling, optional
// accumulated-opacity output.
Image render_model_image(const ImplicitModel& model, const Skeleton& skel,
                         const std::vector<double>& theta, const Tensor& shape_code,
                         const Tensor& color_code, const Camera& cam, const SampleConfig& samples,
                         Rng& rng, Image* opacity_out = nullptr);

}  // namespace bonefield

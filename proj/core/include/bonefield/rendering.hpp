// Copyright (c) 2026 bonefield contributors
// SPDX-License-Identifier: Apache-2.0
//
// SDF volume rendering: Laplace-CDF density, pinhole cameras, stratified
// ray sampling, and the transmittance quadrature
//   alpha_i = 1 - exp(-sigma_i * delta_i),  T_i = prod_{k<i} (1 - alpha_k),
// with the remaining transmittance composited over a background color.
#pragma once

#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "bonefield/geometry.hpp"
#include "bonefield/random.hpp"
#include "bonefield/tensor.hpp"

namespace bonefield {

struct Camera {
    double fx = 0, fy = 0, cx = 0, cy = 0;  // pixels
    int width = 0, height = 0;
    RigidTransform world_to_cam;
    Vec3 gain{1.0, 1.0, 1.0};
    Vec3 bias{0.0, 0.0, 0.0};

    void validate() const;
    static Camera load(const std::string& path);
    void save(const std::string& path) const;

    // Pinhole projection; throws if the point is at or behind the camera
    // plane (z <= 1e-9 in camera coordinates).
    std::pair<double, double> project(const Vec3& p_world) const;
    // Unit world-space direction through the pixel center (x+0.5, y+0.5
    // when integer coordinates are passed).
    Vec3 unproject_dir(double px, double py) const;
    Vec3 position() const;  // camera center in world coordinates
};

// Differentiable projection of an [n,3] point tensor; rows with camera
// depth <= eps are written as zeros and reported in `valid`.
Tensor project_points(const Camera& cam, const Tensor& points_world, std::vector<bool>* valid);

struct RayBundle {
    std::vector<Vec3> origins;
    std::vector<Vec3> dirs;  // unit length
    std::vector<double> t_near, t_far;  // t_near > t_far marks a miss
    std::vector<std::pair<int, int>> pixels;
    // Rectangular depth matrix, one strictly increasing row per hit ray.
    std::vector<std::vector<double>> depths;

    size_t size() const { return origins.size(); }
    bool hits(size_t i) const { return t_near[i] < t_far[i]; }
};

struct SampleConfig {
    int coarse = 64;
    int fine = 64;
    double box_pad = 0.05;  // meters added around the skeleton box
};

// Rays through the given pixel centers, with near/far from intersecting the
// padded bounding box. Out-of-bounds pixels throw.
RayBundle generate_rays(const Camera& cam, const std::vector<std::pair<int, int>>& pixels,
                        const Aabb& bounds);

// Stratified coarse depths for every hit ray.
void populate_depths(RayBundle& bundle, int samples, Rng& rng);

// Adds `fine` extra depths concentrated in the interval with the largest
// coarse density; evaluator returns one sigma per (ray, sample) pair laid
// out row-major. Depth rows stay sorted.
using SigmaEvalFn = std::function<std::vector<double>(const std::vector<Vec3>& points)>;
void refine_depths(RayBundle& bundle, const SigmaEvalFn& sigma_eval, int fine, Rng& rng);

// sigma = alpha * Psi_beta(-s), Psi the Laplace CDF.
double laplace_density(double s, double alpha, double beta);
// Tensor version; alpha/beta are scalar tensors so they stay learnable.
Tensor laplace_density(const Tensor& s, const Tensor& alpha, const Tensor& beta);

// Discrete transmittance terms from sigma_i * delta_i laid out [rays,
// samples]: T_i = prod_{k<i}(1-alpha_k), alpha_i = 1-exp(-sigma_i*delta_i),
// w_i = T_i * alpha_i.
struct QuadratureTerms {
    Tensor transmittance;
    Tensor alphas;
    Tensor weights;
};
QuadratureTerms volume_weights(const Tensor& sigma_delta);

// Batched density+color evaluator used by the renderer: given [N,3] world
// points and [N,3] unit view directions it returns sigma [N,1] and rgb [N,3].
using DensityColorFn =
    std::function<std::pair<Tensor, Tensor>(const Tensor& points, const Tensor& dirs)>;

struct RenderResult {
    Tensor rgb;         // [R,3] composited over the background
    Tensor opacity;     // [R,1] accumulated alpha in [0,1]
    std::vector<size_t> ray_indices;  // bundle rows these tensors cover
};

// Quadrature over every hit ray in the bundle (all hit rays must share one
// sample count). Miss rays are excluded; callers composite them as pure
// background.
RenderResult render_rays(const DensityColorFn& field, const RayBundle& bundle,
                         const Vec3& background);

// Applies per-camera color calibration c' = g * c + b. `gain`/`bias` are
// [1,3] tensors so they can be trained.
Tensor apply_calibration(const Tensor& rgb, const Tensor& gain, const Tensor& bias);

}  // namespace bonefield

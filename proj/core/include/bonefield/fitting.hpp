// Copyright (c) 2026 bonefield contributors
// SPDX-License-Identifier: Apache-2.0
//
// Inference-time optimization of a trained model: fit pose and shape to a
// point cloud, or pose/shape/color to posed images with 2D joint
// detections (pose-only stage first, then joint optimization).
#pragma once

#include <map>
#include <string>
#include <vector>

#include "bonefield/dataset.hpp"
#include "bonefield/io_image.hpp"
#include "bonefield/io_mesh.hpp"
#include "bonefield/losses.hpp"
#include "bonefield/model.hpp"
#include "bonefield/training.hpp"

namespace bonefield {

struct FitConfig {
    uint64_t seed = 1;
    int threads = 0;
    LossWeights loss;

    int cloud_iterations = 1500;
    int cloud_batch = 512;
    double lr_pose = 5e-3;
    double lr_latent = 2e-3;

    int stage1_iterations = 1000;  // pose only, joint loss
    int stage2_iterations = 5000;  // pose + latents, color/reg/joints
    int rays_per_iteration = 512;
    int coarse_samples = 32;
    int fine_samples = 16;
    double mask_ray_fraction = 0.8;
    double box_pad = 0.05;
    int log_every = 50;

    static FitConfig load(const std::string& path);
    void save(const std::string& path) const;
};

struct FitReport {
    int iterations = 0;
    double seconds = 0.0;
    std::vector<double> theta;
    std::vector<double> shape_code;
    std::vector<double> color_code;
    std::map<std::string, double> final_losses;
    // One row per logged iteration: (iteration, named losses).
    std::vector<std::pair<int, std::map<std::string, double>>> history;
    uint64_t stage1_latent_hash_before = 0;  // image fits: bit-exactness evidence
    uint64_t stage1_latent_hash_after = 0;

    // Writes <prefix>.json and <prefix>_history.csv.
    void save(const std::string& prefix) const;
};

// Minimizes mean |G(x, theta, beta)| + reg over theta and beta. Requires at
// least 100 points. Throws on divergence (non-finite loss).
FitReport fit_cloud(const PointCloud& cloud, const ImplicitModel& model, const Skeleton& skel,
                    const std::vector<double>& init_theta, const std::vector<double>& init_shape,
                    const FitConfig& cfg);

struct ImageFitProblem {
    std::vector<Image> images;  // masked (background already white)
    std::vector<Image> masks;
    std::vector<Camera> cameras;
    std::vector<JointDetections> joints;
    // Inference-time calibration (mean of the trained per-camera values).
    Tensor gain;  // [1,3]; undefined -> identity
    Tensor bias;
};

FitReport fit_images(const ImageFitProblem& problem, const ImplicitModel& model,
                     const Skeleton& skel, const std::vector<double>& init_theta,
                     const std::vector<double>& init_shape, const std::vector<double>& init_color,
                     const FitConfig& cfg);

}  // namespace bonefield

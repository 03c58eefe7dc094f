// Copyright (c) 2026 bonefield contributors
// SPDX-License-Identifier: Apache-2.0
//
// The two training entry points: prior pre-training on surface scans
// (geometry networks + shape codes) and full training on posed images
// (everything, with pose refinement after a freeze window and per-camera
// color calibration).
#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "bonefield/io_image.hpp"
#include "bonefield/losses.hpp"
#include "bonefield/model.hpp"

namespace bonefield {

struct TrainConfig {
    uint64_t seed = 1;
    int threads = 0;  // 0 keeps the default pool size

    LossWeights loss;
    double lr_network = 1e-4;
    double lr_latent = 1e-3;
    double lr_pose = 1e-4;
    double lr_calibration = 1e-3;

    // Prior (scan-track) schedule.
    int prior_steps = 20000;
    int surface_batch = 128;
    int eikonal_batch = 128;       // half near-surface, half uniform
    double perturb_sigma = 0.01;   // meters, near-surface jitter

    // Full (image-track) schedule.
    int full_steps = 20000;
    int rays_per_step = 1024;
    int coarse_samples = 64;
    int fine_samples = 64;
    int full_eikonal_batch = 64;
    double pose_freeze_fraction = 0.10;
    bool optimize_pose = true;
    bool train_calibration = true;
    double mask_ray_fraction = 0.8;
    double box_pad = 0.05;

    int log_every = 100;
    ModelConfig model;

    static TrainConfig load(const std::string& path);
    void save(const std::string& path) const;
};

struct TrainResult {
    int steps = 0;
    double seconds = 0.0;
    std::map<std::string, double> final_losses;
    std::string checkpoint_path;
    std::string model_config_path;
    std::string log_path;
};

// Pre-trains the geometry networks, the weight network and the per-subject
// shape codes on the scan track. Writes model.ckpt/model.json/train log
// into out_dir.
TrainResult train_prior(const std::string& dataset_root, const TrainConfig& cfg,
                        const std::string& out_dir);

// Full training on the image track. Optionally warm-starts from a prior
// checkpoint. Pose parameters stay bit-identical for the first
// pose_freeze_fraction of the steps; per-camera gain/bias train alongside.
// Refined poses and calibration are written next to the checkpoint.
TrainResult train_full(const std::string& dataset_root, const TrainConfig& cfg,
                       const std::optional<std::string>& prior_checkpoint,
                       const std::string& out_dir);

// Held-out scan metrics: mean |G| at surface points, mean Eikonal residual
// near the surface, and mean L1 weight error.
struct PriorEval {
    double mean_abs_sdf = 0.0;
    double eikonal_residual = 0.0;
    double weight_l1 = 0.0;
    int points = 0;
};
PriorEval evaluate_prior(const ImplicitModel& model, const LatentTable& latents,
                         const std::string& dataset_root, const std::string& split,
                         int max_points_per_scan, uint64_t seed);

// One (image, camera) color-loss ray batch shared by training and fitting.
struct RayLossBatch {
    Tensor color_loss;        // mean L1 including the miss-ray term
    int hit_rays = 0;
    int miss_rays = 0;
    std::vector<Vec3> hit_sample_points;  // density-refined; near-surface proxies
};
RayLossBatch render_color_loss(const ImplicitModel& model, const PoseContext& ctx,
                               const Tensor& shape_code, const Tensor& color_code,
                               const Camera& cam, const Image& image, const Image& mask,
                               const Aabb& bounds, int rays, int coarse, int fine,
                               double mask_fraction, const Tensor& gain, const Tensor& bias,
                               Rng& rng);

// Per-camera trainable calibration with JSON round trip.
struct Calibration {
    std::vector<Tensor> gains;   // [1,3] each
    std::vector<Tensor> biases;  // [1,3] each

    static Calibration identity(int cameras);
    void save(const std::string& path) const;
    static Calibration load(const std::string& path);
    // Arithmetic mean over cameras, the inference-time calibration.
    std::pair<Tensor, Tensor> mean() const;
    std::vector<Tensor> all_params() const;
};

}  // namespace bonefield

// Copyright (c) 2026 bonefield contributors
// SPDX-License-Identifier: Apache-2.0
#include "bonefield/fitting.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "bonefield/adam.hpp"
#include "bonefield/field_adapters.hpp"
#include "bonefield/threading.hpp"

namespace bonefield {

FitConfig FitConfig::load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("fit config: cannot open '" + path + "'");
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("fit config '" + path + "': " + e.what());
    }
    FitConfig c;
    c.seed = j.value("seed", c.seed);
    c.threads = j.value("threads", c.threads);
    if (j.contains("loss")) {
        const auto& w = j["loss"];
        c.loss.color = w.value("color", c.loss.color);
        c.loss.latent_reg = w.value("latent_reg", c.loss.latent_reg);
        c.loss.joints = w.value("joints", c.loss.joints);
    }
    c.cloud_iterations = j.value("cloud_iterations", c.cloud_iterations);
    c.cloud_batch = j.value("cloud_batch", c.cloud_batch);
    c.lr_pose = j.value("lr_pose", c.lr_pose);
    c.lr_latent = j.value("lr_latent", c.lr_latent);
    c.stage1_iterations = j.value("stage1_iterations", c.stage1_iterations);
    c.stage2_iterations = j.value("stage2_iterations", c.stage2_iterations);
    c.rays_per_iteration = j.value("rays_per_iteration", c.rays_per_iteration);
    c.coarse_samples = j.value("coarse_samples", c.coarse_samples);
    c.fine_samples = j.value("fine_samples", c.fine_samples);
    c.mask_ray_fraction = j.value("mask_ray_fraction", c.mask_ray_fraction);
    c.box_pad = j.value("box_pad", c.box_pad);
    c.log_every = j.value("log_every", c.log_every);
    return c;
}

void FitConfig::save(const std::string& path) const {
    nlohmann::json j;
    j["seed"] = seed;
    j["threads"] = threads;
    j["loss"] = {{"color", loss.color}, {"latent_reg", loss.latent_reg}, {"joints", loss.joints}};
    j["cloud_iterations"] = cloud_iterations;
    j["cloud_batch"] = cloud_batch;
    j["lr_pose"] = lr_pose;
    j["lr_latent"] = lr_latent;
    j["stage1_iterations"] = stage1_iterations;
    j["stage2_iterations"] = stage2_iterations;
    j["rays_per_iteration"] = rays_per_iteration;
    j["coarse_samples"] = coarse_samples;
    j["fine_samples"] = fine_samples;
    j["mask_ray_fraction"] = mask_ray_fraction;
    j["box_pad"] = box_pad;
    j["log_every"] = log_every;
    std::ofstream os(path);
    if (!os) throw std::runtime_error("fit config: cannot write '" + path + "'");
    os << j.dump(2) << "\n";
}

void FitReport::save(const std::string& prefix) const {
    nlohmann::json j;
    j["iterations"] = iterations;
    j["seconds"] = seconds;
    j["theta"] = theta;
    j["shape_code"] = shape_code;
    j["color_code"] = color_code;
    j["final_losses"] = final_losses;
    j["stage1_latent_hash_before"] = stage1_latent_hash_before;
    j["stage1_latent_hash_after"] = stage1_latent_hash_after;
    std::ofstream os(prefix + ".json");
    if (!os) throw std::runtime_error("fit report: cannot write '" + prefix + ".json'");
    os << j.dump(2) << "\n";

    std::ofstream csv(prefix + "_history.csv");
    if (!csv) throw std::runtime_error("fit report: cannot write history CSV");
    // Column set from the first row.
    if (!history.empty()) {
        csv << "iteration";
        for (const auto& [k, v] : history.front().second) csv << "," << k;
        csv << "\n";
        for (const auto& [it, row] : history) {
            csv << it;
            for (const auto& [k, v] : row) csv << "," << v;
            csv << "\n";
        }
    }
}

namespace {

uint64_t hash_doubles(const std::vector<double>& v) {
    uint64_t h = 1469598103934665603ULL;
    const auto* bytes = reinterpret_cast<const unsigned char*>(v.data());
    for (size_t i = 0; i < v.size() * sizeof(double); ++i) {
        h = (h ^ bytes[i]) * 1099511628211ULL;
    }
    return h;
}

Tensor latent_param(const std::vector<double>& init, int dim) {
    if (init.empty()) return Tensor::param({1, dim}, std::vector<double>(static_cast<size_t>(dim), 0.0));
    if (static_cast<int>(init.size()) != dim) {
        throw std::runtime_error("fit: latent initializer has wrong dimension");
    }
    return Tensor::param({1, dim}, init);
}

}  // namespace

FitReport fit_cloud(const PointCloud& cloud, const ImplicitModel& model, const Skeleton& skel,
                    const std::vector<double>& init_theta, const std::vector<double>& init_shape,
                    const FitConfig& cfg) {
    const auto t_start = std::chrono::steady_clock::now();
    if (cfg.threads > 0) set_num_threads(cfg.threads);
    if (cloud.points.empty()) throw std::runtime_error("fit_cloud: empty point cloud");
    if (cloud.points.size() < 100) {
        throw std::runtime_error("fit_cloud: need at least 100 points, have " +
                                 std::to_string(cloud.points.size()));
    }

    Rng rng(cfg.seed);
    Pose pose = Pose::from_values(skel.joint_count(), init_theta);
    pose.theta.set_requires_grad(true);
    Tensor beta = latent_param(init_shape, model.config().latent_dim);
    Tensor gamma = Tensor::from_data({1, model.config().latent_dim},
                                     std::vector<double>(static_cast<size_t>(model.config().latent_dim), 0.0));

    AdamOptimizer opt;
    opt.add_group({pose.theta}, {cfg.lr_pose});
    opt.add_group({beta}, {cfg.lr_latent});

    FitReport report;
    for (int it = 1; it <= cfg.cloud_iterations; ++it) {
        PoseContext ctx = make_pose_context(skel, pose, model.config());
        const int batch = std::min<int>(cfg.cloud_batch, static_cast<int>(cloud.points.size()));
        std::vector<double> flat;
        flat.reserve(static_cast<size_t>(batch) * 3);
        for (int i = 0; i < batch; ++i) {
            const Vec3& p = cloud.points[static_cast<size_t>(rng.below(cloud.points.size()))];
            flat.insert(flat.end(), {p.x, p.y, p.z});
        }
        Tensor x = Tensor::from_data({batch, 3}, std::move(flat));
        Tensor sdf = model.eval_field(ctx, beta, gamma, x, Tensor(), false).sdf;
        Tensor data_term = mean(abs(sdf));
        Tensor reg = l2_norm(beta);
        Tensor total = add(data_term, mul_scalar(reg, cfg.loss.latent_reg));
        if (!std::isfinite(total.item())) {
            throw std::runtime_error("fit_cloud: diverged (non-finite loss) at iteration " +
                                     std::to_string(it));
        }
        opt.zero_grad();
        backward(total);
        opt.step();
        report.final_losses = {{"data", data_term.item()}, {"reg", reg.item()}, {"total", total.item()}};
        if (it == 1 || it % cfg.log_every == 0 || it == cfg.cloud_iterations) {
            report.history.emplace_back(it, report.final_losses);
        }
    }
    report.iterations = cfg.cloud_iterations;
    report.theta = pose.theta.data();
    report.shape_code = beta.data();
    report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return report;
}

FitReport fit_images(const ImageFitProblem& problem, const ImplicitModel& model,
                     const Skeleton& skel, const std::vector<double>& init_theta,
                     const std::vector<double>& init_shape, const std::vector<double>& init_color,
                     const FitConfig& cfg) {
    const auto t_start = std::chrono::steady_clock::now();
    if (cfg.threads > 0) set_num_threads(cfg.threads);
    const size_t views = problem.images.size();
    if (views == 0) throw std::runtime_error("fit_images: no observations");
    if (problem.masks.size() != views || problem.cameras.size() != views) {
        throw std::runtime_error("fit_images: image/mask/camera counts differ");
    }
    const bool have_joints = !problem.joints.empty();
    if (have_joints && problem.joints.size() != views) {
        throw std::runtime_error("fit_images: joint detections must cover every view");
    }

    Rng rng(cfg.seed);
    Pose pose = Pose::from_values(skel.joint_count(), init_theta);
    pose.theta.set_requires_grad(true);
    Tensor beta = latent_param(init_shape, model.config().latent_dim);
    Tensor gamma = latent_param(init_color, model.config().latent_dim);
    Tensor gain = problem.gain.defined() ? problem.gain : Tensor::from_data({1, 3}, {1, 1, 1});
    Tensor bias = problem.bias.defined() ? problem.bias : Tensor::from_data({1, 3}, {0, 0, 0});

    FitReport report;
    {
        std::vector<double> lat(beta.data());
        lat.insert(lat.end(), gamma.data().begin(), gamma.data().end());
        report.stage1_latent_hash_before = hash_doubles(lat);
    }

    // Stage 1: pose only, joint reprojection objective.
    if (have_joints && cfg.stage1_iterations > 0) {
        AdamOptimizer opt;
        opt.add_group({pose.theta}, {cfg.lr_pose});
        for (int it = 1; it <= cfg.stage1_iterations; ++it) {
            int skipped = 0;
            Tensor lj = loss_joints(problem.joints, problem.cameras, skel, pose, &skipped);
            Tensor total = mul_scalar(lj, cfg.loss.joints);
            if (!std::isfinite(total.item())) {
                throw std::runtime_error("fit_images: stage 1 diverged at iteration " + std::to_string(it));
            }
            opt.zero_grad();
            backward(total);
            opt.step();
            if (it == 1 || it % cfg.log_every == 0 || it == cfg.stage1_iterations) {
                report.history.emplace_back(
                    it, std::map<std::string, double>{{"stage", 1.0},
                                                      {"joints_px", lj.item()},
                                                      {"skipped_joints", static_cast<double>(skipped)}});
            }
        }
    }
    {
        std::vector<double> lat(beta.data());
        lat.insert(lat.end(), gamma.data().begin(), gamma.data().end());
        report.stage1_latent_hash_after = hash_doubles(lat);
    }

    // Stage 2: joint pose/shape/color under color + reg + joints.
    AdamOptimizer opt;
    opt.add_group({pose.theta}, {cfg.lr_pose});
    opt.add_group({beta, gamma}, {cfg.lr_latent});
    for (int it = 1; it <= cfg.stage2_iterations; ++it) {
        PoseContext ctx = make_pose_context(skel, pose, model.config());
        const std::vector<double> theta_now = pose.theta.data();
        const Aabb box = skeleton_bounds(skel, theta_now, cfg.box_pad);
        const size_t v = static_cast<size_t>(rng.below(views));

        RayLossBatch batch = render_color_loss(model, ctx, beta, gamma, problem.cameras[v],
                                               problem.images[v], problem.masks[v], box,
                                               cfg.rays_per_iteration, cfg.coarse_samples,
                                               cfg.fine_samples, cfg.mask_ray_fraction, gain, bias,
                                               rng);
        Tensor total = mul_scalar(batch.color_loss, cfg.loss.color);
        Tensor lreg = loss_reg(beta, gamma);
        total = add(total, mul_scalar(lreg, cfg.loss.latent_reg));
        double joints_px = 0.0;
        if (have_joints) {
            int skipped = 0;
            Tensor lj = loss_joints(problem.joints, problem.cameras, skel, pose, &skipped);
            joints_px = lj.item();
            total = add(total, mul_scalar(lj, cfg.loss.joints));
        }
        if (!std::isfinite(total.item())) {
            throw std::runtime_error("fit_images: stage 2 diverged at iteration " + std::to_string(it));
        }
        opt.zero_grad();
        backward(total);
        opt.step();
        report.final_losses = {{"color", batch.color_loss.item()},
                               {"reg", lreg.item()},
                               {"joints_px", joints_px},
                               {"total", total.item()}};
        if (it == 1 || it % cfg.log_every == 0 || it == cfg.stage2_iterations) {
            auto row = report.final_losses;
            row["stage"] = 2.0;
            report.history.emplace_back(it, row);
        }
    }

    report.iterations = cfg.stage1_iterations + cfg.stage2_iterations;
    report.theta = pose.theta.data();
    report.shape_code = beta.data();
    report.color_code = gamma.data();
    report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return report;
}

}  // namespace bonefield

// Copyright (c) 2026 bonefield contributors
// SPDX-License-Identifier: Apache-2.0
#include "bonefield/training.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "bonefield/adam.hpp"
#include "bonefield/dataset.hpp"
#include "bonefield/field_adapters.hpp"
#include "bonefield/io_image.hpp"
#include "bonefield/oracle.hpp"
#include "bonefield/threading.hpp"

namespace bonefield {

namespace {

nlohmann::json loss_weights_json(const LossWeights& w) {
    return {{"color", w.color},     {"eikonal", w.eikonal}, {"skinning", w.skinning},
            {"latent_reg", w.latent_reg}, {"surface", w.surface}, {"normal", w.normal},
            {"joints", w.joints}};
}

LossWeights loss_weights_from_json(const nlohmann::json& j) {
    LossWeights w;
    w.color = j.value("color", w.color);
    w.eikonal = j.value("eikonal", w.eikonal);
    w.skinning = j.value("skinning", w.skinning);
    w.latent_reg = j.value("latent_reg", w.latent_reg);
    w.surface = j.value("surface", w.surface);
    w.normal = j.value("normal", w.normal);
    w.joints = j.value("joints", w.joints);
    return w;
}

uint64_t hash_doubles(const std::vector<double>& v) {
    uint64_t h = 1469598103934665603ULL;
    const auto* bytes = reinterpret_cast<const unsigned char*>(v.data());
    for (size_t i = 0; i < v.size() * sizeof(double); ++i) {
        h = (h ^ bytes[i]) * 1099511628211ULL;
    }
    return h;
}

Tensor points_tensor(const std::vector<Vec3>& pts) {
    std::vector<double> flat;
    flat.reserve(pts.size() * 3);
    for (const Vec3& p : pts) {
        flat.push_back(p.x);
        flat.push_back(p.y);
        flat.push_back(p.z);
    }
    return Tensor::from_data({static_cast<int64_t>(pts.size()), 3}, std::move(flat));
}

Vec3 uniform_in_box(const Aabb& box, Rng& rng) {
    return {rng.uniform(box.lo.x, box.hi.x), rng.uniform(box.lo.y, box.hi.y),
            rng.uniform(box.lo.z, box.hi.z)};
}

}  // namespace

TrainConfig TrainConfig::load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("train config: cannot open '" + path + "'");
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("train config '" + path + "': " + e.what());
    }
    TrainConfig c;
    c.seed = j.value("seed", c.seed);
    c.threads = j.value("threads", c.threads);
    if (j.contains("loss")) c.loss = loss_weights_from_json(j["loss"]);
    c.lr_network = j.value("lr_network", c.lr_network);
    c.lr_latent = j.value("lr_latent", c.lr_latent);
    c.lr_pose = j.value("lr_pose", c.lr_pose);
    c.lr_calibration = j.value("lr_calibration", c.lr_calibration);
    c.prior_steps = j.value("prior_steps", c.prior_steps);
    c.surface_batch = j.value("surface_batch", c.surface_batch);
    c.eikonal_batch = j.value("eikonal_batch", c.eikonal_batch);
    c.perturb_sigma = j.value("perturb_sigma", c.perturb_sigma);
    c.full_steps = j.value("full_steps", c.full_steps);
    c.rays_per_step = j.value("rays_per_step", c.rays_per_step);
    c.coarse_samples = j.value("coarse_samples", c.coarse_samples);
    c.fine_samples = j.value("fine_samples", c.fine_samples);
    c.full_eikonal_batch = j.value("full_eikonal_batch", c.full_eikonal_batch);
    c.pose_freeze_fraction = j.value("pose_freeze_fraction", c.pose_freeze_fraction);
    c.optimize_pose = j.value("optimize_pose", c.optimize_pose);
    c.train_calibration = j.value("train_calibration", c.train_calibration);
    c.mask_ray_fraction = j.value("mask_ray_fraction", c.mask_ray_fraction);
    c.box_pad = j.value("box_pad", c.box_pad);
    c.log_every = j.value("log_every", c.log_every);
    if (j.contains("model")) {
        const auto& m = j["model"];
        ModelConfig& mc = c.model;
        mc.bone_count = m.value("bone_count", mc.bone_count);
        mc.joint_count = m.value("joint_count", mc.joint_count);
        mc.latent_dim = m.value("latent_dim", mc.latent_dim);
        mc.encode_levels = m.value("encode_levels", mc.encode_levels);
        mc.dir_encode_levels = m.value("dir_encode_levels", mc.dir_encode_levels);
        mc.use_view_dirs = m.value("use_view_dirs", mc.use_view_dirs);
        mc.full_pose_conditioning = m.value("full_pose_conditioning", mc.full_pose_conditioning);
        mc.sdf_hidden = m.value("sdf_hidden", mc.sdf_hidden);
        mc.color_hidden = m.value("color_hidden", mc.color_hidden);
        mc.weight_hidden = m.value("weight_hidden", mc.weight_hidden);
        mc.init_sphere_radius = m.value("init_sphere_radius", mc.init_sphere_radius);
        mc.alpha_init = m.value("alpha_init", mc.alpha_init);
        mc.beta_init = m.value("beta_init", mc.beta_init);
    }
    return c;
}

void TrainConfig::save(const std::string& path) const {
    nlohmann::json j;
    j["seed"] = seed;
    j["threads"] = threads;
    j["loss"] = loss_weights_json(loss);
    j["lr_network"] = lr_network;
    j["lr_latent"] = lr_latent;
    j["lr_pose"] = lr_pose;
    j["lr_calibration"] = lr_calibration;
    j["prior_steps"] = prior_steps;
    j["surface_batch"] = surface_batch;
    j["eikonal_batch"] = eikonal_batch;
    j["perturb_sigma"] = perturb_sigma;
    j["full_steps"] = full_steps;
    j["rays_per_step"] = rays_per_step;
    j["coarse_samples"] = coarse_samples;
    j["fine_samples"] = fine_samples;
    j["full_eikonal_batch"] = full_eikonal_batch;
    j["pose_freeze_fraction"] = pose_freeze_fraction;
    j["optimize_pose"] = optimize_pose;
    j["train_calibration"] = train_calibration;
    j["mask_ray_fraction"] = mask_ray_fraction;
    j["box_pad"] = box_pad;
    j["log_every"] = log_every;
    j["model"] = {{"bone_count", model.bone_count},
                  {"joint_count", model.joint_count},
                  {"latent_dim", model.latent_dim},
                  {"encode_levels", model.encode_levels},
                  {"dir_encode_levels", model.dir_encode_levels},
                  {"use_view_dirs", model.use_view_dirs},
                  {"full_pose_conditioning", model.full_pose_conditioning},
                  {"sdf_hidden", model.sdf_hidden},
                  {"color_hidden", model.color_hidden},
                  {"weight_hidden", model.weight_hidden},
                  {"init_sphere_radius", model.init_sphere_radius},
                  {"alpha_init", model.alpha_init},
                  {"beta_init", model.beta_init}};
    std::ofstream os(path);
    if (!os) throw std::runtime_error("train config: cannot write '" + path + "'");
    os << j.dump(2) << "\n";
}

Calibration Calibration::identity(int cameras) {
    Calibration c;
    for (int i = 0; i < cameras; ++i) {
        c.gains.push_back(Tensor::param({1, 3}, {1.0, 1.0, 1.0}));
        c.biases.push_back(Tensor::param({1, 3}, {0.0, 0.0, 0.0}));
    }
    return c;
}

void Calibration::save(const std::string& path) const {
    nlohmann::json j;
    j["gains"] = nlohmann::json::array();
    j["biases"] = nlohmann::json::array();
    for (const auto& g : gains) j["gains"].push_back(g.data());
    for (const auto& b : biases) j["biases"].push_back(b.data());
    std::ofstream os(path);
    if (!os) throw std::runtime_error("calibration: cannot write '" + path + "'");
    os << j.dump(2) << "\n";
}

Calibration Calibration::load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("calibration: cannot open '" + path + "'");
    nlohmann::json j;
    is >> j;
    Calibration c;
    for (const auto& g : j.at("gains")) c.gains.push_back(Tensor::param({1, 3}, g.get<std::vector<double>>()));
    for (const auto& b : j.at("biases")) c.biases.push_back(Tensor::param({1, 3}, b.get<std::vector<double>>()));
    return c;
}

std::pair<Tensor, Tensor> Calibration::mean() const {
    std::vector<double> g(3, 0.0), b(3, 0.0);
    for (const auto& t : gains)
        for (int k = 0; k < 3; ++k) g[static_cast<size_t>(k)] += t.at(0, k);
    for (const auto& t : biases)
        for (int k = 0; k < 3; ++k) b[static_cast<size_t>(k)] += t.at(0, k);
    const double n = static_cast<double>(gains.size());
    for (int k = 0; k < 3; ++k) {
        g[static_cast<size_t>(k)] /= n;
        b[static_cast<size_t>(k)] /= n;
    }
    return {Tensor::from_data({1, 3}, g), Tensor::from_data({1, 3}, b)};
}

std::vector<Tensor> Calibration::all_params() const {
    std::vector<Tensor> out;
    for (size_t i = 0; i < gains.size(); ++i) {
        out.push_back(gains[i]);
        out.push_back(biases[i]);
    }
    return out;
}

RayLossBatch render_color_loss(const ImplicitModel& model, const PoseContext& ctx,
                               const Tensor& shape_code, const Tensor& color_code,
                               const Camera& cam, const Image& image, const Image& mask,
                               const Aabb& bounds, int rays, int coarse, int fine,
                               double mask_fraction, const Tensor& gain, const Tensor& bias,
                               Rng& rng) {
    // Pixel selection: a fixed fraction inside the mask, the rest anywhere.
    std::vector<int> mask_pixels;
    for (int y = 0; y < mask.height; ++y)
        for (int x = 0; x < mask.width; ++x)
            if (mask.at(x, y, 0) > 0.5) mask_pixels.push_back(y * mask.width + x);
    std::vector<std::pair<int, int>> pixels;
    pixels.reserve(static_cast<size_t>(rays));
    const int want_mask = mask_pixels.empty() ? 0 : static_cast<int>(std::lround(rays * mask_fraction));
    for (int i = 0; i < rays; ++i) {
        int flat;
        if (i < want_mask) {
            flat = mask_pixels[static_cast<size_t>(rng.below(mask_pixels.size()))];
        } else {
            flat = static_cast<int>(rng.below(static_cast<uint64_t>(image.width) * image.height));
        }
        pixels.emplace_back(flat % image.width, flat / image.width);
    }

    RayBundle bundle = generate_rays(cam, pixels, bounds);
    populate_depths(bundle, coarse, rng);
    refine_depths(bundle, make_sigma_eval(model, ctx, shape_code), fine, rng);

    RenderResult res = render_rays(make_density_color_fn(model, ctx, shape_code, color_code),
                                   bundle, {1.0, 1.0, 1.0});

    RayLossBatch out;
    out.hit_rays = static_cast<int>(res.ray_indices.size());
    out.miss_rays = static_cast<int>(bundle.size()) - out.hit_rays;

    Tensor abs_sum;  // sum of |calibrated - target| over all rays
    if (out.hit_rays > 0) {
        Tensor cal = apply_calibration(res.rgb, gain, bias);
        std::vector<double> target(static_cast<size_t>(out.hit_rays) * 3);
        for (size_t k = 0; k < res.ray_indices.size(); ++k) {
            const auto [px, py] = bundle.pixels[res.ray_indices[k]];
            for (int c = 0; c < 3; ++c) target[k * 3 + static_cast<size_t>(c)] = image.at(px, py, c);
        }
        Tensor target_t = Tensor::from_data({out.hit_rays, 3}, std::move(target));
        abs_sum = sum(abs(sub(cal, target_t)));

        // Two refined sample points per hit ray as near-surface proxies.
        for (size_t k = 0; k < res.ray_indices.size(); ++k) {
            const size_t i = res.ray_indices[k];
            const auto& depths = bundle.depths[i];
            for (int pick = 0; pick < 2; ++pick) {
                const double t = depths[static_cast<size_t>(rng.below(depths.size()))];
                out.hit_sample_points.push_back(bundle.origins[i] + t * bundle.dirs[i]);
            }
        }
    }
    if (out.miss_rays > 0) {
        // Missed rays still see the calibrated background.
        std::vector<double> target;
        target.reserve(static_cast<size_t>(out.miss_rays) * 3);
        for (size_t i = 0; i < bundle.size(); ++i) {
            if (bundle.hits(i)) continue;
            const auto [px, py] = bundle.pixels[i];
            for (int c = 0; c < 3; ++c) target.push_back(image.at(px, py, c));
        }
        Tensor target_t = Tensor::from_data({out.miss_rays, 3}, std::move(target));
        Tensor bg = tile_rows(Tensor::from_data({1, 3}, {1.0, 1.0, 1.0}), out.miss_rays);
        Tensor cal = apply_calibration(bg, gain, bias);
        Tensor miss_sum = sum(abs(sub(cal, target_t)));
        abs_sum = abs_sum.defined() ? add(abs_sum, miss_sum) : miss_sum;
    }
    out.color_loss = mul_scalar(abs_sum, 1.0 / (3.0 * static_cast<double>(bundle.size())));
    return out;
}

namespace {

struct ScanEntry {
    int subject;
    std::vector<double> theta;
    SurfaceSamples samples;
};

std::vector<ScanEntry> load_scans(const std::string& root, const DatasetManifest& manifest,
                                  const std::string& split) {
    std::vector<ScanEntry> out;
    for (const auto& rec : manifest.scans) {
        if (rec.split != split) continue;
        ScanEntry e;
        e.subject = rec.subject;
        e.theta = load_pose_values(root + "/" + rec.pose);
        e.samples = load_scan(root + "/" + rec.file);
        out.push_back(std::move(e));
    }
    return out;
}

void log_line(std::ofstream& os, const nlohmann::json& j) { os << j.dump() << "\n"; }

}  // namespace

TrainResult train_prior(const std::string& dataset_root, const TrainConfig& cfg_in,
                        const std::string& out_dir) {
    const auto t_start = std::chrono::steady_clock::now();
    TrainConfig cfg = cfg_in;
    if (cfg.threads > 0) set_num_threads(cfg.threads);
    std::filesystem::create_directories(out_dir);

    DatasetManifest manifest = DatasetManifest::load(dataset_root);
    Skeleton skel = Skeleton::load(dataset_root + "/" + manifest.skeleton);
    cfg.model.bone_count = skel.bone_count();
    cfg.model.joint_count = skel.joint_count();

    std::vector<ScanEntry> scans = load_scans(dataset_root, manifest, "train");
    if (scans.empty()) throw std::runtime_error("train_prior: dataset has no training scans");

    Rng rng(cfg.seed);
    ImplicitModel model(cfg.model, rng);
    LatentTable latents = LatentTable::init(manifest.subjects, cfg.model.latent_dim, rng);

    AdamOptimizer opt;
    opt.add_group(model.parameters(), {cfg.lr_network});
    opt.add_group(latents.all_params(), {cfg.lr_latent});

    const std::string log_path = out_dir + "/train_prior.log";
    std::ofstream log(log_path);
    if (!log) throw std::runtime_error("train_prior: cannot write log '" + log_path + "'");

    const int nb = skel.bone_count();
    std::map<std::string, double> last;
    for (int step = 1; step <= cfg.prior_steps; ++step) {
        const ScanEntry& scan = scans[rng.below(scans.size())];
        const Tensor& beta = latents.shape_codes[static_cast<size_t>(scan.subject)];
        const Tensor& gamma = latents.color_codes[static_cast<size_t>(scan.subject)];

        Pose pose = Pose::from_values(skel.joint_count(), scan.theta);
        PoseContext ctx = make_pose_context(skel, pose, cfg.model);
        const Aabb box = skeleton_bounds(skel, scan.theta, cfg.box_pad);

        // Batch layout: [surface | near-surface | uniform].
        const int bs = cfg.surface_batch;
        const int be = cfg.eikonal_batch;
        std::vector<Vec3> pts;
        std::vector<double> normals_flat;
        std::vector<double> ref_w_flat;
        pts.reserve(static_cast<size_t>(bs + be));
        for (int i = 0; i < bs; ++i) {
            const size_t idx = static_cast<size_t>(rng.below(scan.samples.points.size()));
            pts.push_back(scan.samples.points[idx]);
            const Vec3& n = scan.samples.normals[idx];
            normals_flat.insert(normals_flat.end(), {n.x, n.y, n.z});
            for (int j = 0; j < nb; ++j) ref_w_flat.push_back(scan.samples.weights[idx][static_cast<size_t>(j)]);
        }
        for (int i = 0; i < be / 2; ++i) {
            const size_t idx = static_cast<size_t>(rng.below(scan.samples.points.size()));
            Vec3 p = scan.samples.points[idx];
            p += Vec3{rng.normal(0.0, cfg.perturb_sigma), rng.normal(0.0, cfg.perturb_sigma),
                      rng.normal(0.0, cfg.perturb_sigma)};
            pts.push_back(p);
        }
        while (static_cast<int>(pts.size()) < bs + be) pts.push_back(uniform_in_box(box, rng));

        Tensor x = points_tensor(pts);
        x.set_requires_grad(true);
        FieldEval eval = model.eval_field(ctx, beta, gamma, x, Tensor(), false);
        Tensor g = grad(sum(eval.sdf), {x}, /*create_graph=*/true)[0];

        Tensor l_surf = mean(abs(slice_rows(eval.sdf, 0, bs)));
        Tensor normals_t = Tensor::from_data({bs, 3}, std::move(normals_flat));
        Tensor l_normal = mean(sum_rows(abs(sub(slice_rows(g, 0, bs), normals_t))));
        Tensor g_omega = slice_rows(g, bs, bs + be);
        Tensor gn = sqrt(add_scalar(sum_rows(mul(g_omega, g_omega)), 1e-18));
        Tensor l_eik = mean(mul(add_scalar(gn, -1.0), add_scalar(gn, -1.0)));
        Tensor ref_w = Tensor::from_data({bs, nb}, std::move(ref_w_flat));
        Tensor l_w = loss_weights(slice_rows(eval.weights, 0, bs), ref_w);
        Tensor l_reg = l2_norm(beta);

        Tensor total = add(add(mul_scalar(l_surf, cfg.loss.surface), mul_scalar(l_normal, cfg.loss.normal)),
                           add(add(mul_scalar(l_eik, cfg.loss.eikonal), mul_scalar(l_w, cfg.loss.skinning)),
                               mul_scalar(l_reg, cfg.loss.latent_reg)));
        if (!std::isfinite(total.item())) {
            throw std::runtime_error("train_prior: non-finite loss at step " + std::to_string(step) +
                                     " (surf=" + std::to_string(l_surf.item()) +
                                     " eik=" + std::to_string(l_eik.item()) + ")");
        }

        opt.zero_grad();
        backward(total);
        opt.step();

        last = {{"surface", l_surf.item()}, {"normal", l_normal.item()}, {"eikonal", l_eik.item()},
                {"skinning", l_w.item()},   {"reg", l_reg.item()},       {"total", total.item()}};
        if (step == 1 || step % cfg.log_every == 0 || step == cfg.prior_steps) {
            const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
            log_line(log, {{"step", step},
                           {"surface", last["surface"]},
                           {"normal", last["normal"]},
                           {"eikonal", last["eikonal"]},
                           {"skinning", last["skinning"]},
                           {"reg", last["reg"]},
                           {"total", last["total"]},
                           {"seconds", secs}});
        }
    }

    TrainResult res;
    res.steps = cfg.prior_steps;
    res.checkpoint_path = out_dir + "/model.ckpt";
    res.model_config_path = out_dir + "/model.json";
    res.log_path = log_path;
    model.save(res.checkpoint_path, res.model_config_path, &latents);
    cfg.save(out_dir + "/train_config.json");
    res.final_losses = last;
    res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return res;
}

PriorEval evaluate_prior(const ImplicitModel& model, const LatentTable& latents,
                         const std::string& dataset_root, const std::string& split,
                         int max_points_per_scan, uint64_t seed) {
    DatasetManifest manifest = DatasetManifest::load(dataset_root);
    Skeleton skel = Skeleton::load(dataset_root + "/" + manifest.skeleton);
    std::vector<ScanEntry> scans = load_scans(dataset_root, manifest, split);
    if (scans.empty()) throw std::runtime_error("evaluate_prior: no scans in split '" + split + "'");

    Rng rng(seed);
    PriorEval out;
    double abs_sum = 0.0, eik_sum = 0.0, w_sum = 0.0;
    const int nb = skel.bone_count();
    for (const ScanEntry& scan : scans) {
        if (scan.subject >= static_cast<int>(latents.shape_codes.size())) continue;
        const Tensor& beta = latents.shape_codes[static_cast<size_t>(scan.subject)];
        Pose pose = Pose::from_values(skel.joint_count(), scan.theta);
        PoseContext ctx = make_pose_context(skel, pose, model.config());

        const int n = std::min<int>(max_points_per_scan, static_cast<int>(scan.samples.points.size()));
        std::vector<Vec3> pts;
        std::vector<double> ref_w_flat;
        for (int i = 0; i < n; ++i) {
            const size_t idx = static_cast<size_t>(rng.below(scan.samples.points.size()));
            pts.push_back(scan.samples.points[idx]);
            for (int j = 0; j < nb; ++j) ref_w_flat.push_back(scan.samples.weights[idx][static_cast<size_t>(j)]);
        }
        // Near-surface probes for the Eikonal residual.
        std::vector<Vec3> near;
        for (int i = 0; i < n; ++i) {
            near.push_back(pts[static_cast<size_t>(i)] +
                           Vec3{rng.normal(0.0, 0.005), rng.normal(0.0, 0.005), rng.normal(0.0, 0.005)});
        }

        Tensor x = points_tensor(pts);
        x.set_requires_grad(true);
        FieldEval eval = model.eval_field(ctx, beta, latents.color_codes[static_cast<size_t>(scan.subject)],
                                          x, Tensor(), false);
        abs_sum += mean(abs(eval.sdf)).item() * n;
        Tensor ref_w = Tensor::from_data({n, nb}, std::move(ref_w_flat));
        w_sum += loss_weights(eval.weights, ref_w).item() * n;

        Tensor xn = points_tensor(near);
        xn.set_requires_grad(true);
        Tensor sn = model.eval_field(ctx, beta, Tensor(), xn, Tensor(), false).sdf;
        Tensor gn = grad(sum(sn), {xn}, /*create_graph=*/false)[0];
        Tensor norm = sqrt(add_scalar(sum_rows(mul(gn, gn)), 1e-18));
        eik_sum += mean(mul(add_scalar(norm, -1.0), add_scalar(norm, -1.0))).item() * n;
        out.points += n;
    }
    if (out.points == 0) throw std::runtime_error("evaluate_prior: no evaluable scans");
    out.mean_abs_sdf = abs_sum / out.points;
    out.eikonal_residual = eik_sum / out.points;
    out.weight_l1 = w_sum / out.points;
    return out;
}

TrainResult train_full(const std::string& dataset_root, const TrainConfig& cfg_in,
                       const std::optional<std::string>& prior_dir, const std::string& out_dir) {
    const auto t_start = std::chrono::steady_clock::now();
    TrainConfig cfg = cfg_in;
    if (cfg.threads > 0) set_num_threads(cfg.threads);
    std::filesystem::create_directories(out_dir);

    DatasetManifest manifest = DatasetManifest::load(dataset_root);
    Skeleton skel = Skeleton::load(dataset_root + "/" + manifest.skeleton);
    cfg.model.bone_count = skel.bone_count();
    cfg.model.joint_count = skel.joint_count();

    std::vector<const FrameRecord*> frames;
    for (const auto& f : manifest.frames)
        if (f.split == "train") frames.push_back(&f);
    if (frames.empty()) throw std::runtime_error("train_full: dataset has no training frames");

    std::vector<Camera> cameras;
    for (const auto& rel : manifest.cameras) cameras.push_back(Camera::load(dataset_root + "/" + rel));

    // Ground-truth rigs (synthetic path) provide the skinning supervision;
    // without them a capsule approximation of the skeleton is used.
    std::vector<CapsuleRig> rigs;
    for (const auto& rel : manifest.rigs) rigs.push_back(CapsuleRig::load(dataset_root + "/" + rel));

    Rng rng(cfg.seed);
    std::unique_ptr<ImplicitModel> model;
    LatentTable latents;
    if (prior_dir) {
        model = std::make_unique<ImplicitModel>(
            ImplicitModel::load(*prior_dir + "/model.ckpt", *prior_dir + "/model.json", &latents,
                                manifest.subjects));
        cfg.model = model->config();
        // Keep the generator state aligned with the cold-start path.
        LatentTable::init(manifest.subjects, cfg.model.latent_dim, rng);
    } else {
        model = std::make_unique<ImplicitModel>(cfg.model, rng);
        latents = LatentTable::init(manifest.subjects, cfg.model.latent_dim, rng);
    }

    // One trainable pose per frame, frozen for the initial fraction.
    std::vector<Pose> poses;
    for (const auto* f : frames) {
        std::vector<double> theta = load_pose_values(dataset_root + "/" + f->pose);
        Pose p = Pose::from_values(skel.joint_count(), theta);
        p.theta.set_requires_grad(false);
        poses.push_back(p);
    }
    Calibration calib = Calibration::identity(static_cast<int>(cameras.size()));

    AdamOptimizer opt;
    opt.add_group(model->parameters(), {cfg.lr_network});
    opt.add_group(latents.all_params(), {cfg.lr_latent});
    std::vector<Tensor> pose_params;
    for (auto& p : poses) pose_params.push_back(p.theta);
    opt.add_group(pose_params, {cfg.lr_pose});
    if (cfg.train_calibration) opt.add_group(calib.all_params(), {cfg.lr_calibration});

    const int freeze_steps = static_cast<int>(std::lround(cfg.pose_freeze_fraction * cfg.full_steps));

    const std::string log_path = out_dir + "/train_full.log";
    std::ofstream log(log_path);
    if (!log) throw std::runtime_error("train_full: cannot write log '" + log_path + "'");

    std::map<std::string, double> last;
    for (int step = 1; step <= cfg.full_steps; ++step) {
        const bool pose_trainable = cfg.optimize_pose && step > freeze_steps;
        for (auto& p : poses) p.theta.set_requires_grad(pose_trainable);

        const size_t fi = static_cast<size_t>(rng.below(frames.size()));
        const FrameRecord& frame = *frames[fi];
        const size_t vi = static_cast<size_t>(rng.below(frame.cameras.size()));
        const Camera& cam = cameras[static_cast<size_t>(frame.cameras[vi])];
        const Image image = load_ppm(dataset_root + "/" + frame.images[vi]);
        const Image mask = load_pgm(dataset_root + "/" + frame.masks[vi]);

        const Tensor& beta = latents.shape_codes[static_cast<size_t>(frame.subject)];
        const Tensor& gamma = latents.color_codes[static_cast<size_t>(frame.subject)];
        Pose& pose = poses[fi];
        PoseContext ctx = make_pose_context(skel, pose, cfg.model);
        const std::vector<double> theta_now = pose.theta.data();
        const Aabb box = skeleton_bounds(skel, theta_now, cfg.box_pad);

        const int cam_slot = frame.cameras[vi];
        Tensor gain = cfg.train_calibration ? calib.gains[static_cast<size_t>(cam_slot)]
                                            : Tensor::from_data({1, 3}, {1.0, 1.0, 1.0});
        Tensor bias = cfg.train_calibration ? calib.biases[static_cast<size_t>(cam_slot)]
                                            : Tensor::from_data({1, 3}, {0.0, 0.0, 0.0});

        RayLossBatch batch = render_color_loss(*model, ctx, beta, gamma, cam, image, mask, box,
                                               cfg.rays_per_step, cfg.coarse_samples,
                                               cfg.fine_samples, cfg.mask_ray_fraction, gain, bias,
                                               rng);

        // Eikonal + skinning supervision on [near-surface | uniform] points.
        const int ne = cfg.full_eikonal_batch;
        const int n_near = ne / 2;
        std::vector<Vec3> omega;
        const CapsuleRig* rig = rigs.empty() ? nullptr : &rigs[static_cast<size_t>(frame.subject)];
        for (int i = 0; i < n_near; ++i) {
            Vec3 p = batch.hit_sample_points.empty()
                         ? uniform_in_box(box, rng)
                         : batch.hit_sample_points[static_cast<size_t>(
                               rng.below(batch.hit_sample_points.size()))];
            p += Vec3{rng.normal(0.0, cfg.perturb_sigma), rng.normal(0.0, cfg.perturb_sigma),
                      rng.normal(0.0, cfg.perturb_sigma)};
            omega.push_back(p);
        }
        while (static_cast<int>(omega.size()) < ne) omega.push_back(uniform_in_box(box, rng));

        Tensor x = points_tensor(omega);
        x.set_requires_grad(true);
        FieldEval eval = model->eval_field(ctx, beta, gamma, x, Tensor(), false);
        Tensor g = grad(sum(eval.sdf), {x}, /*create_graph=*/true)[0];
        Tensor gn = sqrt(add_scalar(sum_rows(mul(g, g)), 1e-18));
        Tensor l_eik = mean(mul(add_scalar(gn, -1.0), add_scalar(gn, -1.0)));

        Tensor l_w;
        if (rig) {
            PosedRig posed(*rig, theta_now);
            std::vector<double> ref_w_flat;
            for (int i = 0; i < n_near; ++i) {
                const auto w = posed.skinning_weights(omega[static_cast<size_t>(i)]);
                ref_w_flat.insert(ref_w_flat.end(), w.begin(), w.end());
            }
            Tensor ref_w = Tensor::from_data({n_near, skel.bone_count()}, std::move(ref_w_flat));
            l_w = loss_weights(slice_rows(eval.weights, 0, n_near), ref_w);
        } else {
            l_w = Tensor::scalar(0.0);
        }

        Tensor l_reg = loss_reg(beta, gamma);
        Tensor total = add(add(mul_scalar(batch.color_loss, cfg.loss.color),
                               mul_scalar(l_eik, cfg.loss.eikonal)),
                           add(mul_scalar(l_w, cfg.loss.skinning),
                               mul_scalar(l_reg, cfg.loss.latent_reg)));
        if (!std::isfinite(total.item())) {
            throw std::runtime_error("train_full: non-finite loss at step " + std::to_string(step));
        }

        opt.zero_grad();
        backward(total);
        opt.step();

        last = {{"color", batch.color_loss.item()},
                {"eikonal", l_eik.item()},
                {"skinning", l_w.item()},
                {"reg", l_reg.item()},
                {"total", total.item()}};
        if (step == 1 || step % cfg.log_every == 0 || step == cfg.full_steps) {
            std::vector<double> all_pose;
            for (const auto& p : poses)
                all_pose.insert(all_pose.end(), p.theta.data().begin(), p.theta.data().end());
            const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
            log_line(log, {{"step", step},
                           {"color", last["color"]},
                           {"eikonal", last["eikonal"]},
                           {"skinning", last["skinning"]},
                           {"reg", last["reg"]},
                           {"total", last["total"]},
                           {"pose_frozen", !pose_trainable},
                           {"pose_hash", hash_doubles(all_pose)},
                           {"alpha", model->alpha().item()},
                           {"beta", model->beta().item()},
                           {"seconds", secs}});
        }
    }

    TrainResult res;
    res.steps = cfg.full_steps;
    res.checkpoint_path = out_dir + "/model.ckpt";
    res.model_config_path = out_dir + "/model.json";
    res.log_path = log_path;
    model->save(res.checkpoint_path, res.model_config_path, &latents);
    cfg.save(out_dir + "/train_config.json");
    calib.save(out_dir + "/calibration.json");
    std::filesystem::create_directories(out_dir + "/poses_refined");
    for (size_t i = 0; i < frames.size(); ++i) {
        const std::string name = std::filesystem::path(frames[i]->pose).filename().string();
        save_pose_values(out_dir + "/poses_refined/" + name, poses[i].theta.data());
    }
    res.final_losses = last;
    res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return res;
}

}  // namespace bonefield

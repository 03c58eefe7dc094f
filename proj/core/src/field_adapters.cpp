// Copyright (c) 2026 bonefield contributors
// SPDX-License-Identifier: Apache-2.0
#include "bonefield/field_adapters.hpp"

#include <algorithm>
#include <stdexcept>

namespace bonefield {

DensityColorFn make_density_color_fn(const ImplicitModel& model, const PoseContext& ctx,
                                     const Tensor& shape_code, const Tensor& color_code) {
    return [&model, &ctx, shape_code, color_code](const Tensor& points, const Tensor& dirs) {
        FieldEval eval = model.eval_field(ctx, shape_code, color_code, points, dirs, true);
        Tensor sigma = laplace_density(eval.sdf, model.alpha(), model.beta());
        return std::make_pair(sigma, eval.color);
    };
}

SigmaEvalFn make_sigma_eval(const ImplicitModel& model, const PoseContext& ctx,
                            const Tensor& shape_code) {
    return [&model, &ctx, shape_code](const std::vector<Vec3>& points) {
        NoGradGuard ng;
        std::vector<double> flat;
        flat.reserve(points.size() * 3);
        for (const Vec3& p : points) {
            flat.push_back(p.x);
            flat.push_back(p.y);
            flat.push_back(p.z);
        }
        Tensor pts = Tensor::from_data({static_cast<int64_t>(points.size()), 3}, std::move(flat));
        FieldEval eval = model.eval_field(ctx, shape_code, Tensor(), pts, Tensor(), false);
        Tensor sigma = laplace_density(eval.sdf, model.alpha(), model.beta());
        return sigma.data();
    };
}

ScalarFieldFn make_sdf_fn(const ImplicitModel& model, const PoseContext& ctx,
                          const Tensor& shape_code) {
    return [&model, &ctx, shape_code](const std::vector<Vec3>& points) {
        NoGradGuard ng;
        std::vector<double> flat;
        flat.reserve(points.size() * 3);
        for (const Vec3& p : points) {
            flat.push_back(p.x);
            flat.push_back(p.y);
            flat.push_back(p.z);
        }
        Tensor pts = Tensor::from_data({static_cast<int64_t>(points.size()), 3}, std::move(flat));
        FieldEval eval = model.eval_field(ctx, shape_code, Tensor(), pts, Tensor(), false);
        return eval.sdf.data();
    };
}

TriMesh extract_mesh(const ImplicitModel& model, const Skeleton& skel,
                     const std::vector<double>& theta, const Tensor& shape_code,
                     const Tensor& color_code, int resolution, double pad, bool with_attributes) {
    NoGradGuard ng;
    Pose pose = Pose::from_values(skel.joint_count(), theta);
    PoseContext ctx = make_pose_context(skel, pose, model.config());
    const Aabb box = skeleton_bounds(skel, theta, pad);
    TriMesh mesh = marching_cubes(make_sdf_fn(model, ctx, shape_code), box, resolution);
    if (with_attributes && !mesh.vertices.empty()) {
        std::vector<double> flat;
        flat.reserve(mesh.vertices.size() * 3);
        for (const Vec3& v : mesh.vertices) {
            flat.push_back(v.x);
            flat.push_back(v.y);
            flat.push_back(v.z);
        }
        Tensor pts = Tensor::from_data({static_cast<int64_t>(mesh.vertices.size()), 3}, std::move(flat));
        // View direction only matters for specular-ish effects; a fixed axis
        // is good enough for vertex colors.
        Tensor dirs = Tensor::from_data({1, 3}, {0.0, 0.0, 1.0});
        dirs = tile_rows(dirs, static_cast<int64_t>(mesh.vertices.size()));
        FieldEval eval = model.eval_field(ctx, shape_code, color_code, pts, dirs, true);
        const int nb = model.config().bone_count;
        mesh.colors.resize(mesh.vertices.size());
        mesh.weights.assign(mesh.vertices.size(), std::vector<double>(static_cast<size_t>(nb)));
        for (size_t i = 0; i < mesh.vertices.size(); ++i) {
            mesh.colors[i] = {eval.color.at(static_cast<int64_t>(i), 0),
                              eval.color.at(static_cast<int64_t>(i), 1),
                              eval.color.at(static_cast<int64_t>(i), 2)};
            for (int j = 0; j < nb; ++j) {
                mesh.weights[i][static_cast<size_t>(j)] = eval.weights.at(static_cast<int64_t>(i), j);
            }
        }
    }
    return mesh;
}

Image render_model_image(const ImplicitModel& model, const Skeleton& skel,
                         const std::vector<double>& theta, const Tensor& shape_code,
                         const Tensor& color_code, const Camera& cam, const SampleConfig& samples,
                         Rng& rng, Image* opacity_out) {
    NoGradGuard ng;
    Pose pose = Pose::from_values(skel.joint_count(), theta);
    PoseContext ctx = make_pose_context(skel, pose, model.config());
    const Aabb box = skeleton_bounds(skel, theta, samples.box_pad);
    const DensityColorFn field = make_density_color_fn(model, ctx, shape_code, color_code);
    const SigmaEvalFn sigma = make_sigma_eval(model, ctx, shape_code);

    Image out = Image::make(cam.width, cam.height, 3, 1.0);
    if (opacity_out) *opacity_out = Image::make(cam.width, cam.height, 1, 0.0);

    // Rows of pixels per batch, sized so a batch stays around 64k samples.
    const int per_ray = samples.coarse + samples.fine;
    const int rows_per_batch =
        std::max(1, static_cast<int>(65536 / std::max(1, cam.width * per_ray)));
    for (int y0 = 0; y0 < cam.height; y0 += rows_per_batch) {
        const int y1 = std::min(cam.height, y0 + rows_per_batch);
        std::vector<std::pair<int, int>> pixels;
        for (int y = y0; y < y1; ++y)
            for (int x = 0; x < cam.width; ++x) pixels.emplace_back(x, y);
        RayBundle bundle = generate_rays(cam, pixels, box);
        populate_depths(bundle, samples.coarse, rng);
        refine_depths(bundle, sigma, samples.fine, rng);
        RenderResult res = render_rays(field, bundle, {1.0, 1.0, 1.0});
        for (size_t k = 0; k < res.ray_indices.size(); ++k) {
            const auto [px, py] = bundle.pixels[res.ray_indices[k]];
            for (int c = 0; c < 3; ++c) {
                out.at(px, py, c) = std::clamp(res.rgb.at(static_cast<int64_t>(k), c), 0.0, 1.0);
            }
            if (opacity_out) {
                opacity_out->at(px, py, 0) = std::clamp(res.opacity.at(static_cast<int64_t>(k)), 0.0, 1.0);
            }
        }
    }
    return out;
}

}  // namespace bonefield

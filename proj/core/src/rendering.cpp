// Copyright (c) 2026 bonefield contributors
// SPDX-License-Identifier: Apache-2.0
#include "bonefield/rendering.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace bonefield {

void Camera::validate() const {
    if (fx <= 0 || fy <= 0) throw std::runtime_error("camera: focal lengths must be positive");
    if (width <= 0 || height <= 0) throw std::runtime_error("camera: bad image size");
    // Orthonormality of the extrinsic rotation.
    const auto& r = world_to_cam.rotation;
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
            double dot = 0;
            for (int k = 0; k < 3; ++k) dot += r[static_cast<size_t>(i * 3 + k)] * r[static_cast<size_t>(j * 3 + k)];
            const double expect = i == j ? 1.0 : 0.0;
            if (std::fabs(dot - expect) > 1e-9) {
                throw std::runtime_error("camera: extrinsic rotation is not orthonormal");
            }
        }
    }
}

Camera Camera::load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("camera: cannot open '" + path + "'");
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("camera '" + path + "': " + e.what());
    }
    Camera c;
    c.fx = j.at("fx").get<double>();
    c.fy = j.at("fy").get<double>();
    c.cx = j.at("cx").get<double>();
    c.cy = j.at("cy").get<double>();
    c.width = j.at("width").get<int>();
    c.height = j.at("height").get<int>();
    const auto& r = j.at("rotation");
    for (int i = 0; i < 9; ++i) c.world_to_cam.rotation[static_cast<size_t>(i)] = r.at(i).get<double>();
    const auto& t = j.at("translation");
    c.world_to_cam.translation = {t.at(0).get<double>(), t.at(1).get<double>(), t.at(2).get<double>()};
    if (j.contains("gain")) {
        c.gain = {j["gain"].at(0).get<double>(), j["gain"].at(1).get<double>(), j["gain"].at(2).get<double>()};
    }
    if (j.contains("bias")) {
        c.bias = {j["bias"].at(0).get<double>(), j["bias"].at(1).get<double>(), j["bias"].at(2).get<double>()};
    }
    c.validate();
    return c;
}

void Camera::save(const std::string& path) const {
    nlohmann::json j;
    j["fx"] = fx;
    j["fy"] = fy;
    j["cx"] = cx;
    j["cy"] = cy;
    j["width"] = width;
    j["height"] = height;
    j["rotation"] = world_to_cam.rotation;
    j["translation"] = {world_to_cam.translation.x, world_to_cam.translation.y,
                        world_to_cam.translation.z};
    j["gain"] = {gain.x, gain.y, gain.z};
    j["bias"] = {bias.x, bias.y, bias.z};
    std::ofstream os(path);
    if (!os) throw std::runtime_error("camera: cannot write '" + path + "'");
    os << j.dump(2) << "\n";
}

std::pair<double, double> Camera::project(const Vec3& p_world) const {
    const Vec3 pc = world_to_cam.apply(p_world);
    if (pc.z <= 1e-9) throw std::runtime_error("camera: point at or behind the camera plane");
    return {fx * pc.x / pc.z + cx, fy * pc.y / pc.z + cy};
}

Vec3 Camera::unproject_dir(double px, double py) const {
    const Vec3 dc{(px - cx) / fx, (py - cy) / fy, 1.0};
    // dir_world = R^T dir_cam
    const auto& r = world_to_cam.rotation;
    const Vec3 dw{r[0] * dc.x + r[3] * dc.y + r[6] * dc.z,
                  r[1] * dc.x + r[4] * dc.y + r[7] * dc.z,
                  r[2] * dc.x + r[5] * dc.y + r[8] * dc.z};
    return dw.normalized();
}

Vec3 Camera::position() const {
    // x_cam = R x + t  =>  center = -R^T t
    const auto& r = world_to_cam.rotation;
    const Vec3 t = world_to_cam.translation;
    return {-(r[0] * t.x + r[3] * t.y + r[6] * t.z),
            -(r[1] * t.x + r[4] * t.y + r[7] * t.z),
            -(r[2] * t.x + r[5] * t.y + r[8] * t.z)};
}

Tensor project_points(const Camera& cam, const Tensor& points_world, std::vector<bool>* valid) {
    const int64_t n = points_world.shape()[0];
    const auto& r = cam.world_to_cam.rotation;
    // Row convention: x_cam_row = x_world_row * R^T + t^T. R^T laid out
    // row-major equals R read column-major.
    Tensor rt = Tensor::from_data({3, 3}, {r[0], r[3], r[6], r[1], r[4], r[7], r[2], r[5], r[8]});
    Tensor t_row = Tensor::from_data({1, 3}, {cam.world_to_cam.translation.x,
                                              cam.world_to_cam.translation.y,
                                              cam.world_to_cam.translation.z});
    Tensor pc = add_rowvec(matmul(points_world, rt), t_row);
    Tensor xc = slice_cols(pc, 0, 1);
    Tensor yc = slice_cols(pc, 1, 2);
    Tensor zc = slice_cols(pc, 2, 3);

    std::vector<double> mask_v(static_cast<size_t>(n));
    const double eps = 1e-9;
    for (int64_t i = 0; i < n; ++i) {
        const bool ok = zc.at(i) > eps;
        mask_v[static_cast<size_t>(i)] = ok ? 1.0 : 0.0;
        if (valid) valid->push_back(ok);
    }
    Tensor mask = Tensor::from_data({n, 1}, std::move(mask_v));
    Tensor z_safe = clamp_min(zc, eps);
    Tensor u = mul(mask, add_scalar(mul_scalar(div(xc, z_safe), cam.fx), cam.cx));
    Tensor v = mul(mask, add_scalar(mul_scalar(div(yc, z_safe), cam.fy), cam.cy));
    return concat_cols({u, v});
}

RayBundle generate_rays(const Camera& cam, const std::vector<std::pair<int, int>>& pixels,
                        const Aabb& bounds) {
    cam.validate();
    RayBundle b;
    const Vec3 origin = cam.position();
    b.origins.reserve(pixels.size());
    for (const auto& [px, py] : pixels) {
        if (px < 0 || px >= cam.width || py < 0 || py >= cam.height) {
            throw std::runtime_error("generate_rays: pixel (" + std::to_string(px) + "," +
                                     std::to_string(py) + ") outside image bounds");
        }
        const Vec3 dir = cam.unproject_dir(px + 0.5, py + 0.5);
        double t0 = 1e-4, t1 = 1e30;
        for (int a = 0; a < 3; ++a) {
            const double o = origin[a], d = dir[a];
            const double lo = bounds.lo[a], hi = bounds.hi[a];
            if (std::fabs(d) < 1e-15) {
                if (o < lo || o > hi) {
                    t1 = -1.0;
                    break;
                }
                continue;
            }
            double ta = (lo - o) / d, tb = (hi - o) / d;
            if (ta > tb) std::swap(ta, tb);
            t0 = std::max(t0, ta);
            t1 = std::min(t1, tb);
        }
        b.origins.push_back(origin);
        b.dirs.push_back(dir);
        if (t1 <= t0) {
            b.t_near.push_back(1.0);
            b.t_far.push_back(0.0);  // miss
        } else {
            b.t_near.push_back(t0);
            b.t_far.push_back(t1);
        }
        b.pixels.emplace_back(px, py);
    }
    b.depths.resize(b.origins.size());
    return b;
}

void populate_depths(RayBundle& bundle, int samples, Rng& rng) {
    if (samples < 1) throw std::runtime_error("populate_depths: need at least one sample");
    for (size_t i = 0; i < bundle.size(); ++i) {
        bundle.depths[i].clear();
        if (!bundle.hits(i)) continue;
        const double h = (bundle.t_far[i] - bundle.t_near[i]) / samples;
        bundle.depths[i].reserve(static_cast<size_t>(samples));
        for (int s = 0; s < samples; ++s) {
            bundle.depths[i].push_back(bundle.t_near[i] + (s + rng.uniform()) * h);
        }
    }
}

void refine_depths(RayBundle& bundle, const SigmaEvalFn& sigma_eval, int fine, Rng& rng) {
    if (fine <= 0) return;
    std::vector<Vec3> points;
    std::vector<size_t> ray_of;
    for (size_t i = 0; i < bundle.size(); ++i) {
        if (!bundle.hits(i)) continue;
        for (double t : bundle.depths[i]) {
            points.push_back(bundle.origins[i] + t * bundle.dirs[i]);
            ray_of.push_back(i);
        }
    }
    if (points.empty()) return;
    const std::vector<double> sigma = sigma_eval(points);
    if (sigma.size() != points.size()) {
        throw std::runtime_error("refine_depths: sigma evaluator returned wrong count");
    }
    size_t cursor = 0;
    for (size_t i = 0; i < bundle.size(); ++i) {
        if (!bundle.hits(i)) continue;
        auto& depths = bundle.depths[i];
        const size_t s_count = depths.size();
        size_t best = 0;
        for (size_t s = 1; s < s_count; ++s) {
            if (sigma[cursor + s] > sigma[cursor + best]) best = s;
        }
        const double lo = best == 0 ? bundle.t_near[i] : depths[best - 1];
        const double hi = best + 1 >= s_count ? bundle.t_far[i] : depths[best + 1];
        const double h = (hi - lo) / fine;
        for (int s = 0; s < fine; ++s) depths.push_back(lo + (s + rng.uniform()) * h);
        std::sort(depths.begin(), depths.end());
        cursor += s_count;
    }
}

double laplace_density(double s, double alpha, double beta) {
    const double u = -s;
    const double psi = u <= 0.0 ? 0.5 * std::exp(u / beta) : 1.0 - 0.5 * std::exp(-u / beta);
    return alpha * psi;
}

Tensor laplace_density(const Tensor& s, const Tensor& alpha, const Tensor& beta) {
    // Psi_beta(-s) written with exp(-|s|/beta) so neither branch overflows:
    //   s >= 0:  0.5 * e,   s < 0:  1 - 0.5 * e,   e = exp(-|s|/beta).
    Tensor beta_e = expand_scalar(beta, s.shape());
    Tensor e = exp(neg(div(abs(s), beta_e)));
    Tensor inside = mask_positive(neg(s));  // 1 where s < 0
    Tensor psi = add(mul_scalar(e, 0.5), mul(inside, add_scalar(neg(e), 1.0)));
    return mul(expand_scalar(alpha, s.shape()), psi);
}

QuadratureTerms volume_weights(const Tensor& sigma_delta) {
    QuadratureTerms q;
    q.transmittance = exp(neg(cumsum_rows_exclusive(sigma_delta)));
    q.alphas = add_scalar(neg(exp(neg(sigma_delta))), 1.0);
    q.weights = mul(q.transmittance, q.alphas);
    return q;
}

RenderResult render_rays(const DensityColorFn& field, const RayBundle& bundle,
                         const Vec3& background) {
    RenderResult res;
    size_t sample_count = 0;
    for (size_t i = 0; i < bundle.size(); ++i) {
        if (!bundle.hits(i)) continue;
        if (bundle.depths[i].empty()) throw std::runtime_error("render_rays: depths not populated");
        if (sample_count == 0) sample_count = bundle.depths[i].size();
        if (bundle.depths[i].size() != sample_count) {
            throw std::runtime_error("render_rays: rays must share one sample count");
        }
        res.ray_indices.push_back(i);
    }
    if (res.ray_indices.empty()) return res;
    const int64_t rays = static_cast<int64_t>(res.ray_indices.size());
    const int64_t s = static_cast<int64_t>(sample_count);

    std::vector<double> pts(static_cast<size_t>(rays * s) * 3);
    std::vector<double> dirs(static_cast<size_t>(rays * s) * 3);
    std::vector<double> deltas(static_cast<size_t>(rays * s));
    for (int64_t r = 0; r < rays; ++r) {
        const size_t i = res.ray_indices[static_cast<size_t>(r)];
        const auto& depth = bundle.depths[i];
        for (int64_t k = 0; k < s; ++k) {
            const Vec3 p = bundle.origins[i] + depth[static_cast<size_t>(k)] * bundle.dirs[i];
            const size_t base = static_cast<size_t>((r * s + k) * 3);
            pts[base] = p.x;
            pts[base + 1] = p.y;
            pts[base + 2] = p.z;
            dirs[base] = bundle.dirs[i].x;
            dirs[base + 1] = bundle.dirs[i].y;
            dirs[base + 2] = bundle.dirs[i].z;
            const double next = k + 1 < s ? depth[static_cast<size_t>(k + 1)] : bundle.t_far[i];
            deltas[static_cast<size_t>(r * s + k)] = next - depth[static_cast<size_t>(k)];
        }
    }
    Tensor points_t = Tensor::from_data({rays * s, 3}, std::move(pts));
    Tensor dirs_t = Tensor::from_data({rays * s, 3}, std::move(dirs));
    Tensor deltas_t = Tensor::from_data({rays, s}, std::move(deltas));

    auto [sigma, rgb] = field(points_t, dirs_t);
    if (sigma.shape() != Shape{rays * s, 1} || rgb.shape() != Shape{rays * s, 3}) {
        throw std::runtime_error("render_rays: field returned wrong shapes");
    }

    Tensor sd = mul(reshape(sigma, {rays, s}), deltas_t);
    QuadratureTerms q = volume_weights(sd);
    const Tensor& w = q.weights;
    res.opacity = sum_rows(w);

    std::vector<Tensor> channels;
    for (int c = 0; c < 3; ++c) {
        Tensor col = reshape(slice_cols(rgb, c, c + 1), {rays, s});
        channels.push_back(sum_rows(mul(w, col)));
    }
    Tensor fg = concat_cols(channels);
    Tensor bg_row = Tensor::from_data({1, 3}, {background.x, background.y, background.z});
    res.rgb = add(fg, matmul(add_scalar(neg(res.opacity), 1.0), bg_row));
    return res;
}

Tensor apply_calibration(const Tensor& rgb, const Tensor& gain, const Tensor& bias) {
    return add_rowvec(mul_rowvec(rgb, gain), bias);
}

}  // namespace bonefield

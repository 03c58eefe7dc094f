// Copyright (c) 2026 bonefield contributors
// SPDX-License-Identifier: Apache-2.0
#include "bonefield/model.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace bonefield {

void ModelConfig::validate() const {
    if (bone_count < 1) throw std::runtime_error("model config: bone_count must be >= 1");
    if (joint_count < 1) throw std::runtime_error("model config: joint_count must be >= 1");
    if (latent_dim != 128) {
        throw std::runtime_error("model config: latent codes are 128-dimensional");
    }
    if (encode_levels < 0 || dir_encode_levels < 0) {
        throw std::runtime_error("model config: encoding levels must be >= 0");
    }
    for (const auto* h : {&sdf_hidden, &color_hidden, &weight_hidden}) {
        if (h->empty()) throw std::runtime_error("model config: hidden layer lists cannot be empty");
        for (int w : *h)
            if (w < 1) throw std::runtime_error("model config: hidden width must be >= 1");
    }
    if (init_sphere_radius <= 0) throw std::runtime_error("model config: sphere radius must be > 0");
    if (alpha_init <= 0 || beta_init <= 0) {
        throw std::runtime_error("model config: alpha/beta must start positive");
    }
}

ModelConfig ModelConfig::load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("model config: cannot open '" + path + "'");
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("model config '" + path + "': " + e.what());
    }
    ModelConfig c;
    c.bone_count = j.at("bone_count").get<int>();
    c.joint_count = j.at("joint_count").get<int>();
    c.latent_dim = j.value("latent_dim", 128);
    c.encode_levels = j.value("encode_levels", 6);
    c.dir_encode_levels = j.value("dir_encode_levels", 2);
    c.use_view_dirs = j.value("use_view_dirs", true);
    c.full_pose_conditioning = j.value("full_pose_conditioning", false);
    c.sdf_hidden = j.value("sdf_hidden", std::vector<int>{128, 128, 128, 128});
    c.color_hidden = j.value("color_hidden", std::vector<int>{128, 128, 128});
    c.weight_hidden = j.value("weight_hidden", std::vector<int>{128, 128});
    c.init_sphere_radius = j.value("init_sphere_radius", 0.02);
    c.alpha_init = j.value("alpha_init", 100.0);
    c.beta_init = j.value("beta_init", 0.01);
    c.validate();
    return c;
}

void ModelConfig::save(const std::string& path) const {
    nlohmann::json j;
    j["bone_count"] = bone_count;
    j["joint_count"] = joint_count;
    j["latent_dim"] = latent_dim;
    j["encode_levels"] = encode_levels;
    j["dir_encode_levels"] = dir_encode_levels;
    j["use_view_dirs"] = use_view_dirs;
    j["full_pose_conditioning"] = full_pose_conditioning;
    j["sdf_hidden"] = sdf_hidden;
    j["color_hidden"] = color_hidden;
    j["weight_hidden"] = weight_hidden;
    j["init_sphere_radius"] = init_sphere_radius;
    j["alpha_init"] = alpha_init;
    j["beta_init"] = beta_init;
    std::ofstream os(path);
    if (!os) throw std::runtime_error("model config: cannot write '" + path + "'");
    os << j.dump(2) << "\n";
}

Tensor positional_encode(const Tensor& points, int levels) {
    if (levels == 0) return points;
    std::vector<Tensor> parts{points};
    double freq = 3.14159265358979323846;
    for (int k = 0; k < levels; ++k) {
        parts.push_back(sin(mul_scalar(points, freq)));
        parts.push_back(cos(mul_scalar(points, freq)));
        freq *= 2.0;
    }
    return concat_cols(parts);
}

PoseContext make_pose_context(const Skeleton& skel, const Pose& pose, const ModelConfig& cfg) {
    PoseContext ctx;
    ctx.transforms = forward_kinematics(skel, pose);
    const int nb = skel.bone_count();
    if (cfg.full_pose_conditioning) {
        Tensor flat = reshape(pose.theta, {1, static_cast<int64_t>(pose.theta.numel())});
        ctx.condition.assign(static_cast<size_t>(nb), flat);
    } else {
        for (int j = 0; j < nb; ++j) {
            Tensor r_local = rodrigues(slice_rows(pose.theta, j, j + 1));
            const Vec3& off = skel.joints[static_cast<size_t>(j)].offset;
            Tensor offset = Tensor::from_data({1, 3}, {off.x, off.y, off.z});
            ctx.condition.push_back(concat_cols({reshape(r_local, {1, 9}), offset}));
        }
    }
    return ctx;
}

LatentTable LatentTable::init(int subjects, int latent_dim, Rng& rng) {
    LatentTable t;
    for (int s = 0; s < subjects; ++s) {
        std::vector<double> shape_v(static_cast<size_t>(latent_dim));
        std::vector<double> color_v(static_cast<size_t>(latent_dim));
        for (auto& v : shape_v) v = rng.normal(0.0, 0.01);
        for (auto& v : color_v) v = rng.normal(0.0, 0.01);
        t.shape_codes.push_back(Tensor::param({1, latent_dim}, std::move(shape_v)));
        t.color_codes.push_back(Tensor::param({1, latent_dim}, std::move(color_v)));
    }
    return t;
}

namespace {

std::string index3(size_t i) {
    std::string s = std::to_string(i);
    while (s.size() < 3) s = "0" + s;
    return s;
}

}  // namespace

void LatentTable::register_params(ParamStore& store) const {
    for (size_t s = 0; s < shape_codes.size(); ++s) {
        store.add("latent/shape/" + index3(s), shape_codes[s]);
        store.add("latent/color/" + index3(s), color_codes[s]);
    }
}

void LatentTable::load_params(const ParamStore& store) {
    shape_codes.clear();
    color_codes.clear();
    for (size_t s = 0;; ++s) {
        const std::string shape_name = "latent/shape/" + index3(s);
        if (!store.contains(shape_name)) break;
        const Tensor& sh = store.get(shape_name);
        const Tensor& co = store.get("latent/color/" + index3(s));
        shape_codes.push_back(Tensor::param(sh.shape(), sh.data()));
        color_codes.push_back(Tensor::param(co.shape(), co.data()));
    }
}

std::vector<Tensor> LatentTable::all_params() const {
    std::vector<Tensor> out;
    for (size_t s = 0; s < shape_codes.size(); ++s) {
        out.push_back(shape_codes[s]);
        out.push_back(color_codes[s]);
    }
    return out;
}

namespace {

double softplus_inverse(double y) { return y > 30.0 ? y : std::log(std::expm1(y)); }

Tensor gaussian_param(Shape shape, double stddev, Rng& rng) {
    std::vector<double> v(static_cast<size_t>(shape_numel(shape)));
    for (auto& x : v) x = rng.normal(0.0, stddev);
    return Tensor::param(std::move(shape), std::move(v));
}

}  // namespace

ImplicitModel::Mlp ImplicitModel::make_mlp(int enc_dim, const std::vector<int>& row_dims,
                                           const std::vector<int>& hidden, int out_dim, Rng& rng) {
    Mlp mlp;
    int fan_in = enc_dim;
    for (int d : row_dims) fan_in += d;
    const double std0 = std::sqrt(2.0 / fan_in);
    const int h0 = hidden[0];
    mlp.w_points = gaussian_param({enc_dim, h0}, std0, rng);
    for (int d : row_dims) mlp.w_rows.push_back(gaussian_param({d, h0}, std0, rng));
    mlp.b0 = Tensor::param({1, h0}, std::vector<double>(static_cast<size_t>(h0), 0.0));
    for (size_t l = 1; l < hidden.size(); ++l) {
        const int hin = hidden[l - 1], hout = hidden[l];
        mlp.w_hidden.push_back(gaussian_param({hin, hout}, std::sqrt(2.0 / hin), rng));
        mlp.b_hidden.push_back(
            Tensor::param({1, hout}, std::vector<double>(static_cast<size_t>(hout), 0.0)));
    }
    const int hlast = hidden.back();
    // Zero-initialized head: the initial field is exactly the analytic part.
    mlp.w_out = Tensor::param({hlast, out_dim},
                              std::vector<double>(static_cast<size_t>(hlast * out_dim), 0.0));
    mlp.b_out = Tensor::param({1, out_dim}, std::vector<double>(static_cast<size_t>(out_dim), 0.0));
    return mlp;
}

Tensor ImplicitModel::run_mlp(const Mlp& mlp, const Tensor& point_feats,
                              const std::vector<Tensor>& row_feats) const {
    if (row_feats.size() != mlp.w_rows.size()) {
        throw std::runtime_error("model: row feature count mismatch");
    }
    Tensor row_term = mlp.b0;
    for (size_t i = 0; i < row_feats.size(); ++i) {
        row_term = add(row_term, matmul(row_feats[i], mlp.w_rows[i]));
    }
    Tensor h = softplus(add_rowvec(matmul(point_feats, mlp.w_points), row_term));
    for (size_t l = 0; l < mlp.w_hidden.size(); ++l) {
        h = softplus(add_rowvec(matmul(h, mlp.w_hidden[l]), mlp.b_hidden[l]));
    }
    return add_rowvec(matmul(h, mlp.w_out), mlp.b_out);
}

ImplicitModel::ImplicitModel(ModelConfig cfg, Rng& rng) : cfg_(std::move(cfg)) {
    cfg_.validate();
    const int enc_dim = 3 + 6 * cfg_.encode_levels;
    const int cond_dim = cfg_.full_pose_conditioning ? 3 * cfg_.joint_count : 12;
    const int dir_dim = cfg_.use_view_dirs ? 3 + 6 * cfg_.dir_encode_levels : 0;

    for (int j = 0; j < cfg_.bone_count; ++j) {
        sdf_nets_.push_back(
            make_mlp(enc_dim, {cond_dim, cfg_.latent_dim}, cfg_.sdf_hidden, 1, rng));
    }
    for (int j = 0; j < cfg_.bone_count; ++j) {
        color_nets_.push_back(make_mlp(enc_dim + dir_dim, {cond_dim, cfg_.latent_dim, cfg_.latent_dim},
                                       cfg_.color_hidden, 3, rng));
    }
    weight_net_ = make_mlp(4 * cfg_.bone_count, {}, cfg_.weight_hidden, cfg_.bone_count, rng);
    raw_alpha_ = Tensor::param({}, {softplus_inverse(cfg_.alpha_init)});
    raw_beta_ = Tensor::param({}, {softplus_inverse(cfg_.beta_init)});
}

Tensor ImplicitModel::alpha() const { return softplus(raw_alpha_); }
Tensor ImplicitModel::beta() const { return softplus(raw_beta_); }

void ImplicitModel::collect(const Mlp& mlp, const std::string& prefix,
                            std::vector<std::pair<std::string, Tensor>>& out) const {
    out.emplace_back(prefix + "/w_points", mlp.w_points);
    for (size_t i = 0; i < mlp.w_rows.size(); ++i) {
        out.emplace_back(prefix + "/w_row" + std::to_string(i), mlp.w_rows[i]);
    }
    out.emplace_back(prefix + "/b0", mlp.b0);
    for (size_t l = 0; l < mlp.w_hidden.size(); ++l) {
        out.emplace_back(prefix + "/w" + std::to_string(l + 1), mlp.w_hidden[l]);
        out.emplace_back(prefix + "/b" + std::to_string(l + 1), mlp.b_hidden[l]);
    }
    out.emplace_back(prefix + "/w_out", mlp.w_out);
    out.emplace_back(prefix + "/b_out", mlp.b_out);
}

std::vector<Tensor> ImplicitModel::parameters() const {
    std::vector<std::pair<std::string, Tensor>> named;
    for (size_t j = 0; j < sdf_nets_.size(); ++j) collect(sdf_nets_[j], "sdf/" + index3(j), named);
    for (size_t j = 0; j < color_nets_.size(); ++j)
        collect(color_nets_[j], "color/" + index3(j), named);
    collect(weight_net_, "weights", named);
    named.emplace_back("density/raw_alpha", raw_alpha_);
    named.emplace_back("density/raw_beta", raw_beta_);
    std::vector<Tensor> out;
    out.reserve(named.size());
    for (auto& [name, t] : named) out.push_back(t);
    return out;
}

void ImplicitModel::register_params(ParamStore& store) const {
    std::vector<std::pair<std::string, Tensor>> named;
    for (size_t j = 0; j < sdf_nets_.size(); ++j) collect(sdf_nets_[j], "sdf/" + index3(j), named);
    for (size_t j = 0; j < color_nets_.size(); ++j)
        collect(color_nets_[j], "color/" + index3(j), named);
    collect(weight_net_, "weights", named);
    named.emplace_back("density/raw_alpha", raw_alpha_);
    named.emplace_back("density/raw_beta", raw_beta_);
    for (auto& [name, t] : named) store.add(name, t);
}

void ImplicitModel::load_params(const ParamStore& store) {
    ParamStore own;
    register_params(own);
    for (auto& [name, t] : own.entries()) {
        const Tensor& src = store.get(name);
        if (src.shape() != t.shape()) {
            throw std::runtime_error("model: checkpoint shape mismatch for '" + name + "'");
        }
        // The registered tensors alias the live parameters.
        const_cast<Tensor&>(t).mutable_data() = src.data();
    }
}

void ImplicitModel::save(const std::string& checkpoint_path, const std::string& config_path,
                         const LatentTable* latents) const {
    ParamStore store;
    register_params(store);
    if (latents) latents->register_params(store);
    store.save(checkpoint_path);
    cfg_.save(config_path);
}

ImplicitModel ImplicitModel::load(const std::string& checkpoint_path,
                                  const std::string& config_path, LatentTable* latents,
                                  int expect_subjects) {
    ModelConfig cfg = ModelConfig::load(config_path);
    Rng rng(0);  // immediately overwritten by the checkpoint
    ImplicitModel model(cfg, rng);
    ParamStore store = ParamStore::load(checkpoint_path);
    model.load_params(store);
    if (latents) {
        latents->load_params(store);
        if (expect_subjects >= 0 &&
            static_cast<int>(latents->shape_codes.size()) != expect_subjects) {
            throw std::runtime_error("model: checkpoint has " +
                                     std::to_string(latents->shape_codes.size()) +
                                     " subjects, expected " + std::to_string(expect_subjects));
        }
    }
    return model;
}

PerBoneEval ImplicitModel::eval_per_bone(const PoseContext& ctx, const Tensor& shape_code,
                                         const Tensor& color_code, const Tensor& points,
                                         const Tensor& dirs, bool want_color) const {
    const int nb = cfg_.bone_count;
    if (static_cast<int>(ctx.transforms.size()) != nb) {
        throw std::runtime_error("model: pose context bone count mismatch");
    }
    PerBoneEval out;
    Tensor enc_dirs;
    if (want_color && cfg_.use_view_dirs) {
        if (!dirs.defined()) throw std::runtime_error("model: view directions required");
        enc_dirs = positional_encode(dirs, cfg_.dir_encode_levels);
    }
    std::vector<Tensor> sdf_cols;
    for (int j = 0; j < nb; ++j) {
        Tensor xj = unpose(points, ctx.transforms[static_cast<size_t>(j)]);
        out.unposed.push_back(xj);
        Tensor enc = positional_encode(xj, cfg_.encode_levels);
        Tensor raw = run_mlp(sdf_nets_[static_cast<size_t>(j)], enc,
                             {ctx.condition[static_cast<size_t>(j)], shape_code});
        // Analytic sphere term keeps the untrained field non-empty.
        Tensor norm = sqrt(add_scalar(sum_rows(mul(xj, xj)), 1e-12));
        sdf_cols.push_back(add(raw, add_scalar(norm, -cfg_.init_sphere_radius)));
        if (want_color) {
            Tensor feats = cfg_.use_view_dirs ? concat_cols({enc, enc_dirs}) : enc;
            Tensor rgb = run_mlp(color_nets_[static_cast<size_t>(j)], feats,
                                 {ctx.condition[static_cast<size_t>(j)], shape_code, color_code});
            out.colors.push_back(sigmoid(rgb));
        }
    }
    out.sdf = concat_cols(sdf_cols);
    return out;
}

Tensor ImplicitModel::eval_weights(const PerBoneEval& bones) const {
    const int nb = cfg_.bone_count;
    std::vector<Tensor> parts;
    parts.reserve(static_cast<size_t>(nb) * 2);
    for (int j = 0; j < nb; ++j) {
        parts.push_back(bones.unposed[static_cast<size_t>(j)]);
        parts.push_back(slice_cols(bones.sdf, j, j + 1));
    }
    Tensor logits = run_mlp(weight_net_, concat_cols(parts), {});
    return softmax_rows(logits);
}

FieldEval ImplicitModel::eval_field(const PoseContext& ctx, const Tensor& shape_code,
                                    const Tensor& color_code, const Tensor& points,
                                    const Tensor& dirs, bool want_color) const {
    PerBoneEval bones = eval_per_bone(ctx, shape_code, color_code, points, dirs, want_color);
    Tensor w = eval_weights(bones);
    FieldEval out;
    out.weights = w;
    out.bone_sdf = bones.sdf;
    out.sdf = sum_rows(mul(w, bones.sdf));
    if (want_color) {
        Tensor c;
        for (int j = 0; j < cfg_.bone_count; ++j) {
            Tensor term = mul_colvec(bones.colors[static_cast<size_t>(j)], slice_cols(w, j, j + 1));
            c = j == 0 ? term : add(c, term);
        }
        out.color = c;
    }
    return out;
}

}  // namespace bonefield

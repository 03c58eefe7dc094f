// Copyright (c) 2026 bonefield contributors
// SPDX-License-Identifier: Apache-2.0
//
// The articulated implicit field: independent per-bone SDF and color MLPs
// evaluated on unposed query points, blended by a learned skinning-weight
// network,
//   s = sum_j w_j s_j,   c = sum_j w_j c_j,
// conditioned on a 128-d shape code and a 128-d color code per subject.
#pragma once

#include <memory>
#include <string>
#include <vector>

#include "bonefield/checkpoint.hpp"
#include "bonefield/kinematics.hpp"
#include "bonefield/random.hpp"
#include "bonefield/tensor.hpp"

namespace bonefield {

struct ModelConfig {
    int bone_count = 10;
    int joint_count = 10;
    int latent_dim = 128;           // shape and color code width
    int encode_levels = 6;          // positional encoding L for points
    int dir_encode_levels = 2;      // L for view directions
    bool use_view_dirs = true;      // feed encoded d to the color nets
    bool full_pose_conditioning = false;  // full theta instead of the local transform
    std::vector<int> sdf_hidden{128, 128, 128, 128};
    std::vector<int> color_hidden{128, 128, 128};
    std::vector<int> weight_hidden{128, 128};
    double init_sphere_radius = 0.02;  // untrained bone field ~ sphere of this radius
    double alpha_init = 100.0;
    double beta_init = 0.01;

    void validate() const;
    static ModelConfig load(const std::string& path);
    void save(const std::string& path) const;
};

// [x, sin(2^k pi x), cos(2^k pi x)] for k < levels; [N,3] -> [N,3+6L].
Tensor positional_encode(const Tensor& points, int levels);

// Per-bone pose conditioning plus the world transforms, built once per pose.
struct PoseContext {
    std::vector<BoneTransform> transforms;
    std::vector<Tensor> condition;  // one [1,cond_dim] row per bone
};
PoseContext make_pose_context(const Skeleton& skel, const Pose& pose, const ModelConfig& cfg);

struct PerBoneEval {
    std::vector<Tensor> unposed;  // n_b tensors [N,3]
    Tensor sdf;                   // [N,n_b]
    std::vector<Tensor> colors;   // n_b tensors [N,3]; empty when colors skipped
};

struct FieldEval {
    Tensor sdf;       // [N,1]
    Tensor color;     // [N,3]; undefined when colors skipped
    Tensor weights;   // [N,n_b]
    Tensor bone_sdf;  // [N,n_b]
};

// Per-subject auto-decoded codes, Gaussian-initialized (std 0.01).
struct LatentTable {
    std::vector<Tensor> shape_codes;  // [1,latent_dim] params
    std::vector<Tensor> color_codes;

    static LatentTable init(int subjects, int latent_dim, Rng& rng);
    void register_params(ParamStore& store) const;
    void load_params(const ParamStore& store);
    std::vector<Tensor> all_params() const;
};

class ImplicitModel {
public:
    ImplicitModel(ModelConfig cfg, Rng& rng);

    const ModelConfig& config() const { return cfg_; }

    // Strictly positive density parameters (softplus reparameterization).
    Tensor alpha() const;
    Tensor beta() const;

    // Every trainable tensor in a fixed order.
    std::vector<Tensor> parameters() const;
    void register_params(ParamStore& store) const;
    void load_params(const ParamStore& store);

    void save(const std::string& checkpoint_path, const std::string& config_path,
              const LatentTable* latents = nullptr) const;
    static ImplicitModel load(const std::string& checkpoint_path, const std::string& config_path,
                              LatentTable* latents = nullptr, int expect_subjects = -1);

    PerBoneEval eval_per_bone(const PoseContext& ctx, const Tensor& shape_code,
                              const Tensor& color_code, const Tensor& points, const Tensor& dirs,
                              bool want_color) const;
    // Softmax over the weight MLP; gradients reach the SDF nets through the
    // s_j inputs.
    Tensor eval_weights(const PerBoneEval& bones) const;
    FieldEval eval_field(const PoseContext& ctx, const Tensor& shape_code,
                         const Tensor& color_code, const Tensor& points, const Tensor& dirs,
                         bool want_color) const;

private:
    struct Mlp {
        // First layer is split by input block so per-batch constants stay
        // [1,h]: x-block applies per point, the rest broadcast per row.
        Tensor w_points;                 // [enc_dim, h0]
        std::vector<Tensor> w_rows;      // condition / latent / dir blocks
        Tensor b0;                       // [1, h0]
        std::vector<Tensor> w_hidden, b_hidden;
        Tensor w_out, b_out;             // zero-initialized heads
    };

    Mlp make_mlp(int enc_dim, const std::vector<int>& row_dims, const std::vector<int>& hidden,
                 int out_dim, Rng& rng);
    Tensor run_mlp(const Mlp& mlp, const Tensor& point_feats,
                   const std::vector<Tensor>& row_feats) const;
    void collect(const Mlp& mlp, const std::string& prefix,
                 std::vector<std::pair<std::string, Tensor>>& out) const;

    ModelConfig cfg_;
    std::vector<Mlp> sdf_nets_;
    std::vector<Mlp> color_nets_;
    Mlp weight_net_;
    Tensor raw_alpha_, raw_beta_;
};

}  // namespace bonefield

// Copyright (c) 2026 bonefield contributors
// SPDX-License-Identifier: Apache-2.0
//
// Skeleton definition, axis-angle poses, forward kinematics and linear
// blend skinning. Bone frames are centered at the proximal joint of each
// bone and aligned with the world axes in the rest pose, so the rest
// transform of bone j is (I, rest_position_j). One bone per joint.
#pragma once

#include <string>
#include <vector>

#include "bonefield/geometry.hpp"
#include "bonefield/tensor.hpp"

namespace bonefield {

struct Joint {
    std::string name;
    int parent = -1;               // -1 for the root
    Vec3 offset;                   // rest offset from the parent joint, meters
};

class Skeleton {
public:
    std::vector<Joint> joints;

    int joint_count() const { return static_cast<int>(joints.size()); }
    int bone_count() const { return static_cast<int>(joints.size()); }

    // Throws unless joints are topologically sorted with exactly one root.
    void validate() const;

    // Cumulative offsets in the identity pose.
    std::vector<Vec3> rest_positions() const;

    static Skeleton load(const std::string& path);
    void save(const std::string& path) const;

    // Bundled rigs: a 16-joint hand and the 10-bone test rig used by the
    // synthetic benchmark.
    static Skeleton hand16();
    static Skeleton test_rig10();
};

// Axis-angle pose, one 3-vector per joint, stored as a trainable [n_j, 3]
// tensor (48 values for the 16-joint hand).
struct Pose {
    Tensor theta;

    static Pose rest(int joint_count);
    static Pose from_values(int joint_count, const std::vector<double>& values);
    std::vector<double> values() const { return theta.data(); }
    int joint_count() const { return static_cast<int>(theta.shape()[0]); }
};

// Differentiable rigid transform: rotation [3,3], translation [3,1].
struct BoneTransform {
    Tensor rotation;
    Tensor translation;
};

// Axis-angle -> rotation matrix (Rodrigues); switches to the series
// expansion below 1e-6 rad so gradients stay finite at zero.
Tensor rodrigues(const Tensor& axis_angle_row);  // [1,3] -> [3,3]

// World transforms of every bone frame; differentiable w.r.t. the pose.
std::vector<BoneTransform> forward_kinematics(const Skeleton& skel, const Pose& pose);

// Plain-value forward kinematics for oracles and renderers.
std::vector<RigidTransform> forward_kinematics_values(const Skeleton& skel,
                                                      const std::vector<double>& theta);

// x_j = R_j^T (x - t_j) for a batch of world points [N,3] against one bone.
Tensor unpose(const Tensor& points, const BoneTransform& transform);
Vec3 unpose_point(const Vec3& p, const RigidTransform& transform);

// Joint world positions as an [n_j, 3] tensor, differentiable w.r.t. pose.
Tensor joints_3d(const Skeleton& skel, const Pose& pose);

// Relative transform that moves rest-pose world points to posed world
// points for bone j: delta = (R_j, t_j - R_j * rest_j).
RigidTransform delta_from_rest(const RigidTransform& world, const Vec3& rest_position);

// Softmax-over-negative-segment-distance reference skinning weights with
// sharpness k (1/m). Segments are the posed bone capsule axes.
std::vector<double> reference_skinning_weights(const Vec3& x,
                                               const std::vector<std::pair<Vec3, Vec3>>& segments,
                                               double sharpness);

// v_i = sum_j w_ij (R_j v_i + t_j); transforms are applied as given, so
// callers pass delta transforms when deforming rest-pose geometry.
std::vector<Vec3> lbs_deform(const std::vector<Vec3>& vertices,
                             const std::vector<std::vector<double>>& weights,
                             const std::vector<RigidTransform>& transforms);

// Axis-aligned box around the posed joints, padded by `pad` meters; the
// renderer and mesher take this as their query region.
Aabb skeleton_bounds(const Skeleton& skel, const std::vector<double>& theta, double pad);

}  // namespace bonefield

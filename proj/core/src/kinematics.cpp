// Copyright (c) 2026 bonefield contributors
// SPDX-License-Identifier: Apache-2.0
#include "bonefield/kinematics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace bonefield {

void Skeleton::validate() const {
    if (joints.empty()) throw std::runtime_error("skeleton: no joints");
    int roots = 0;
    for (size_t j = 0; j < joints.size(); ++j) {
        const int p = joints[j].parent;
        if (p == -1) {
            ++roots;
        } else if (p < 0 || p >= static_cast<int>(j)) {
            throw std::runtime_error("skeleton: joint " + std::to_string(j) +
                                     " has parent " + std::to_string(p) +
                                     "; joints must be topologically sorted");
        }
    }
    if (roots != 1) {
        throw std::runtime_error("skeleton: expected exactly one root, found " +
                                 std::to_string(roots));
    }
}

std::vector<Vec3> Skeleton::rest_positions() const {
    std::vector<Vec3> pos(joints.size());
    for (size_t j = 0; j < joints.size(); ++j) {
        pos[j] = joints[j].parent < 0 ? joints[j].offset
                                      : pos[static_cast<size_t>(joints[j].parent)] + joints[j].offset;
    }
    return pos;
}

Skeleton Skeleton::load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("skeleton: cannot open '" + path + "'");
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("skeleton '" + path + "': " + e.what());
    }
    Skeleton s;
    for (const auto& jj : j.at("joints")) {
        Joint joint;
        joint.name = jj.value("name", "joint" + std::to_string(s.joints.size()));
        joint.parent = jj.at("parent").get<int>();
        const auto& o = jj.at("offset");
        joint.offset = Vec3{o.at(0).get<double>(), o.at(1).get<double>(), o.at(2).get<double>()};
        s.joints.push_back(joint);
    }
    s.validate();
    return s;
}

void Skeleton::save(const std::string& path) const {
    nlohmann::json j;
    j["joints"] = nlohmann::json::array();
    for (const auto& joint : joints) {
        j["joints"].push_back({{"name", joint.name},
                               {"parent", joint.parent},
                               {"offset", {joint.offset.x, joint.offset.y, joint.offset.z}}});
    }
    std::ofstream os(path);
    if (!os) throw std::runtime_error("skeleton: cannot write '" + path + "'");
    os << j.dump(2) << "\n";
}

namespace {

Skeleton build(std::vector<Joint> joints) {
    Skeleton s;
    s.joints = std::move(joints);
    s.validate();
    return s;
}

}  // namespace

Skeleton Skeleton::hand16() {
    return build({
        {"wrist", -1, {0.0, 0.0, 0.0}},
        {"thumb1", 0, {0.025, 0.020, 0.0}},
        {"thumb2", 1, {0.020, 0.020, 0.0}},
        {"thumb3", 2, {0.015, 0.015, 0.0}},
        {"index1", 0, {0.020, 0.080, 0.0}},
        {"index2", 4, {0.0, 0.035, 0.0}},
        {"index3", 5, {0.0, 0.025, 0.0}},
        {"middle1", 0, {0.0, 0.085, 0.0}},
        {"middle2", 7, {0.0, 0.040, 0.0}},
        {"middle3", 8, {0.0, 0.028, 0.0}},
        {"ring1", 0, {-0.020, 0.080, 0.0}},
        {"ring2", 10, {0.0, 0.035, 0.0}},
        {"ring3", 11, {0.0, 0.025, 0.0}},
        {"pinky1", 0, {-0.040, 0.070, 0.0}},
        {"pinky2", 13, {0.0, 0.028, 0.0}},
        {"pinky3", 14, {0.0, 0.020, 0.0}},
    });
}

Skeleton Skeleton::test_rig10() {
    return build({
        {"palm", -1, {0.0, 0.0, 0.0}},
        {"f0_1", 0, {-0.025, 0.060, 0.0}},
        {"f0_2", 1, {0.0, 0.035, 0.0}},
        {"f0_3", 2, {0.0, 0.025, 0.0}},
        {"f1_1", 0, {0.0, 0.065, 0.0}},
        {"f1_2", 4, {0.0, 0.040, 0.0}},
        {"f1_3", 5, {0.0, 0.028, 0.0}},
        {"f2_1", 0, {0.025, 0.060, 0.0}},
        {"f2_2", 7, {0.0, 0.035, 0.0}},
        {"f2_3", 8, {0.0, 0.025, 0.0}},
    });
}

Pose Pose::rest(int joint_count) {
    return Pose{Tensor::zeros({joint_count, 3})};
}

Pose Pose::from_values(int joint_count, const std::vector<double>& values) {
    if (static_cast<int>(values.size()) != joint_count * 3) {
        throw std::runtime_error("pose: expected " + std::to_string(joint_count * 3) +
                                 " values, got " + std::to_string(values.size()));
    }
    return Pose{Tensor::from_data({joint_count, 3}, values)};
}

namespace {

Tensor scale_mat(const Tensor& s, const Tensor& m) { return mul(expand_scalar(s, m.shape()), m); }

const Tensor& identity3() {
    static const Tensor I = Tensor::from_data({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    return I;
}

}  // namespace

Tensor rodrigues(const Tensor& w) {
    if (w.shape() != Shape{1, 3}) {
        throw std::runtime_error("rodrigues: expected [1,3], got " + shape_str(w.shape()));
    }
    Tensor wx = slice_cols(w, 0, 1);
    Tensor wy = slice_cols(w, 1, 2);
    Tensor wz = slice_cols(w, 2, 3);
    Tensor zero = Tensor::zeros({1, 1});
    Tensor k = concat_rows({concat_cols({zero, neg(wz), wy}),
                            concat_cols({wz, zero, neg(wx)}),
                            concat_cols({neg(wy), wx, zero})});
    Tensor theta2 = reshape(sum(mul(w, w)), {});
    Tensor a, b;  // sin(t)/t and (1-cos(t))/t^2
    if (theta2.item() < 1e-12) {
        a = add_scalar(mul_scalar(theta2, -1.0 / 6.0), 1.0);
        b = add_scalar(mul_scalar(theta2, -1.0 / 24.0), 0.5);
    } else {
        Tensor theta = sqrt(theta2);
        a = div(sin(theta), theta);
        b = div(add_scalar(neg(cos(theta)), 1.0), theta2);
    }
    return add(identity3(), add(scale_mat(a, k), scale_mat(b, matmul(k, k))));
}

std::vector<BoneTransform> forward_kinematics(const Skeleton& skel, const Pose& pose) {
    skel.validate();
    const int n = skel.joint_count();
    if (pose.joint_count() != n) {
        throw std::runtime_error("forward_kinematics: pose has " +
                                 std::to_string(pose.joint_count()) + " joints, skeleton has " +
                                 std::to_string(n));
    }
    std::vector<BoneTransform> out;
    out.reserve(static_cast<size_t>(n));
    for (int j = 0; j < n; ++j) {
        const Joint& joint = skel.joints[static_cast<size_t>(j)];
        Tensor r_local = rodrigues(slice_rows(pose.theta, j, j + 1));
        Tensor offset = Tensor::from_data({3, 1}, {joint.offset.x, joint.offset.y, joint.offset.z});
        if (joint.parent < 0) {
            out.push_back({r_local, offset});
        } else {
            const BoneTransform& par = out[static_cast<size_t>(joint.parent)];
            out.push_back({matmul(par.rotation, r_local),
                           add(matmul(par.rotation, offset), par.translation)});
        }
    }
    return out;
}

std::vector<RigidTransform> forward_kinematics_values(const Skeleton& skel,
                                                      const std::vector<double>& theta) {
    NoGradGuard ng;
    Pose pose = Pose::from_values(skel.joint_count(), theta);
    auto transforms = forward_kinematics(skel, pose);
    std::vector<RigidTransform> out(transforms.size());
    for (size_t j = 0; j < transforms.size(); ++j) {
        const auto& r = transforms[j].rotation.data();
        std::copy(r.begin(), r.end(), out[j].rotation.begin());
        const auto& t = transforms[j].translation.data();
        out[j].translation = Vec3{t[0], t[1], t[2]};
    }
    return out;
}

Tensor unpose(const Tensor& points, const BoneTransform& transform) {
    // Row convention: ((x - t)^T R) rows equal R^T (x - t).
    Tensor shifted = add_rowvec(points, neg(reshape(transform.translation, {1, 3})));
    return matmul(shifted, transform.rotation);
}

Vec3 unpose_point(const Vec3& p, const RigidTransform& transform) {
    return transform.apply_inverse(p);
}

Tensor joints_3d(const Skeleton& skel, const Pose& pose) {
    auto transforms = forward_kinematics(skel, pose);
    std::vector<Tensor> rows;
    rows.reserve(transforms.size());
    for (const auto& t : transforms) rows.push_back(reshape(t.translation, {1, 3}));
    return concat_rows(rows);
}

RigidTransform delta_from_rest(const RigidTransform& world, const Vec3& rest_position) {
    RigidTransform d;
    d.rotation = world.rotation;
    d.translation = world.translation - world.apply_rotation(rest_position);
    return d;
}

std::vector<double> reference_skinning_weights(const Vec3& x,
                                               const std::vector<std::pair<Vec3, Vec3>>& segments,
                                               double sharpness) {
    std::vector<double> logits(segments.size());
    double best = -1e300;
    for (size_t i = 0; i < segments.size(); ++i) {
        logits[i] = -sharpness * point_segment_distance(x, segments[i].first, segments[i].second);
        best = std::max(best, logits[i]);
    }
    double denom = 0.0;
    for (double& l : logits) {
        l = std::exp(l - best);
        denom += l;
    }
    for (double& l : logits) l /= denom;
    return logits;
}

std::vector<Vec3> lbs_deform(const std::vector<Vec3>& vertices,
                             const std::vector<std::vector<double>>& weights,
                             const std::vector<RigidTransform>& transforms) {
    if (vertices.size() != weights.size()) {
        throw std::runtime_error("lbs_deform: vertex/weight count mismatch");
    }
    std::vector<Vec3> out(vertices.size());
    for (size_t i = 0; i < vertices.size(); ++i) {
        if (weights[i].size() != transforms.size()) {
            throw std::runtime_error("lbs_deform: weight row " + std::to_string(i) +
                                     " has wrong bone count");
        }
        Vec3 v{0, 0, 0};
        for (size_t j = 0; j < transforms.size(); ++j) {
            if (weights[i][j] == 0.0) continue;
            v += weights[i][j] * transforms[j].apply(vertices[i]);
        }
        out[i] = v;
    }
    return out;
}

Aabb skeleton_bounds(const Skeleton& skel, const std::vector<double>& theta, double pad) {
    Aabb box;
    for (const auto& t : forward_kinematics_values(skel, theta)) box.expand(t.translation);
    box.pad(pad);
    return box;
}

}  // namespace bonefield

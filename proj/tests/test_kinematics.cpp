// Copyright (c) 2026 bonefield contributors
// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <array>
#include <cmath>

#include "bonefield/kinematics.hpp"
#include "testutil.hpp"

using namespace bonefield;
using bftest::finite_difference;
using bftest::max_grad_rel_err;

namespace {

// Independent oracle: compose local 4x4 matrices joint by joint.
struct Mat4 {
    std::array<double, 16> m{1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1};
};

Mat4 mat4_mul(const Mat4& a, const Mat4& b) {
    Mat4 c;
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) {
            double s = 0;
            for (int k = 0; k < 4; ++k) s += a.m[static_cast<size_t>(i * 4 + k)] * b.m[static_cast<size_t>(k * 4 + j)];
            c.m[static_cast<size_t>(i * 4 + j)] = s;
        }
    return c;
}

Mat4 rodrigues_mat4(const Vec3& w, const Vec3& offset) {
    const double theta = w.norm();
    std::array<double, 9> r{1, 0, 0, 0, 1, 0, 0, 0, 1};
    if (theta > 1e-12) {
        const Vec3 a = w / theta;
        const double c = std::cos(theta), s = std::sin(theta), t = 1 - c;
        r = {c + a.x * a.x * t,       a.x * a.y * t - a.z * s, a.x * a.z * t + a.y * s,
             a.y * a.x * t + a.z * s, c + a.y * a.y * t,       a.y * a.z * t - a.x * s,
             a.z * a.x * t - a.y * s, a.z * a.y * t + a.x * s, c + a.z * a.z * t};
    }
    Mat4 m;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) m.m[static_cast<size_t>(i * 4 + j)] = r[static_cast<size_t>(i * 3 + j)];
    m.m[3] = offset.x;
    m.m[7] = offset.y;
    m.m[11] = offset.z;
    return m;
}

}  // namespace

TEST_CASE("identity pose reproduces the rest transforms") {
    Skeleton skel = Skeleton::test_rig10();
    auto transforms = forward_kinematics_values(
        skel, std::vector<double>(static_cast<size_t>(skel.joint_count()) * 3, 0.0));
    const auto rest = skel.rest_positions();
    for (int j = 0; j < skel.joint_count(); ++j) {
        for (int k = 0; k < 9; ++k) {
            const double expect = (k % 4 == 0) ? 1.0 : 0.0;  // identity layout
            CHECK(transforms[static_cast<size_t>(j)].rotation[static_cast<size_t>(k)] ==
                  doctest::Approx(expect).epsilon(1e-15));
        }
        CHECK((transforms[static_cast<size_t>(j)].translation - rest[static_cast<size_t>(j)]).norm() < 1e-15);
    }
}

TEST_CASE("two-bone chain rotated about z") {
    Skeleton skel;
    skel.joints = {{"root", -1, {0, 0, 0}}, {"child", 0, {0.5, 0, 0}}};
    std::vector<double> theta(6, 0.0);
    theta[5] = 3.14159265358979323846 / 2.0;  // child +90 deg about z
    auto tf = forward_kinematics_values(skel, theta);
    // A point one unit along the child's x axis lands one unit along parent y.
    const Vec3 p = tf[1].apply({1.0, 0.0, 0.0});
    CHECK(p.x == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(p.y == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(p.z == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("random pose matches the matrix-composition oracle") {
    Skeleton skel = Skeleton::hand16();
    Rng rng(19);
    std::vector<double> theta(static_cast<size_t>(skel.joint_count()) * 3);
    for (auto& v : theta) v = rng.uniform(-1.0, 1.0);
    auto got = forward_kinematics_values(skel, theta);

    std::vector<Mat4> world(static_cast<size_t>(skel.joint_count()));
    for (int j = 0; j < skel.joint_count(); ++j) {
        const Joint& joint = skel.joints[static_cast<size_t>(j)];
        const Vec3 w{theta[static_cast<size_t>(j * 3)], theta[static_cast<size_t>(j * 3 + 1)],
                     theta[static_cast<size_t>(j * 3 + 2)]};
        Mat4 local = rodrigues_mat4(w, joint.offset);
        world[static_cast<size_t>(j)] =
            joint.parent < 0 ? local : mat4_mul(world[static_cast<size_t>(joint.parent)], local);
    }
    for (int j = 0; j < skel.joint_count(); ++j) {
        const auto& m = world[static_cast<size_t>(j)].m;
        for (int r = 0; r < 3; ++r) {
            for (int c = 0; c < 3; ++c) {
                CHECK(std::fabs(got[static_cast<size_t>(j)].rotation[static_cast<size_t>(r * 3 + c)] -
                                m[static_cast<size_t>(r * 4 + c)]) < 1e-9);
            }
        }
        CHECK(std::fabs(got[static_cast<size_t>(j)].translation.x - m[3]) < 1e-9);
        CHECK(std::fabs(got[static_cast<size_t>(j)].translation.y - m[7]) < 1e-9);
        CHECK(std::fabs(got[static_cast<size_t>(j)].translation.z - m[11]) < 1e-9);
    }
}

TEST_CASE("rotation matrices stay orthonormal") {
    Skeleton skel = Skeleton::test_rig10();
    Rng rng(23);
    for (int trial = 0; trial < 5; ++trial) {
        std::vector<double> theta(static_cast<size_t>(skel.joint_count()) * 3);
        for (auto& v : theta) v = rng.uniform(-2.0, 2.0);
        for (const auto& tf : forward_kinematics_values(skel, theta)) {
            const auto& r = tf.rotation;
            for (int i = 0; i < 3; ++i) {
                for (int j = 0; j < 3; ++j) {
                    double dot = 0;
                    for (int k = 0; k < 3; ++k)
                        dot += r[static_cast<size_t>(i * 3 + k)] * r[static_cast<size_t>(j * 3 + k)];
                    CHECK(std::fabs(dot - (i == j ? 1.0 : 0.0)) < 1e-9);
                }
            }
            // det = +1
            const double det = r[0] * (r[4] * r[8] - r[5] * r[7]) - r[1] * (r[3] * r[8] - r[5] * r[6]) +
                               r[2] * (r[3] * r[7] - r[4] * r[6]);
            CHECK(det == doctest::Approx(1.0).epsilon(1e-9));
        }
    }
}

TEST_CASE("unpose identities") {
    RigidTransform id;
    CHECK((unpose_point({0.3, 0.4, 0.5}, id) - Vec3{0.3, 0.4, 0.5}).norm() == 0.0);

    RigidTransform shift;
    shift.translation = {1.0, 2.0, 3.0};
    CHECK((unpose_point({1.0, 2.0, 3.0}, shift)).norm() == 0.0);

    // round trip through a posed transform
    Skeleton skel = Skeleton::test_rig10();
    Rng rng(31);
    std::vector<double> theta(static_cast<size_t>(skel.joint_count()) * 3);
    for (auto& v : theta) v = rng.uniform(-1.0, 1.0);
    auto tf = forward_kinematics_values(skel, theta);
    for (const auto& t : tf) {
        const Vec3 x{rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2)};
        const Vec3 back = t.apply(unpose_point(x, t));
        CHECK((back - x).norm() < 1e-12);
    }
}

TEST_CASE("FK is rigid: bone-attached distances are pose invariant") {
    Skeleton skel = Skeleton::test_rig10();
    Rng rng(37);
    const Vec3 a{0.01, 0.02, 0.005}, b{-0.01, 0.03, -0.01};
    const double rest_dist = (a - b).norm();
    for (int trial = 0; trial < 5; ++trial) {
        std::vector<double> theta(static_cast<size_t>(skel.joint_count()) * 3);
        for (auto& v : theta) v = rng.uniform(-1.5, 1.5);
        for (const auto& t : forward_kinematics_values(skel, theta)) {
            CHECK(std::fabs((t.apply(a) - t.apply(b)).norm() - rest_dist) < 1e-9);
        }
    }
}

TEST_CASE("FK pose gradients match finite differences") {
    Skeleton skel = Skeleton::test_rig10();
    Rng rng(41);
    std::vector<double> theta0(static_cast<size_t>(skel.joint_count()) * 3);
    for (auto& v : theta0) v = rng.uniform(-0.8, 0.8);
    const int joint = 6;  // deep in a finger chain
    const Vec3 probe{0.01, 0.015, -0.01};

    auto world_x = [&](const std::vector<double>& th) {
        auto tf = forward_kinematics_values(skel, th);
        return tf[joint].apply(probe);
    };

    Pose pose = Pose::from_values(skel.joint_count(), theta0);
    pose.theta.set_requires_grad(true);
    auto transforms = forward_kinematics(skel, pose);
    Tensor probe_t = Tensor::from_data({3, 1}, {probe.x, probe.y, probe.z});
    Tensor world = add(matmul(transforms[joint].rotation, probe_t), transforms[joint].translation);
    backward(sum(world));

    auto fd = finite_difference(
        [&](const std::vector<double>& th) {
            const Vec3 p = world_x(th);
            return p.x + p.y + p.z;
        },
        theta0);
    CHECK(max_grad_rel_err(pose.theta.grad(), fd, 1e-5) < 1e-3);
}

TEST_CASE("rodrigues is well behaved at zero angle") {
    Tensor w = Tensor::param({1, 3}, {0.0, 0.0, 0.0});
    Tensor r = rodrigues(w);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) CHECK(r.at(i, j) == doctest::Approx(i == j ? 1.0 : 0.0));
    backward(sum(mul(r, r)));
    for (double g : w.grad()) CHECK(std::isfinite(g));
}

TEST_CASE("reference skinning weights") {
    std::vector<std::pair<Vec3, Vec3>> segments = {
        {{0, 0, 0}, {0, 0.05, 0}},
        {{0.2, 0, 0}, {0.2, 0.05, 0}},
        {{0.4, 0, 0}, {0.4, 0.05, 0}},
    };
    // on the first axis, far from the rest
    auto w = reference_skinning_weights({0.0, 0.025, 0.0}, segments, 50.0);
    CHECK(w[0] > 0.99);
    // equidistant between first two, far from third
    auto w2 = reference_skinning_weights({0.1, 0.025, 0.0}, segments, 50.0);
    CHECK(std::fabs(w2[0] - w2[1]) < 1e-9);
    // sums to one
    Rng rng(43);
    for (int trial = 0; trial < 10; ++trial) {
        auto w3 = reference_skinning_weights(
            {rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5)}, segments, 50.0);
        double s = 0;
        for (double x : w3) {
            CHECK(x >= 0.0);
            s += x;
        }
        CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("lbs_deform") {
    std::vector<Vec3> verts{{0.1, 0.2, 0.3}, {-0.1, 0.0, 0.05}};
    std::vector<RigidTransform> transforms(2);  // identities
    std::vector<std::vector<double>> weights{{0.5, 0.5}, {1.0, 0.0}};

    SUBCASE("identity transforms leave vertices unchanged") {
        auto out = lbs_deform(verts, weights, transforms);
        for (size_t i = 0; i < verts.size(); ++i) CHECK((out[i] - verts[i]).norm() == 0.0);
    }
    SUBCASE("one-hot weights apply a single transform") {
        transforms[0].translation = {0.0, 0.0, 1.0};
        auto out = lbs_deform(verts, {{1.0, 0.0}, {1.0, 0.0}}, transforms);
        CHECK((out[0] - Vec3{0.1, 0.2, 1.3}).norm() < 1e-15);
    }
    SUBCASE("50/50 blend of identity and translation moves halfway") {
        transforms[1].translation = {1.0, 0.0, 0.0};
        auto out = lbs_deform({{0.0, 0.0, 0.0}}, {{0.5, 0.5}}, transforms);
        CHECK((out[0] - Vec3{0.5, 0.0, 0.0}).norm() < 1e-15);
    }
    SUBCASE("dimension mismatch raises") {
        CHECK_THROWS(lbs_deform(verts, {{1.0}}, transforms));
    }
}

TEST_CASE("skeleton validation and io") {
    Skeleton bad;
    bad.joints = {{"a", -1, {0, 0, 0}}, {"b", 5, {0, 0, 0}}};
    CHECK_THROWS(bad.validate());

    Skeleton two_roots;
    two_roots.joints = {{"a", -1, {0, 0, 0}}, {"b", -1, {0, 0, 0}}};
    CHECK_THROWS(two_roots.validate());

    Skeleton skel = Skeleton::hand16();
    CHECK(skel.joint_count() == 16);
    skel.save("/tmp/bf_test_skel.json");
    Skeleton loaded = Skeleton::load("/tmp/bf_test_skel.json");
    REQUIRE(loaded.joint_count() == 16);
    for (int j = 0; j < 16; ++j) {
        CHECK(loaded.joints[static_cast<size_t>(j)].parent == skel.joints[static_cast<size_t>(j)].parent);
        CHECK((loaded.joints[static_cast<size_t>(j)].offset - skel.joints[static_cast<size_t>(j)].offset).norm() <
              1e-15);
    }
}

TEST_CASE("delta transforms reproduce posed positions from rest") {
    Skeleton skel = Skeleton::test_rig10();
    Rng rng(53);
    std::vector<double> theta(static_cast<size_t>(skel.joint_count()) * 3);
    for (auto& v : theta) v = rng.uniform(-1.0, 1.0);
    auto world = forward_kinematics_values(skel, theta);
    auto rest = skel.rest_positions();
    for (int j = 0; j < skel.joint_count(); ++j) {
        RigidTransform delta = delta_from_rest(world[static_cast<size_t>(j)], rest[static_cast<size_t>(j)]);
        // The rest joint position must map to the posed joint position.
        CHECK((delta.apply(rest[static_cast<size_t>(j)]) - world[static_cast<size_t>(j)].translation).norm() <
              1e-12);
    }
}

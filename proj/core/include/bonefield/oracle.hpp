// Copyright (c) 2026 bonefield contributors
// SPDX-License-Identifier: Apache-2.0
//
// Synthetic ground truth: an articulated rig of capsules joined by a
// compact-support quadratic smooth union. The SDF, its gradient, colors and
// skinning weights are all analytic, which makes the rig usable as an
// oracle for geometry, rendering and supervision signals.
#pragma once

#include <string>
#include <utility>
#include <vector>

#include "bonefield/dataset.hpp"
#include "bonefield/geometry.hpp"
#include "bonefield/io_image.hpp"
#include "bonefield/kinematics.hpp"
#include "bonefield/random.hpp"
#include "bonefield/rendering.hpp"

namespace bonefield {

struct Capsule {
    Vec3 p0, p1;     // segment endpoints in the bone frame, meters
    double radius = 0.01;
    Vec3 color{0.8, 0.6, 0.5};
};

struct CapsuleRig {
    Skeleton skeleton;
    std::vector<Capsule> capsules;     // exactly one per bone
    double smooth_radius = 0.005;      // blend width of the smooth union
    double weight_sharpness = 50.0;    // softmax sharpness for weights, 1/m

    void validate() const;
    static CapsuleRig load(const std::string& path);
    void save(const std::string& path) const;

    // 10-bone rig (palm + 3 fingers x 3) used throughout the tests.
    static CapsuleRig test_rig();
    // Per-subject variation: radii +-20%, bone lengths +-10%, jittered colors.
    CapsuleRig varied(Rng& rng) const;
};

struct OracleSample {
    double sdf = 0.0;
    Vec3 gradient;   // raw smooth-union gradient, |grad| <= 1
    Vec3 normal;     // normalized gradient
    Vec3 color;
    std::vector<double> weights;
    // True when any pairwise blend was active at this point; Eikonal checks
    // exclude such seam samples.
    bool seam = false;
};

// Rig posed by forward kinematics; all queries are in world space.
class PosedRig {
public:
    PosedRig(const CapsuleRig& rig, const std::vector<double>& theta);

    double sdf(const Vec3& x) const;
    OracleSample sample(const Vec3& x) const;
    std::vector<double> skinning_weights(const Vec3& x) const;

    Aabb bounds(double pad) const;
    const std::vector<std::pair<Vec3, Vec3>>& segments() const { return segments_; }
    const CapsuleRig& rig() const { return *rig_; }
    const std::vector<RigidTransform>& transforms() const { return transforms_; }

    // Projects x onto the zero level set (Newton steps along the gradient);
    // returns false if |sdf| > tol after max_iter iterations.
    bool project_to_surface(Vec3& x, double tol = 1e-6, int max_iter = 20) const;

private:
    const CapsuleRig* rig_;
    std::vector<RigidTransform> transforms_;
    std::vector<std::pair<Vec3, Vec3>> segments_;  // posed capsule axes
};

struct OracleRender {
    Image rgb;    // 3ch, white background, Lambertian shading
    Image mask;   // 1ch binary
    Image depth;  // 1ch hit distance, 0 where missed
};

// Reference sphere-tracing renderer (hit tolerance 1e-5 m).
OracleRender oracle_render(const Camera& cam, const PosedRig& rig);

struct EmitConfig {
    int subjects = 3;
    int poses_per_subject = 20;
    int cameras = 12;
    int image_size = 128;
    int scan_points = 3000;
    uint64_t seed = 1;
    bool emit_images = true;
    bool emit_scans = true;
    double test_fraction = 0.15;  // trailing poses become the "test" split
};

// Writes the full dataset layout (images, masks, cameras, poses, joints,
// scans, manifest) under out_dir. Byte-identical for identical seeds.
DatasetManifest emit_dataset(const CapsuleRig& base_rig, const EmitConfig& cfg,
                             const std::string& out_dir);

// Random but plausible articulation used by the generator (finger curl
// plus small off-axis wiggle and a bounded root rotation).
std::vector<double> sample_pose(const Skeleton& skel, Rng& rng);

// Cameras on a ring around the rig center, all looking at it.
std::vector<Camera> ring_cameras(const CapsuleRig& rig, int count, int image_size);

}  // namespace bonefield

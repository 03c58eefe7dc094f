// Copyright (c) 2026 bonefield contributors
// SPDX-License-Identifier: Apache-2.0
#include "bonefield/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace bonefield {

void CapsuleRig::validate() const {
    skeleton.validate();
    if (capsules.size() != static_cast<size_t>(skeleton.bone_count())) {
        throw std::runtime_error("rig: expected one capsule per bone");
    }
    for (const auto& c : capsules) {
        if (c.radius <= 0.0) throw std::runtime_error("rig: capsule radius must be positive");
        for (int k = 0; k < 3; ++k) {
            if (c.color[k] < 0.0 || c.color[k] > 1.0) {
                throw std::runtime_error("rig: colors must lie in [0,1]");
            }
        }
    }
    if (smooth_radius <= 0.0) throw std::runtime_error("rig: smooth radius must be positive");
}

CapsuleRig CapsuleRig::load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("rig: cannot open '" + path + "'");
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("rig '" + path + "': " + e.what());
    }
    CapsuleRig rig;
    for (const auto& jj : j.at("skeleton").at("joints")) {
        Joint joint;
        joint.name = jj.value("name", "");
        joint.parent = jj.at("parent").get<int>();
        joint.offset = {jj.at("offset").at(0).get<double>(), jj.at("offset").at(1).get<double>(),
                        jj.at("offset").at(2).get<double>()};
        rig.skeleton.joints.push_back(joint);
    }
    for (const auto& jc : j.at("capsules")) {
        Capsule c;
        c.p0 = {jc.at("p0").at(0).get<double>(), jc.at("p0").at(1).get<double>(),
                jc.at("p0").at(2).get<double>()};
        c.p1 = {jc.at("p1").at(0).get<double>(), jc.at("p1").at(1).get<double>(),
                jc.at("p1").at(2).get<double>()};
        c.radius = jc.at("radius").get<double>();
        c.color = {jc.at("color").at(0).get<double>(), jc.at("color").at(1).get<double>(),
                   jc.at("color").at(2).get<double>()};
        rig.capsules.push_back(c);
    }
    rig.smooth_radius = j.value("smooth_radius", 0.005);
    rig.weight_sharpness = j.value("weight_sharpness", 50.0);
    rig.validate();
    return rig;
}

void CapsuleRig::save(const std::string& path) const {
    nlohmann::json j;
    j["skeleton"]["joints"] = nlohmann::json::array();
    for (const auto& joint : skeleton.joints) {
        j["skeleton"]["joints"].push_back(
            {{"name", joint.name},
             {"parent", joint.parent},
             {"offset", {joint.offset.x, joint.offset.y, joint.offset.z}}});
    }
    j["capsules"] = nlohmann::json::array();
    for (const auto& c : capsules) {
        j["capsules"].push_back({{"p0", {c.p0.x, c.p0.y, c.p0.z}},
                                 {"p1", {c.p1.x, c.p1.y, c.p1.z}},
                                 {"radius", c.radius},
                                 {"color", {c.color.x, c.color.y, c.color.z}}});
    }
    j["smooth_radius"] = smooth_radius;
    j["weight_sharpness"] = weight_sharpness;
    std::ofstream os(path);
    if (!os) throw std::runtime_error("rig: cannot write '" + path + "'");
    os << j.dump(2) << "\n";
}

CapsuleRig CapsuleRig::test_rig() {
    CapsuleRig rig;
    rig.skeleton = Skeleton::test_rig10();
    // One capsule per bone, spanning from the bone's joint toward its child
    // (tips get a short stub). Distinct colors so appearance carries
    // per-bone information.
    auto cap = [](Vec3 p1, double r, Vec3 color) {
        Capsule c;
        c.p0 = {0, 0, 0};
        c.p1 = p1;
        c.radius = r;
        c.color = color;
        return c;
    };
    rig.capsules = {
        cap({0.0, 0.055, 0.0}, 0.020, {0.85, 0.62, 0.48}),   // palm
        cap({0.0, 0.035, 0.0}, 0.011, {0.80, 0.35, 0.30}),   // finger 0
        cap({0.0, 0.025, 0.0}, 0.010, {0.70, 0.28, 0.25}),
        cap({0.0, 0.020, 0.0}, 0.009, {0.60, 0.22, 0.22}),
        cap({0.0, 0.040, 0.0}, 0.012, {0.32, 0.62, 0.35}),   // finger 1
        cap({0.0, 0.028, 0.0}, 0.010, {0.26, 0.52, 0.30}),
        cap({0.0, 0.022, 0.0}, 0.009, {0.20, 0.42, 0.26}),
        cap({0.0, 0.035, 0.0}, 0.011, {0.30, 0.42, 0.75}),   // finger 2
        cap({0.0, 0.025, 0.0}, 0.010, {0.25, 0.34, 0.62}),
        cap({0.0, 0.020, 0.0}, 0.009, {0.20, 0.28, 0.50}),
    };
    rig.validate();
    return rig;
}

CapsuleRig CapsuleRig::varied(Rng& rng) const {
    CapsuleRig out = *this;
    const int nb = skeleton.bone_count();
    std::vector<double> length_scale(static_cast<size_t>(nb));
    for (int j = 0; j < nb; ++j) length_scale[static_cast<size_t>(j)] = rng.uniform(0.9, 1.1);
    // Bone length scaling moves both the capsule tip and the child joints.
    for (int j = 0; j < nb; ++j) {
        Capsule& c = out.capsules[static_cast<size_t>(j)];
        c.p1 = c.p0 + (c.p1 - c.p0) * length_scale[static_cast<size_t>(j)];
        c.radius = capsules[static_cast<size_t>(j)].radius * rng.uniform(0.8, 1.2);
        for (int k = 0; k < 3; ++k) {
            double v = capsules[static_cast<size_t>(j)].color[k] + rng.uniform(-0.08, 0.08);
            v = std::clamp(v, 0.05, 0.95);
            if (k == 0) c.color.x = v;
            if (k == 1) c.color.y = v;
            if (k == 2) c.color.z = v;
        }
    }
    for (int j = 1; j < nb; ++j) {
        const int parent = out.skeleton.joints[static_cast<size_t>(j)].parent;
        out.skeleton.joints[static_cast<size_t>(j)].offset =
            skeleton.joints[static_cast<size_t>(j)].offset * length_scale[static_cast<size_t>(parent)];
    }
    out.validate();
    return out;
}

namespace {

// Quadratic smooth union with compact support: exact min when |a-b| >= k.
// Returns the blended value and the weight h of `a` (d/da = h, d/db = 1-h).
inline double smooth_union(double a, double b, double k, double& h, bool& active) {
    h = 0.5 + 0.5 * (b - a) / k;
    if (h <= 0.0) {
        h = 0.0;
        return b;
    }
    if (h >= 1.0) {
        h = 1.0;
        return a;
    }
    active = true;
    return b + (a - b) * h - k * h * (1.0 - h);
}

inline double capsule_sdf(const Vec3& x, const Vec3& a, const Vec3& b, double radius, Vec3& grad) {
    const Vec3 ab = b - a;
    const double len2 = ab.norm2();
    double t = len2 > 0.0 ? (x - a).dot(ab) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    const Vec3 d = x - (a + ab * t);
    const double n = d.norm();
    grad = n > 1e-15 ? d / n : Vec3{0.0, 0.0, 1.0};
    return n - radius;
}

}  // namespace

PosedRig::PosedRig(const CapsuleRig& rig, const std::vector<double>& theta) : rig_(&rig) {
    rig.validate();
    transforms_ = forward_kinematics_values(rig.skeleton, theta);
    segments_.reserve(rig.capsules.size());
    for (size_t j = 0; j < rig.capsules.size(); ++j) {
        segments_.emplace_back(transforms_[j].apply(rig.capsules[j].p0),
                               transforms_[j].apply(rig.capsules[j].p1));
    }
}

double PosedRig::sdf(const Vec3& x) const {
    const double k = rig_->smooth_radius;
    double s = 1e300;
    for (size_t j = 0; j < segments_.size(); ++j) {
        const double sj =
            point_segment_distance(x, segments_[j].first, segments_[j].second) - rig_->capsules[j].radius;
        double h;
        bool active = false;
        s = j == 0 ? sj : smooth_union(sj, s, k, h, active);
    }
    return s;
}

OracleSample PosedRig::sample(const Vec3& x) const {
    const double k = rig_->smooth_radius;
    OracleSample out;
    out.weights = skinning_weights(x);

    double s = 0.0;
    Vec3 g{0, 0, 0};
    for (size_t j = 0; j < segments_.size(); ++j) {
        Vec3 gj;
        const double sj = capsule_sdf(x, segments_[j].first, segments_[j].second,
                                      rig_->capsules[j].radius, gj);
        if (j == 0) {
            s = sj;
            g = gj;
            continue;
        }
        double h;
        bool active = false;
        const double blended = smooth_union(sj, s, k, h, active);
        out.seam = out.seam || active;
        g = gj * h + g * (1.0 - h);
        s = blended;
    }
    out.sdf = s;
    out.gradient = g;
    out.normal = g.normalized();

    out.color = {0, 0, 0};
    for (size_t j = 0; j < out.weights.size(); ++j) out.color += out.weights[j] * rig_->capsules[j].color;
    return out;
}

std::vector<double> PosedRig::skinning_weights(const Vec3& x) const {
    return reference_skinning_weights(x, segments_, rig_->weight_sharpness);
}

Aabb PosedRig::bounds(double pad) const {
    Aabb box;
    for (size_t j = 0; j < segments_.size(); ++j) {
        const double r = rig_->capsules[j].radius;
        for (const Vec3& p : {segments_[j].first, segments_[j].second}) {
            box.expand(p + Vec3{r, r, r});
            box.expand(p - Vec3{r, r, r});
        }
    }
    box.pad(pad);
    return box;
}

bool PosedRig::project_to_surface(Vec3& x, double tol, int max_iter) const {
    for (int it = 0; it < max_iter; ++it) {
        const OracleSample s = sample(x);
        if (std::fabs(s.sdf) <= tol) return true;
        const double gn = s.gradient.norm();
        if (gn < 1e-9) return false;
        x -= s.gradient * (s.sdf / (gn * gn));
    }
    return std::fabs(sdf(x)) <= tol;
}

OracleRender oracle_render(const Camera& cam, const PosedRig& rig) {
    cam.validate();
    OracleRender out;
    out.rgb = Image::make(cam.width, cam.height, 3, 1.0);  // white background
    out.mask = Image::make(cam.width, cam.height, 1, 0.0);
    out.depth = Image::make(cam.width, cam.height, 1, 0.0);

    const Aabb box = rig.bounds(0.02);
    const Vec3 light = Vec3{0.4, 0.3, 0.85}.normalized();
    const Vec3 origin = cam.position();
    constexpr double kHitTol = 1e-5;

    for (int y = 0; y < cam.height; ++y) {
        for (int x = 0; x < cam.width; ++x) {
            const Vec3 dir = cam.unproject_dir(x + 0.5, y + 0.5);
            // Slab test against the padded box to bound the march.
            double t0 = 1e-4, t1 = 1e30;
            bool miss = false;
            for (int a = 0; a < 3; ++a) {
                if (std::fabs(dir[a]) < 1e-15) {
                    if (origin[a] < box.lo[a] || origin[a] > box.hi[a]) {
                        miss = true;
                        break;
                    }
                    continue;
                }
                double ta = (box.lo[a] - origin[a]) / dir[a];
                double tb = (box.hi[a] - origin[a]) / dir[a];
                if (ta > tb) std::swap(ta, tb);
                t0 = std::max(t0, ta);
                t1 = std::min(t1, tb);
            }
            if (miss || t1 <= t0) continue;

            double t = t0;
            for (int step = 0; step < 256 && t < t1; ++step) {
                const Vec3 p = origin + t * dir;
                const double d = rig.sdf(p);
                if (d < kHitTol) {
                    const OracleSample s = rig.sample(p);
                    const double lambert = 0.25 + 0.75 * std::max(0.0, s.normal.dot(light));
                    out.rgb.at(x, y, 0) = std::clamp(s.color.x * lambert, 0.0, 1.0);
                    out.rgb.at(x, y, 1) = std::clamp(s.color.y * lambert, 0.0, 1.0);
                    out.rgb.at(x, y, 2) = std::clamp(s.color.z * lambert, 0.0, 1.0);
                    out.mask.at(x, y, 0) = 1.0;
                    out.depth.at(x, y, 0) = t;
                    break;
                }
                t += std::max(d, 1e-6);
            }
        }
    }
    return out;
}

std::vector<double> sample_pose(const Skeleton& skel, Rng& rng) {
    std::vector<double> theta(static_cast<size_t>(skel.joint_count()) * 3, 0.0);
    for (int j = 0; j < skel.joint_count(); ++j) {
        if (skel.joints[static_cast<size_t>(j)].parent < 0) {
            for (int a = 0; a < 3; ++a) theta[static_cast<size_t>(j * 3 + a)] = rng.uniform(-0.3, 0.3);
        } else {
            // Finger joints mostly curl about x with a little wiggle.
            theta[static_cast<size_t>(j * 3 + 0)] = rng.uniform(-0.15, 0.9);
            theta[static_cast<size_t>(j * 3 + 1)] = rng.uniform(-0.1, 0.1);
            theta[static_cast<size_t>(j * 3 + 2)] = rng.uniform(-0.15, 0.15);
        }
    }
    return theta;
}

std::vector<Camera> ring_cameras(const CapsuleRig& rig, int count, int image_size) {
    // Center of the rest-pose rig.
    PosedRig posed(rig, std::vector<double>(static_cast<size_t>(rig.skeleton.joint_count()) * 3, 0.0));
    const Aabb box = posed.bounds(0.0);
    const Vec3 center = (box.lo + box.hi) * 0.5;
    const double radius = 0.35;

    std::vector<Camera> cams;
    for (int i = 0; i < count; ++i) {
        const double az = 2.0 * 3.14159265358979323846 * i / count;
        const double el = (i % 2 == 0) ? 0.35 : -0.35;  // alternate elevation
        const Vec3 eye = center + radius * Vec3{std::cos(el) * std::cos(az), std::sin(el),
                                                std::cos(el) * std::sin(az)};
        // Camera looks along +z toward the center.
        Vec3 fwd = (center - eye).normalized();
        Vec3 up{0, 1, 0};
        if (std::fabs(fwd.dot(up)) > 0.95) up = {1, 0, 0};
        const Vec3 right = fwd.cross(up).normalized();
        const Vec3 down = fwd.cross(right).normalized();  // image y grows downward
        Camera cam;
        cam.width = cam.height = image_size;
        cam.fx = cam.fy = 1.21 * image_size;  // ~45 degree horizontal FOV
        cam.cx = image_size / 2.0;
        cam.cy = image_size / 2.0;
        cam.world_to_cam.rotation = {right.x, right.y, right.z, down.x, down.y,
                                     down.z,  fwd.x,   fwd.y,   fwd.z};
        // t = -R * eye
        const Vec3 t = -Vec3{right.dot(eye), down.dot(eye), fwd.dot(eye)};
        cam.world_to_cam.translation = t;
        cam.validate();
        cams.push_back(cam);
    }
    return cams;
}

namespace {

SurfaceSamples sample_surface(const PosedRig& rig, int count, Rng& rng) {
    SurfaceSamples out;
    const auto& segments = rig.segments();
    const auto& capsules = rig.rig().capsules;
    int guard = 0;
    while (static_cast<int>(out.points.size()) < count && guard < count * 20) {
        ++guard;
        // Seed on a random capsule surface, then project onto the blended
        // zero level set.
        const size_t j = static_cast<size_t>(rng.below(segments.size()));
        const double t = rng.uniform();
        const Vec3 axis = segments[j].first + t * (segments[j].second - segments[j].first);
        Vec3 dir{rng.normal(), rng.normal(), rng.normal()};
        if (dir.norm() < 1e-9) continue;
        Vec3 x = axis + dir.normalized() * capsules[j].radius;
        if (!rig.project_to_surface(x, 1e-7, 25)) continue;
        const OracleSample s = rig.sample(x);
        out.points.push_back(x);
        out.normals.push_back(s.normal);
        out.weights.push_back(s.weights);
    }
    if (static_cast<int>(out.points.size()) < count) {
        throw std::runtime_error("oracle: surface sampling failed to converge");
    }
    return out;
}

std::string zero_pad(int v, int width) {
    std::string s = std::to_string(v);
    while (static_cast<int>(s.size()) < width) s = "0" + s;
    return s;
}

}  // namespace

DatasetManifest emit_dataset(const CapsuleRig& base_rig, const EmitConfig& cfg,
                             const std::string& out_dir) {
    namespace fs = std::filesystem;
    if (cfg.subjects < 1) throw std::runtime_error("emit_dataset: need at least one subject");
    for (const char* sub : {"rigs", "cameras", "poses", "images", "masks", "joints", "scans"}) {
        std::error_code ec;
        fs::create_directories(fs::path(out_dir) / sub, ec);
        if (ec) throw std::runtime_error("emit_dataset: cannot create '" + out_dir + "/" + sub + "'");
    }

    Rng root_rng(cfg.seed);
    DatasetManifest manifest;
    manifest.subjects = cfg.subjects;
    manifest.image_size = {cfg.image_size, cfg.image_size};

    manifest.skeleton = "skeleton.json";
    base_rig.skeleton.save(out_dir + "/skeleton.json");

    const std::vector<Camera> cameras = ring_cameras(base_rig, cfg.cameras, cfg.image_size);
    for (int c = 0; c < cfg.cameras; ++c) {
        const std::string rel = "cameras/cam" + zero_pad(c, 2) + ".json";
        cameras[static_cast<size_t>(c)].save(out_dir + "/" + rel);
        manifest.cameras.push_back(rel);
    }

    const int test_from = std::max(1, static_cast<int>(std::lround(
                                           cfg.poses_per_subject * (1.0 - cfg.test_fraction))));
    for (int s = 0; s < cfg.subjects; ++s) {
        Rng subject_rng = root_rng.fork(static_cast<uint64_t>(s) + 1);
        const CapsuleRig rig = cfg.subjects == 1 ? base_rig : base_rig.varied(subject_rng);
        const std::string rig_rel = "rigs/subject_" + zero_pad(s, 3) + ".json";
        rig.save(out_dir + "/" + rig_rel);
        manifest.rigs.push_back(rig_rel);

        for (int p = 0; p < cfg.poses_per_subject; ++p) {
            Rng frame_rng = subject_rng.fork(static_cast<uint64_t>(p) + 101);
            const std::vector<double> theta = sample_pose(rig.skeleton, frame_rng);
            const std::string tag = "s" + zero_pad(s, 3) + "_p" + zero_pad(p, 3);
            const std::string pose_rel = "poses/" + tag + ".json";
            save_pose_values(out_dir + "/" + pose_rel, theta);
            const std::string split = p >= test_from ? "test" : "train";

            PosedRig posed(rig, theta);

            if (cfg.emit_scans) {
                SurfaceSamples samples = sample_surface(posed, cfg.scan_points, frame_rng);
                ScanRecord rec;
                rec.subject = s;
                rec.split = split;
                rec.pose = pose_rel;
                rec.file = "scans/" + tag + ".bin";
                save_scan(out_dir + "/" + rec.file, samples);
                manifest.scans.push_back(rec);
            }

            if (cfg.emit_images) {
                FrameRecord rec;
                rec.subject = s;
                rec.split = split;
                rec.pose = pose_rel;
                const auto j3d = forward_kinematics_values(rig.skeleton, theta);
                for (int c = 0; c < cfg.cameras; ++c) {
                    const Camera& cam = cameras[static_cast<size_t>(c)];
                    OracleRender render = oracle_render(cam, posed);
                    const std::string img_rel = "images/" + tag + "_c" + zero_pad(c, 2) + ".ppm";
                    const std::string mask_rel = "masks/" + tag + "_c" + zero_pad(c, 2) + ".pgm";
                    const std::string joints_rel = "joints/" + tag + "_c" + zero_pad(c, 2) + ".txt";
                    save_ppm(out_dir + "/" + img_rel, render.rgb);
                    save_pgm(out_dir + "/" + mask_rel, render.mask);
                    JointDetections det;
                    for (const auto& tfm : j3d) {
                        const auto [u, v] = cam.project(tfm.translation);
                        det.x.push_back(u);
                        det.y.push_back(v);
                        det.confidence.push_back(1.0);
                    }
                    save_joints2d(out_dir + "/" + joints_rel, det);
                    rec.cameras.push_back(c);
                    rec.images.push_back(img_rel);
                    rec.masks.push_back(mask_rel);
                    rec.joints2d.push_back(joints_rel);
                }
                manifest.frames.push_back(rec);
            }
        }
    }
    manifest.save(out_dir);
    return manifest;
}

}  // namespace bonefield

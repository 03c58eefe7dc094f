// Copyright (c) 2026 bonefield contributors
// SPDX-License-Identifier: Apache-2.0
//
// On-disk dataset layout shared by the synthetic generator and training:
//   <root>/manifest.json
//   <root>/rigs/ cameras/ poses/ images/ masks/ joints/ scans/
// Real captures can be converted into the same layout; training code never
// cares where the files came from.
#pragma once

#include <array>
#include <string>
#include <vector>

#include "bonefield/geometry.hpp"
#include "bonefield/rendering.hpp"

namespace bonefield {

// Scan-track sample set: surface points with unit normals and reference
// skinning weights. Binary container documented in docs/formats.md.
struct SurfaceSamples {
    std::vector<Vec3> points;
    std::vector<Vec3> normals;
    std::vector<std::vector<double>> weights;  // one simplex row per point
};

void save_scan(const std::string& path, const SurfaceSamples& samples);
SurfaceSamples load_scan(const std::string& path);

struct FrameRecord {
    int subject = 0;
    std::string split = "train";  // "train" or "test"
    std::string pose;             // poses/*.json
    std::vector<int> cameras;     // indices into DatasetManifest::cameras
    std::vector<std::string> images;
    std::vector<std::string> masks;
    std::vector<std::string> joints2d;
};

struct ScanRecord {
    int subject = 0;
    std::string split = "train";
    std::string pose;
    std::string file;
};

struct DatasetManifest {
    std::string skeleton;             // skeleton.json, relative to root
    std::vector<std::string> rigs;    // one per subject (synthetic ground truth)
    std::vector<std::string> cameras;
    std::array<int, 2> image_size{0, 0};
    int subjects = 0;
    std::vector<FrameRecord> frames;
    std::vector<ScanRecord> scans;

    static DatasetManifest load(const std::string& root);
    void save(const std::string& root) const;
};

// Pose parameter file ({"theta": [...]}).
std::vector<double> load_pose_values(const std::string& path);
void save_pose_values(const std::string& path, const std::vector<double>& theta);

// n_j lines of "x y confidence".
struct JointDetections {
    std::vector<double> x, y, confidence;
};
JointDetections load_joints2d(const std::string& path);
void save_joints2d(const std::string& path, const JointDetections& j);

}  // namespace bonefield

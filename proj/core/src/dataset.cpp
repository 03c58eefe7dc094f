// Copyright (c) 2026 bonefield contributors
// SPDX-License-Identifier: Apache-2.0
#include "bonefield/dataset.hpp"

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace bonefield {

namespace {

constexpr char kScanMagic[8] = {'B', 'F', 'S', 'C', 'A', 'N', '\0', '\1'};

}  // namespace

void save_scan(const std::string& path, const SurfaceSamples& samples) {
    const size_t n = samples.points.size();
    if (samples.normals.size() != n || samples.weights.size() != n) {
        throw std::runtime_error("scan: point/normal/weight count mismatch");
    }
    const uint32_t nb = n == 0 ? 0 : static_cast<uint32_t>(samples.weights[0].size());
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("scan: cannot write '" + path + "'");
    os.write(kScanMagic, sizeof(kScanMagic));
    const uint64_t count = n;
    os.write(reinterpret_cast<const char*>(&count), sizeof(count));
    os.write(reinterpret_cast<const char*>(&nb), sizeof(nb));
    auto write_vec3s = [&](const std::vector<Vec3>& v) {
        for (const Vec3& p : v) {
            const double row[3] = {p.x, p.y, p.z};
            os.write(reinterpret_cast<const char*>(row), sizeof(row));
        }
    };
    write_vec3s(samples.points);
    write_vec3s(samples.normals);
    for (const auto& w : samples.weights) {
        if (w.size() != nb) throw std::runtime_error("scan: ragged weight rows");
        os.write(reinterpret_cast<const char*>(w.data()),
                 static_cast<std::streamsize>(nb * sizeof(double)));
    }
    if (!os) throw std::runtime_error("scan: write failed for '" + path + "'");
}

SurfaceSamples load_scan(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("scan: cannot open '" + path + "'");
    char magic[8];
    if (!is.read(magic, 8) || std::memcmp(magic, kScanMagic, 8) != 0) {
        throw std::runtime_error("scan '" + path + "': bad magic");
    }
    uint64_t count;
    uint32_t nb;
    if (!is.read(reinterpret_cast<char*>(&count), sizeof(count)) ||
        !is.read(reinterpret_cast<char*>(&nb), sizeof(nb))) {
        throw std::runtime_error("scan '" + path + "': truncated header");
    }
    SurfaceSamples s;
    auto read_vec3s = [&](std::vector<Vec3>& v) {
        v.resize(count);
        for (uint64_t i = 0; i < count; ++i) {
            double row[3];
            if (!is.read(reinterpret_cast<char*>(row), sizeof(row))) {
                throw std::runtime_error("scan '" + path + "': truncated data");
            }
            v[i] = {row[0], row[1], row[2]};
        }
    };
    read_vec3s(s.points);
    read_vec3s(s.normals);
    s.weights.resize(count, std::vector<double>(nb));
    for (uint64_t i = 0; i < count; ++i) {
        if (!is.read(reinterpret_cast<char*>(s.weights[i].data()),
                     static_cast<std::streamsize>(nb * sizeof(double)))) {
            throw std::runtime_error("scan '" + path + "': truncated weights");
        }
    }
    return s;
}

namespace {

nlohmann::json frame_to_json(const FrameRecord& f) {
    return {{"subject", f.subject}, {"split", f.split},   {"pose", f.pose},
            {"cameras", f.cameras}, {"images", f.images}, {"masks", f.masks},
            {"joints2d", f.joints2d}};
}

FrameRecord frame_from_json(const nlohmann::json& j) {
    FrameRecord f;
    f.subject = j.at("subject").get<int>();
    f.split = j.value("split", "train");
    f.pose = j.at("pose").get<std::string>();
    f.cameras = j.at("cameras").get<std::vector<int>>();
    f.images = j.at("images").get<std::vector<std::string>>();
    f.masks = j.at("masks").get<std::vector<std::string>>();
    f.joints2d = j.value("joints2d", std::vector<std::string>{});
    return f;
}

}  // namespace

DatasetManifest DatasetManifest::load(const std::string& root) {
    const std::string path = root + "/manifest.json";
    std::ifstream is(path);
    if (!is) throw std::runtime_error("dataset: cannot open '" + path + "'");
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("dataset '" + path + "': " + e.what());
    }
    DatasetManifest m;
    m.skeleton = j.at("skeleton").get<std::string>();
    m.rigs = j.value("rigs", std::vector<std::string>{});
    m.cameras = j.at("cameras").get<std::vector<std::string>>();
    m.image_size = {j.at("image_size").at(0).get<int>(), j.at("image_size").at(1).get<int>()};
    m.subjects = j.at("subjects").get<int>();
    for (const auto& f : j.at("frames")) m.frames.push_back(frame_from_json(f));
    for (const auto& s : j.at("scans")) {
        ScanRecord r;
        r.subject = s.at("subject").get<int>();
        r.split = s.value("split", "train");
        r.pose = s.at("pose").get<std::string>();
        r.file = s.at("file").get<std::string>();
        m.scans.push_back(r);
    }
    return m;
}

void DatasetManifest::save(const std::string& root) const {
    std::filesystem::create_directories(root);
    nlohmann::json j;
    j["skeleton"] = skeleton;
    j["rigs"] = rigs;
    j["cameras"] = cameras;
    j["image_size"] = image_size;
    j["subjects"] = subjects;
    j["frames"] = nlohmann::json::array();
    for (const auto& f : frames) j["frames"].push_back(frame_to_json(f));
    j["scans"] = nlohmann::json::array();
    for (const auto& s : scans) {
        j["scans"].push_back(
            {{"subject", s.subject}, {"split", s.split}, {"pose", s.pose}, {"file", s.file}});
    }
    std::ofstream os(root + "/manifest.json");
    if (!os) throw std::runtime_error("dataset: cannot write manifest in '" + root + "'");
    os << j.dump(1) << "\n";
}

std::vector<double> load_pose_values(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("pose: cannot open '" + path + "'");
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("pose '" + path + "': " + e.what());
    }
    return j.at("theta").get<std::vector<double>>();
}

void save_pose_values(const std::string& path, const std::vector<double>& theta) {
    nlohmann::json j;
    j["theta"] = theta;
    std::ofstream os(path);
    if (!os) throw std::runtime_error("pose: cannot write '" + path + "'");
    os << j.dump() << "\n";
}

JointDetections load_joints2d(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("joints2d: cannot open '" + path + "'");
    JointDetections out;
    double x, y, c;
    while (is >> x >> y >> c) {
        out.x.push_back(x);
        out.y.push_back(y);
        out.confidence.push_back(c);
    }
    if (out.x.empty()) throw std::runtime_error("joints2d '" + path + "': no detections");
    return out;
}

void save_joints2d(const std::string& path, const JointDetections& j) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("joints2d: cannot write '" + path + "'");
    os.precision(17);
    for (size_t i = 0; i < j.x.size(); ++i) {
        os << j.x[i] << " " << j.y[i] << " " << j.confidence[i] << "\n";
    }
}

}  // namespace bonefield

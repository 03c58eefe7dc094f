// Copyright (c) 2026 bonefield contributors
// SPDX-License-Identifier: Apache-2.0
#include "bonefield/io_mesh.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace bonefield {

namespace {

[[noreturn]] void parse_fail(const std::string& path, std::istream& is, const std::string& what) {
    const auto pos = is.tellg();
    const long long off = pos < 0 ? -1 : static_cast<long long>(pos);
    throw std::runtime_error("'" + path + "': " + what + " (byte offset " + std::to_string(off) + ")");
}

}  // namespace

void save_obj(const std::string& path, const TriMesh& mesh) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("obj: cannot write '" + path + "'");
    os.precision(9);
    const bool with_colors = mesh.colors.size() == mesh.vertices.size();
    for (size_t i = 0; i < mesh.vertices.size(); ++i) {
        const Vec3& v = mesh.vertices[i];
        os << "v " << v.x << " " << v.y << " " << v.z;
        if (with_colors) {
            const Vec3& c = mesh.colors[i];
            os << " " << c.x << " " << c.y << " " << c.z;
        }
        os << "\n";
    }
    for (const auto& t : mesh.triangles) {
        os << "f " << t[0] + 1 << " " << t[1] + 1 << " " << t[2] + 1 << "\n";
    }
    if (!os) throw std::runtime_error("obj: write failed for '" + path + "'");
}

TriMesh load_obj(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("obj: cannot open '" + path + "'");
    TriMesh mesh;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        std::string tag;
        ls >> tag;
        if (tag == "v") {
            Vec3 v, c;
            if (!(ls >> v.x >> v.y >> v.z)) {
                throw std::runtime_error("'" + path + "': malformed vertex at line " +
                                         std::to_string(lineno));
            }
            mesh.vertices.push_back(v);
            if (ls >> c.x >> c.y >> c.z) mesh.colors.push_back(c);
        } else if (tag == "f") {
            std::array<int, 3> idx{};
            for (int k = 0; k < 3; ++k) {
                std::string tok;
                if (!(ls >> tok)) {
                    throw std::runtime_error("'" + path + "': malformed face at line " +
                                             std::to_string(lineno));
                }
                // accept v, v/t, v//n, v/t/n
                idx[static_cast<size_t>(k)] = std::stoi(tok.substr(0, tok.find('/'))) - 1;
                if (idx[static_cast<size_t>(k)] < 0) {
                    throw std::runtime_error("'" + path + "': negative index at line " +
                                             std::to_string(lineno));
                }
            }
            mesh.triangles.push_back(idx);
        }
    }
    if (!mesh.colors.empty() && mesh.colors.size() != mesh.vertices.size()) {
        throw std::runtime_error("'" + path + "': inconsistent vertex colors");
    }
    for (const auto& t : mesh.triangles) {
        for (int k = 0; k < 3; ++k) {
            if (t[static_cast<size_t>(k)] >= static_cast<int>(mesh.vertices.size())) {
                throw std::runtime_error("'" + path + "': face index out of range");
            }
        }
    }
    return mesh;
}

void save_ply(const std::string& path, const PointCloud& cloud, bool binary) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("ply: cannot write '" + path + "'");
    const bool with_normals = !cloud.normals.empty();
    if (with_normals && cloud.normals.size() != cloud.points.size()) {
        throw std::runtime_error("ply: normal/point count mismatch");
    }
    os << "ply\nformat " << (binary ? "binary_little_endian" : "ascii") << " 1.0\n";
    os << "element vertex " << cloud.points.size() << "\n";
    os << "property double x\nproperty double y\nproperty double z\n";
    if (with_normals) os << "property double nx\nproperty double ny\nproperty double nz\n";
    os << "end_header\n";
    if (binary) {
        for (size_t i = 0; i < cloud.points.size(); ++i) {
            double row[6] = {cloud.points[i].x, cloud.points[i].y, cloud.points[i].z, 0, 0, 0};
            int n = 3;
            if (with_normals) {
                row[3] = cloud.normals[i].x;
                row[4] = cloud.normals[i].y;
                row[5] = cloud.normals[i].z;
                n = 6;
            }
            os.write(reinterpret_cast<const char*>(row), n * static_cast<std::streamsize>(sizeof(double)));
        }
    } else {
        os.precision(17);
        for (size_t i = 0; i < cloud.points.size(); ++i) {
            os << cloud.points[i].x << " " << cloud.points[i].y << " " << cloud.points[i].z;
            if (with_normals)
                os << " " << cloud.normals[i].x << " " << cloud.normals[i].y << " " << cloud.normals[i].z;
            os << "\n";
        }
    }
    if (!os) throw std::runtime_error("ply: write failed for '" + path + "'");
}

PointCloud load_ply(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("ply: cannot open '" + path + "'");
    std::string line;
    if (!std::getline(is, line) || line != "ply") parse_fail(path, is, "not a PLY file");
    bool binary = false;
    size_t count = 0;
    std::vector<std::string> props;
    std::vector<std::string> types;
    bool in_vertex_element = false;
    while (std::getline(is, line)) {
        std::istringstream ls(line);
        std::string tag;
        ls >> tag;
        if (tag == "format") {
            std::string fmt;
            ls >> fmt;
            if (fmt == "binary_little_endian") binary = true;
            else if (fmt == "ascii") binary = false;
            else parse_fail(path, is, "unsupported format '" + fmt + "'");
        } else if (tag == "element") {
            std::string what;
            ls >> what >> count;
            in_vertex_element = (what == "vertex");
            if (!in_vertex_element) parse_fail(path, is, "unsupported element '" + what + "'");
        } else if (tag == "property" && in_vertex_element) {
            std::string type, name;
            ls >> type >> name;
            types.push_back(type);
            props.push_back(name);
        } else if (tag == "end_header") {
            break;
        } else if (tag == "comment" || tag.empty()) {
            continue;
        }
        if (is.eof()) parse_fail(path, is, "header without end_header");
    }
    int ix = -1, iy = -1, iz = -1, inx = -1, iny = -1, inz = -1;
    for (size_t i = 0; i < props.size(); ++i) {
        if (props[i] == "x") ix = static_cast<int>(i);
        else if (props[i] == "y") iy = static_cast<int>(i);
        else if (props[i] == "z") iz = static_cast<int>(i);
        else if (props[i] == "nx") inx = static_cast<int>(i);
        else if (props[i] == "ny") iny = static_cast<int>(i);
        else if (props[i] == "nz") inz = static_cast<int>(i);
    }
    if (ix < 0 || iy < 0 || iz < 0) parse_fail(path, is, "missing x/y/z properties");
    const bool with_normals = inx >= 0 && iny >= 0 && inz >= 0;

    PointCloud cloud;
    cloud.points.reserve(count);
    if (with_normals) cloud.normals.reserve(count);
    std::vector<double> row(props.size());
    for (size_t r = 0; r < count; ++r) {
        if (binary) {
            for (size_t p = 0; p < props.size(); ++p) {
                const std::string& t = types[p];
                if (t == "double") {
                    double v;
                    if (!is.read(reinterpret_cast<char*>(&v), sizeof(v)))
                        parse_fail(path, is, "truncated vertex data");
                    row[p] = v;
                } else if (t == "float" || t == "float32") {
                    float v;
                    if (!is.read(reinterpret_cast<char*>(&v), sizeof(v)))
                        parse_fail(path, is, "truncated vertex data");
                    row[p] = v;
                } else if (t == "uchar" || t == "uint8") {
                    uint8_t v;
                    if (!is.read(reinterpret_cast<char*>(&v), sizeof(v)))
                        parse_fail(path, is, "truncated vertex data");
                    row[p] = v;
                } else {
                    parse_fail(path, is, "unsupported property type '" + t + "'");
                }
            }
        } else {
            for (size_t p = 0; p < props.size(); ++p) {
                if (!(is >> row[p])) parse_fail(path, is, "truncated vertex data");
            }
        }
        cloud.points.push_back({row[static_cast<size_t>(ix)], row[static_cast<size_t>(iy)],
                                row[static_cast<size_t>(iz)]});
        if (with_normals) {
            cloud.normals.push_back({row[static_cast<size_t>(inx)], row[static_cast<size_t>(iny)],
                                     row[static_cast<size_t>(inz)]});
        }
    }
    return cloud;
}

}  // namespace bonefield

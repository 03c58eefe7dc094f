// Copyright (c) 2026 bonefield contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "bonefield/geometry.hpp"
#include "bonefield/meshing.hpp"

namespace bonefield {

struct PointCloud {
    std::vector<Vec3> points;
    std::vector<Vec3> normals;  // optional; empty or same size as points
};

// Wavefront OBJ; per-vertex colors are written as the common
// "v x y z r g b" extension when present.
void save_obj(const std::string& path, const TriMesh& mesh);
TriMesh load_obj(const std::string& path);

// PLY point clouds, ascii or binary_little_endian. Parse errors report the
// byte offset at which reading failed.
void save_ply(const std::string& path, const PointCloud& cloud, bool binary);
PointCloud load_ply(const std::string& path);

}  // namespace bonefield

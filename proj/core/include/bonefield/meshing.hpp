// Copyright (c) 2026 bonefield contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "bonefield/geometry.hpp"

namespace bonefield {

struct TriMesh {
    std::vector<Vec3> vertices;                 // meters
    std::vector<std::array<int, 3>> triangles;  // CCW indices
    std::vector<Vec3> colors;                   // optional, per vertex
    std::vector<std::vector<double>> weights;   // optional, per vertex

    bool empty() const { return triangles.empty(); }
    double surface_area() const;
    Aabb bounds() const;
    // Drops triangles with area <= 1e-14 m^2 and unreferenced vertices.
    void remove_degenerate();
};

// Scalar field sampled at a batch of points; must return one value per point.
using ScalarFieldFn = std::function<std::vector<double>(const std::vector<Vec3>&)>;

// Marching cubes over a regular grid spanning `bounds` with `resolution`
// cells per axis. Vertices are placed by linear interpolation along cell
// edges and shared across cells, so closed level sets mesh watertight.
// An empty level set yields an empty mesh.
TriMesh marching_cubes(const ScalarFieldFn& field, const Aabb& bounds, int resolution);

}  // namespace bonefield

// Copyright (c) 2026 bonefield contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "bonefield/geometry.hpp"
#include "bonefield/io_image.hpp"
#include "bonefield/meshing.hpp"

namespace bonefield {

struct MeshDistances {
    double v2v_mm = 0.0;  // mean nearest-vertex distance
    double v2s_mm = 0.0;  // mean point-to-triangle distance
};

// Directional distances from `from` vertices to `to`. Both meshes must be
// non-empty. Accelerated by a uniform grid (vertices) and a BVH (triangles);
// tests check against brute force on small meshes.
MeshDistances mesh_distances(const TriMesh& from, const TriMesh& to);

struct EvalResult {
    MeshDistances recon_to_ref;
    MeshDistances ref_to_recon;
    double psnr_db = 0.0;
    double runtime_s = 0.0;
};

// Symmetric chamfer: mean of the two directional mean nearest-neighbor
// distances, in meters.
double chamfer_distance(const std::vector<Vec3>& a, const std::vector<Vec3>& b);

// 10*log10(1/MSE) over pixels where mask > 0.5 (all pixels when mask is
// null); identical images report the 99 dB sentinel.
double psnr_db(const Image& a, const Image& b, const Image* mask = nullptr);

// Exact point-triangle distance (test oracle and BVH leaf kernel).
double point_triangle_distance(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c);

// Nearest-neighbor queries over a fixed point set.
class PointGrid {
public:
    explicit PointGrid(const std::vector<Vec3>& points);
    // Returns the index of the nearest point and its distance.
    std::pair<int, double> nearest(const Vec3& query) const;

private:
    std::vector<Vec3> points_;
    Vec3 origin_;
    double cell_ = 1.0;
    int nx_ = 1, ny_ = 1, nz_ = 1;
    std::vector<std::vector<int>> cells_;
    int cell_index(int ix, int iy, int iz) const { return (iz * ny_ + iy) * nx_ + ix; }
};

// Nearest point-to-surface queries over a triangle set.
class TriangleBvh {
public:
    TriangleBvh(const std::vector<Vec3>& vertices, const std::vector<std::array<int, 3>>& tris);
    double distance(const Vec3& query) const;

private:
    struct Node {
        Aabb box;
        int left = -1, right = -1;
        int begin = 0, end = 0;  // leaf triangle range
    };
    int build(int begin, int end, int depth);
    const std::vector<Vec3>* verts_;
    std::vector<std::array<int, 3>> tris_;
    std::vector<Vec3> centroids_;
    std::vector<int> order_;
    std::vector<Node> nodes_;
};

}  // namespace bonefield

// Copyright (c) 2026 bonefield contributors
// SPDX-License-Identifier: Apache-2.0
#include "bonefield/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace bonefield {

double point_triangle_distance(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
    // Region classification after Ericson, "Real-Time Collision Detection".
    const Vec3 ab = b - a, ac = c - a, ap = p - a;
    const double d1 = ab.dot(ap), d2 = ac.dot(ap);
    if (d1 <= 0.0 && d2 <= 0.0) return (p - a).norm();

    const Vec3 bp = p - b;
    const double d3 = ab.dot(bp), d4 = ac.dot(bp);
    if (d3 >= 0.0 && d4 <= d3) return (p - b).norm();

    const double vc = d1 * d4 - d3 * d2;
    if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) {
        const double v = d1 / (d1 - d3);
        return (p - (a + ab * v)).norm();
    }

    const Vec3 cp = p - c;
    const double d5 = ab.dot(cp), d6 = ac.dot(cp);
    if (d6 >= 0.0 && d5 <= d6) return (p - c).norm();

    const double vb = d5 * d2 - d1 * d6;
    if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) {
        const double w = d2 / (d2 - d6);
        return (p - (a + ac * w)).norm();
    }

    const double va = d3 * d6 - d5 * d4;
    if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
        const double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return (p - (b + (c - b) * w)).norm();
    }

    const double denom = 1.0 / (va + vb + vc);
    const double v = vb * denom, w = vc * denom;
    return (p - (a + ab * v + ac * w)).norm();
}

PointGrid::PointGrid(const std::vector<Vec3>& points) : points_(points) {
    if (points_.empty()) throw std::runtime_error("PointGrid: empty point set");
    Aabb box;
    for (const Vec3& p : points_) box.expand(p);
    box.pad(1e-9);
    origin_ = box.lo;
    const Vec3 ext = box.extent();
    const double target_cells = std::cbrt(static_cast<double>(points_.size()));
    const double max_ext = std::max({ext.x, ext.y, ext.z, 1e-9});
    cell_ = max_ext / std::max(1.0, target_cells);
    nx_ = std::max(1, static_cast<int>(ext.x / cell_) + 1);
    ny_ = std::max(1, static_cast<int>(ext.y / cell_) + 1);
    nz_ = std::max(1, static_cast<int>(ext.z / cell_) + 1);
    cells_.resize(static_cast<size_t>(nx_) * ny_ * nz_);
    for (size_t i = 0; i < points_.size(); ++i) {
        const Vec3 d = points_[i] - origin_;
        const int ix = std::clamp(static_cast<int>(d.x / cell_), 0, nx_ - 1);
        const int iy = std::clamp(static_cast<int>(d.y / cell_), 0, ny_ - 1);
        const int iz = std::clamp(static_cast<int>(d.z / cell_), 0, nz_ - 1);
        cells_[static_cast<size_t>(cell_index(ix, iy, iz))].push_back(static_cast<int>(i));
    }
}

std::pair<int, double> PointGrid::nearest(const Vec3& query) const {
    const Vec3 d = query - origin_;
    const int qx = std::clamp(static_cast<int>(std::floor(d.x / cell_)), 0, nx_ - 1);
    const int qy = std::clamp(static_cast<int>(std::floor(d.y / cell_)), 0, ny_ - 1);
    const int qz = std::clamp(static_cast<int>(std::floor(d.z / cell_)), 0, nz_ - 1);
    int best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    const int max_ring = std::max({nx_, ny_, nz_});
    for (int ring = 0; ring <= max_ring; ++ring) {
        // Points in rings beyond `ring` are at least (ring-1)*cell away.
        if (best >= 0 && best_d <= (ring - 1) * cell_) break;
        for (int iz = std::max(0, qz - ring); iz <= std::min(nz_ - 1, qz + ring); ++iz) {
            for (int iy = std::max(0, qy - ring); iy <= std::min(ny_ - 1, qy + ring); ++iy) {
                for (int ix = std::max(0, qx - ring); ix <= std::min(nx_ - 1, qx + ring); ++ix) {
                    // Shell only: skip interior cells already visited.
                    if (std::max({std::abs(ix - qx), std::abs(iy - qy), std::abs(iz - qz)}) != ring) {
                        continue;
                    }
                    for (int idx : cells_[static_cast<size_t>(cell_index(ix, iy, iz))]) {
                        const double dist = (points_[static_cast<size_t>(idx)] - query).norm();
                        if (dist < best_d) {
                            best_d = dist;
                            best = idx;
                        }
                    }
                }
            }
        }
    }
    return {best, best_d};
}

TriangleBvh::TriangleBvh(const std::vector<Vec3>& vertices,
                         const std::vector<std::array<int, 3>>& tris)
    : verts_(&vertices), tris_(tris) {
    if (tris_.empty()) throw std::runtime_error("TriangleBvh: empty triangle set");
    centroids_.reserve(tris_.size());
    for (const auto& t : tris_) {
        centroids_.push_back((vertices[static_cast<size_t>(t[0])] + vertices[static_cast<size_t>(t[1])] +
                              vertices[static_cast<size_t>(t[2])]) /
                             3.0);
    }
    order_.resize(tris_.size());
    for (size_t i = 0; i < order_.size(); ++i) order_[i] = static_cast<int>(i);
    nodes_.reserve(tris_.size() * 2);
    build(0, static_cast<int>(tris_.size()), 0);
}

int TriangleBvh::build(int begin, int end, int depth) {
    const int index = static_cast<int>(nodes_.size());
    nodes_.emplace_back();
    Aabb box;
    for (int i = begin; i < end; ++i) {
        for (int k = 0; k < 3; ++k) {
            box.expand((*verts_)[static_cast<size_t>(tris_[static_cast<size_t>(order_[static_cast<size_t>(i)])][static_cast<size_t>(k)])]);
        }
    }
    nodes_[static_cast<size_t>(index)].box = box;
    if (end - begin <= 4 || depth > 40) {
        nodes_[static_cast<size_t>(index)].begin = begin;
        nodes_[static_cast<size_t>(index)].end = end;
        return index;
    }
    const Vec3 ext = box.extent();
    const int axis = ext.x >= ext.y && ext.x >= ext.z ? 0 : (ext.y >= ext.z ? 1 : 2);
    const int mid = (begin + end) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](int a, int b) {
                         return centroids_[static_cast<size_t>(a)][axis] < centroids_[static_cast<size_t>(b)][axis];
                     });
    const int left = build(begin, mid, depth + 1);
    const int right = build(mid, end, depth + 1);
    nodes_[static_cast<size_t>(index)].left = left;
    nodes_[static_cast<size_t>(index)].right = right;
    return index;
}

namespace {

double aabb_distance(const Aabb& box, const Vec3& p) {
    const double dx = std::max({box.lo.x - p.x, 0.0, p.x - box.hi.x});
    const double dy = std::max({box.lo.y - p.y, 0.0, p.y - box.hi.y});
    const double dz = std::max({box.lo.z - p.z, 0.0, p.z - box.hi.z});
    return std::sqrt(dx * dx + dy * dy + dz * dz);
}

}  // namespace

double TriangleBvh::distance(const Vec3& query) const {
    double best = std::numeric_limits<double>::infinity();
    std::vector<int> stack{0};
    stack.reserve(64);
    while (!stack.empty()) {
        const int ni = stack.back();
        stack.pop_back();
        const Node& node = nodes_[static_cast<size_t>(ni)];
        if (aabb_distance(node.box, query) >= best) continue;
        if (node.left < 0) {
            for (int i = node.begin; i < node.end; ++i) {
                const auto& t = tris_[static_cast<size_t>(order_[static_cast<size_t>(i)])];
                best = std::min(best, point_triangle_distance(query, (*verts_)[static_cast<size_t>(t[0])],
                                                              (*verts_)[static_cast<size_t>(t[1])],
                                                              (*verts_)[static_cast<size_t>(t[2])]));
            }
        } else {
            stack.push_back(node.left);
            stack.push_back(node.right);
        }
    }
    return best;
}

MeshDistances mesh_distances(const TriMesh& from, const TriMesh& to) {
    if (from.vertices.empty() || to.vertices.empty() || to.triangles.empty()) {
        throw std::runtime_error("mesh_distances: empty mesh");
    }
    PointGrid grid(to.vertices);
    TriangleBvh bvh(to.vertices, to.triangles);
    double v2v = 0.0, v2s = 0.0;
    for (const Vec3& p : from.vertices) {
        v2v += grid.nearest(p).second;
        v2s += bvh.distance(p);
    }
    const double n = static_cast<double>(from.vertices.size());
    return {1000.0 * v2v / n, 1000.0 * v2s / n};
}

double chamfer_distance(const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
    if (a.empty() || b.empty()) throw std::runtime_error("chamfer_distance: empty point set");
    PointGrid ga(a), gb(b);
    double ab = 0.0, ba = 0.0;
    for (const Vec3& p : a) ab += gb.nearest(p).second;
    for (const Vec3& p : b) ba += ga.nearest(p).second;
    return 0.5 * (ab / static_cast<double>(a.size()) + ba / static_cast<double>(b.size()));
}

double psnr_db(const Image& a, const Image& b, const Image* mask) {
    if (a.width != b.width || a.height != b.height || a.channels != b.channels) {
        throw std::runtime_error("psnr: image dimensions differ");
    }
    if (mask && (mask->width != a.width || mask->height != a.height)) {
        throw std::runtime_error("psnr: mask dimensions differ");
    }
    double se = 0.0;
    int64_t count = 0;
    for (int y = 0; y < a.height; ++y) {
        for (int x = 0; x < a.width; ++x) {
            if (mask && mask->at(x, y, 0) <= 0.5) continue;
            for (int c = 0; c < a.channels; ++c) {
                const double d = a.at(x, y, c) - b.at(x, y, c);
                se += d * d;
                ++count;
            }
        }
    }
    if (count == 0) throw std::runtime_error("psnr: empty mask");
    const double mse = se / static_cast<double>(count);
    if (mse <= 0.0) return 99.0;
    return std::min(99.0, 10.0 * std::log10(1.0 / mse));
}

}  // namespace bonefield

// Copyright (c) 2026 bonefield contributors
// SPDX-License-Identifier: Apache-2.0
#include "bonefield/meshing.hpp"

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <unordered_map>
#include <vector>

namespace bonefield {

double TriMesh::surface_area() const {
    double area = 0.0;
    for (const auto& t : triangles) {
        const Vec3& a = vertices[static_cast<size_t>(t[0])];
        const Vec3& b = vertices[static_cast<size_t>(t[1])];
        const Vec3& c = vertices[static_cast<size_t>(t[2])];
        area += 0.5 * (b - a).cross(c - a).norm();
    }
    return area;
}

Aabb TriMesh::bounds() const {
    Aabb box;
    for (const Vec3& v : vertices) box.expand(v);
    return box;
}

void TriMesh::remove_degenerate() {
    std::vector<std::array<int, 3>> kept;
    kept.reserve(triangles.size());
    for (const auto& t : triangles) {
        const Vec3& a = vertices[static_cast<size_t>(t[0])];
        const Vec3& b = vertices[static_cast<size_t>(t[1])];
        const Vec3& c = vertices[static_cast<size_t>(t[2])];
        if (0.5 * (b - a).cross(c - a).norm() > 1e-14) kept.push_back(t);
    }
    triangles.swap(kept);
    // Compact away unreferenced vertices.
    std::vector<int> remap(vertices.size(), -1);
    std::vector<Vec3> new_verts;
    std::vector<Vec3> new_colors;
    std::vector<std::vector<double>> new_weights;
    for (auto& t : triangles) {
        for (int k = 0; k < 3; ++k) {
            int& idx = t[static_cast<size_t>(k)];
            if (remap[static_cast<size_t>(idx)] < 0) {
                remap[static_cast<size_t>(idx)] = static_cast<int>(new_verts.size());
                new_verts.push_back(vertices[static_cast<size_t>(idx)]);
                if (!colors.empty()) new_colors.push_back(colors[static_cast<size_t>(idx)]);
                if (!weights.empty()) new_weights.push_back(weights[static_cast<size_t>(idx)]);
            }
            idx = remap[static_cast<size_t>(idx)];
        }
    }
    vertices.swap(new_verts);
    colors.swap(new_colors);
    weights.swap(new_weights);
}

namespace {

// Corner c sits at ((c>>0)&1, (c>>1)&1, (c>>2)&1). Twelve edges, four per axis.
constexpr std::array<std::array<int, 2>, 12> kEdges = {{{0, 1}, {2, 3}, {4, 5}, {6, 7},
                                                        {0, 2}, {1, 3}, {4, 6}, {5, 7},
                                                        {0, 4}, {1, 5}, {2, 6}, {3, 7}}};

// Faces as corner cycles (consecutive corners differ by one bit).
constexpr std::array<std::array<int, 4>, 6> kFaces = {{{0, 2, 6, 4},
                                                       {1, 5, 7, 3},
                                                       {0, 4, 5, 1},
                                                       {2, 3, 7, 6},
                                                       {0, 1, 3, 2},
                                                       {4, 6, 7, 5}}};

int edge_between(int a, int b) {
    for (int e = 0; e < 12; ++e) {
        if ((kEdges[static_cast<size_t>(e)][0] == a && kEdges[static_cast<size_t>(e)][1] == b) ||
            (kEdges[static_cast<size_t>(e)][0] == b && kEdges[static_cast<size_t>(e)][1] == a)) {
            return e;
        }
    }
    throw std::logic_error("marching cubes: corners do not share an edge");
}

Vec3 corner_pos(int c) {
    return {static_cast<double>(c & 1), static_cast<double>((c >> 1) & 1),
            static_cast<double>((c >> 2) & 1)};
}

// Triangulations indexed by the 8-bit inside mask, built once. Each case is
// derived by intersecting every face with the level set (ambiguous faces
// always keep inside corners separated, a rule both neighboring cells
// agree on, so the result is crack-free), chaining the face segments into
// closed loops and fanning each loop.
const std::array<std::vector<std::array<int, 3>>, 256>& case_table() {
    static const auto table = [] {
        std::array<std::vector<std::array<int, 3>>, 256> out;
        for (int mask = 1; mask < 255; ++mask) {
            auto inside = [&](int c) { return (mask >> c) & 1; };
            // Collect one segment per face crossing.
            std::vector<std::array<int, 2>> segments;
            for (const auto& face : kFaces) {
                std::vector<int> crossed;  // positions within the cycle
                for (int i = 0; i < 4; ++i) {
                    if (inside(face[static_cast<size_t>(i)]) != inside(face[static_cast<size_t>((i + 1) % 4)])) {
                        crossed.push_back(i);
                    }
                }
                if (crossed.empty()) continue;
                auto cycle_edge = [&](int i) {
                    return edge_between(face[static_cast<size_t>(i)], face[static_cast<size_t>((i + 1) % 4)]);
                };
                if (crossed.size() == 2) {
                    segments.push_back({cycle_edge(crossed[0]), cycle_edge(crossed[1])});
                } else {
                    // Diagonal case: pair the crossings around each inside corner.
                    for (int i = 0; i < 4; ++i) {
                        if (!inside(face[static_cast<size_t>(i)])) continue;
                        const int prev = (i + 3) % 4;
                        if (inside(face[static_cast<size_t>(prev)])) continue;  // handled from the other corner
                        segments.push_back({cycle_edge(prev), cycle_edge(i)});
                    }
                }
            }
            // Chain segments into loops; every crossed edge touches exactly
            // two segments.
            std::multimap<int, size_t> by_edge;
            for (size_t s = 0; s < segments.size(); ++s) {
                by_edge.emplace(segments[s][0], s);
                by_edge.emplace(segments[s][1], s);
            }
            std::vector<bool> used(segments.size(), false);
            for (size_t s0 = 0; s0 < segments.size(); ++s0) {
                if (used[s0]) continue;
                std::vector<int> loop;
                used[s0] = true;
                loop.push_back(segments[s0][0]);
                loop.push_back(segments[s0][1]);
                for (;;) {
                    const int tail = loop.back();
                    size_t next = SIZE_MAX;
                    auto range = by_edge.equal_range(tail);
                    for (auto it = range.first; it != range.second; ++it) {
                        if (!used[it->second]) {
                            next = it->second;
                            break;
                        }
                    }
                    if (next == SIZE_MAX) break;
                    used[next] = true;
                    const int other = segments[next][0] == tail ? segments[next][1] : segments[next][0];
                    if (other == loop.front()) break;  // closed
                    loop.push_back(other);
                }
                if (loop.size() < 3) continue;
                // Orientation from the sign pattern: outward normals follow
                // the inside -> outside direction.
                Vec3 grad{0, 0, 0};
                for (int c = 0; c < 8; ++c) {
                    const double sign = inside(c) ? -1.0 : 1.0;
                    grad += sign * (corner_pos(c) - Vec3{0.5, 0.5, 0.5});
                }
                auto midpoint = [&](int e) {
                    return (corner_pos(kEdges[static_cast<size_t>(e)][0]) +
                            corner_pos(kEdges[static_cast<size_t>(e)][1])) *
                           0.5;
                };
                Vec3 newell{0, 0, 0};
                for (size_t i = 0; i < loop.size(); ++i) {
                    const Vec3 a = midpoint(loop[i]);
                    const Vec3 b = midpoint(loop[(i + 1) % loop.size()]);
                    newell += a.cross(b);
                }
                std::vector<int> oriented = loop;
                if (grad.norm2() > 1e-12 && newell.dot(grad) < 0.0) {
                    std::reverse(oriented.begin(), oriented.end());
                }
                for (size_t i = 1; i + 1 < oriented.size(); ++i) {
                    out[static_cast<size_t>(mask)].push_back(
                        {oriented[0], oriented[i], oriented[i + 1]});
                }
            }
        }
        return out;
    }();
    return table;
}

}  // namespace

TriMesh marching_cubes(const ScalarFieldFn& field, const Aabb& bounds, int resolution) {
    if (resolution < 16) throw std::runtime_error("marching_cubes: resolution must be >= 16");
    if (!bounds.valid()) throw std::runtime_error("marching_cubes: invalid bounds");
    const int n = resolution;
    const int64_t lattice = static_cast<int64_t>(n + 1);
    const Vec3 ext = bounds.extent();
    const Vec3 step{ext.x / n, ext.y / n, ext.z / n};

    // Sample the lattice in bounded batches.
    std::vector<double> values(static_cast<size_t>(lattice * lattice * lattice));
    {
        constexpr int64_t kBatch = 65536;
        std::vector<Vec3> pts;
        pts.reserve(kBatch);
        int64_t written = 0;
        auto flush = [&]() {
            if (pts.empty()) return;
            const std::vector<double> out = field(pts);
            if (out.size() != pts.size()) {
                throw std::runtime_error("marching_cubes: field returned wrong count");
            }
            std::copy(out.begin(), out.end(), values.begin() + written);
            written += static_cast<int64_t>(out.size());
            pts.clear();
        };
        for (int64_t z = 0; z < lattice; ++z) {
            for (int64_t y = 0; y < lattice; ++y) {
                for (int64_t x = 0; x < lattice; ++x) {
                    pts.push_back({bounds.lo.x + x * step.x, bounds.lo.y + y * step.y,
                                   bounds.lo.z + z * step.z});
                    if (static_cast<int64_t>(pts.size()) == kBatch) flush();
                }
            }
        }
        flush();
    }

    auto value_at = [&](int64_t x, int64_t y, int64_t z) {
        return values[static_cast<size_t>((z * lattice + y) * lattice + x)];
    };
    auto lattice_point = [&](int64_t x, int64_t y, int64_t z) {
        return Vec3{bounds.lo.x + x * step.x, bounds.lo.y + y * step.y, bounds.lo.z + z * step.z};
    };

    TriMesh mesh;
    std::unordered_map<int64_t, int> edge_vertex;  // global edge id -> mesh vertex
    const auto& table = case_table();

    for (int64_t z = 0; z < n; ++z) {
        for (int64_t y = 0; y < n; ++y) {
            for (int64_t x = 0; x < n; ++x) {
                int mask = 0;
                std::array<double, 8> s;
                for (int c = 0; c < 8; ++c) {
                    s[static_cast<size_t>(c)] =
                        value_at(x + (c & 1), y + ((c >> 1) & 1), z + ((c >> 2) & 1));
                    if (s[static_cast<size_t>(c)] < 0.0) mask |= 1 << c;
                }
                const auto& tris = table[static_cast<size_t>(mask)];
                if (tris.empty()) continue;

                auto vertex_on_edge = [&](int e) {
                    const int c0 = kEdges[static_cast<size_t>(e)][0];
                    const int c1 = kEdges[static_cast<size_t>(e)][1];
                    const int64_t ex = x + (c0 & 1);
                    const int64_t ey = y + ((c0 >> 1) & 1);
                    const int64_t ez = z + ((c0 >> 2) & 1);
                    const int axis = e < 4 ? 0 : (e < 8 ? 1 : 2);
                    const int64_t key = (((ez * lattice) + ey) * lattice + ex) * 3 + axis;
                    auto it = edge_vertex.find(key);
                    if (it != edge_vertex.end()) return it->second;
                    const double s0 = s[static_cast<size_t>(c0)];
                    const double s1 = s[static_cast<size_t>(c1)];
                    double t = s0 / (s0 - s1);
                    if (!std::isfinite(t)) t = 0.5;
                    t = std::clamp(t, 0.0, 1.0);
                    const Vec3 p0 = lattice_point(ex, ey, ez);
                    const Vec3 p1 = lattice_point(x + (c1 & 1), y + ((c1 >> 1) & 1), z + ((c1 >> 2) & 1));
                    const int idx = static_cast<int>(mesh.vertices.size());
                    mesh.vertices.push_back(p0 + (p1 - p0) * t);
                    edge_vertex.emplace(key, idx);
                    return idx;
                };

                for (const auto& tri : tris) {
                    mesh.triangles.push_back(
                        {vertex_on_edge(tri[0]), vertex_on_edge(tri[1]), vertex_on_edge(tri[2])});
                }
            }
        }
    }
    mesh.remove_degenerate();
    return mesh;
}

}  // namespace bonefield

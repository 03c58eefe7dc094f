// Copyright (c) 2026 bonefield contributors
// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <limits>
#include <map>

#include "bonefield/meshing.hpp"
#include "bonefield/metrics.hpp"
#include "testutil.hpp"

using namespace bonefield;

namespace {

TriMesh icosphere(double radius, int subdivisions) {
    // Icosahedron refined by midpoint subdivision, projected to the sphere.
    const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
    TriMesh mesh;
    mesh.vertices = {{-1, phi, 0}, {1, phi, 0},   {-1, -phi, 0}, {1, -phi, 0},
                     {0, -1, phi}, {0, 1, phi},   {0, -1, -phi}, {0, 1, -phi},
                     {phi, 0, -1}, {phi, 0, 1},   {-phi, 0, -1}, {-phi, 0, 1}};
    for (auto& v : mesh.vertices) v = v.normalized() * radius;
    mesh.triangles = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
                      {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
                      {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
                      {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
    for (int s = 0; s < subdivisions; ++s) {
        std::map<std::pair<int, int>, int> midpoint;
        std::vector<std::array<int, 3>> next;
        auto mid = [&](int a, int b) {
            auto key = a < b ? std::make_pair(a, b) : std::make_pair(b, a);
            auto it = midpoint.find(key);
            if (it != midpoint.end()) return it->second;
            const int idx = static_cast<int>(mesh.vertices.size());
            mesh.vertices.push_back(((mesh.vertices[static_cast<size_t>(a)] +
                                      mesh.vertices[static_cast<size_t>(b)]) *
                                     0.5)
                                        .normalized() *
                                    radius);
            midpoint[key] = idx;
            return idx;
        };
        for (const auto& t : mesh.triangles) {
            const int ab = mid(t[0], t[1]), bc = mid(t[1], t[2]), ca = mid(t[2], t[0]);
            next.push_back({t[0], ab, ca});
            next.push_back({t[1], bc, ab});
            next.push_back({t[2], ca, bc});
            next.push_back({ab, bc, ca});
        }
        mesh.triangles = next;
    }
    return mesh;
}

}  // namespace

TEST_CASE("identical meshes have zero distances") {
    TriMesh m = icosphere(0.1, 1);
    MeshDistances d = mesh_distances(m, m);
    CHECK(d.v2v_mm == 0.0);
    CHECK(d.v2s_mm == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("a 1 mm translation gives exactly 1 mm V2V") {
    TriMesh a = icosphere(0.1, 1);
    TriMesh b = a;
    for (auto& v : b.vertices) v += Vec3{0.001, 0.0, 0.0};
    // Vertices correspond one-to-one, but the nearest vertex after a 1 mm
    // shift of a fine mesh could in principle be a different vertex; the
    // icosphere at this size has >1 mm vertex spacing, so the match is the
    // translated twin and the distance is exactly 1 mm.
    MeshDistances d = mesh_distances(a, b);
    CHECK(d.v2v_mm == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(d.v2s_mm <= d.v2v_mm);
}

TEST_CASE("V2S to a finer mesh is below V2V") {
    // Rotate the coarse sphere so its vertices do not coincide with the
    // subdivision's vertex set.
    TriMesh coarse = icosphere(0.1, 1);
    const double a = 0.3;
    for (auto& v : coarse.vertices) {
        v = {std::cos(a) * v.x - std::sin(a) * v.y, std::sin(a) * v.x + std::cos(a) * v.y, v.z};
    }
    TriMesh fine = icosphere(0.1, 3);
    MeshDistances d = mesh_distances(coarse, fine);
    CHECK(d.v2s_mm > 0.0);
    CHECK(d.v2s_mm < d.v2v_mm);
}

TEST_CASE("accelerated queries match brute force") {
    Rng rng(7);
    TriMesh target = icosphere(0.08, 2);
    PointGrid grid(target.vertices);
    TriangleBvh bvh(target.vertices, target.triangles);
    for (int trial = 0; trial < 200; ++trial) {
        const Vec3 q{rng.uniform(-0.15, 0.15), rng.uniform(-0.15, 0.15), rng.uniform(-0.15, 0.15)};
        double best_v = std::numeric_limits<double>::infinity();
        for (const Vec3& v : target.vertices) best_v = std::min(best_v, (v - q).norm());
        CHECK(grid.nearest(q).second == doctest::Approx(best_v).epsilon(1e-12));

        double best_t = std::numeric_limits<double>::infinity();
        for (const auto& t : target.triangles) {
            best_t = std::min(best_t, point_triangle_distance(q, target.vertices[static_cast<size_t>(t[0])],
                                                              target.vertices[static_cast<size_t>(t[1])],
                                                              target.vertices[static_cast<size_t>(t[2])]));
        }
        CHECK(bvh.distance(q) == doctest::Approx(best_t).epsilon(1e-12));
    }
}

TEST_CASE("point-triangle distance closed forms") {
    const Vec3 a{0, 0, 0}, b{1, 0, 0}, c{0, 1, 0};
    CHECK(point_triangle_distance({0.25, 0.25, 0.5}, a, b, c) == doctest::Approx(0.5));
    CHECK(point_triangle_distance({-1, 0, 0}, a, b, c) == doctest::Approx(1.0));       // vertex region
    CHECK(point_triangle_distance({0.5, -2, 0}, a, b, c) == doctest::Approx(2.0));     // edge region
    CHECK(point_triangle_distance({2, 2, 0}, a, b, c) ==
          doctest::Approx(std::sqrt(2.0) * 1.5).epsilon(1e-12));  // hypotenuse region
}

TEST_CASE("chamfer distance") {
    std::vector<Vec3> a{{0, 0, 0}, {1, 0, 0}};
    std::vector<Vec3> b{{0, 0.5, 0}, {1, 0.5, 0}};
    CHECK(chamfer_distance(a, b) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(chamfer_distance(a, a) == 0.0);
    CHECK_THROWS(chamfer_distance({}, b));
}

TEST_CASE("psnr") {
    Image a = Image::make(8, 8, 3, 0.5);
    SUBCASE("identical images cap at 99 dB") { CHECK(psnr_db(a, a) == 99.0); }
    SUBCASE("uniform 0.1 error on every channel is 20 dB") {
        Image b = a;
        for (auto& v : b.pixels) v += 0.1;
        CHECK(psnr_db(a, b) == doctest::Approx(20.0).epsilon(1e-9));
    }
    SUBCASE("matches the direct formula on random images") {
        Rng rng(11);
        Image x = Image::make(16, 16, 3);
        Image y = Image::make(16, 16, 3);
        for (auto& v : x.pixels) v = rng.uniform(0, 1);
        for (auto& v : y.pixels) v = rng.uniform(0, 1);
        double mse = 0;
        for (size_t i = 0; i < x.pixels.size(); ++i) {
            mse += (x.pixels[i] - y.pixels[i]) * (x.pixels[i] - y.pixels[i]);
        }
        mse /= static_cast<double>(x.pixels.size());
        CHECK(std::fabs(psnr_db(x, y) - 10.0 * std::log10(1.0 / mse)) < 1e-9);
    }
    SUBCASE("invariant to a channel permutation of both images") {
        Rng rng(13);
        Image x = Image::make(8, 8, 3);
        Image y = Image::make(8, 8, 3);
        for (auto& v : x.pixels) v = rng.uniform(0, 1);
        for (auto& v : y.pixels) v = rng.uniform(0, 1);
        Image xp = x, yp = y;
        for (int yy = 0; yy < 8; ++yy) {
            for (int xx = 0; xx < 8; ++xx) {
                for (int c = 0; c < 3; ++c) {
                    xp.at(xx, yy, c) = x.at(xx, yy, (c + 1) % 3);
                    yp.at(xx, yy, c) = y.at(xx, yy, (c + 1) % 3);
                }
            }
        }
        CHECK(psnr_db(x, y) == doctest::Approx(psnr_db(xp, yp)).epsilon(1e-15));
    }
    SUBCASE("masked evaluation") {
        Image b = a;
        b.at(0, 0, 0) = 1.0;  // error only at one pixel
        Image mask = Image::make(8, 8, 1, 0.0);
        mask.at(4, 4, 0) = 1.0;  // mask excludes the error
        CHECK(psnr_db(a, b, &mask) == 99.0);
        Image empty_mask = Image::make(8, 8, 1, 0.0);
        CHECK_THROWS(psnr_db(a, b, &empty_mask));
    }
    SUBCASE("dimension mismatch throws") {
        Image small = Image::make(4, 4, 3, 0.5);
        CHECK_THROWS(psnr_db(a, small));
    }
}

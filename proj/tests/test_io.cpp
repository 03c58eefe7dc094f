// Copyright (c) 2026 bonefield contributors
// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "bonefield/checkpoint.hpp"
#include "bonefield/dataset.hpp"
#include "bonefield/io_image.hpp"
#include "bonefield/io_mesh.hpp"
#include "testutil.hpp"

using namespace bonefield;

TEST_CASE("checkpoint round trips are bit exact") {
    Rng rng(3);
    ParamStore store;
    store.add("a/w", bftest::random_tensor({7, 5}, rng));
    store.add("a/b", bftest::random_tensor({1, 5}, rng));
    store.add("scalar", Tensor::scalar(-0.125));
    store.save("/tmp/bf_io.ckpt");
    ParamStore loaded = ParamStore::load("/tmp/bf_io.ckpt");
    REQUIRE(loaded.size() == store.size());
    for (size_t i = 0; i < store.entries().size(); ++i) {
        CHECK(loaded.entries()[i].first == store.entries()[i].first);
        CHECK(loaded.entries()[i].second.shape() == store.entries()[i].second.shape());
        CHECK(loaded.entries()[i].second.data() == store.entries()[i].second.data());
    }

    // Saving twice produces identical bytes.
    store.save("/tmp/bf_io2.ckpt");
    std::ifstream a("/tmp/bf_io.ckpt", std::ios::binary), b("/tmp/bf_io2.ckpt", std::ios::binary);
    std::vector<char> va{std::istreambuf_iterator<char>(a), std::istreambuf_iterator<char>()};
    std::vector<char> vb{std::istreambuf_iterator<char>(b), std::istreambuf_iterator<char>()};
    CHECK(va == vb);

    CHECK_THROWS(store.add("a/w", Tensor::scalar(0.0)));  // duplicate name
    CHECK_THROWS(loaded.get("missing"));
}

TEST_CASE("truncated checkpoint reports an error") {
    ParamStore store;
    store.add("w", Tensor::full({64}, 1.0));
    store.save("/tmp/bf_trunc.ckpt");
    // Chop the file.
    {
        std::ifstream in("/tmp/bf_trunc.ckpt", std::ios::binary);
        std::vector<char> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
        bytes.resize(bytes.size() / 2);
        std::ofstream out("/tmp/bf_trunc.ckpt", std::ios::binary | std::ios::trunc);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    }
    CHECK_THROWS_WITH_AS(ParamStore::load("/tmp/bf_trunc.ckpt"),
                         doctest::Contains("truncated"), std::runtime_error);
}

TEST_CASE("obj round trip keeps vertices within text precision") {
    TriMesh mesh;
    Rng rng(5);
    for (int i = 0; i < 20; ++i) {
        mesh.vertices.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)});
        mesh.colors.push_back({rng.uniform(0, 1), rng.uniform(0, 1), rng.uniform(0, 1)});
    }
    for (int i = 0; i + 2 < 20; i += 3) mesh.triangles.push_back({i, i + 1, i + 2});
    save_obj("/tmp/bf_mesh.obj", mesh);
    TriMesh loaded = load_obj("/tmp/bf_mesh.obj");
    REQUIRE(loaded.vertices.size() == mesh.vertices.size());
    REQUIRE(loaded.triangles.size() == mesh.triangles.size());
    for (size_t i = 0; i < mesh.vertices.size(); ++i) {
        CHECK((loaded.vertices[i] - mesh.vertices[i]).norm() < 1e-6);
        CHECK((loaded.colors[i] - mesh.colors[i]).norm() < 1e-6);
    }
    CHECK(loaded.triangles == mesh.triangles);
}

TEST_CASE("ply round trips in both formats") {
    PointCloud cloud;
    Rng rng(7);
    for (int i = 0; i < 50; ++i) {
        cloud.points.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)});
        Vec3 n{rng.normal(), rng.normal(), rng.normal()};
        cloud.normals.push_back(n.normalized());
    }
    for (bool binary : {false, true}) {
        const std::string path = binary ? "/tmp/bf_cloud_b.ply" : "/tmp/bf_cloud_a.ply";
        save_ply(path, cloud, binary);
        PointCloud loaded = load_ply(path);
        REQUIRE(loaded.points.size() == cloud.points.size());
        REQUIRE(loaded.normals.size() == cloud.normals.size());
        for (size_t i = 0; i < cloud.points.size(); ++i) {
            // double properties round trip exactly in binary; ascii uses 17
            // significant digits which is also exact.
            CHECK((loaded.points[i] - cloud.points[i]).norm() == 0.0);
            CHECK((loaded.normals[i] - cloud.normals[i]).norm() == 0.0);
        }
    }
}

TEST_CASE("truncated ply reports the byte offset") {
    PointCloud cloud;
    for (int i = 0; i < 10; ++i) cloud.points.push_back({1.0 * i, 0, 0});
    save_ply("/tmp/bf_trunc.ply", cloud, true);
    {
        std::ifstream in("/tmp/bf_trunc.ply", std::ios::binary);
        std::vector<char> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
        bytes.resize(bytes.size() - 13);
        std::ofstream out("/tmp/bf_trunc.ply", std::ios::binary | std::ios::trunc);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    }
    try {
        load_ply("/tmp/bf_trunc.ply");
        FAIL("expected a parse error");
    } catch (const std::runtime_error& e) {
        const std::string msg = e.what();
        CHECK(msg.find("byte offset") != std::string::npos);
        CHECK(msg.find("truncated") != std::string::npos);
    }
}

TEST_CASE("ppm/pgm quantized round trip") {
    Image img = Image::make(9, 7, 3);
    Rng rng(11);
    for (auto& v : img.pixels) v = rng.uniform(0, 1);
    save_ppm("/tmp/bf_img.ppm", img);
    Image loaded = load_ppm("/tmp/bf_img.ppm");
    REQUIRE(loaded.width == 9);
    REQUIRE(loaded.height == 7);
    for (size_t i = 0; i < img.pixels.size(); ++i) {
        CHECK(std::fabs(loaded.pixels[i] - img.pixels[i]) <= 0.5 / 255.0 + 1e-12);
    }
    // A quantized image round trips exactly.
    save_ppm("/tmp/bf_img2.ppm", loaded);
    Image again = load_ppm("/tmp/bf_img2.ppm");
    CHECK(again.pixels == loaded.pixels);

    Image mask = Image::make(5, 4, 1);
    mask.at(2, 1, 0) = 1.0;
    save_pgm("/tmp/bf_mask.pgm", mask);
    CHECK(load_pgm("/tmp/bf_mask.pgm").pixels == mask.pixels);
}

TEST_CASE("pfm float32 dumps round trip bit exactly") {
    Image img = Image::make(6, 5, 3);
    Rng rng(13);
    for (auto& v : img.pixels) v = static_cast<float>(rng.uniform(-2, 2));  // representable
    save_pfm("/tmp/bf_img.pfm", img);
    Image loaded = load_pfm("/tmp/bf_img.pfm");
    CHECK(loaded.pixels == img.pixels);
}

TEST_CASE("scan container round trips") {
    SurfaceSamples s;
    Rng rng(17);
    for (int i = 0; i < 30; ++i) {
        s.points.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)});
        Vec3 n{rng.normal(), rng.normal(), rng.normal()};
        s.normals.push_back(n.normalized());
        std::vector<double> w(10);
        double total = 0;
        for (auto& v : w) {
            v = rng.uniform(0, 1);
            total += v;
        }
        for (auto& v : w) v /= total;
        s.weights.push_back(w);
    }
    save_scan("/tmp/bf_scan.bin", s);
    SurfaceSamples loaded = load_scan("/tmp/bf_scan.bin");
    REQUIRE(loaded.points.size() == s.points.size());
    for (size_t i = 0; i < s.points.size(); ++i) {
        CHECK((loaded.points[i] - s.points[i]).norm() == 0.0);
        CHECK((loaded.normals[i] - s.normals[i]).norm() == 0.0);
        CHECK(loaded.weights[i] == s.weights[i]);
    }
}

TEST_CASE("joint detections io") {
    JointDetections j;
    for (int i = 0; i < 16; ++i) {
        j.x.push_back(10.5 + i);
        j.y.push_back(20.25 - i);
        j.confidence.push_back(1.0);
    }
    save_joints2d("/tmp/bf_joints.txt", j);
    JointDetections loaded = load_joints2d("/tmp/bf_joints.txt");
    CHECK(loaded.x == j.x);
    CHECK(loaded.y == j.y);
    CHECK(loaded.confidence == j.confidence);
}

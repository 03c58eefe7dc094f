// Copyright (c) 2026 bonefield contributors
// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "bonefield/rendering.hpp"
#include "testutil.hpp"

using namespace bonefield;

namespace {

Camera test_camera() {
    Camera cam;
    cam.fx = cam.fy = 100.0;
    cam.cx = 32.0;
    cam.cy = 32.0;
    cam.width = cam.height = 64;
    return cam;  // identity extrinsics: camera at origin looking along +z
}

// Renders a single straight ray [t_n, t_f] against a given sigma profile.
struct ProfileResult {
    double opacity;
    Vec3 rgb;
};

ProfileResult render_profile(const std::function<double(double)>& sigma_of_t, const Vec3& color,
                             double t_n, double t_f, int samples, Rng& rng) {
    RayBundle bundle;
    bundle.origins = {{0, 0, 0}};
    bundle.dirs = {{0, 0, 1}};
    bundle.t_near = {t_n};
    bundle.t_far = {t_f};
    bundle.pixels = {{0, 0}};
    bundle.depths.resize(1);
    populate_depths(bundle, samples, rng);

    DensityColorFn field = [&](const Tensor& pts, const Tensor&) {
        std::vector<double> s(static_cast<size_t>(pts.shape()[0]));
        std::vector<double> c(static_cast<size_t>(pts.shape()[0]) * 3);
        for (int64_t i = 0; i < pts.shape()[0]; ++i) {
            s[static_cast<size_t>(i)] = sigma_of_t(pts.at(i, 2));
            c[static_cast<size_t>(i) * 3] = color.x;
            c[static_cast<size_t>(i) * 3 + 1] = color.y;
            c[static_cast<size_t>(i) * 3 + 2] = color.z;
        }
        return std::make_pair(Tensor::from_data({pts.shape()[0], 1}, std::move(s)),
                              Tensor::from_data({pts.shape()[0], 3}, std::move(c)));
    };
    RenderResult res = render_rays(field, bundle, {1.0, 1.0, 1.0});
    REQUIRE(res.ray_indices.size() == 1);
    return {res.opacity.at(0), {res.rgb.at(0, 0), res.rgb.at(0, 1), res.rgb.at(0, 2)}};
}

}  // namespace

TEST_CASE("laplace density closed forms") {
    const double alpha = 80.0, beta = 0.012;
    CHECK(laplace_density(0.0, alpha, beta) == doctest::Approx(alpha / 2).epsilon(1e-12));
    CHECK(laplace_density(10.0 * beta, alpha, beta) < 1e-4 * alpha);
    CHECK(laplace_density(-beta, alpha, beta) ==
          doctest::Approx(alpha * (1.0 - 0.5 * std::exp(-1.0))).epsilon(1e-12));

    // The tensor path agrees with the scalar path and is differentiable.
    Tensor s = Tensor::param({5, 1}, {-0.03, -0.012, 0.0, 0.012, 0.03});
    Tensor sigma = laplace_density(s, Tensor::scalar(alpha), Tensor::scalar(beta));
    for (int i = 0; i < 5; ++i) {
        CHECK(sigma.at(i) == doctest::Approx(laplace_density(s.at(i), alpha, beta)).epsilon(1e-12));
    }
    backward(sum(sigma));
    for (int i = 0; i < 5; ++i) {
        if (s.at(i) == 0.0) continue;  // kink of the CDF
        auto fd = bftest::finite_difference(
            [&](const std::vector<double>& v) { return laplace_density(v[0], alpha, beta); },
            {s.at(i)}, 1e-6);
        CHECK(s.grad()[static_cast<size_t>(i)] == doctest::Approx(fd[0]).epsilon(1e-4));
    }
}

TEST_CASE("zero density renders pure background") {
    Rng rng(3);
    auto res = render_profile([](double) { return 0.0; }, {0.2, 0.4, 0.6}, 0.5, 2.5, 32, rng);
    CHECK(res.opacity == doctest::Approx(0.0));
    CHECK(res.rgb.x == doctest::Approx(1.0));
    CHECK(res.rgb.y == doctest::Approx(1.0));
    CHECK(res.rgb.z == doctest::Approx(1.0));
}

TEST_CASE("constant sigma matches the closed-form integral") {
    Rng rng(5);
    const double sigma = 2.0, t_n = 0.5, t_f = 2.0;  // sigma * L = 3
    const Vec3 color{0.3, 0.5, 0.7};
    const double expect_opacity = 1.0 - std::exp(-sigma * (t_f - t_n));
    double err_sum = 0;
    const int trials = 64;
    for (int i = 0; i < trials; ++i) {
        auto res = render_profile([&](double) { return sigma; }, color, t_n, t_f, 128, rng);
        err_sum += std::fabs(res.opacity - expect_opacity) / expect_opacity;
        const double expect_r = color.x * expect_opacity + 1.0 * (1 - expect_opacity);
        CHECK(std::fabs(res.rgb.x - expect_r) / expect_r < 5e-3);
    }
    CHECK(err_sum / trials < 1e-3);
}

TEST_CASE("piecewise-constant sigma matches the per-segment closed form") {
    Rng rng(7);
    const double t_n = 0.5, t_mid = 1.3, t_f = 2.0;
    const double s1 = 3.0, s2 = 0.8;
    // T after both segments: exp(-s1*(mid-n)) * exp(-s2*(f-mid))
    const double expect_opacity = 1.0 - std::exp(-s1 * (t_mid - t_n) - s2 * (t_f - t_mid));
    double err_sum = 0;
    const int trials = 64;
    for (int i = 0; i < trials; ++i) {
        auto res = render_profile([&](double t) { return t < t_mid ? s1 : s2; }, {0.5, 0.5, 0.5},
                                  t_n, t_f, 128, rng);
        err_sum += std::fabs(res.opacity - expect_opacity) / expect_opacity;
    }
    CHECK(err_sum / trials < 1e-3);
}

TEST_CASE("halving the sample spacing shrinks quadrature error") {
    Rng rng(11);
    const double sigma = 2.0, t_n = 0.5, t_f = 2.0;
    const double expect = 1.0 - std::exp(-sigma * (t_f - t_n));
    auto mean_err = [&](int samples) {
        double e = 0;
        for (int i = 0; i < 128; ++i) {
            auto res = render_profile([&](double) { return sigma; }, {0.5, 0.5, 0.5}, t_n, t_f,
                                      samples, rng);
            e += std::fabs(res.opacity - expect);
        }
        return e / 128;
    };
    const double e64 = mean_err(64);
    const double e128 = mean_err(128);
    CHECK(e64 / e128 >= 1.5);
}

TEST_CASE("energy conservation and monotone transmittance") {
    Rng rng(13);
    // Random nonnegative sigma*delta rows.
    std::vector<double> sd_v(4 * 16);
    for (auto& v : sd_v) v = rng.uniform(0.0, 0.4);
    Tensor sd = Tensor::from_data({4, 16}, sd_v);
    QuadratureTerms q = volume_weights(sd);
    for (int r = 0; r < 4; ++r) {
        double total_sd = 0;
        for (int i = 0; i < 16; ++i) total_sd += sd.at(r, i);
        const double residual = std::exp(-total_sd);
        double opacity = 0;
        double prev_t = 1.0 + 1e-15;
        for (int i = 0; i < 16; ++i) {
            const double t = q.transmittance.at(r, i);
            CHECK(t <= prev_t);  // non-increasing
            prev_t = t;
            opacity += q.weights.at(r, i);
        }
        CHECK(opacity >= 0.0);
        CHECK(opacity <= 1.0);
        CHECK(opacity + residual == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("ray generation") {
    Camera cam = test_camera();
    Aabb box;
    box.expand({-1, -1, 1});
    box.expand({1, 1, 3});

    SUBCASE("principal point looks along the optical axis") {
        // Pixel center (31.5,31.5) offsets half a pixel from cx; use the
        // exact principal point via unproject.
        const Vec3 d = cam.unproject_dir(32.0, 32.0);
        CHECK(d.x == doctest::Approx(0.0).epsilon(1e-15));
        CHECK(d.y == doctest::Approx(0.0).epsilon(1e-15));
        CHECK(d.z == doctest::Approx(1.0).epsilon(1e-15));
    }
    SUBCASE("unproject then project round trips") {
        Rng rng(17);
        for (int i = 0; i < 50; ++i) {
            const double px = rng.uniform(0, 64), py = rng.uniform(0, 64);
            const Vec3 dir = cam.unproject_dir(px, py);
            const auto [u, v] = cam.project(dir * rng.uniform(0.5, 5.0));
            CHECK(std::fabs(u - px) < 1e-9);
            CHECK(std::fabs(v - py) < 1e-9);
        }
    }
    SUBCASE("stratified depths place one sample per stratum") {
        RayBundle b = generate_rays(cam, {{32, 32}}, box);
        REQUIRE(b.hits(0));
        Rng rng(19);
        populate_depths(b, 16, rng);
        const double h = (b.t_far[0] - b.t_near[0]) / 16;
        for (int i = 0; i < 16; ++i) {
            CHECK(b.depths[0][static_cast<size_t>(i)] >= b.t_near[0] + i * h);
            CHECK(b.depths[0][static_cast<size_t>(i)] < b.t_near[0] + (i + 1) * h);
        }
    }
    SUBCASE("out-of-bounds pixels throw") {
        CHECK_THROWS(generate_rays(cam, {{64, 0}}, box));
        CHECK_THROWS(generate_rays(cam, {{0, -1}}, box));
    }
    SUBCASE("rays that miss the box are marked") {
        Aabb tight;
        tight.expand({-0.05, -0.05, 1.95});
        tight.expand({0.05, 0.05, 2.05});
        RayBundle b = generate_rays(cam, {{0, 0}, {32, 32}}, tight);
        CHECK_FALSE(b.hits(0));  // extreme corner ray passes wide of the box
        CHECK(b.hits(1));
    }
}

TEST_CASE("projection") {
    Camera cam = test_camera();
    SUBCASE("optical axis point lands on the principal point") {
        const auto [u, v] = cam.project({0, 0, 1.0});
        CHECK(u == doctest::Approx(32.0));
        CHECK(v == doctest::Approx(32.0));
    }
    SUBCASE("doubling fx doubles the x offset") {
        const auto [u1, v1] = cam.project({0.1, 0.05, 1.0});
        Camera cam2 = cam;
        cam2.fx *= 2.0;
        const auto [u2, v2] = cam2.project({0.1, 0.05, 1.0});
        CHECK(u2 - cam.cx == doctest::Approx(2.0 * (u1 - cam.cx)).epsilon(1e-12));
        CHECK(v2 == doctest::Approx(v1));
    }
    SUBCASE("matches an independent matrix pipeline") {
        Camera cam3 = test_camera();
        // Rotate 30 degrees about y and shift.
        const double a = 0.5235987755982988;
        cam3.world_to_cam.rotation = {std::cos(a), 0, std::sin(a), 0, 1, 0, -std::sin(a), 0, std::cos(a)};
        cam3.world_to_cam.translation = {0.1, -0.2, 0.3};
        Rng rng(23);
        for (int i = 0; i < 20; ++i) {
            const Vec3 p{rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), rng.uniform(0.5, 2.0)};
            // Oracle: full 3x4 projection matrix applied to homogeneous p.
            const auto& r = cam3.world_to_cam.rotation;
            const Vec3 t = cam3.world_to_cam.translation;
            const double K[9] = {cam3.fx, 0, cam3.cx, 0, cam3.fy, cam3.cy, 0, 0, 1};
            double P[12];
            for (int row = 0; row < 3; ++row) {
                for (int col = 0; col < 3; ++col) {
                    P[row * 4 + col] = K[row * 3] * r[static_cast<size_t>(col)] +
                                       K[row * 3 + 1] * r[static_cast<size_t>(3 + col)] +
                                       K[row * 3 + 2] * r[static_cast<size_t>(6 + col)];
                }
                P[row * 4 + 3] = K[row * 3] * t.x + K[row * 3 + 1] * t.y + K[row * 3 + 2] * t.z;
            }
            const double w = P[8] * p.x + P[9] * p.y + P[10] * p.z + P[11];
            if (w <= 1e-9) continue;
            const double u_ref = (P[0] * p.x + P[1] * p.y + P[2] * p.z + P[3]) / w;
            const double v_ref = (P[4] * p.x + P[5] * p.y + P[6] * p.z + P[7]) / w;
            const auto [u, v] = cam3.project(p);
            CHECK(std::fabs(u - u_ref) < 1e-9);
            CHECK(std::fabs(v - v_ref) < 1e-9);
        }
    }
    SUBCASE("points behind the camera throw") {
        CHECK_THROWS(cam.project({0, 0, -1.0}));
        CHECK_THROWS(cam.project({0, 0, 0.0}));
    }
    SUBCASE("differentiable projection masks invalid rows") {
        Tensor pts = Tensor::from_data({2, 3}, {0, 0, 1.0, 0, 0, -1.0});
        std::vector<bool> valid;
        Tensor uv = project_points(cam, pts, &valid);
        CHECK(valid[0]);
        CHECK_FALSE(valid[1]);
        CHECK(uv.at(0, 0) == doctest::Approx(32.0));
        CHECK(uv.at(1, 0) == 0.0);
        CHECK(uv.at(1, 1) == 0.0);
    }
}

TEST_CASE("calibration with unit gain and zero bias is bitwise identity") {
    Rng rng(29);
    Tensor rgb = bftest::random_tensor({10, 3}, rng, 0.0, 1.0);
    Tensor gain = Tensor::from_data({1, 3}, {1.0, 1.0, 1.0});
    Tensor bias = Tensor::from_data({1, 3}, {0.0, 0.0, 0.0});
    Tensor out = apply_calibration(rgb, gain, bias);
    CHECK(out.data() == rgb.data());
}

TEST_CASE("refined depths stay sorted and inside the ray interval") {
    Camera cam = test_camera();
    Aabb box;
    box.expand({-1, -1, 1});
    box.expand({1, 1, 3});
    RayBundle b = generate_rays(cam, {{32, 32}, {40, 28}}, box);
    Rng rng(31);
    populate_depths(b, 12, rng);
    // Density bump near t = 2.
    SigmaEvalFn sig = [](const std::vector<Vec3>& pts) {
        std::vector<double> out(pts.size());
        for (size_t i = 0; i < pts.size(); ++i) {
            out[i] = std::exp(-50.0 * (pts[i].z - 2.0) * (pts[i].z - 2.0));
        }
        return out;
    };
    refine_depths(b, sig, 8, rng);
    for (size_t r = 0; r < b.size(); ++r) {
        REQUIRE(b.depths[r].size() == 20);
        for (size_t i = 1; i < b.depths[r].size(); ++i) {
            CHECK(b.depths[r][i] >= b.depths[r][i - 1]);
        }
        CHECK(b.depths[r].front() >= b.t_near[r]);
        CHECK(b.depths[r].back() <= b.t_far[r]);
    }
}

TEST_CASE("camera io round trip") {
    Camera cam = test_camera();
    cam.gain = {1.1, 0.9, 1.0};
    cam.bias = {0.01, -0.02, 0.0};
    cam.save("/tmp/bf_cam.json");
    Camera loaded = Camera::load("/tmp/bf_cam.json");
    CHECK(loaded.fx == cam.fx);
    CHECK(loaded.cx == cam.cx);
    CHECK(loaded.width == cam.width);
    CHECK((loaded.gain - cam.gain).norm() == 0.0);
    CHECK((loaded.world_to_cam.translation - cam.world_to_cam.translation).norm() == 0.0);
}

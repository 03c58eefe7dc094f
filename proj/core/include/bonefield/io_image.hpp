// Copyright (c) 2026 bonefield contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

namespace bonefield {

// Interleaved row-major image with values in [0,1].
struct Image {
    int width = 0;
    int height = 0;
    int channels = 0;  // 1 or 3
    std::vector<double> pixels;

    static Image make(int w, int h, int c, double fill = 0.0);
    double& at(int x, int y, int c);
    double at(int x, int y, int c) const;
    bool empty() const { return pixels.empty(); }
};

// 8-bit binary PPM (P6, channels=3) and PGM (P5, channels=1).
void save_ppm(const std::string& path, const Image& img);
Image load_ppm(const std::string& path);
void save_pgm(const std::string& path, const Image& img);
Image load_pgm(const std::string& path);

// Little-endian float32 PFM ("PF" color / "Pf" gray), used for exact dumps.
void save_pfm(const std::string& path, const Image& img);
Image load_pfm(const std::string& path);

// Dispatches on extension (.ppm/.pgm/.pfm).
void save_image(const std::string& path, const Image& img);
Image load_image(const std::string& path);

}  // namespace bonefield

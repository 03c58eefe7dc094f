// Copyright (c) 2026 bonefield contributors
// SPDX-License-Identifier: Apache-2.0
#include "bonefield/io_image.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace bonefield {

Image Image::make(int w, int h, int c, double fill) {
    Image img;
    img.width = w;
    img.height = h;
    img.channels = c;
    img.pixels.assign(static_cast<size_t>(w) * h * c, fill);
    return img;
}

double& Image::at(int x, int y, int c) {
    return pixels[(static_cast<size_t>(y) * width + x) * channels + c];
}

double Image::at(int x, int y, int c) const {
    return pixels[(static_cast<size_t>(y) * width + x) * channels + c];
}

namespace {

uint8_t quantize(double v) {
    const double q = std::round(std::clamp(v, 0.0, 1.0) * 255.0);
    return static_cast<uint8_t>(q);
}

void save_pnm(const std::string& path, const Image& img, int channels, const char* magic) {
    if (img.channels != channels) {
        throw std::runtime_error("image '" + path + "': expected " + std::to_string(channels) +
                                 " channels, have " + std::to_string(img.channels));
    }
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("image: cannot write '" + path + "'");
    os << magic << "\n" << img.width << " " << img.height << "\n255\n";
    std::vector<uint8_t> row(static_cast<size_t>(img.width) * channels);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < channels; ++c) row[static_cast<size_t>(x) * channels + c] = quantize(img.at(x, y, c));
        os.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
    }
    if (!os) throw std::runtime_error("image: write failed for '" + path + "'");
}

int read_pnm_int(std::istream& is, const std::string& path) {
    // Skips whitespace and '#' comments.
    for (;;) {
        int ch = is.peek();
        if (ch == '#') {
            std::string line;
            std::getline(is, line);
        } else if (std::isspace(ch)) {
            is.get();
        } else {
            break;
        }
    }
    int v;
    if (!(is >> v)) throw std::runtime_error("image '" + path + "': malformed header");
    return v;
}

Image load_pnm(const std::string& path, int channels, const char* magic) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("image: cannot open '" + path + "'");
    char m[2];
    if (!is.read(m, 2) || m[0] != magic[0] || m[1] != magic[1]) {
        throw std::runtime_error("image '" + path + "': bad magic");
    }
    const int w = read_pnm_int(is, path);
    const int h = read_pnm_int(is, path);
    const int maxval = read_pnm_int(is, path);
    if (maxval != 255) throw std::runtime_error("image '" + path + "': only maxval 255 supported");
    is.get();  // single whitespace after header
    Image img = Image::make(w, h, channels);
    std::vector<uint8_t> raw(static_cast<size_t>(w) * h * channels);
    if (!is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()))) {
        throw std::runtime_error("image '" + path + "': truncated pixel data");
    }
    for (size_t i = 0; i < raw.size(); ++i) img.pixels[i] = raw[i] / 255.0;
    return img;
}

}  // namespace

void save_ppm(const std::string& path, const Image& img) { save_pnm(path, img, 3, "P6"); }
Image load_ppm(const std::string& path) { return load_pnm(path, 3, "P6"); }
void save_pgm(const std::string& path, const Image& img) { save_pnm(path, img, 1, "P5"); }
Image load_pgm(const std::string& path) { return load_pnm(path, 1, "P5"); }

void save_pfm(const std::string& path, const Image& img) {
    if (img.channels != 1 && img.channels != 3) {
        throw std::runtime_error("pfm: unsupported channel count");
    }
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("image: cannot write '" + path + "'");
    os << (img.channels == 3 ? "PF" : "Pf") << "\n" << img.width << " " << img.height << "\n-1.0\n";
    // PFM stores rows bottom-to-top.
    std::vector<float> row(static_cast<size_t>(img.width) * img.channels);
    for (int y = img.height - 1; y >= 0; --y) {
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < img.channels; ++c)
                row[(static_cast<size_t>(x)) * img.channels + c] = static_cast<float>(img.at(x, y, c));
        os.write(reinterpret_cast<const char*>(row.data()),
                 static_cast<std::streamsize>(row.size() * sizeof(float)));
    }
    if (!os) throw std::runtime_error("image: write failed for '" + path + "'");
}

Image load_pfm(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("image: cannot open '" + path + "'");
    std::string magic;
    is >> magic;
    int channels;
    if (magic == "PF") channels = 3;
    else if (magic == "Pf") channels = 1;
    else throw std::runtime_error("image '" + path + "': bad PFM magic");
    int w, h;
    double scale;
    if (!(is >> w >> h >> scale)) throw std::runtime_error("image '" + path + "': malformed PFM header");
    if (scale >= 0.0) throw std::runtime_error("image '" + path + "': big-endian PFM unsupported");
    is.get();
    Image img = Image::make(w, h, channels);
    std::vector<float> row(static_cast<size_t>(w) * channels);
    for (int y = h - 1; y >= 0; --y) {
        if (!is.read(reinterpret_cast<char*>(row.data()),
                     static_cast<std::streamsize>(row.size() * sizeof(float)))) {
            throw std::runtime_error("image '" + path + "': truncated PFM data");
        }
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < channels; ++c) img.at(x, y, c) = row[static_cast<size_t>(x) * channels + c];
    }
    return img;
}

namespace {

bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

void save_image(const std::string& path, const Image& img) {
    if (ends_with(path, ".ppm")) save_ppm(path, img);
    else if (ends_with(path, ".pgm")) save_pgm(path, img);
    else if (ends_with(path, ".pfm")) save_pfm(path, img);
    else throw std::runtime_error("image: unsupported extension in '" + path + "'");
}

Image load_image(const std::string& path) {
    if (ends_with(path, ".ppm")) return load_ppm(path);
    if (ends_with(path, ".pgm")) return load_pgm(path);
    if (ends_with(path, ".pfm")) return load_pfm(path);
    throw std::runtime_error("image: unsupported extension in '" + path + "'");
}

}  // namespace bonefield

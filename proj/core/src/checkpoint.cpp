// Copyright (c) 2026 bonefield contributors
// SPDX-License-Identifier: Apache-2.0
#include "bonefield/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace bonefield {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'B', 'F', 'C', 'K', 'P', 'T', '\0', '\1'};

template <class T>
void write_pod(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::istream& is, const std::string& path) {
    T v{};
    if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) {
        throw std::runtime_error("checkpoint '" + path + "': truncated file");
    }
    return v;
}

}  // namespace

void ParamStore::add(const std::string& name, Tensor t) {
    if (contains(name)) throw std::runtime_error("ParamStore: duplicate name '" + name + "'");
    entries_.emplace_back(name, std::move(t));
}

bool ParamStore::contains(const std::string& name) const {
    for (const auto& e : entries_)
        if (e.first == name) return true;
    return false;
}

const Tensor& ParamStore::get(const std::string& name) const {
    for (const auto& e : entries_)
        if (e.first == name) return e.second;
    throw std::runtime_error("ParamStore: missing parameter '" + name + "'");
}

Tensor& ParamStore::get(const std::string& name) {
    for (auto& e : entries_)
        if (e.first == name) return e.second;
    throw std::runtime_error("ParamStore: missing parameter '" + name + "'");
}

void ParamStore::save(const std::string& path) const {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("checkpoint: cannot open '" + path + "' for writing");
    os.write(kMagic, sizeof(kMagic));
    write_pod<uint64_t>(os, entries_.size());
    for (const auto& [name, t] : entries_) {
        write_pod<uint32_t>(os, static_cast<uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_pod<uint32_t>(os, static_cast<uint32_t>(t.shape().size()));
        for (int64_t d : t.shape()) write_pod<int64_t>(os, d);
        os.write(reinterpret_cast<const char*>(t.data().data()),
                 static_cast<std::streamsize>(t.data().size() * sizeof(double)));
    }
    if (!os) throw std::runtime_error("checkpoint: write failed for '" + path + "'");
}

ParamStore ParamStore::load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint: cannot open '" + path + "'");
    char magic[8];
    if (!is.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) {
        throw std::runtime_error("checkpoint '" + path + "': bad magic");
    }
    const uint64_t count = read_pod<uint64_t>(is, path);
    ParamStore store;
    for (uint64_t i = 0; i < count; ++i) {
        const uint32_t name_len = read_pod<uint32_t>(is, path);
        std::string name(name_len, '\0');
        if (!is.read(name.data(), name_len)) {
            throw std::runtime_error("checkpoint '" + path + "': truncated name");
        }
        const uint32_t rank = read_pod<uint32_t>(is, path);
        Shape shape(rank);
        for (uint32_t d = 0; d < rank; ++d) shape[d] = read_pod<int64_t>(is, path);
        const int64_t n = shape_numel(shape);
        std::vector<double> data(static_cast<size_t>(n));
        if (!is.read(reinterpret_cast<char*>(data.data()),
                     static_cast<std::streamsize>(data.size() * sizeof(double)))) {
            throw std::runtime_error("checkpoint '" + path + "': truncated data for '" + name + "'");
        }
        store.add(name, Tensor::from_data(std::move(shape), std::move(data)));
    }
    return store;
}

}  // namespace bonefield

// Copyright (c) 2026 bonefield contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "bonefield/tensor.hpp"

namespace bonefield {

// Ordered name -> tensor container backing the checkpoint format described
// in docs/formats.md. Round trips are bit-exact.
class ParamStore {
public:
    void add(const std::string& name, Tensor t);
    bool contains(const std::string& name) const;
    const Tensor& get(const std::string& name) const;
    Tensor& get(const std::string& name);

    const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }
    size_t size() const { return entries_.size(); }

    void save(const std::string& path) const;
    static ParamStore load(const std::string& path);

private:
    std::vector<std::pair<std::string, Tensor>> entries_;
};

}  // namespace bonefield

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "core/errors.hpp"

namespace ugcemt {

// All learnable weights of one network live in a single flat float vector.
// The layout maps canonical parameter names to (offset, shape) slices, so
// optimizer updates and EWA are plain vector operations and serialization is
// a manifest plus one contiguous payload.
struct ParamInfo {
    std::string name;
    std::vector<int> shape;
    size_t offset = 0;
    size_t count = 0;
};

class ParamLayout {
public:
    size_t add(const std::string& name, std::vector<int> shape);
    size_t total() const { return total_; }
    const std::vector<ParamInfo>& entries() const { return entries_; }
    const ParamInfo& find(const std::string& name) const;
    bool has(const std::string& name) const { return index_.count(name) != 0; }
    bool congruent(const ParamLayout& o) const;

private:
    std::vector<ParamInfo> entries_;
    std::unordered_map<std::string, size_t> index_;
    size_t total_ = 0;
};

using LayoutPtr = std::shared_ptr<const ParamLayout>;

template <class T>
struct FlatParams {
    LayoutPtr layout;
    std::vector<T> data;

    FlatParams() = default;
    explicit FlatParams(LayoutPtr l) : layout(std::move(l)), data(layout->total(), T(0)) {}

    std::span<T> slice(const std::string& name) {
        const ParamInfo& p = layout->find(name);
        return {data.data() + p.offset, p.count};
    }
    std::span<const T> slice(const std::string& name) const {
        const ParamInfo& p = layout->find(name);
        return {data.data() + p.offset, p.count};
    }
    T& scalar(const std::string& name) { return data[layout->find(name).offset]; }
    T scalar(const std::string& name) const { return data[layout->find(name).offset]; }
};

using ParamSet = FlatParams<float>;

// Container format: plain-text manifest of shapes followed by a raw
// little-endian float32 payload, arrays in manifest order.
//
//   UGCEMT-PARAMS 1
//   nparams <N>
//   <name> <ndim> <d0> <d1> ...
//   ...
//   DATA
//   <N arrays, float32 LE, tightly packed>
void save_params(const ParamSet& p, const std::string& path);
ParamSet load_params(const std::string& path);

// Multiple named ParamSets in one file (checkpoints).
void save_param_groups(const std::vector<std::pair<std::string, const ParamSet*>>& groups,
                       const std::string& path);
std::vector<std::pair<std::string, ParamSet>> load_param_groups(const std::string& path);

template <class T>
FlatParams<T> convert_params(const ParamSet& p) {
    FlatParams<T> out;
    out.layout = p.layout;
    out.data.assign(p.data.begin(), p.data.end());
    return out;
}

}  // namespace ugcemt

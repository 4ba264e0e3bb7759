// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "core/errors.hpp"

namespace ugcemt {

// Dense 3D grid, row-major (z, y, x). x is the fastest axis.
template <class T>
struct Grid3 {
    int nz = 0, ny = 0, nx = 0;
    std::vector<T> v;

    Grid3() = default;
    Grid3(int z, int y, int x, T fill = T(0)) : nz(z), ny(y), nx(x), v(size_t(z) * y * x, fill) {}

    size_t size() const { return v.size(); }
    T* data() { return v.data(); }
    const T* data() const { return v.data(); }
    T& at(int z, int y, int x) { return v[(size_t(z) * ny + y) * nx + x]; }
    const T& at(int z, int y, int x) const { return v[(size_t(z) * ny + y) * nx + x]; }

    bool same_shape(const Grid3& o) const { return nz == o.nz && ny == o.ny && nx == o.nx; }
    std::string shape_str() const {
        return std::to_string(nz) + "x" + std::to_string(ny) + "x" + std::to_string(nx);
    }
};

// Channel-major feature map (c, z, y, x).
template <class T>
struct Chans3 {
    int nc = 0, nz = 0, ny = 0, nx = 0;
    std::vector<T> v;

    Chans3() = default;
    Chans3(int c, int z, int y, int x, T fill = T(0))
        : nc(c), nz(z), ny(y), nx(x), v(size_t(c) * z * y * x, fill) {}

    size_t spatial() const { return size_t(nz) * ny * nx; }
    size_t size() const { return v.size(); }
    T* chan(int c) { return v.data() + size_t(c) * spatial(); }
    const T* chan(int c) const { return v.data() + size_t(c) * spatial(); }
    T& at(int c, int z, int y, int x) { return v[(((size_t(c) * nz) + z) * ny + y) * nx + x]; }
    const T& at(int c, int z, int y, int x) const {
        return v[(((size_t(c) * nz) + z) * ny + y) * nx + x];
    }
    bool same_shape(const Chans3& o) const {
        return nc == o.nc && nz == o.nz && ny == o.ny && nx == o.nx;
    }
};

// Row-major matrix, used for attention tokens and projections.
template <class T>
struct Mat {
    int rows = 0, cols = 0;
    std::vector<T> v;

    Mat() = default;
    Mat(int r, int c, T fill = T(0)) : rows(r), cols(c), v(size_t(r) * c, fill) {}

    T* row(int r) { return v.data() + size_t(r) * cols; }
    const T* row(int r) const { return v.data() + size_t(r) * cols; }
    T& at(int r, int c) { return v[size_t(r) * cols + c]; }
    const T& at(int r, int c) const { return v[size_t(r) * cols + c]; }
};

// mm per voxel along (z, y, x); float so the ASCII volume header (%.9g)
// round-trips the values exactly.
using Spacing = std::array<float, 3>;

// 3D scalar image with physical voxel spacing.
struct Volume {
    Grid3<float> g;
    Spacing spacing{1.0, 1.0, 1.0};
};

// Per-voxel class indices; binary in all shipped tasks.
using LabelMask = Grid3<uint8_t>;

// One dataset element.
struct Case {
    Volume volume;
    LabelMask label;
    std::string id;
};

}  // namespace ugcemt

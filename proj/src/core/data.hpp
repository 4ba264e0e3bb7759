// SPDX-License-Identifier: Apache-2.0
//
// Synthetic 3D dataset generation, the native volume file format, intensity
// normalization, and foreground-biased random cropping.
//
// Volume files carry a fixed 64-byte ASCII header
//   UGCV1 <f32|u8> <nz> <ny> <nx> <sz> <sy> <sx>
// (space padded), followed by the raw little-endian payload.
#pragma once

#include <string>
#include <utility>
#include <vector>

#include "core/grid.hpp"

namespace ugcemt {

struct SyntheticSpec {
    int n_volumes = 80;
    int shape[3] = {24, 48, 48};  // (nz, ny, nx)
    std::string object = "sphere";  // sphere | ellipsoid
    float radius_min_mm = 7.0f;
    float radius_max_mm = 12.0f;
    float noise_sigma = 0.5f;
    float intensity_fg = 1.0f;
    float intensity_bg = 0.0f;
    Spacing spacing{1.0f, 1.0f, 1.0f};
    uint64_t seed = 0;
    std::string id_prefix = "case";
};

// Deterministic per (spec); labels are the analytic inside test of the shape.
std::vector<Case> generate_synthetic(const SyntheticSpec& spec);

// Zero-mean, unit-variance copy; throws NumericError on a constant volume.
Volume normalize(const Volume& v);

struct CropCorner {
    int z = 0, y = 0, x = 0;
};

// Corner selection and cutting are split so aligned grids (e.g. uncertainty
// maps) can be cropped at the same window.
CropCorner choose_crop_corner(const Case& c, int pz, int py, int px, uint64_t seed,
                              double fg_bias);
Case crop_case_at(const Case& c, CropCorner corner, int pz, int py, int px);

template <class T>
Grid3<T> crop_grid_at(const Grid3<T>& g, CropCorner c, int pz, int py, int px) {
    Grid3<T> out(pz, py, px);
    for (int z = 0; z < pz; ++z)
        for (int y = 0; y < py; ++y)
            std::copy_n(&g.at(c.z + z, c.y + y, c.x), px, &out.at(z, y, 0));
    return out;
}

// Aligned crop of volume and label. With probability fg_bias the crop is
// forced to contain at least one foreground voxel (when any exists).
Case random_crop(const Case& c, int pz, int py, int px, uint64_t seed, double fg_bias);

void save_image(const std::string& path, const Grid3<float>& g, const Spacing& spacing);
void save_labels(const std::string& path, const LabelMask& g, const Spacing& spacing);
std::pair<Grid3<float>, Spacing> load_image(const std::string& path);
std::pair<LabelMask, Spacing> load_labels(const std::string& path);

// One case = "<id>_img.ugv" + "<id>_lab.ugv" in a directory.
void save_case(const std::string& dir, const Case& c);
Case load_case(const std::string& dir, const std::string& id);

// Plain-text manifest: one "<id> <tag>" line per case.
void save_manifest(const std::string& path,
                   const std::vector<std::pair<std::string, std::string>>& entries);
std::vector<std::pair<std::string, std::string>> load_manifest(const std::string& path);

// Seeded permutation split; returns (labeled, unlabeled) id lists.
std::pair<std::vector<std::string>, std::vector<std::string>> split_labeled(
    const std::vector<std::string>& ids, double labeled_fraction, uint64_t seed);

}  // namespace ugcemt

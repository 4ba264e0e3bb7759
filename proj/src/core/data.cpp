// SPDX-License-Identifier: Apache-2.0
#include "core/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "core/errors.hpp"
#include "core/rng.hpp"

namespace ugcemt {

namespace {

constexpr size_t kHeaderBytes = 64;

std::string format_header(const char* dtype, int nz, int ny, int nx, const Spacing& sp) {
    char buf[96];
    std::snprintf(buf, sizeof(buf), "UGCV1 %s %d %d %d %.9g %.9g %.9g", dtype, nz, ny, nx,
                  double(sp[0]), double(sp[1]), double(sp[2]));
    std::string h(buf);
    if (h.size() >= kHeaderBytes) throw FormatError("volume header does not fit in 64 bytes");
    h.resize(kHeaderBytes, ' ');
    return h;
}

struct ParsedHeader {
    std::string dtype;
    int nz = 0, ny = 0, nx = 0;
    Spacing spacing{1.f, 1.f, 1.f};
};

ParsedHeader parse_header(std::istream& is, const std::string& path) {
    char buf[kHeaderBytes];
    is.read(buf, kHeaderBytes);
    if (size_t(is.gcount()) != kHeaderBytes)
        throw FormatError(path + ": truncated header (byte offset 0)");
    std::istringstream ss(std::string(buf, kHeaderBytes));
    std::string magic;
    ParsedHeader h;
    if (!(ss >> magic >> h.dtype >> h.nz >> h.ny >> h.nx >> h.spacing[0] >> h.spacing[1] >>
          h.spacing[2]) ||
        magic != "UGCV1")
        throw FormatError(path + ": malformed header (byte offset 0)");
    if (h.nz <= 0 || h.ny <= 0 || h.nx <= 0)
        throw FormatError(path + ": non-positive dims in header");
    return h;
}

template <class T>
void read_payload(std::istream& is, std::vector<T>& out, size_t elem_bytes,
                  const std::string& path) {
    std::vector<unsigned char> buf(out.size() * elem_bytes);
    is.read(reinterpret_cast<char*>(buf.data()), std::streamsize(buf.size()));
    if (size_t(is.gcount()) != buf.size())
        throw FormatError(path + ": payload shorter than header dims (byte offset " +
                          std::to_string(kHeaderBytes + size_t(is.gcount())) + ")");
    char extra;
    if (is.read(&extra, 1))
        throw FormatError(path + ": payload longer than header dims (byte offset " +
                          std::to_string(kHeaderBytes + buf.size()) + ")");
    if constexpr (sizeof(T) == 1) {
        std::memcpy(out.data(), buf.data(), buf.size());
    } else {
        for (size_t i = 0; i < out.size(); ++i) {
            const uint32_t u = uint32_t(buf[4 * i]) | (uint32_t(buf[4 * i + 1]) << 8) |
                               (uint32_t(buf[4 * i + 2]) << 16) |
                               (uint32_t(buf[4 * i + 3]) << 24);
            std::memcpy(&out[i], &u, 4);
        }
    }
}

}  // namespace

void save_image(const std::string& path, const Grid3<float>& g, const Spacing& spacing) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + path);
    os << format_header("f32", g.nz, g.ny, g.nx, spacing);
    for (float f : g.v) {
        uint32_t u;
        std::memcpy(&u, &f, 4);
        const unsigned char b[4] = {(unsigned char)(u & 0xff), (unsigned char)((u >> 8) & 0xff),
                                    (unsigned char)((u >> 16) & 0xff),
                                    (unsigned char)((u >> 24) & 0xff)};
        os.write(reinterpret_cast<const char*>(b), 4);
    }
    if (!os) throw IoError("write failed: " + path);
}

void save_labels(const std::string& path, const LabelMask& g, const Spacing& spacing) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + path);
    os << format_header("u8", g.nz, g.ny, g.nx, spacing);
    os.write(reinterpret_cast<const char*>(g.v.data()), std::streamsize(g.v.size()));
    if (!os) throw IoError("write failed: " + path);
}

std::pair<Grid3<float>, Spacing> load_image(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open: " + path);
    const ParsedHeader h = parse_header(is, path);
    if (h.dtype != "f32") throw FormatError(path + ": expected dtype f32, got " + h.dtype);
    Grid3<float> g(h.nz, h.ny, h.nx);
    read_payload(is, g.v, 4, path);
    return {std::move(g), h.spacing};
}

std::pair<LabelMask, Spacing> load_labels(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open: " + path);
    const ParsedHeader h = parse_header(is, path);
    if (h.dtype != "u8") throw FormatError(path + ": expected dtype u8, got " + h.dtype);
    LabelMask g(h.nz, h.ny, h.nx);
    read_payload(is, g.v, 1, path);
    return {std::move(g), h.spacing};
}

void save_case(const std::string& dir, const Case& c) {
    save_image(dir + "/" + c.id + "_img.ugv", c.volume.g, c.volume.spacing);
    save_labels(dir + "/" + c.id + "_lab.ugv", c.label, c.volume.spacing);
}

Case load_case(const std::string& dir, const std::string& id) {
    Case c;
    c.id = id;
    auto [img, sp] = load_image(dir + "/" + id + "_img.ugv");
    auto [lab, sp2] = load_labels(dir + "/" + id + "_lab.ugv");
    if (img.nz != lab.nz || img.ny != lab.ny || img.nx != lab.nx)
        throw DataError(id + ": image and label shapes differ");
    c.volume.g = std::move(img);
    c.volume.spacing = sp;
    c.label = std::move(lab);
    return c;
}

std::vector<Case> generate_synthetic(const SyntheticSpec& spec) {
    if (spec.n_volumes < 1) throw ConfigError("n_volumes must be >= 1");
    if (spec.object != "sphere" && spec.object != "ellipsoid")
        throw ConfigError("object must be sphere or ellipsoid");
    if (spec.radius_min_mm <= 0 || spec.radius_max_mm < spec.radius_min_mm)
        throw ConfigError("bad radius range");
    const int nz = spec.shape[0], ny = spec.shape[1], nx = spec.shape[2];
    const int dims[3] = {nz, ny, nx};
    for (int a = 0; a < 3; ++a) {
        const double r_vox = double(spec.radius_max_mm) / double(spec.spacing[a]);
        if (2.0 * r_vox + 4.0 > double(dims[a]))
            throw ConfigError("radius cannot fit inside the volume with a 2-voxel margin");
    }

    std::vector<Case> out;
    out.reserve(size_t(spec.n_volumes));
    for (int i = 0; i < spec.n_volumes; ++i) {
        Rng rng(derive_seed(spec.seed, "synthetic-case", uint64_t(i)));
        double semi[3];  // mm, per axis (z, y, x)
        if (spec.object == "sphere") {
            const double r = rng.uniform(spec.radius_min_mm, spec.radius_max_mm);
            semi[0] = semi[1] = semi[2] = r;
        } else {
            for (double& s : semi) s = rng.uniform(spec.radius_min_mm, spec.radius_max_mm);
        }
        double center[3];
        for (int a = 0; a < 3; ++a) {
            const double r_vox = semi[a] / double(spec.spacing[a]);
            const double lo = r_vox + 2.0, hi = double(dims[a]) - 2.0 - r_vox;
            center[a] = rng.uniform(lo, hi);
        }
        Case c;
        char idbuf[32];
        std::snprintf(idbuf, sizeof(idbuf), "%s%04d", spec.id_prefix.c_str(), i);
        c.id = idbuf;
        c.volume.g = Grid3<float>(nz, ny, nx);
        c.volume.spacing = spec.spacing;
        c.label = LabelMask(nz, ny, nx);
        size_t k = 0;
        for (int z = 0; z < nz; ++z)
            for (int y = 0; y < ny; ++y)
                for (int x = 0; x < nx; ++x, ++k) {
                    const double dz = (double(z) - center[0]) * spec.spacing[0] / semi[0];
                    const double dy = (double(y) - center[1]) * spec.spacing[1] / semi[1];
                    const double dx = (double(x) - center[2]) * spec.spacing[2] / semi[2];
                    const bool inside = dz * dz + dy * dy + dx * dx <= 1.0;
                    c.label.v[k] = inside ? 1 : 0;
                    double val = inside ? spec.intensity_fg : spec.intensity_bg;
                    if (spec.noise_sigma > 0) val += spec.noise_sigma * rng.gaussian();
                    c.volume.g.v[k] = float(val);
                }
        out.push_back(std::move(c));
    }
    return out;
}

Volume normalize(const Volume& v) {
    double s = 0.0;
    for (float f : v.g.v) s += double(f);
    const double mean = s / double(v.g.v.size());
    double q = 0.0;
    for (float f : v.g.v) {
        const double d = double(f) - mean;
        q += d * d;
    }
    const double var = q / double(v.g.v.size());
    if (var < 1e-20) throw NumericError("cannot normalize a constant volume");
    const double inv_std = 1.0 / std::sqrt(var);
    Volume out;
    out.spacing = v.spacing;
    out.g = Grid3<float>(v.g.nz, v.g.ny, v.g.nx);
    for (size_t i = 0; i < v.g.v.size(); ++i)
        out.g.v[i] = float((double(v.g.v[i]) - mean) * inv_std);
    return out;
}

CropCorner choose_crop_corner(const Case& c, int pz, int py, int px, uint64_t seed,
                              double fg_bias) {
    const int nz = c.volume.g.nz, ny = c.volume.g.ny, nx = c.volume.g.nx;
    if (pz > nz || py > ny || px > nx)
        throw ShapeError("crop " + std::to_string(pz) + "x" + std::to_string(py) + "x" +
                         std::to_string(px) + " exceeds volume " + c.volume.g.shape_str());
    Rng rng(seed);
    if (fg_bias > 0.0 && rng.uniform() < fg_bias) {
        // pick a foreground voxel uniformly, then a corner whose window covers it
        size_t n_fg = 0;
        for (uint8_t l : c.label.v) n_fg += (l != 0);
        if (n_fg > 0) {
            size_t target = rng.below(n_fg), seen = 0;
            size_t idx = 0;
            for (size_t i = 0; i < c.label.v.size(); ++i) {
                if (c.label.v[i]) {
                    if (seen == target) {
                        idx = i;
                        break;
                    }
                    ++seen;
                }
            }
            const int vz = int(idx / (size_t(ny) * nx));
            const int vy = int((idx / nx) % ny);
            const int vx = int(idx % nx);
            auto corner = [&](int v, int p, int n) {
                const int lo = std::max(0, v - p + 1);
                const int hi = std::min(n - p, v);
                return lo + int(rng.below(uint64_t(hi - lo + 1)));
            };
            return {corner(vz, pz, nz), corner(vy, py, ny), corner(vx, px, nx)};
        }
    }
    return {int(rng.below(uint64_t(nz - pz + 1))), int(rng.below(uint64_t(ny - py + 1))),
            int(rng.below(uint64_t(nx - px + 1)))};
}

Case crop_case_at(const Case& c, CropCorner corner, int pz, int py, int px) {
    Case out;
    out.id = c.id;
    out.volume.spacing = c.volume.spacing;
    out.volume.g = crop_grid_at(c.volume.g, corner, pz, py, px);
    out.label = crop_grid_at(c.label, corner, pz, py, px);
    return out;
}

Case random_crop(const Case& c, int pz, int py, int px, uint64_t seed, double fg_bias) {
    return crop_case_at(c, choose_crop_corner(c, pz, py, px, seed, fg_bias), pz, py, px);
}

void save_manifest(const std::string& path,
                   const std::vector<std::pair<std::string, std::string>>& entries) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open for writing: " + path);
    for (const auto& [id, tag] : entries) os << id << " " << tag << "\n";
}

std::vector<std::pair<std::string, std::string>> load_manifest(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open: " + path);
    std::vector<std::pair<std::string, std::string>> out;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string id, tag;
        if (!(ss >> id >> tag)) throw FormatError(path + ": malformed manifest line: " + line);
        out.emplace_back(id, tag);
    }
    return out;
}

std::pair<std::vector<std::string>, std::vector<std::string>> split_labeled(
    const std::vector<std::string>& ids, double labeled_fraction, uint64_t seed) {
    if (labeled_fraction <= 0.0 || labeled_fraction > 1.0)
        throw ConfigError("labeled_fraction must be in (0,1]");
    std::vector<std::string> shuffled = ids;
    Rng rng(derive_seed(seed, "labeled-split"));
    for (size_t i = shuffled.size(); i > 1; --i)
        std::swap(shuffled[i - 1], shuffled[rng.below(i)]);
    size_t n_lab = size_t(std::llround(labeled_fraction * double(ids.size())));
    n_lab = std::max<size_t>(1, std::min(n_lab, ids.size()));
    std::vector<std::string> lab(shuffled.begin(), shuffled.begin() + n_lab);
    std::vector<std::string> unlab(shuffled.begin() + n_lab, shuffled.end());
    return {std::move(lab), std::move(unlab)};
}

}  // namespace ugcemt

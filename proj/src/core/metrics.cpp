// SPDX-License-Identifier: Apache-2.0
#include "core/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "core/errors.hpp"

namespace ugcemt {

namespace {

void check_same_shape(const LabelMask& a, const LabelMask& b) {
    if (!a.same_shape(b))
        throw ShapeError("mask shapes differ: " + a.shape_str() + " vs " + b.shape_str());
}

struct OverlapCounts {
    size_t inter = 0, a = 0, b = 0;
};

OverlapCounts overlap_counts(const LabelMask& pred, const LabelMask& gt) {
    check_same_shape(pred, gt);
    OverlapCounts c;
    for (size_t i = 0; i < pred.v.size(); ++i) {
        const bool p = pred.v[i] != 0;
        const bool g = gt.v[i] != 0;
        c.a += p;
        c.b += g;
        c.inter += (p && g);
    }
    return c;
}

constexpr double kInf = std::numeric_limits<double>::infinity();

// 1D squared distance transform (Felzenszwalb-Huttenlocher lower envelope)
// with physical sample pitch w: d(x) = min_y f(y) + (w (x - y))^2.
// Infinite f entries carry no parabola; if none is finite, d stays infinite.
void dt1d(const double* f, int n, double w, double* d, int* v, double* z) {
    const double w2 = w * w;
    int k = -1;
    for (int q = 0; q < n; ++q) {
        if (f[q] == kInf) continue;
        if (k < 0) {
            k = 0;
            v[0] = q;
            z[0] = -kInf;
            z[1] = kInf;
            continue;
        }
        double s;
        while (true) {
            const int p = v[k];
            s = ((f[q] + w2 * q * q) - (f[p] + w2 * p * p)) / (2.0 * w2 * (q - p));
            if (s > z[k]) break;
            --k;  // never drops below 0: z[0] is -inf
        }
        ++k;
        v[k] = q;
        z[k] = s;
        z[k + 1] = kInf;
    }
    if (k < 0) {
        for (int q = 0; q < n; ++q) d[q] = kInf;
        return;
    }
    k = 0;
    for (int q = 0; q < n; ++q) {
        while (z[k + 1] < q) ++k;
        const int p = v[k];
        d[q] = w2 * (q - p) * (q - p) + f[p];
    }
}

// Exact squared EDT of "distance to the nearest seed voxel" under anisotropic
// spacing, separable pass per axis.
Grid3<double> squared_edt(const LabelMask& seeds, const Spacing& spacing) {
    const int nz = seeds.nz, ny = seeds.ny, nx = seeds.nx;
    Grid3<double> d(nz, ny, nx);
    for (size_t i = 0; i < seeds.v.size(); ++i) d.v[i] = seeds.v[i] ? 0.0 : kInf;

    const int nmax = std::max({nz, ny, nx});
    std::vector<double> f(nmax), out(nmax), z(nmax + 1);
    std::vector<int> v(nmax);

    // x pass
    for (int zi = 0; zi < nz; ++zi)
        for (int yi = 0; yi < ny; ++yi) {
            double* row = &d.at(zi, yi, 0);
            dt1d(row, nx, spacing[2], out.data(), v.data(), z.data());
            std::copy_n(out.data(), nx, row);
        }
    // y pass
    for (int zi = 0; zi < nz; ++zi)
        for (int xi = 0; xi < nx; ++xi) {
            for (int yi = 0; yi < ny; ++yi) f[yi] = d.at(zi, yi, xi);
            dt1d(f.data(), ny, spacing[1], out.data(), v.data(), z.data());
            for (int yi = 0; yi < ny; ++yi) d.at(zi, yi, xi) = out[yi];
        }
    // z pass
    for (int yi = 0; yi < ny; ++yi)
        for (int xi = 0; xi < nx; ++xi) {
            for (int zi = 0; zi < nz; ++zi) f[zi] = d.at(zi, yi, xi);
            dt1d(f.data(), nz, spacing[0], out.data(), v.data(), z.data());
            for (int zi = 0; zi < nz; ++zi) d.at(zi, yi, xi) = out[zi];
        }
    return d;
}

void gather_direction(const LabelMask& from_surface, const Grid3<double>& sq_dist_to_other,
                      std::vector<double>& pooled) {
    for (size_t i = 0; i < from_surface.v.size(); ++i)
        if (from_surface.v[i]) pooled.push_back(std::sqrt(sq_dist_to_other.v[i]));
}

bool any_foreground(const LabelMask& m) {
    for (uint8_t v : m.v)
        if (v) return true;
    return false;
}

double percentile_linear(std::vector<double>& sorted, double q) {
    std::sort(sorted.begin(), sorted.end());
    const size_t n = sorted.size();
    if (n == 1) return sorted[0];
    const double pos = q * double(n - 1);
    const size_t lo = size_t(pos);
    const size_t hi = std::min(lo + 1, n - 1);
    const double frac = pos - double(lo);
    return sorted[lo] + (sorted[hi] - sorted[lo]) * frac;
}

}  // namespace

double dice_overlap(const LabelMask& pred, const LabelMask& gt) {
    const OverlapCounts c = overlap_counts(pred, gt);
    if (c.a + c.b == 0) return 1.0;
    return 2.0 * double(c.inter) / double(c.a + c.b);
}

double jaccard_overlap(const LabelMask& pred, const LabelMask& gt) {
    const OverlapCounts c = overlap_counts(pred, gt);
    const size_t uni = c.a + c.b - c.inter;
    if (uni == 0) return 1.0;
    return double(c.inter) / double(uni);
}

double disparity(const LabelMask& pred_a, const LabelMask& pred_b) {
    return 1.0 - jaccard_overlap(pred_a, pred_b);
}

LabelMask surface_voxels(const LabelMask& mask) {
    LabelMask s(mask.nz, mask.ny, mask.nx);
    for (int z = 0; z < mask.nz; ++z)
        for (int y = 0; y < mask.ny; ++y)
            for (int x = 0; x < mask.nx; ++x) {
                if (!mask.at(z, y, x)) continue;
                const bool border = z == 0 || z == mask.nz - 1 || y == 0 || y == mask.ny - 1 ||
                                    x == 0 || x == mask.nx - 1;
                bool bg = border;
                if (!bg)
                    bg = !mask.at(z - 1, y, x) || !mask.at(z + 1, y, x) ||
                         !mask.at(z, y - 1, x) || !mask.at(z, y + 1, x) ||
                         !mask.at(z, y, x - 1) || !mask.at(z, y, x + 1);
                s.at(z, y, x) = bg ? 1 : 0;
            }
    return s;
}

std::vector<double> pooled_surface_distances(const LabelMask& pred, const LabelMask& gt,
                                             const Spacing& spacing) {
    check_same_shape(pred, gt);
    if (!any_foreground(pred) || !any_foreground(gt))
        throw MetricUndefinedError("surface distance undefined for an empty mask");
    const LabelMask sp = surface_voxels(pred);
    const LabelMask sg = surface_voxels(gt);
    const Grid3<double> dist_to_g = squared_edt(sg, spacing);
    const Grid3<double> dist_to_p = squared_edt(sp, spacing);
    std::vector<double> pooled;
    gather_direction(sp, dist_to_g, pooled);
    gather_direction(sg, dist_to_p, pooled);
    return pooled;
}

double hd95_mm(const LabelMask& pred, const LabelMask& gt, const Spacing& spacing) {
    std::vector<double> pooled = pooled_surface_distances(pred, gt, spacing);
    return percentile_linear(pooled, 0.95);
}

double asd_mm(const LabelMask& pred, const LabelMask& gt, const Spacing& spacing) {
    const std::vector<double> pooled = pooled_surface_distances(pred, gt, spacing);
    double s = 0.0;
    for (double d : pooled) s += d;
    return s / double(pooled.size());
}

MetricReport evaluate_masks(const LabelMask& pred, const LabelMask& gt, const Spacing& spacing,
                            const std::string& case_id) {
    MetricReport r;
    r.case_id = case_id;
    r.dice = dice_overlap(pred, gt);
    r.jaccard = jaccard_overlap(pred, gt);
    try {
        const std::vector<double> pooled = pooled_surface_distances(pred, gt, spacing);
        std::vector<double> copy = pooled;
        r.hd95 = percentile_linear(copy, 0.95);
        double s = 0.0;
        for (double d : pooled) s += d;
        r.asd = s / double(pooled.size());
    } catch (const MetricUndefinedError&) {
        r.surface_defined = false;
        r.hd95 = std::numeric_limits<double>::quiet_NaN();
        r.asd = std::numeric_limits<double>::quiet_NaN();
    }
    return r;
}

}  // namespace ugcemt

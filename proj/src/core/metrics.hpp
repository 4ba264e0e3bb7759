// SPDX-License-Identifier: Apache-2.0
//
// Overlap and surface-distance metrics. Surfaces are mask voxels with at
// least one 6-connected background neighbor; the volume border counts as
// background. Surface distances use an exact anisotropic Euclidean distance
// transform; both directions are pooled before taking the 95th percentile
// (linear interpolation) or the mean. All distances are in millimeters.
#pragma once

#include <string>
#include <vector>

#include "core/grid.hpp"

namespace ugcemt {

struct MetricReport {
    double dice = 0.0;
    double jaccard = 0.0;
    double hd95 = 0.0;
    double asd = 0.0;
    bool surface_defined = true;  // false when either mask was empty
    std::string case_id;
};

// Spec conventions: both masks empty -> 1 for the overlap metrics; empty mask
// -> MetricUndefinedError for the surface metrics. Nonzero voxels count as
// foreground.
double dice_overlap(const LabelMask& pred, const LabelMask& gt);
double jaccard_overlap(const LabelMask& pred, const LabelMask& gt);
double hd95_mm(const LabelMask& pred, const LabelMask& gt, const Spacing& spacing);
double asd_mm(const LabelMask& pred, const LabelMask& gt, const Spacing& spacing);

// 1 - Jaccard between two predictions (sub-network diversity, not accuracy).
double disparity(const LabelMask& pred_a, const LabelMask& pred_b);

// Mask voxels with a 6-connected background (or out-of-volume) neighbor.
LabelMask surface_voxels(const LabelMask& mask);

// Pooled bidirectional surface-to-surface nearest distances (mm, unsorted).
std::vector<double> pooled_surface_distances(const LabelMask& pred, const LabelMask& gt,
                                             const Spacing& spacing);

MetricReport evaluate_masks(const LabelMask& pred, const LabelMask& gt, const Spacing& spacing,
                            const std::string& case_id);

}  // namespace ugcemt

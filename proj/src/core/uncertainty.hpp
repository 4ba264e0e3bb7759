// SPDX-License-Identifier: Apache-2.0
//
// MC-dropout uncertainty: T stochastic forward passes, entropy of the mean
// softmax (natural log, epsilon-guarded), and the exp(-entropy) weight grid
// used to steer the consistency loss.
#pragma once

#include <string>
#include <vector>

#include "core/grid.hpp"
#include "core/params.hpp"
#include "core/vnet.hpp"

namespace ugcemt {

inline constexpr double kEntropyLogEps = 1e-12;

struct McPredictionSet {
    std::vector<Chans3<float>> passes;  // softmax volumes
};

struct UncertaintyMap {
    Grid3<float> entropy;  // in [0, ln C]
    Grid3<float> weight;   // exp(-entropy), in (0, 1]
    std::string source_id;
    int t_used = 0;
};

// T dropout-on passes with sub-seeds derived deterministically from `seed`.
McPredictionSet mc_forward(const VNetTopo& topo, const ParamSet& params, const Grid3<float>& x,
                           int t, uint64_t seed);

UncertaintyMap mean_and_entropy(const McPredictionSet& preds);

// One UGM per case, order preserved, seeded per source id.
std::vector<UncertaintyMap> build_ugm(const VNetTopo& topo, const ParamSet& params,
                                      const std::vector<const Case*>& dataset, int t,
                                      uint64_t seed);

// Plain-text header (dims, T, source id, log base) + two float32 LE grids.
void save_ugm(const UncertaintyMap& u, const std::string& path);
UncertaintyMap load_ugm(const std::string& path);

}  // namespace ugcemt

// SPDX-License-Identifier: Apache-2.0
//
// Two-phase training orchestration. Phase 1 trains the coupled student /
// teacher pair on labeled+unlabeled data and emits uncertainty-guided maps
// from the trained teacher; phase 2 warm-starts from phase 1 and weights the
// consistency loss with the persisted maps. Ablation toggles select the
// teacher update rule, the cross-attention coupling, the uncertainty
// weighting, and consistency-vs-pseudo-label training.
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "core/config.hpp"
#include "core/data.hpp"
#include "core/losses.hpp"
#include "core/metrics.hpp"
#include "core/params.hpp"
#include "core/sam.hpp"
#include "core/teacher.hpp"
#include "core/uncertainty.hpp"
#include "core/vnet.hpp"

namespace ugcemt {

struct LoadedDataset {
    std::vector<Case> train;  // intensity-normalized
    std::vector<Case> test;
    std::vector<size_t> labeled_idx;    // into train
    std::vector<size_t> unlabeled_idx;
};

// Reads manifest + volumes, normalizes intensities, applies the seeded
// labeled/unlabeled split.
LoadedDataset load_dataset(const std::string& data_dir, const TrainConfig& cfg);

// x + N(0, sigma^2) noise, deterministic per seed; sigma = 0 is the identity.
Volume perturb_input(const Volume& x, double sigma, uint64_t seed);

struct TrainState {
    VNetTopo topo;
    ParamSet student;
    TeacherState teacher;
    SamState<float> opt;
    long step = 0;
    int phase = 1;
};

struct StepStats {
    LossBreakdown loss;
    double disparity = 0.0;  // student vs teacher argmax masks on the batch
};

struct EvalSummary {
    std::vector<MetricReport> cases;
    double mean_dice = 0.0;
    double mean_jaccard = 0.0;
    double mean_hd95 = 0.0;   // over surface-defined cases
    double mean_asd = 0.0;
    int surface_defined = 0;
    double mean_disparity = 0.0;  // student vs teacher predictions
};

struct PhaseOutcome {
    double initial_entropy = -1.0;  // mean unlabeled UGM entropy before training
    double final_entropy = -1.0;
    EvalSummary eval;
    std::string checkpoint_path;
};

void save_checkpoint(const std::string& path, const TrainState& st);
TrainState load_checkpoint(const std::string& path);  // shipped default network
TrainState load_checkpoint_with_spec(const std::string& path, const NetworkSpec& spec);

void write_eval_csv(const std::string& path, const EvalSummary& s);

class Trainer {
public:
    Trainer(TrainConfig cfg, const LoadedDataset* data);

    // Fresh phase-1 state from the config seed.
    void init_state();

    StepStats train_step();

    // Full phases; write logs, checkpoints and (phase 1) UGM files under
    // out_dir/phase{1,2}. Phase 2 requires phase 1 artifacts on disk unless a
    // state is passed in.
    PhaseOutcome run_phase1();
    PhaseOutcome run_phase2();

    EvalSummary evaluate() const;

    TrainState& state() { return state_; }
    const TrainConfig& config() const { return cfg_; }

    // Phase-2 weight grids, keyed by source id. Normally loaded from the
    // phase-1 output; exposed for tests.
    void set_ugms(std::vector<UncertaintyMap> ugms);

private:
    struct Slot;
    void build_batch(std::vector<Slot>& slots) const;
    double loss_eval(const std::vector<float>& w, std::vector<float>& grad,
                     std::vector<Slot>& slots, double lambda, StepStats* capture) const;
    double mean_unlabeled_entropy(const ParamSet& params) const;
    std::vector<const Case*> unlabeled_cases() const;
    PhaseOutcome run_phase(int phase);

    TrainConfig cfg_;
    const LoadedDataset* data_ = nullptr;
    TrainState state_;
    std::vector<UncertaintyMap> ugms_;
    std::vector<int> ugm_by_train_idx_;  // -1 when absent
};

// End-to-end commands used by the C API / CLI.
// Generates the synthetic dataset described by gen.* keys into out_dir
// (volumes, labels, manifest, resolved settings).
void generate_dataset_command(const KvConfig& kv, const std::string& out_dir);

// phase: 1, 2, or 0 for both. Returns the final outcome.
PhaseOutcome run_training(const TrainConfig& cfg, int phase);
EvalSummary run_evaluation(const TrainConfig& cfg, const std::string& checkpoint_path,
                           const std::string& out_csv);

struct AblationRow {
    std::string name;
    bool st = true, ca = false, ewa = false, ugm = false;
    double dice = 0.0, jaccard = 0.0, hd95 = 0.0, asd = 0.0;
};
// The four-row study: Baseline, MT, CEMT, UG-CEMT.
std::vector<AblationRow> run_ablation(const TrainConfig& base, const std::string& out_dir);

}  // namespace ugcemt

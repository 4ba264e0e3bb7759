// SPDX-License-Identifier: Apache-2.0
//
// Flat key=value configuration with documented precedence:
// command-line overrides > config file > built-in defaults.
#pragma once

#include <map>
#include <string>
#include <vector>

#include "core/sam.hpp"
#include "core/vnet.hpp"

namespace ugcemt {

// Raw key/value layer. Keys are free-form here; validation happens when a
// typed config is built.
class KvConfig {
public:
    void set(const std::string& key, const std::string& value);
    bool has(const std::string& key) const;
    std::string get(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key, double fallback) const;
    long get_long(const std::string& key, long fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    std::vector<int> get_int3(const std::string& key, std::vector<int> fallback) const;

    void load_file(const std::string& path);      // merges file entries (lower precedence
                                                  // keys already set are kept)
    void merge_overrides(const KvConfig& higher); // applies higher-precedence entries
    void write_file(const std::string& path) const;
    const std::map<std::string, std::string>& entries() const { return kv_; }

private:
    std::map<std::string, std::string> kv_;
};

enum class TrainMode { CR, PLG };

struct TrainConfig {
    // data
    std::string data_dir;
    std::string out_dir = "runs/run";
    // network
    NetworkSpec net;
    // schedule
    double labeled_fraction = 0.1;
    int batch_size = 4;
    long t_max = 6000;
    uint64_t seed = 1;
    double noise_sigma = 0.2;
    int patch[3] = {16, 32, 32};  // (z, y, x)
    double fg_bias = 0.5;
    long eval_every = 100;
    double ewa_beta = 0.99;
    int t_mc = 8;
    // ablation toggles
    bool use_ewa = true;
    bool use_ca = true;
    bool use_ugm = true;
    TrainMode mode = TrainMode::CR;
    bool supervised_only = false;
    bool phase2_cold_start = false;
    double phase2_lr_scale = 0.1;     // phase 2 fine-tunes from a warm start
    bool ugm_noise_mod = false;       // modulate input noise by the entropy map
    bool sup_ugm_weight = false;      // UGM weighting of the supervised loss (phase 2)
    long recompute_ugm_every = 0;     // 0 = fixed UGMs in phase 2
    // optimizer
    SamConfig sam;

    int labeled_per_batch() const {
        return supervised_only ? batch_size : batch_size / 2;
    }
    int unlabeled_per_batch() const { return batch_size - labeled_per_batch(); }
};

// Synthetic dataset generation settings (gen-data command).
struct GenSettings {
    int n_volumes = 80;
    int n_test = 16;
    int shape[3] = {24, 48, 48};  // (z, y, x)
    std::string object = "sphere";
    float radius_min = 7.0f;
    float radius_max = 12.0f;
    float noise_sigma = 0.5f;
    float intensity_fg = 1.0f;
    float intensity_bg = 0.0f;
    float spacing[3] = {2.0f, 1.0f, 1.0f};  // (z, y, x) mm
    uint64_t seed = 1;
};

// Builds typed configs from the raw layer; throws ConfigError naming the
// violated invariant. Unknown keys are rejected.
TrainConfig make_train_config(const KvConfig& kv);
GenSettings make_gen_settings(const KvConfig& kv);

// Serializes the fully resolved configuration (reproducibility capsule).
KvConfig to_kv(const TrainConfig& cfg);
KvConfig to_kv(const GenSettings& gen);

}  // namespace ugcemt

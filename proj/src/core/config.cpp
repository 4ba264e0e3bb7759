// SPDX-License-Identifier: Apache-2.0
#include "core/config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "core/errors.hpp"

namespace ugcemt {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

const std::set<std::string>& known_train_keys() {
    static const std::set<std::string> keys = {
        "data_dir", "out_dir",
        "net.levels", "net.base_channels", "net.num_classes", "net.dropout_rate",
        "net.dropout_sites",
        "labeled_fraction", "batch_size", "t_max", "seed", "noise_sigma", "patch_size",
        "fg_bias", "eval_every", "ewa_beta", "t_mc",
        "use_ewa", "use_ca", "use_ugm", "mode", "supervised_only", "phase2_cold_start",
        "phase2_lr_scale",
        "ugm_noise_mod", "sup_ugm_weight", "recompute_ugm_every",
        "sam.rho", "sam.lr", "sam.momentum", "sam.weight_decay", "sam.lr_decay_factor",
        "sam.lr_decay_every",
    };
    return keys;
}

const std::set<std::string>& known_gen_keys() {
    static const std::set<std::string> keys = {
        "gen.n_volumes", "gen.n_test", "gen.shape", "gen.object", "gen.radius_min",
        "gen.radius_max", "gen.noise_sigma", "gen.intensity_fg", "gen.intensity_bg",
        "gen.spacing", "gen.seed",
    };
    return keys;
}

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

void KvConfig::set(const std::string& key, const std::string& value) { kv_[key] = value; }

bool KvConfig::has(const std::string& key) const { return kv_.count(key) != 0; }

std::string KvConfig::get(const std::string& key, const std::string& fallback) const {
    auto it = kv_.find(key);
    return it == kv_.end() ? fallback : it->second;
}

double KvConfig::get_double(const std::string& key, double fallback) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    try {
        size_t pos = 0;
        const double v = std::stod(it->second, &pos);
        if (pos != it->second.size()) throw std::invalid_argument("");
        return v;
    } catch (...) {
        throw ConfigError(key + ": not a number: " + it->second);
    }
}

long KvConfig::get_long(const std::string& key, long fallback) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    try {
        size_t pos = 0;
        const long v = std::stol(it->second, &pos);
        if (pos != it->second.size()) throw std::invalid_argument("");
        return v;
    } catch (...) {
        throw ConfigError(key + ": not an integer: " + it->second);
    }
}

bool KvConfig::get_bool(const std::string& key, bool fallback) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    std::string v = it->second;
    std::transform(v.begin(), v.end(), v.begin(), ::tolower);
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError(key + ": not a boolean: " + it->second);
}

std::vector<int> KvConfig::get_int3(const std::string& key, std::vector<int> fallback) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    std::string s = it->second;
    std::replace(s.begin(), s.end(), ',', ' ');
    std::replace(s.begin(), s.end(), 'x', ' ');
    std::istringstream ss(s);
    std::vector<int> out(3);
    if (!(ss >> out[0] >> out[1] >> out[2]))
        throw ConfigError(key + ": expected three integers, got: " + it->second);
    return out;
}

void KvConfig::load_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open config file: " + path);
    std::string line;
    size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key=value");
        const std::string key = trim(t.substr(0, eq));
        const std::string value = trim(t.substr(eq + 1));
        if (key.empty()) throw ConfigError(path + ":" + std::to_string(lineno) + ": empty key");
        if (!kv_.count(key)) kv_[key] = value;  // keys set earlier keep precedence
    }
}

void KvConfig::merge_overrides(const KvConfig& higher) {
    for (const auto& [k, v] : higher.entries()) kv_[k] = v;
}

void KvConfig::write_file(const std::string& path) const {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open for writing: " + path);
    for (const auto& [k, v] : kv_) os << k << " = " << v << "\n";
}

TrainConfig make_train_config(const KvConfig& kv) {
    for (const auto& [k, v] : kv.entries())
        if (!known_train_keys().count(k) && !known_gen_keys().count(k))
            throw ConfigError("unknown config key: " + k);

    TrainConfig c;
    c.data_dir = kv.get("data_dir", c.data_dir);
    c.out_dir = kv.get("out_dir", c.out_dir);
    c.net.levels = int(kv.get_long("net.levels", c.net.levels));
    c.net.base_channels = int(kv.get_long("net.base_channels", c.net.base_channels));
    c.net.num_classes = int(kv.get_long("net.num_classes", c.net.num_classes));
    c.net.dropout_rate = kv.get_double("net.dropout_rate", c.net.dropout_rate);
    if (kv.has("net.dropout_sites")) {
        std::string s = kv.get("net.dropout_sites", "");
        std::replace(s.begin(), s.end(), ',', ' ');
        std::istringstream ss(s);
        std::string site;
        while (ss >> site) c.net.dropout_sites.push_back(site);
    }
    c.labeled_fraction = kv.get_double("labeled_fraction", c.labeled_fraction);
    c.batch_size = int(kv.get_long("batch_size", c.batch_size));
    c.t_max = kv.get_long("t_max", c.t_max);
    c.seed = uint64_t(kv.get_long("seed", long(c.seed)));
    c.noise_sigma = kv.get_double("noise_sigma", c.noise_sigma);
    const auto patch = kv.get_int3("patch_size", {c.patch[0], c.patch[1], c.patch[2]});
    std::copy(patch.begin(), patch.end(), c.patch);
    c.fg_bias = kv.get_double("fg_bias", c.fg_bias);
    c.eval_every = kv.get_long("eval_every", c.eval_every);
    c.ewa_beta = kv.get_double("ewa_beta", c.ewa_beta);
    c.t_mc = int(kv.get_long("t_mc", c.t_mc));
    c.use_ewa = kv.get_bool("use_ewa", c.use_ewa);
    c.use_ca = kv.get_bool("use_ca", c.use_ca);
    c.use_ugm = kv.get_bool("use_ugm", c.use_ugm);
    const std::string mode = kv.get("mode", "CR");
    if (mode == "CR")
        c.mode = TrainMode::CR;
    else if (mode == "PLG")
        c.mode = TrainMode::PLG;
    else
        throw ConfigError("mode must be CR or PLG, got: " + mode);
    c.supervised_only = kv.get_bool("supervised_only", c.supervised_only);
    c.phase2_cold_start = kv.get_bool("phase2_cold_start", c.phase2_cold_start);
    c.phase2_lr_scale = kv.get_double("phase2_lr_scale", c.phase2_lr_scale);
    c.ugm_noise_mod = kv.get_bool("ugm_noise_mod", c.ugm_noise_mod);
    c.sup_ugm_weight = kv.get_bool("sup_ugm_weight", c.sup_ugm_weight);
    c.recompute_ugm_every = kv.get_long("recompute_ugm_every", c.recompute_ugm_every);
    c.sam.rho = kv.get_double("sam.rho", c.sam.rho);
    c.sam.lr = kv.get_double("sam.lr", c.sam.lr);
    c.sam.momentum = kv.get_double("sam.momentum", c.sam.momentum);
    c.sam.weight_decay = kv.get_double("sam.weight_decay", c.sam.weight_decay);
    c.sam.lr_decay_factor = kv.get_double("sam.lr_decay_factor", c.sam.lr_decay_factor);
    c.sam.lr_decay_every = kv.get_long("sam.lr_decay_every", c.sam.lr_decay_every);

    make_topo(c.net);  // validates the network spec
    if (c.labeled_fraction <= 0.0 || c.labeled_fraction > 1.0)
        throw ConfigError("labeled_fraction must be in (0,1]");
    if (c.batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!c.supervised_only && c.batch_size < 2)
        throw ConfigError("batch_size must be >= 2 for the labeled/unlabeled split");
    if (c.t_max <= 0) throw ConfigError("t_max must be positive");
    if (c.noise_sigma < 0) throw ConfigError("noise_sigma must be >= 0");
    if (c.t_mc < 2) throw ConfigError("t_mc must be >= 2");
    if (c.ewa_beta < 0.0 || c.ewa_beta > 1.0) throw ConfigError("ewa_beta must be in [0,1]");
    if (c.mode == TrainMode::PLG && c.use_ugm) throw ConfigError("mode=PLG excludes use_ugm");
    const int f = 1 << (c.net.levels - 1);
    for (int d : c.patch)
        if (d <= 0 || d % f)
            throw ConfigError("patch_size dims must be positive multiples of " +
                              std::to_string(f));
    if (c.phase2_lr_scale <= 0.0 || c.phase2_lr_scale > 1.0)
        throw ConfigError("phase2_lr_scale must be in (0,1]");
    if (c.sam.rho < 0) throw ConfigError("sam.rho must be >= 0");
    if (c.sam.lr <= 0) throw ConfigError("sam.lr must be > 0");
    if (c.sam.momentum < 0 || c.sam.momentum >= 1)
        throw ConfigError("sam.momentum must be in [0,1)");
    if (c.sam.weight_decay < 0) throw ConfigError("sam.weight_decay must be >= 0");
    return c;
}

GenSettings make_gen_settings(const KvConfig& kv) {
    for (const auto& [k, v] : kv.entries())
        if (!known_gen_keys().count(k) && !known_train_keys().count(k))
            throw ConfigError("unknown config key: " + k);
    GenSettings g;
    g.n_volumes = int(kv.get_long("gen.n_volumes", g.n_volumes));
    g.n_test = int(kv.get_long("gen.n_test", g.n_test));
    const auto shape = kv.get_int3("gen.shape", {g.shape[0], g.shape[1], g.shape[2]});
    std::copy(shape.begin(), shape.end(), g.shape);
    g.object = kv.get("gen.object", g.object);
    g.radius_min = float(kv.get_double("gen.radius_min", g.radius_min));
    g.radius_max = float(kv.get_double("gen.radius_max", g.radius_max));
    g.noise_sigma = float(kv.get_double("gen.noise_sigma", g.noise_sigma));
    g.intensity_fg = float(kv.get_double("gen.intensity_fg", g.intensity_fg));
    g.intensity_bg = float(kv.get_double("gen.intensity_bg", g.intensity_bg));
    if (kv.has("gen.spacing")) {
        std::string s = kv.get("gen.spacing", "");
        std::replace(s.begin(), s.end(), ',', ' ');
        std::istringstream ss(s);
        if (!(ss >> g.spacing[0] >> g.spacing[1] >> g.spacing[2]))
            throw ConfigError("gen.spacing: expected three numbers");
    }
    g.seed = uint64_t(kv.get_long("gen.seed", long(g.seed)));
    if (g.n_volumes < 1) throw ConfigError("gen.n_volumes must be >= 1");
    if (g.n_test < 0) throw ConfigError("gen.n_test must be >= 0");
    return g;
}

KvConfig to_kv(const TrainConfig& c) {
    KvConfig kv;
    kv.set("data_dir", c.data_dir);
    kv.set("out_dir", c.out_dir);
    kv.set("net.levels", std::to_string(c.net.levels));
    kv.set("net.base_channels", std::to_string(c.net.base_channels));
    kv.set("net.num_classes", std::to_string(c.net.num_classes));
    kv.set("net.dropout_rate", fmt_double(c.net.dropout_rate));
    {
        const VNetTopo topo = make_topo(c.net);
        std::string sites;
        for (const auto& s : topo.dropout_sites) sites += (sites.empty() ? "" : ",") + s;
        kv.set("net.dropout_sites", sites);
    }
    kv.set("labeled_fraction", fmt_double(c.labeled_fraction));
    kv.set("batch_size", std::to_string(c.batch_size));
    kv.set("t_max", std::to_string(c.t_max));
    kv.set("seed", std::to_string(c.seed));
    kv.set("noise_sigma", fmt_double(c.noise_sigma));
    kv.set("patch_size", std::to_string(c.patch[0]) + "," + std::to_string(c.patch[1]) + "," +
                             std::to_string(c.patch[2]));
    kv.set("fg_bias", fmt_double(c.fg_bias));
    kv.set("eval_every", std::to_string(c.eval_every));
    kv.set("ewa_beta", fmt_double(c.ewa_beta));
    kv.set("t_mc", std::to_string(c.t_mc));
    kv.set("use_ewa", c.use_ewa ? "true" : "false");
    kv.set("use_ca", c.use_ca ? "true" : "false");
    kv.set("use_ugm", c.use_ugm ? "true" : "false");
    kv.set("mode", c.mode == TrainMode::CR ? "CR" : "PLG");
    kv.set("supervised_only", c.supervised_only ? "true" : "false");
    kv.set("phase2_cold_start", c.phase2_cold_start ? "true" : "false");
    kv.set("phase2_lr_scale", fmt_double(c.phase2_lr_scale));
    kv.set("ugm_noise_mod", c.ugm_noise_mod ? "true" : "false");
    kv.set("sup_ugm_weight", c.sup_ugm_weight ? "true" : "false");
    kv.set("recompute_ugm_every", std::to_string(c.recompute_ugm_every));
    kv.set("sam.rho", fmt_double(c.sam.rho));
    kv.set("sam.lr", fmt_double(c.sam.lr));
    kv.set("sam.momentum", fmt_double(c.sam.momentum));
    kv.set("sam.weight_decay", fmt_double(c.sam.weight_decay));
    kv.set("sam.lr_decay_factor", fmt_double(c.sam.lr_decay_factor));
    kv.set("sam.lr_decay_every", std::to_string(c.sam.lr_decay_every));
    return kv;
}

KvConfig to_kv(const GenSettings& g) {
    KvConfig kv;
    kv.set("gen.n_volumes", std::to_string(g.n_volumes));
    kv.set("gen.n_test", std::to_string(g.n_test));
    kv.set("gen.shape", std::to_string(g.shape[0]) + "," + std::to_string(g.shape[1]) + "," +
                            std::to_string(g.shape[2]));
    kv.set("gen.object", g.object);
    kv.set("gen.radius_min", fmt_double(g.radius_min));
    kv.set("gen.radius_max", fmt_double(g.radius_max));
    kv.set("gen.noise_sigma", fmt_double(g.noise_sigma));
    kv.set("gen.intensity_fg", fmt_double(g.intensity_fg));
    kv.set("gen.intensity_bg", fmt_double(g.intensity_bg));
    kv.set("gen.spacing", fmt_double(g.spacing[0]) + "," + fmt_double(g.spacing[1]) + "," +
                              fmt_double(g.spacing[2]));
    kv.set("gen.seed", std::to_string(g.seed));
    return kv;
}

}  // namespace ugcemt

// SPDX-License-Identifier: Apache-2.0
#include "core/vnet.hpp"

#include <algorithm>
#include <cmath>

#include "core/errors.hpp"

namespace ugcemt {

namespace {

// Memory guard for the desk-scale build.
constexpr int kMaxLevels = 6;
constexpr int kMaxDeepChannels = 256;

std::vector<std::string> default_sites(int levels) {
    return {"enc" + std::to_string(levels - 1), "dec" + std::to_string(levels - 2)};
}

std::vector<std::string> all_stage_names(int levels) {
    std::vector<std::string> names;
    for (int i = 0; i < levels; ++i) names.push_back("enc" + std::to_string(i));
    for (int j = levels - 2; j >= 0; --j) names.push_back("dec" + std::to_string(j));
    return names;
}

}  // namespace

bool VNetTopo::has_site(const std::string& s) const {
    return std::find(dropout_sites.begin(), dropout_sites.end(), s) != dropout_sites.end();
}

VNetTopo make_topo(const NetworkSpec& spec) {
    if (spec.levels < 2) throw ConfigError("levels must be >= 2");
    if (spec.base_channels < 2) throw ConfigError("base_channels must be >= 2");
    if (spec.num_classes < 2) throw ConfigError("num_classes must be >= 2");
    if (spec.dropout_rate < 0.0 || spec.dropout_rate > 1.0)
        throw ConfigError("dropout_rate must be in [0,1]");
    if (spec.levels > kMaxLevels) throw ConfigError("levels exceeds the build cap");
    if (spec.base_channels << (spec.levels - 1) > kMaxDeepChannels)
        throw ConfigError("levels*base_channels exceed the memory cap");

    VNetTopo topo;
    topo.spec = spec;
    for (int i = 0; i < spec.levels; ++i) topo.channels.push_back(spec.base_channels << i);
    topo.dropout_sites =
        spec.dropout_sites.empty() ? default_sites(spec.levels) : spec.dropout_sites;
    const auto stages = all_stage_names(spec.levels);
    for (const std::string& s : topo.dropout_sites)
        if (std::find(stages.begin(), stages.end(), s) == stages.end())
            throw ConfigError("unknown dropout site: " + s);

    auto layout = std::make_shared<ParamLayout>();
    const int L = spec.levels;
    auto add_unit = [&](const std::string& prefix, const std::string& conv,
                        const std::string& norm, int co, int ci, int k) {
        layout->add(prefix + conv + ".w", {co, ci, k, k, k});
        layout->add(prefix + conv + ".b", {co});
        layout->add(prefix + norm + ".g", {co});
        layout->add(prefix + norm + ".b", {co});
    };
    for (int i = 0; i < L; ++i) {
        const std::string prefix = "backbone.enc" + std::to_string(i) + ".";
        const int ch = topo.channels[i];
        const int in_ch = i == 0 ? 1 : ch;
        add_unit(prefix, "conv1", "norm1", ch, in_ch, 3);
        add_unit(prefix, "conv2", "norm2", ch, ch, 3);
        if (i < L - 1) {
            const std::string dprefix = "backbone.down" + std::to_string(i) + ".";
            add_unit(dprefix, "conv", "norm", topo.channels[i + 1], ch, 2);
        }
    }
    for (int j = L - 2; j >= 0; --j) {
        const std::string prefix = "backbone.dec" + std::to_string(j) + ".";
        const int ch = topo.channels[j];
        layout->add(prefix + "up.w", {topo.channels[j + 1], ch, 2, 2, 2});
        layout->add(prefix + "up.b", {ch});
        layout->add(prefix + "upnorm.g", {ch});
        layout->add(prefix + "upnorm.b", {ch});
        add_unit(prefix, "conv1", "norm1", ch, 2 * ch, 3);
        add_unit(prefix, "conv2", "norm2", ch, ch, 3);
    }
    layout->add("backbone.head.w", {spec.num_classes, topo.channels[0], 1, 1, 1});
    layout->add("backbone.head.b", {spec.num_classes});
    topo.backbone_param_count = layout->total();

    // Cross-attention projections and gamma share the network ParamSet so the
    // EWA teacher mirrors them; d_k = d_v = bottleneck channel count.
    const int cb = topo.channels.back();
    for (const char* n : {"wq_s", "wk_s", "wv_s", "wq_t", "wk_t", "wv_t"})
        layout->add(std::string("attn.") + n, {cb, cb});
    layout->add("attn.gamma", {1});
    topo.attention_param_count = layout->total() - topo.backbone_param_count;

    topo.layout = std::move(layout);
    return topo;
}

std::vector<GraphNode> vnet_graph(const NetworkSpec& spec) {
    VNetTopo topo = make_topo(spec);
    std::vector<GraphNode> g;
    auto add = [&](const std::string& name, const std::string& kind, const std::string& stage,
                   std::vector<std::string> inputs) {
        g.push_back({name, kind, stage, std::move(inputs)});
    };
    add("input", "input", "", {});
    const int L = spec.levels;
    std::string cur = "input";
    for (int i = 0; i < L; ++i) {
        const std::string s = "enc" + std::to_string(i);
        add(s + ".conv1", "conv", s, {cur});
        add(s + ".norm1", "norm", s, {s + ".conv1"});
        add(s + ".act1", "act", s, {s + ".norm1"});
        add(s + ".conv2", "conv", s, {s + ".act1"});
        add(s + ".norm2", "norm", s, {s + ".conv2"});
        add(s + ".act2", "act", s, {s + ".norm2"});
        cur = s + ".act2";
        if (topo.has_site(s)) {
            add(s + ".dropout", "dropout", s, {cur});
            cur = s + ".dropout";
        }
        if (i < L - 1) {
            const std::string d = "down" + std::to_string(i);
            add(d + ".conv", "downconv", d, {cur});
            add(d + ".norm", "norm", d, {d + ".conv"});
            add(d + ".act", "act", d, {d + ".norm"});
            cur = d + ".act";
        }
    }
    for (int j = L - 2; j >= 0; --j) {
        const std::string s = "dec" + std::to_string(j);
        const std::string enc_out =
            topo.has_site("enc" + std::to_string(j)) ? "enc" + std::to_string(j) + ".dropout"
                                                     : "enc" + std::to_string(j) + ".act2";
        add(s + ".up", "upconv", s, {cur});
        add(s + ".upnorm", "norm", s, {s + ".up"});
        add(s + ".upact", "act", s, {s + ".upnorm"});
        add(s + ".concat", "concat", s, {s + ".upact", enc_out});
        cur = s + ".concat";
        if (topo.has_site(s)) {
            add(s + ".dropout", "dropout", s, {cur});
            cur = s + ".dropout";
        }
        add(s + ".conv1", "conv", s, {cur});
        add(s + ".norm1", "norm", s, {s + ".conv1"});
        add(s + ".act1", "act", s, {s + ".norm1"});
        add(s + ".conv2", "conv", s, {s + ".act1"});
        add(s + ".norm2", "norm", s, {s + ".conv2"});
        add(s + ".act2", "act", s, {s + ".norm2"});
        cur = s + ".act2";
    }
    add("head", "head", "head", {cur});
    add("softmax", "softmax", "head", {"head"});
    return g;
}

ParamSet build_network(const VNetTopo& topo, uint64_t seed) {
    ParamSet p(topo.layout);
    size_t idx = 0;
    for (const ParamInfo& e : topo.layout->entries()) {
        Rng rng(derive_seed(seed, "init", idx++));
        float* dst = p.data.data() + e.offset;
        const bool is_conv_w = e.shape.size() == 5;
        const bool is_attn_w = e.name.rfind("attn.w", 0) == 0;
        if (is_conv_w) {
            // He initialization; fan-in from (ci, k, k, k).
            size_t fan_in = 1;
            for (size_t d = 1; d < e.shape.size(); ++d) fan_in *= size_t(e.shape[d]);
            const double std = std::sqrt(2.0 / double(fan_in));
            for (size_t i = 0; i < e.count; ++i) dst[i] = float(std * rng.gaussian());
        } else if (is_attn_w) {
            // near-identity: the block starts as plain feature-similarity
            // attention, so the gamma gate sees a meaningful direction
            const int cols = e.shape[1];
            for (size_t i = 0; i < e.count; ++i) {
                const bool diag = (int(i) / cols) == (int(i) % cols);
                dst[i] = float((diag ? 1.0 : 0.0) + 0.02 * rng.gaussian());
            }
        } else if (e.name.find("norm") != std::string::npos && e.name.back() == 'g') {
            for (size_t i = 0; i < e.count; ++i) dst[i] = 1.0f;
        } else {
            // biases, norm shifts, attn.gamma
            for (size_t i = 0; i < e.count; ++i) dst[i] = 0.0f;
        }
    }
    return p;
}

void check_input_dims(const VNetTopo& topo, int nz, int ny, int nx) {
    const int f = 1 << (topo.spec.levels - 1);
    if (nz % f || ny % f || nx % f)
        throw ShapeError("input dims " + std::to_string(nz) + "x" + std::to_string(ny) + "x" +
                         std::to_string(nx) + " not divisible by " + std::to_string(f));
    if (nz < f || ny < f || nx < f) throw ShapeError("input smaller than the downsampling factor");
}

}  // namespace ugcemt

// SPDX-License-Identifier: Apache-2.0
//
// V-Net style 3D encoder-decoder without the stage-internal residual adds.
//
// Topology, for `levels` L and `base_channels` B (channels at level i are
// B*2^i, input has 1 channel):
//   encoder level i:  conv 3x3x3 -> instnorm -> leaky relu, twice
//                     (conv1 maps the incoming channel count to B*2^i)
//   down i -> i+1:    conv 2x2x2 stride 2 doubling channels -> instnorm -> act
//   bottleneck:       output of encoder level L-1 (exposed per forward)
//   decoder level j:  tconv 2x2x2 stride 2 halving channels -> instnorm -> act,
//                     channel concat with encoder level-j output, then
//                     conv 3x3x3 -> instnorm -> act, twice
//   head:             conv 1x1x1 to num_classes
//
// The only merge nodes are concats; vnet_graph() exposes the node list so
// tests can assert the absence of additive skips structurally.
//
// Dropout sites are stage names: "enc0".."enc{L-1}", "dec{L-2}".."dec0".
// An encoder site drops the stage output (the bottleneck, for enc{L-1});
// a decoder site drops the concatenated input of that stage's conv block.
// Default sites: { enc{L-1}, dec{L-2} }.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "core/grid.hpp"
#include "core/nn_kernels.hpp"
#include "core/params.hpp"

namespace ugcemt {

struct NetworkSpec {
    int levels = 3;
    int base_channels = 4;
    int num_classes = 2;
    double dropout_rate = 0.5;
    std::vector<std::string> dropout_sites;  // empty selects the defaults
};

struct GraphNode {
    std::string name;
    std::string kind;  // input|conv|norm|act|dropout|downconv|upconv|concat|head|softmax
    std::string stage;
    std::vector<std::string> inputs;
};

// Everything derivable from a NetworkSpec: channel plan, dropout sites,
// parameter layout (backbone plus the attention block, which shares the
// network's ParamSet).
struct VNetTopo {
    NetworkSpec spec;
    std::vector<int> channels;              // per level
    std::vector<std::string> dropout_sites; // resolved
    LayoutPtr layout;
    size_t backbone_param_count = 0;
    size_t attention_param_count = 0;

    int bottleneck_channels() const { return channels.back(); }
    bool has_site(const std::string& s) const;
};

// Validates the spec and computes the topology. Throws ConfigError.
VNetTopo make_topo(const NetworkSpec& spec);

// Node list of the computation graph (for structural assertions).
std::vector<GraphNode> vnet_graph(const NetworkSpec& spec);

// Deterministic parameter initialization; two calls with equal (spec, seed)
// yield bitwise-identical ParamSets.
ParamSet build_network(const VNetTopo& topo, uint64_t seed);

struct DropoutPlan {
    bool on = false;
    uint64_t seed = 0;
};

template <class T>
struct UnitCache {
    Chans3<T> x;    // unit input
    Chans3<T> pre;  // conv output, pre-norm
    InstNormCache<T> norm;
    Chans3<T> y;    // post-activation
};

template <class T>
struct VNetEncState {
    std::vector<UnitCache<T>> enc1, enc2;   // per level
    std::vector<UnitCache<T>> down;         // per level transition
    std::vector<std::vector<T>> enc_dropmask;  // per level (empty if unused)
    std::vector<Chans3<T>> stage_out;       // post-dropout stage outputs
    const Chans3<T>& bottleneck() const { return stage_out.back(); }
};

template <class T>
struct VNetDecState {
    std::vector<UnitCache<T>> up;           // per decoder level, topo order L-2..0
    std::vector<Chans3<T>> cat;             // concat output (post-dropout)
    std::vector<std::vector<T>> cat_dropmask;
    std::vector<UnitCache<T>> dec1, dec2;
    Chans3<T> head_in;                      // alias of last dec2.y, kept for backward
    Chans3<T> logits;
    // grads w.r.t. encoder stage outputs, filled by vnet_decode_backward
    std::vector<Chans3<T>> gskip;
};

template <class T>
struct ForwardResult {
    Chans3<T> logits;
    Chans3<T> softmax;
    Chans3<T> bottleneck;
};

namespace detail {

inline uint64_t site_seed(const DropoutPlan& dp, const std::string& site) {
    return derive_seed(dp.seed, "dropout-site", hash_str(site));
}

template <class T>
void unit_forward(const VNetTopo& topo, const FlatParams<T>& p, const std::string& prefix,
                  const std::string& conv_name, const std::string& norm_name, int co, int k,
                  int stride, int pad, const Chans3<T>& x, UnitCache<T>& u) {
    u.x = x;
    conv3d_forward(u.x, p.slice(prefix + conv_name + ".w").data(),
                   p.slice(prefix + conv_name + ".b").data(), co, k, k, k, stride, pad, u.pre);
    instnorm_forward(u.pre, p.slice(prefix + norm_name + ".g").data(),
                     p.slice(prefix + norm_name + ".b").data(), u.y, &u.norm);
    leaky_relu_forward(u.y);
    (void)topo;
}

template <class T>
void unit_backward(const VNetTopo& topo, const FlatParams<T>& p, const std::string& prefix,
                   const std::string& conv_name, const std::string& norm_name, int k, int stride,
                   int pad, const UnitCache<T>& u, Chans3<T>& gy, std::vector<T>& grad,
                   Chans3<T>& gx) {
    leaky_relu_backward(u.y, gy);
    Chans3<T> gpre;
    const ParamInfo& ng = p.layout->find(prefix + norm_name + ".g");
    const ParamInfo& nb = p.layout->find(prefix + norm_name + ".b");
    instnorm_backward(u.pre, u.norm, p.slice(prefix + norm_name + ".g").data(), gy, gpre,
                      grad.data() + ng.offset, grad.data() + nb.offset);
    const ParamInfo& cw = p.layout->find(prefix + conv_name + ".w");
    const ParamInfo& cb = p.layout->find(prefix + conv_name + ".b");
    conv3d_backward_params(u.x, gpre, k, k, k, stride, pad, grad.data() + cw.offset,
                           grad.data() + cb.offset);
    conv3d_backward_data(gpre, p.data.data() + cw.offset, u.x.nc, u.x.nz, u.x.ny, u.x.nx, k, k,
                         k, stride, pad, gx);
    (void)topo;
}

template <class T>
void up_unit_forward(const VNetTopo& topo, const FlatParams<T>& p, const std::string& prefix,
                     int co, const Chans3<T>& x, UnitCache<T>& u) {
    u.x = x;
    tconv3d_forward(u.x, p.slice(prefix + "up.w").data(), p.slice(prefix + "up.b").data(), co,
                    u.pre);
    instnorm_forward(u.pre, p.slice(prefix + "upnorm.g").data(),
                     p.slice(prefix + "upnorm.b").data(), u.y, &u.norm);
    leaky_relu_forward(u.y);
    (void)topo;
}

template <class T>
void up_unit_backward(const VNetTopo& topo, const FlatParams<T>& p, const std::string& prefix,
                      const UnitCache<T>& u, Chans3<T>& gy, std::vector<T>& grad, Chans3<T>& gx) {
    leaky_relu_backward(u.y, gy);
    Chans3<T> gpre;
    const ParamInfo& ng = p.layout->find(prefix + "upnorm.g");
    const ParamInfo& nb = p.layout->find(prefix + "upnorm.b");
    instnorm_backward(u.pre, u.norm, p.slice(prefix + "upnorm.g").data(), gy, gpre,
                      grad.data() + ng.offset, grad.data() + nb.offset);
    const ParamInfo& cw = p.layout->find(prefix + "up.w");
    const ParamInfo& cb = p.layout->find(prefix + "up.b");
    tconv3d_backward(u.x, gpre, p.data.data() + cw.offset, gx, grad.data() + cw.offset,
                     grad.data() + cb.offset);
    (void)topo;
}

}  // namespace detail

// Input dims must be divisible by 2^(levels-1). Throws ShapeError.
void check_input_dims(const VNetTopo& topo, int nz, int ny, int nx);

template <class T>
void vnet_encode(const VNetTopo& topo, const FlatParams<T>& p, const Grid3<T>& x,
                 const DropoutPlan& dp, VNetEncState<T>& st) {
    check_input_dims(topo, x.nz, x.ny, x.nx);
    const int L = topo.spec.levels;
    st.enc1.resize(L);
    st.enc2.resize(L);
    st.down.resize(L - 1);
    st.enc_dropmask.assign(L, {});
    st.stage_out.resize(L);
    Chans3<T> cur(1, x.nz, x.ny, x.nx);
    cur.v.assign(x.v.begin(), x.v.end());
    for (int i = 0; i < L; ++i) {
        const std::string prefix = "backbone.enc" + std::to_string(i) + ".";
        const int ch = topo.channels[i];
        detail::unit_forward(topo, p, prefix, "conv1", "norm1", ch, 3, 1, 1, cur, st.enc1[i]);
        detail::unit_forward(topo, p, prefix, "conv2", "norm2", ch, 3, 1, 1, st.enc1[i].y,
                             st.enc2[i]);
        st.stage_out[i] = st.enc2[i].y;
        const std::string site = "enc" + std::to_string(i);
        if (dp.on && topo.has_site(site) && topo.spec.dropout_rate > 0.0)
            dropout_forward(st.stage_out[i], topo.spec.dropout_rate,
                            detail::site_seed(dp, site), &st.enc_dropmask[i]);
        if (i < L - 1) {
            const std::string dprefix = "backbone.down" + std::to_string(i) + ".";
            detail::unit_forward(topo, p, dprefix, "conv", "norm", topo.channels[i + 1], 2, 2, 0,
                                 st.stage_out[i], st.down[i]);
            cur = st.down[i].y;
        }
    }
}

template <class T>
void vnet_decode(const VNetTopo& topo, const FlatParams<T>& p, const Chans3<T>& bottleneck,
                 const VNetEncState<T>& enc, const DropoutPlan& dp, VNetDecState<T>& st) {
    const int L = topo.spec.levels;
    const int nd = L - 1;
    st.up.resize(nd);
    st.cat.resize(nd);
    st.cat_dropmask.assign(nd, {});
    st.dec1.resize(nd);
    st.dec2.resize(nd);
    const Chans3<T>* cur = &bottleneck;
    for (int d = 0; d < nd; ++d) {
        const int j = L - 2 - d;  // decoder level
        const std::string prefix = "backbone.dec" + std::to_string(j) + ".";
        const int ch = topo.channels[j];
        detail::up_unit_forward(topo, p, prefix, ch, *cur, st.up[d]);
        // concat: upsampled first, then the encoder skip
        const Chans3<T>& skip = enc.stage_out[j];
        Chans3<T>& cat = st.cat[d];
        cat = Chans3<T>(2 * ch, skip.nz, skip.ny, skip.nx);
        std::copy(st.up[d].y.v.begin(), st.up[d].y.v.end(), cat.v.begin());
        std::copy(skip.v.begin(), skip.v.end(), cat.v.begin() + st.up[d].y.v.size());
        const std::string site = "dec" + std::to_string(j);
        if (dp.on && topo.has_site(site) && topo.spec.dropout_rate > 0.0)
            dropout_forward(cat, topo.spec.dropout_rate, detail::site_seed(dp, site),
                            &st.cat_dropmask[d]);
        detail::unit_forward(topo, p, prefix, "conv1", "norm1", ch, 3, 1, 1, cat, st.dec1[d]);
        detail::unit_forward(topo, p, prefix, "conv2", "norm2", ch, 3, 1, 1, st.dec1[d].y,
                             st.dec2[d]);
        cur = &st.dec2[d].y;
    }
    st.head_in = *cur;
    conv3d_forward(st.head_in, p.slice("backbone.head.w").data(),
                   p.slice("backbone.head.b").data(), topo.spec.num_classes, 1, 1, 1, 1, 0,
                   st.logits);
}

// Backward from dL/dlogits down to the bottleneck. Parameter grads accumulate
// into `grad` (same flat layout as the ParamSet); skip grads land in st.gskip.
template <class T>
void vnet_decode_backward(const VNetTopo& topo, const FlatParams<T>& p,
                          const VNetEncState<T>& enc, VNetDecState<T>& st,
                          const Chans3<T>& glogits, std::vector<T>& grad,
                          Chans3<T>& gbottleneck) {
    const int L = topo.spec.levels;
    const int nd = L - 1;
    st.gskip.assign(L, {});
    const ParamInfo& hw = p.layout->find("backbone.head.w");
    const ParamInfo& hb = p.layout->find("backbone.head.b");
    conv3d_backward_params(st.head_in, glogits, 1, 1, 1, 1, 0, grad.data() + hw.offset,
                           grad.data() + hb.offset);
    Chans3<T> g;
    conv3d_backward_data(glogits, p.data.data() + hw.offset, st.head_in.nc, st.head_in.nz,
                         st.head_in.ny, st.head_in.nx, 1, 1, 1, 1, 0, g);
    for (int d = nd - 1; d >= 0; --d) {
        const int j = L - 2 - d;
        const std::string prefix = "backbone.dec" + std::to_string(j) + ".";
        const int ch = topo.channels[j];
        Chans3<T> gcat, gtmp;
        detail::unit_backward(topo, p, prefix, "conv2", "norm2", 3, 1, 1, st.dec2[d], g, grad,
                              gtmp);
        detail::unit_backward(topo, p, prefix, "conv1", "norm1", 3, 1, 1, st.dec1[d], gtmp, grad,
                              gcat);
        if (!st.cat_dropmask[d].empty()) dropout_backward(st.cat_dropmask[d], gcat);
        // split the concat grad
        Chans3<T> gup(ch, gcat.nz, gcat.ny, gcat.nx);
        Chans3<T>& gskip = st.gskip[j];
        gskip = Chans3<T>(ch, gcat.nz, gcat.ny, gcat.nx);
        std::copy(gcat.v.begin(), gcat.v.begin() + gup.v.size(), gup.v.begin());
        std::copy(gcat.v.begin() + gup.v.size(), gcat.v.end(), gskip.v.begin());
        detail::up_unit_backward(topo, p, prefix, st.up[d], gup, grad, g);
    }
    gbottleneck = std::move(g);
}

template <class T>
void vnet_encode_backward(const VNetTopo& topo, const FlatParams<T>& p, VNetEncState<T>& enc,
                          const Chans3<T>& gbottleneck, const std::vector<Chans3<T>>& gskip,
                          std::vector<T>& grad) {
    const int L = topo.spec.levels;
    Chans3<T> g = gbottleneck;
    for (int i = L - 1; i >= 0; --i) {
        if (i < L - 1) {
            // g currently addresses the input of down{i}'s conv; add skip grad
            Chans3<T> gdown;
            const std::string dprefix = "backbone.down" + std::to_string(i) + ".";
            detail::unit_backward(topo, p, dprefix, "conv", "norm", 2, 2, 0, enc.down[i], g,
                                  grad, gdown);
            g = std::move(gdown);
            if (gskip.size() > size_t(i) && gskip[i].size() > 0)
                for (size_t k = 0; k < g.v.size(); ++k) g.v[k] += gskip[i].v[k];
        }
        if (!enc.enc_dropmask[i].empty()) dropout_backward(enc.enc_dropmask[i], g);
        const std::string prefix = "backbone.enc" + std::to_string(i) + ".";
        Chans3<T> gtmp, gx;
        detail::unit_backward(topo, p, prefix, "conv2", "norm2", 3, 1, 1, enc.enc2[i], g, grad,
                              gtmp);
        detail::unit_backward(topo, p, prefix, "conv1", "norm1", 3, 1, 1, enc.enc1[i], gtmp,
                              grad, gx);
        g = std::move(gx);
    }
}

// Plain forward: encode, decode, softmax. The exposed bottleneck is the
// post-dropout deepest feature map (what the attention block consumes).
template <class T>
ForwardResult<T> vnet_forward(const VNetTopo& topo, const FlatParams<T>& p, const Grid3<T>& x,
                              bool dropout_on, uint64_t rng_seed) {
    VNetEncState<T> enc;
    VNetDecState<T> dec;
    DropoutPlan dp{dropout_on, rng_seed};
    vnet_encode(topo, p, x, dp, enc);
    vnet_decode(topo, p, enc.bottleneck(), enc, dp, dec);
    ForwardResult<T> out;
    out.bottleneck = enc.bottleneck();
    out.logits = std::move(dec.logits);
    softmax_channels(out.logits, out.softmax);
    return out;
}

}  // namespace ugcemt

// SPDX-License-Identifier: Apache-2.0
//
// Bidirectional student/teacher cross-attention over bottleneck tokens.
// Single head, d_k = d_v = bottleneck channels. The teacher-side inputs are
// constants: only the student direction (queries from the student, keys and
// values from the teacher features) carries gradients, and the teacher-side
// combined map is used purely as a consistency target.
#pragma once

#include <cmath>
#include <string>

#include "core/errors.hpp"
#include "core/grid.hpp"
#include "core/nn_kernels.hpp"
#include "core/params.hpp"

namespace ugcemt {

// Flattened spatial positions of a bottleneck feature map: one row per voxel.
template <class T>
struct TokenizedFeatures {
    Mat<T> tokens;  // n_tokens x channels
    int nz = 0, ny = 0, nx = 0;
};

template <class T>
TokenizedFeatures<T> tokenize(const Chans3<T>& f) {
    TokenizedFeatures<T> t;
    t.nz = f.nz;
    t.ny = f.ny;
    t.nx = f.nx;
    const size_t n = f.spatial();
    t.tokens = Mat<T>(int(n), f.nc);
    for (int c = 0; c < f.nc; ++c) {
        const T* src = f.chan(c);
        for (size_t i = 0; i < n; ++i) t.tokens.at(int(i), c) = src[i];
    }
    return t;
}

template <class T>
Chans3<T> untokenize(const TokenizedFeatures<T>& t) {
    Chans3<T> f(t.tokens.cols, t.nz, t.ny, t.nx);
    const size_t n = f.spatial();
    if (size_t(t.tokens.rows) != n) throw ShapeError("token count does not match spatial shape");
    for (int c = 0; c < f.nc; ++c) {
        T* dst = f.chan(c);
        for (size_t i = 0; i < n; ++i) dst[i] = t.tokens.at(int(i), c);
    }
    return f;
}

enum class Side { student, teacher };

// Q/K/V projections for one side. Throws ShapeError on channel mismatch.
template <class T>
void project_qkv(const Mat<T>& tokens, const FlatParams<T>& p, Side side, Mat<T>& q, Mat<T>& k,
                 Mat<T>& v) {
    const char* suffix = side == Side::student ? "_s" : "_t";
    const ParamInfo& wq = p.layout->find(std::string("attn.wq") + suffix);
    if (tokens.cols != wq.shape[0])
        throw ShapeError("token channels " + std::to_string(tokens.cols) +
                         " do not match projection input " + std::to_string(wq.shape[0]));
    auto mul = [&](const std::string& name, Mat<T>& out) {
        const ParamInfo& w = p.layout->find(name);
        Mat<T> wm(w.shape[0], w.shape[1]);
        std::copy_n(p.data.data() + w.offset, w.count, wm.v.data());
        mm_nn(tokens, wm, out);
    };
    mul(std::string("attn.wq") + suffix, q);
    mul(std::string("attn.wk") + suffix, k);
    mul(std::string("attn.wv") + suffix, v);
}

// Row-stochastic attention matrix softmax(Q K^T / sqrt(d_k)).
template <class T>
Mat<T> attention_weights(const Mat<T>& q, const Mat<T>& k, int d_k) {
    if (d_k <= 0) throw ConfigError("d_k must be positive");
    if (q.cols != d_k || k.cols != d_k) throw ShapeError("query/key width does not match d_k");
    Mat<T> s;
    mm_nt(q, k, s);
    const T scale = T(1) / T(std::sqrt(double(d_k)));
    for (T& x : s.v) x *= scale;
    for (int i = 0; i < s.rows; ++i) {
        T* row = s.row(i);
        T mx = row[0];
        for (int j = 1; j < s.cols; ++j) mx = std::max(mx, row[j]);
        T denom = 0;
        for (int j = 0; j < s.cols; ++j) {
            row[j] = std::exp(row[j] - mx);
            denom += row[j];
        }
        const T inv = T(1) / denom;
        for (int j = 0; j < s.cols; ++j) row[j] *= inv;
    }
    return s;
}

// Weighted sum of value rows; each output token is a convex combination.
template <class T>
Mat<T> attend(const Mat<T>& weights, const Mat<T>& v) {
    if (weights.cols != v.rows) throw ShapeError("attention weights do not match value rows");
    Mat<T> out;
    mm_nn(weights, v, out);
    return out;
}

// X' = gamma * O + X.
template <class T>
Mat<T> residual_combine(const Mat<T>& o, const Mat<T>& x, T gamma) {
    if (o.rows != x.rows || o.cols != x.cols) throw ShapeError("residual combine shape mismatch");
    Mat<T> out(x.rows, x.cols);
    for (size_t i = 0; i < out.v.size(); ++i) out.v[i] = gamma * o.v[i] + x.v[i];
    return out;
}

template <class T>
struct CrossAttentionCache {
    Mat<T> xs, xt;         // inputs
    Mat<T> qs, kt, vt;     // student-direction projections
    Mat<T> a;              // softmax(Qs Kt^T / sqrt(dk))
    Mat<T> o;              // a * vt
};

template <class T>
struct CrossAttentionOut {
    Mat<T> xs_prime;
    Mat<T> xt_prime;  // consistency-target side; carries no gradients
};

template <class T>
CrossAttentionOut<T> cross_attention_block(const Mat<T>& xs, const Mat<T>& xt,
                                           const FlatParams<T>& p,
                                           CrossAttentionCache<T>* cache = nullptr) {
    if (xs.rows != xt.rows || xs.cols != xt.cols)
        throw ShapeError("student/teacher token maps differ in shape");
    const int dk = xs.cols;
    const T gamma = p.scalar("attn.gamma");
    Mat<T> qs, ks, vs, qt, kt, vt;
    project_qkv(xs, p, Side::student, qs, ks, vs);
    project_qkv(xt, p, Side::teacher, qt, kt, vt);

    Mat<T> a = attention_weights(qs, kt, dk);
    Mat<T> o = attend(a, vt);
    CrossAttentionOut<T> out;
    out.xs_prime = residual_combine(o, xs, gamma);

    Mat<T> a_ts = attention_weights(qt, ks, dk);
    Mat<T> o_ts = attend(a_ts, vs);
    out.xt_prime = residual_combine(o_ts, xt, gamma);

    if (cache) {
        cache->xs = xs;
        cache->xt = xt;
        cache->qs = std::move(qs);
        cache->kt = std::move(kt);
        cache->vt = std::move(vt);
        cache->a = std::move(a);
        cache->o = std::move(o);
    }
    return out;
}

// Backward of the student path xs' = xs + gamma * softmax(QsKt^T/sqrt(dk)) Vt.
// Accumulates grads for attn.wq_s, attn.wk_t, attn.wv_t and attn.gamma into
// the flat grad vector and returns d xs.
template <class T>
Mat<T> cross_attention_backward(const CrossAttentionCache<T>& c, const FlatParams<T>& p,
                                const Mat<T>& gxs_prime, std::vector<T>& grad) {
    const int dk = c.xs.cols;
    const T gamma = p.scalar("attn.gamma");
    const T inv_sqrt = T(1) / T(std::sqrt(double(dk)));

    // gamma
    T gg = 0;
    for (size_t i = 0; i < c.o.v.size(); ++i) gg += gxs_prime.v[i] * c.o.v[i];
    grad[p.layout->find("attn.gamma").offset] += gg;

    Mat<T> go(gxs_prime.rows, gxs_prime.cols);
    for (size_t i = 0; i < go.v.size(); ++i) go.v[i] = gamma * gxs_prime.v[i];

    Mat<T> gxs = gxs_prime;  // identity branch

    Mat<T> ga, gvt;
    mm_nt(go, c.vt, ga);   // dA = dO Vt^T
    mm_tn(c.a, go, gvt);   // dVt = A^T dO
    // softmax rows backward
    Mat<T> gs(ga.rows, ga.cols);
    for (int i = 0; i < ga.rows; ++i) {
        const T* arow = c.a.row(i);
        const T* garow = ga.row(i);
        T dot = 0;
        for (int j = 0; j < ga.cols; ++j) dot += garow[j] * arow[j];
        T* gsrow = gs.row(i);
        for (int j = 0; j < ga.cols; ++j) gsrow[j] = arow[j] * (garow[j] - dot) * inv_sqrt;
    }
    Mat<T> gqs, gkt;
    mm_nn(gs, c.kt, gqs);  // dQs = dS Kt
    mm_tn(gs, c.qs, gkt);  // dKt = dS^T Qs

    // projection weight grads; teacher tokens are constants
    auto acc_w = [&](const std::string& name, const Mat<T>& x, const Mat<T>& gy) {
        Mat<T> gw;
        mm_tn(x, gy, gw);
        const ParamInfo& info = p.layout->find(name);
        T* dst = grad.data() + info.offset;
        for (size_t i = 0; i < gw.v.size(); ++i) dst[i] += gw.v[i];
    };
    acc_w("attn.wq_s", c.xs, gqs);
    acc_w("attn.wk_t", c.xt, gkt);
    acc_w("attn.wv_t", c.xt, gvt);

    // dXs += dQs Wq_s^T
    const ParamInfo& wq = p.layout->find("attn.wq_s");
    Mat<T> wqm(wq.shape[0], wq.shape[1]);
    std::copy_n(p.data.data() + wq.offset, wq.count, wqm.v.data());
    Mat<T> gx_from_q;
    mm_nt(gqs, wqm, gx_from_q);
    for (size_t i = 0; i < gxs.v.size(); ++i) gxs.v[i] += gx_from_q.v[i];
    return gxs;
}

}  // namespace ugcemt

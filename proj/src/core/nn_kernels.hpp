// SPDX-License-Identifier: Apache-2.0
//
// Plain serial 3D conv / norm / activation kernels, templated on the scalar
// type. float is the production type; the double instantiation backs the
// finite-difference gradient checks. Loops are ordered so that every output
// element accumulates its terms in one fixed sequence, which keeps results
// identical across vector widths and thread counts (there are no threads).
#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "core/grid.hpp"
#include "core/rng.hpp"

namespace ugcemt {

// ---- conv3d, zero padding, arbitrary kernel/stride ----
// Weights are (co, ci, kz, ky, kx), row-major.

template <class T>
void conv3d_forward(const Chans3<T>& in, const T* w, const T* b, int co_n, int kz_n, int ky_n,
                    int kx_n, int stride, int pad, Chans3<T>& out) {
    const int ci_n = in.nc;
    const int oz_n = (in.nz + 2 * pad - kz_n) / stride + 1;
    const int oy_n = (in.ny + 2 * pad - ky_n) / stride + 1;
    const int ox_n = (in.nx + 2 * pad - kx_n) / stride + 1;
    out = Chans3<T>(co_n, oz_n, oy_n, ox_n);
    const size_t ksz = size_t(kz_n) * ky_n * kx_n;
    // one scalar-weight AXPY pass over the whole output plane per weight,
    // so loop overhead amortizes over nz*ny*nx elements
    for (int co = 0; co < co_n; ++co) {
        T* outc = out.chan(co);
        const size_t n = out.spatial();
        for (size_t i = 0; i < n; ++i) outc[i] = b[co];
        const T* wc = w + size_t(co) * ci_n * ksz;
        for (int ci = 0; ci < ci_n; ++ci) {
            const T* inc = in.chan(ci);
            for (int kz = 0; kz < kz_n; ++kz) {
                for (int ky = 0; ky < ky_n; ++ky) {
                    for (int kx = 0; kx < kx_n; ++kx) {
                        const T wv = wc[(size_t(ci) * kz_n + kz) * ky_n * kx_n +
                                        size_t(ky) * kx_n + kx];
                        for (int oz = 0; oz < oz_n; ++oz) {
                            const int iz = oz * stride + kz - pad;
                            if (iz < 0 || iz >= in.nz) continue;
                            for (int oy = 0; oy < oy_n; ++oy) {
                                const int iy = oy * stride + ky - pad;
                                if (iy < 0 || iy >= in.ny) continue;
                                const T* row = inc + (size_t(iz) * in.ny + iy) * in.nx;
                                T* orow = outc + (size_t(oz) * oy_n + oy) * ox_n;
                                if (stride == 1) {
                                    const int off = kx - pad;
                                    const int lo = off < 0 ? -off : 0;
                                    const int hi = in.nx - off < ox_n ? in.nx - off : ox_n;
                                    const T* r = row + off;
                                    for (int ox = lo; ox < hi; ++ox) orow[ox] += wv * r[ox];
                                } else {
                                    for (int ox = 0; ox < ox_n; ++ox) {
                                        const int ix = ox * stride + kx - pad;
                                        if (ix >= 0 && ix < in.nx) orow[ox] += wv * row[ix];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

// Gradient w.r.t. the conv input. Scatter form: fixed loop order keeps each
// input element's accumulation sequence deterministic.
template <class T>
void conv3d_backward_data(const Chans3<T>& gout, const T* w, int ci_n, int in_nz, int in_ny,
                          int in_nx, int kz_n, int ky_n, int kx_n, int stride, int pad,
                          Chans3<T>& gin) {
    gin = Chans3<T>(ci_n, in_nz, in_ny, in_nx);
    const int co_n = gout.nc;
    const size_t ksz = size_t(kz_n) * ky_n * kx_n;
    for (int co = 0; co < co_n; ++co) {
        const T* goc = gout.chan(co);
        const T* wc = w + size_t(co) * ci_n * ksz;
        for (int ci = 0; ci < ci_n; ++ci) {
            T* ginc = gin.chan(ci);
            for (int kz = 0; kz < kz_n; ++kz) {
                for (int ky = 0; ky < ky_n; ++ky) {
                    for (int kx = 0; kx < kx_n; ++kx) {
                        const T wv = wc[(size_t(ci) * kz_n + kz) * ky_n * kx_n +
                                        size_t(ky) * kx_n + kx];
                        for (int oz = 0; oz < gout.nz; ++oz) {
                            const int iz = oz * stride + kz - pad;
                            if (iz < 0 || iz >= in_nz) continue;
                            for (int oy = 0; oy < gout.ny; ++oy) {
                                const int iy = oy * stride + ky - pad;
                                if (iy < 0 || iy >= in_ny) continue;
                                const T* grow = goc + (size_t(oz) * gout.ny + oy) * gout.nx;
                                T* irow = ginc + (size_t(iz) * in_ny + iy) * in_nx;
                                if (stride == 1) {
                                    const int off = kx - pad;
                                    const int lo = off < 0 ? -off : 0;
                                    const int hi =
                                        in_nx - off < gout.nx ? in_nx - off : gout.nx;
                                    T* ir = irow + off;
                                    for (int ox = lo; ox < hi; ++ox) ir[ox] += wv * grow[ox];
                                } else {
                                    for (int ox = 0; ox < gout.nx; ++ox) {
                                        const int ix = ox * stride + kx - pad;
                                        if (ix >= 0 && ix < in_nx) irow[ix] += wv * grow[ox];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

// Gradients w.r.t. weights and bias, accumulated into gw/gb.
template <class T>
void conv3d_backward_params(const Chans3<T>& in, const Chans3<T>& gout, int kz_n, int ky_n,
                            int kx_n, int stride, int pad, T* gw, T* gb) {
    const int co_n = gout.nc, ci_n = in.nc;
    const size_t ksz = size_t(kz_n) * ky_n * kx_n;
    for (int co = 0; co < co_n; ++co) {
        const T* goc = gout.chan(co);
        {   // bias: four independent accumulators, fixed summation DAG
            T s0 = 0, s1 = 0, s2 = 0, s3 = 0;
            const size_t n = gout.spatial();
            size_t i = 0;
            for (; i + 4 <= n; i += 4) {
                s0 += goc[i];
                s1 += goc[i + 1];
                s2 += goc[i + 2];
                s3 += goc[i + 3];
            }
            for (; i < n; ++i) s0 += goc[i];
            gb[co] += (s0 + s1) + (s2 + s3);
        }
        for (int ci = 0; ci < ci_n; ++ci) {
            const T* inc = in.chan(ci);
            for (int kz = 0; kz < kz_n; ++kz) {
                for (int ky = 0; ky < ky_n; ++ky) {
                    for (int kx = 0; kx < kx_n; ++kx) {
                        T s0 = 0, s1 = 0, s2 = 0, s3 = 0;
                        for (int oz = 0; oz < gout.nz; ++oz) {
                            const int iz = oz * stride + kz - pad;
                            if (iz < 0 || iz >= in.nz) continue;
                            for (int oy = 0; oy < gout.ny; ++oy) {
                                const int iy = oy * stride + ky - pad;
                                if (iy < 0 || iy >= in.ny) continue;
                                const T* grow = goc + (size_t(oz) * gout.ny + oy) * gout.nx;
                                const T* irow = inc + (size_t(iz) * in.ny + iy) * in.nx;
                                if (stride == 1) {
                                    const int off = kx - pad;
                                    const int lo = off < 0 ? -off : 0;
                                    const int hi =
                                        in.nx - off < gout.nx ? in.nx - off : gout.nx;
                                    const T* ir = irow + off;
                                    int ox = lo;
                                    for (; ox + 4 <= hi; ox += 4) {
                                        s0 += grow[ox] * ir[ox];
                                        s1 += grow[ox + 1] * ir[ox + 1];
                                        s2 += grow[ox + 2] * ir[ox + 2];
                                        s3 += grow[ox + 3] * ir[ox + 3];
                                    }
                                    for (; ox < hi; ++ox) s0 += grow[ox] * ir[ox];
                                } else {
                                    for (int ox = 0; ox < gout.nx; ++ox) {
                                        const int ix = ox * stride + kx - pad;
                                        if (ix >= 0 && ix < in.nx) s0 += grow[ox] * irow[ix];
                                    }
                                }
                            }
                        }
                        gw[(size_t(co) * ci_n + ci) * ksz + (size_t(kz) * ky_n + ky) * kx_n +
                           kx] += (s0 + s1) + (s2 + s3);
                    }
                }
            }
        }
    }
}

// ---- transposed conv3d, kernel 2x2x2, stride 2 (voxel-doubling upsample) ----
// Weights are (ci, co, kz, ky, kx): each input voxel paints a 2x2x2 block.

template <class T>
void tconv3d_forward(const Chans3<T>& in, const T* w, const T* b, int co_n, Chans3<T>& out) {
    out = Chans3<T>(co_n, in.nz * 2, in.ny * 2, in.nx * 2);
    const int ci_n = in.nc;
    for (int co = 0; co < co_n; ++co) {
        T* oc = out.chan(co);
        const size_t n = out.spatial();
        for (size_t i = 0; i < n; ++i) oc[i] = b[co];
    }
    for (int ci = 0; ci < ci_n; ++ci) {
        const T* inc = in.chan(ci);
        for (int co = 0; co < co_n; ++co) {
            T* oc = out.chan(co);
            const T* wk = w + (size_t(ci) * co_n + co) * 8;
            for (int z = 0; z < in.nz; ++z) {
                for (int y = 0; y < in.ny; ++y) {
                    const T* irow = inc + (size_t(z) * in.ny + y) * in.nx;
                    for (int kz = 0; kz < 2; ++kz) {
                        for (int ky = 0; ky < 2; ++ky) {
                            T* orow =
                                oc + (size_t(2 * z + kz) * out.ny + (2 * y + ky)) * out.nx;
                            const T w0 = wk[(size_t(kz) * 2 + ky) * 2 + 0];
                            const T w1 = wk[(size_t(kz) * 2 + ky) * 2 + 1];
                            for (int x = 0; x < in.nx; ++x) {
                                orow[2 * x] += w0 * irow[x];
                                orow[2 * x + 1] += w1 * irow[x];
                            }
                        }
                    }
                }
            }
        }
    }
}

template <class T>
void tconv3d_backward(const Chans3<T>& in, const Chans3<T>& gout, const T* w, Chans3<T>& gin,
                      T* gw, T* gb) {
    const int ci_n = in.nc, co_n = gout.nc;
    gin = Chans3<T>(ci_n, in.nz, in.ny, in.nx);
    for (int co = 0; co < co_n; ++co) {
        const T* goc = gout.chan(co);
        T s0 = 0, s1 = 0, s2 = 0, s3 = 0;
        const size_t n = gout.spatial();
        size_t i = 0;
        for (; i + 4 <= n; i += 4) {
            s0 += goc[i];
            s1 += goc[i + 1];
            s2 += goc[i + 2];
            s3 += goc[i + 3];
        }
        for (; i < n; ++i) s0 += goc[i];
        gb[co] += (s0 + s1) + (s2 + s3);
    }
    for (int ci = 0; ci < ci_n; ++ci) {
        const T* inc = in.chan(ci);
        T* gic = gin.chan(ci);
        for (int co = 0; co < co_n; ++co) {
            const T* goc = gout.chan(co);
            const T* wk = w + (size_t(ci) * co_n + co) * 8;
            T* gwk = gw + (size_t(ci) * co_n + co) * 8;
            for (int z = 0; z < in.nz; ++z) {
                for (int y = 0; y < in.ny; ++y) {
                    const T* irow = inc + (size_t(z) * in.ny + y) * in.nx;
                    T* girow = gic + (size_t(z) * in.ny + y) * in.nx;
                    for (int kz = 0; kz < 2; ++kz) {
                        for (int ky = 0; ky < 2; ++ky) {
                            const T* grow =
                                goc + (size_t(2 * z + kz) * gout.ny + (2 * y + ky)) * gout.nx;
                            const T w0 = wk[(size_t(kz) * 2 + ky) * 2 + 0];
                            const T w1 = wk[(size_t(kz) * 2 + ky) * 2 + 1];
                            T gw0 = 0, gw1 = 0;
                            for (int x = 0; x < in.nx; ++x) {
                                const T g0 = grow[2 * x];
                                const T g1 = grow[2 * x + 1];
                                girow[x] += w0 * g0 + w1 * g1;
                                gw0 += g0 * irow[x];
                                gw1 += g1 * irow[x];
                            }
                            gwk[(size_t(kz) * 2 + ky) * 2 + 0] += gw0;
                            gwk[(size_t(kz) * 2 + ky) * 2 + 1] += gw1;
                        }
                    }
                }
            }
        }
    }
}

// ---- instance normalization (per channel over spatial, biased variance) ----

inline constexpr double kInstanceNormEps = 1e-5;

template <class T>
struct InstNormCache {
    std::vector<T> mean, inv_std;  // per channel
};

template <class T>
void instnorm_forward(const Chans3<T>& in, const T* gamma, const T* beta, Chans3<T>& out,
                      InstNormCache<T>* cache) {
    out = Chans3<T>(in.nc, in.nz, in.ny, in.nx);
    if (cache) {
        cache->mean.assign(in.nc, T(0));
        cache->inv_std.assign(in.nc, T(0));
    }
    const size_t n = in.spatial();
    for (int c = 0; c < in.nc; ++c) {
        const T* x = in.chan(c);
        T s0 = 0, s1 = 0, s2 = 0, s3 = 0;
        size_t i = 0;
        for (; i + 4 <= n; i += 4) {
            s0 += x[i];
            s1 += x[i + 1];
            s2 += x[i + 2];
            s3 += x[i + 3];
        }
        for (; i < n; ++i) s0 += x[i];
        const T mean = ((s0 + s1) + (s2 + s3)) / T(n);
        T q0 = 0, q1 = 0, q2 = 0, q3 = 0;
        i = 0;
        for (; i + 4 <= n; i += 4) {
            const T d0 = x[i] - mean, d1 = x[i + 1] - mean, d2 = x[i + 2] - mean,
                    d3 = x[i + 3] - mean;
            q0 += d0 * d0;
            q1 += d1 * d1;
            q2 += d2 * d2;
            q3 += d3 * d3;
        }
        for (; i < n; ++i) {
            const T d = x[i] - mean;
            q0 += d * d;
        }
        const T var = ((q0 + q1) + (q2 + q3)) / T(n);
        const T inv_std = T(1) / std::sqrt(var + T(kInstanceNormEps));
        const T g = gamma[c], bb = beta[c];
        T* y = out.chan(c);
        for (size_t j = 0; j < n; ++j) y[j] = g * ((x[j] - mean) * inv_std) + bb;
        if (cache) {
            cache->mean[c] = mean;
            cache->inv_std[c] = inv_std;
        }
    }
}

template <class T>
void instnorm_backward(const Chans3<T>& in, const InstNormCache<T>& cache, const T* gamma,
                       const Chans3<T>& gout, Chans3<T>& gin, T* ggamma, T* gbeta) {
    gin = Chans3<T>(in.nc, in.nz, in.ny, in.nx);
    const size_t n = in.spatial();
    for (int c = 0; c < in.nc; ++c) {
        const T* x = in.chan(c);
        const T* go = gout.chan(c);
        T* gi = gin.chan(c);
        const T mean = cache.mean[c], inv_std = cache.inv_std[c], g = gamma[c];
        // sums of go and go*xhat
        T a0 = 0, a1 = 0, b0 = 0, b1 = 0;
        for (size_t i = 0; i < n; ++i) {
            const T xh = (x[i] - mean) * inv_std;
            if (i & 1) {
                a1 += go[i];
                b1 += go[i] * xh;
            } else {
                a0 += go[i];
                b0 += go[i] * xh;
            }
        }
        const T sum_go = a0 + a1;
        const T sum_go_xh = b0 + b1;
        ggamma[c] += sum_go_xh;
        gbeta[c] += sum_go;
        const T inv_n = T(1) / T(n);
        for (size_t i = 0; i < n; ++i) {
            const T xh = (x[i] - mean) * inv_std;
            gi[i] = g * inv_std * (go[i] - inv_n * sum_go - xh * inv_n * sum_go_xh);
        }
    }
}

// ---- leaky ReLU ----

inline constexpr double kLeakySlope = 0.01;

template <class T>
void leaky_relu_forward(Chans3<T>& x) {
    const T a = T(kLeakySlope);
    for (T& v : x.v) v = v > T(0) ? v : a * v;
}

// Uses the forward output; sign is preserved by the activation.
template <class T>
void leaky_relu_backward(const Chans3<T>& y, Chans3<T>& g) {
    const T a = T(kLeakySlope);
    for (size_t i = 0; i < g.v.size(); ++i) g.v[i] = y.v[i] > T(0) ? g.v[i] : a * g.v[i];
}

// ---- dropout (inverted scaling; mask stored for the backward pass) ----

template <class T>
void dropout_forward(Chans3<T>& x, double rate, uint64_t seed, std::vector<T>* mask_out) {
    if (rate <= 0.0) {
        if (mask_out) mask_out->assign(x.v.size(), T(1));
        return;
    }
    Rng rng(seed);
    const T scale = T(1.0 / (1.0 - rate));
    if (mask_out) mask_out->resize(x.v.size());
    for (size_t i = 0; i < x.v.size(); ++i) {
        const T m = rng.uniform() < rate ? T(0) : scale;
        x.v[i] *= m;
        if (mask_out) (*mask_out)[i] = m;
    }
}

template <class T>
void dropout_backward(const std::vector<T>& mask, Chans3<T>& g) {
    for (size_t i = 0; i < g.v.size(); ++i) g.v[i] *= mask[i];
}

// ---- per-voxel softmax over channels ----

template <class T>
void softmax_channels(const Chans3<T>& logits, Chans3<T>& probs) {
    probs = Chans3<T>(logits.nc, logits.nz, logits.ny, logits.nx);
    const size_t n = logits.spatial();
    const int C = logits.nc;
    for (size_t i = 0; i < n; ++i) {
        T mx = logits.v[i];
        for (int c = 1; c < C; ++c) mx = std::max(mx, logits.v[size_t(c) * n + i]);
        T denom = 0;
        for (int c = 0; c < C; ++c) {
            const T e = std::exp(logits.v[size_t(c) * n + i] - mx);
            probs.v[size_t(c) * n + i] = e;
            denom += e;
        }
        const T inv = T(1) / denom;
        for (int c = 0; c < C; ++c) probs.v[size_t(c) * n + i] *= inv;
    }
}

// dL/dlogits from dL/dprobs: dz_c = p_c * (g_c - sum_j g_j p_j).
template <class T>
void softmax_backward(const Chans3<T>& probs, const Chans3<T>& gprobs, Chans3<T>& glogits) {
    glogits = Chans3<T>(probs.nc, probs.nz, probs.ny, probs.nx);
    const size_t n = probs.spatial();
    const int C = probs.nc;
    for (size_t i = 0; i < n; ++i) {
        T dot = 0;
        for (int c = 0; c < C; ++c)
            dot += gprobs.v[size_t(c) * n + i] * probs.v[size_t(c) * n + i];
        for (int c = 0; c < C; ++c) {
            const size_t k = size_t(c) * n + i;
            glogits.v[k] = probs.v[k] * (gprobs.v[k] - dot);
        }
    }
}

// ---- small dense matrix helpers (attention-sized problems) ----

template <class T>
void mm_nn(const Mat<T>& a, const Mat<T>& b, Mat<T>& c) {  // c = a * b
    c = Mat<T>(a.rows, b.cols);
    for (int i = 0; i < a.rows; ++i) {
        T* crow = c.row(i);
        for (int k = 0; k < a.cols; ++k) {
            const T av = a.at(i, k);
            const T* brow = b.row(k);
            for (int j = 0; j < b.cols; ++j) crow[j] += av * brow[j];
        }
    }
}

template <class T>
void mm_nt(const Mat<T>& a, const Mat<T>& b, Mat<T>& c) {  // c = a * b^T
    c = Mat<T>(a.rows, b.rows);
    for (int i = 0; i < a.rows; ++i) {
        const T* arow = a.row(i);
        for (int j = 0; j < b.rows; ++j) {
            const T* brow = b.row(j);
            T s0 = 0, s1 = 0;
            int k = 0;
            for (; k + 2 <= a.cols; k += 2) {
                s0 += arow[k] * brow[k];
                s1 += arow[k + 1] * brow[k + 1];
            }
            for (; k < a.cols; ++k) s0 += arow[k] * brow[k];
            c.at(i, j) = s0 + s1;
        }
    }
}

template <class T>
void mm_tn(const Mat<T>& a, const Mat<T>& b, Mat<T>& c) {  // c = a^T * b
    c = Mat<T>(a.cols, b.cols);
    for (int k = 0; k < a.rows; ++k) {
        const T* arow = a.row(k);
        const T* brow = b.row(k);
        for (int i = 0; i < a.cols; ++i) {
            const T av = arow[i];
            T* crow = c.row(i);
            for (int j = 0; j < b.cols; ++j) crow[j] += av * brow[j];
        }
    }
}

}  // namespace ugcemt

// SPDX-License-Identifier: Apache-2.0
//
// Supervised objective (equal-weight cross-entropy + soft Dice on softmax
// probabilities), the uncertainty-weighted consistency penalty, and the
// Gaussian ramp-up schedule that balances the two.
#pragma once

#include <cmath>

#include "core/errors.hpp"
#include "core/grid.hpp"
#include "core/nn_kernels.hpp"

namespace ugcemt {

inline constexpr double kDiceSmooth = 1e-5;
inline constexpr double kLambdaMax = 0.1;

struct LossBreakdown {
    double supervised = 0.0;
    double consistency = 0.0;
    double lambda_t = 0.0;
    double total = 0.0;
};

// lambda(t) = 0.1 * exp(-5 (1 - t/t_max)^2); non-decreasing, 0.1 at t_max.
inline double rampup(long t, long t_max) {
    if (t_max <= 0) throw ConfigError("t_max must be positive");
    double r = double(t) / double(t_max);
    r = r < 0.0 ? 0.0 : (r > 1.0 ? 1.0 : r);
    return kLambdaMax * std::exp(-5.0 * (1.0 - r) * (1.0 - r));
}

inline LossBreakdown total_objective(double sup, double cons, long t, long t_max) {
    if (!std::isfinite(sup) || !std::isfinite(cons))
        throw NumericError("non-finite loss component");
    LossBreakdown b;
    b.supervised = sup;
    b.consistency = cons;
    b.lambda_t = rampup(t, t_max);
    b.total = sup + b.lambda_t * cons;
    return b;
}

namespace detail {

template <class T>
void check_labels(const Chans3<T>& logits, const LabelMask& labels) {
    if (labels.nz != logits.nz || labels.ny != logits.ny || labels.nx != logits.nx)
        throw ShapeError("label shape does not match logits");
    for (uint8_t l : labels.v)
        if (int(l) >= logits.nc) throw DataError("label out of range");
}

}  // namespace detail

// 0.5 * CE + 0.5 * soft Dice loss. Dice is computed per foreground class on
// the softmax probabilities and averaged; gradient (w.r.t. logits) lands in
// *glogits when given.
template <class T>
double supervised_loss(const Chans3<T>& logits, const LabelMask& labels,
                       Chans3<T>* glogits = nullptr) {
    detail::check_labels(logits, labels);
    Chans3<T> probs;
    softmax_channels(logits, probs);
    const size_t n = probs.spatial();
    const int C = probs.nc;

    double ce = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const double p = double(probs.v[size_t(labels.v[i]) * n + i]);
        ce -= std::log(p > 1e-30 ? p : 1e-30);
    }
    ce /= double(n);

    double dice_loss = 0.0;
    std::vector<double> inter(C, 0.0), psum(C, 0.0), gsum(C, 0.0);
    for (int c = 1; c < C; ++c) {
        const T* pc = probs.chan(c);
        double pi = 0, ps = 0, gs = 0;
        for (size_t i = 0; i < n; ++i) {
            const double pv = double(pc[i]);
            const double gv = labels.v[i] == c ? 1.0 : 0.0;
            pi += pv * gv;
            ps += pv;
            gs += gv;
        }
        inter[c] = pi;
        psum[c] = ps;
        gsum[c] = gs;
        dice_loss += 1.0 - (2.0 * pi + kDiceSmooth) / (ps + gs + kDiceSmooth);
    }
    dice_loss /= double(C - 1);

    if (glogits) {
        // CE grad fused with softmax: (p - onehot)/n, then half weight.
        Chans3<T> gprobs(C, logits.nz, logits.ny, logits.nx);
        const double inv_nfg = 1.0 / double(C - 1);
        for (int c = 1; c < C; ++c) {
            const double a = 2.0 * inter[c] + kDiceSmooth;
            const double b = psum[c] + gsum[c] + kDiceSmooth;
            T* gp = gprobs.chan(c);
            for (size_t i = 0; i < n; ++i) {
                const double gv = labels.v[i] == c ? 1.0 : 0.0;
                gp[i] = T(-0.5 * inv_nfg * (2.0 * gv * b - a) / (b * b));
            }
        }
        softmax_backward(probs, gprobs, *glogits);
        const double inv_n = 1.0 / double(n);
        for (int c = 0; c < C; ++c) {
            T* gl = glogits->chan(c);
            const T* pc = probs.chan(c);
            for (size_t i = 0; i < n; ++i) {
                const double onehot = labels.v[i] == c ? 1.0 : 0.0;
                gl[i] += T(0.5 * inv_n * (double(pc[i]) - onehot));
            }
        }
    }
    return 0.5 * ce + 0.5 * dice_loss;
}

// Mean over voxels of U(x) * ||p_s(x) - p_t(x)||_2^2 (sum over classes).
// weight == nullptr means uniform 1. gprobs, when given, receives the
// gradient w.r.t. the student probabilities.
template <class T>
double consistency_loss(const Chans3<T>& sp, const Chans3<T>& tp, const Grid3<T>* weight,
                        Chans3<T>* gprobs = nullptr) {
    if (!sp.same_shape(tp)) throw ShapeError("prediction shapes differ");
    const size_t n = sp.spatial();
    if (weight && (weight->nz != sp.nz || weight->ny != sp.ny || weight->nx != sp.nx))
        throw ShapeError("weight shape does not match predictions");
    const int C = sp.nc;
    double acc = 0.0;
    if (gprobs) *gprobs = Chans3<T>(C, sp.nz, sp.ny, sp.nx);
    const double inv_n = 1.0 / double(n);
    for (size_t i = 0; i < n; ++i) {
        const double u = weight ? double(weight->v[i]) : 1.0;
        double d2 = 0.0;
        for (int c = 0; c < C; ++c) {
            const size_t k = size_t(c) * n + i;
            const double d = double(sp.v[k]) - double(tp.v[k]);
            d2 += d * d;
            if (gprobs) gprobs->v[k] = T(2.0 * u * d * inv_n);
        }
        acc += u * d2;
    }
    return acc * inv_n;
}

// Pseudo-label variant: mean CE of the student against hard teacher labels.
template <class T>
double pseudo_label_ce(const Chans3<T>& logits, const LabelMask& pseudo,
                       Chans3<T>* glogits = nullptr) {
    detail::check_labels(logits, pseudo);
    Chans3<T> probs;
    softmax_channels(logits, probs);
    const size_t n = probs.spatial();
    double ce = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const double p = double(probs.v[size_t(pseudo.v[i]) * n + i]);
        ce -= std::log(p > 1e-30 ? p : 1e-30);
    }
    ce /= double(n);
    if (glogits) {
        *glogits = Chans3<T>(probs.nc, probs.nz, probs.ny, probs.nx);
        const double inv_n = 1.0 / double(n);
        for (int c = 0; c < probs.nc; ++c) {
            T* gl = glogits->chan(c);
            const T* pc = probs.chan(c);
            for (size_t i = 0; i < n; ++i) {
                const double onehot = pseudo.v[i] == c ? 1.0 : 0.0;
                gl[i] = T(inv_n * (double(pc[i]) - onehot));
            }
        }
    }
    return ce;
}

}  // namespace ugcemt

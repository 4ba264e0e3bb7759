// SPDX-License-Identifier: Apache-2.0
//
// Sharpness-aware minimization: ascend by rho along the globally normalized
// gradient, take the gradient there, descend from the original point with
// momentum and decoupled weight decay. Exactly two gradient evaluations per
// step.
#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "core/errors.hpp"

namespace ugcemt {

struct SamConfig {
    double rho = 0.05;
    double lr = 0.01;
    double momentum = 0.9;
    double weight_decay = 1e-4;
    double lr_decay_factor = 0.1;
    long lr_decay_every = 2500;
};

template <class T>
struct SamState {
    std::vector<T> momentum_buf;
    long step = 0;
};

namespace detail {

template <class T>
double l2_norm(const std::vector<T>& g) {
    double s0 = 0, s1 = 0, s2 = 0, s3 = 0;
    size_t i = 0;
    for (; i + 4 <= g.size(); i += 4) {
        s0 += double(g[i]) * double(g[i]);
        s1 += double(g[i + 1]) * double(g[i + 1]);
        s2 += double(g[i + 2]) * double(g[i + 2]);
        s3 += double(g[i + 3]) * double(g[i + 3]);
    }
    for (; i < g.size(); ++i) s0 += double(g[i]) * double(g[i]);
    return std::sqrt((s0 + s1) + (s2 + s3));
}

template <class T>
void check_finite(const std::vector<T>& g, const char* what) {
    for (T v : g)
        if (!std::isfinite(double(v))) throw NumericError(std::string("non-finite ") + what);
}

}  // namespace detail

// params + rho * g / ||g||_2; unchanged when ||g||_2 < 1e-12.
template <class T>
std::vector<T> sam_perturbed(const std::vector<T>& params, const std::vector<T>& grads,
                             double rho) {
    if (params.size() != grads.size()) throw StateError("gradient size mismatch");
    if (rho <= 0.0) throw ConfigError("rho must be positive");
    detail::check_finite(grads, "gradient");
    std::vector<T> out = params;
    const double norm = detail::l2_norm(grads);
    if (norm < 1e-12) return out;
    const double scale = rho / norm;
    for (size_t i = 0; i < out.size(); ++i)
        out[i] = T(double(out[i]) + scale * double(grads[i]));
    return out;
}

// Evaluates loss and gradient at `params`; must be deterministic within a step.
template <class T>
using LossEval = std::function<double(const std::vector<T>& params, std::vector<T>& grads)>;

template <class T>
double current_lr(const SamConfig& cfg, long step) {
    double lr = cfg.lr;
    if (cfg.lr_decay_every > 0)
        lr *= std::pow(cfg.lr_decay_factor, double(step / cfg.lr_decay_every));
    return lr;
}

// One SAM step. Returns the loss at the unperturbed parameters.
template <class T>
double sam_step(const LossEval<T>& eval, SamState<T>& st, std::vector<T>& params,
                const SamConfig& cfg) {
    if (st.momentum_buf.empty()) st.momentum_buf.assign(params.size(), T(0));
    if (st.momentum_buf.size() != params.size()) throw StateError("optimizer state mismatch");

    std::vector<T> g1(params.size(), T(0));
    const double loss = eval(params, g1);
    if (!std::isfinite(loss))
        throw NumericError("non-finite loss at step " + std::to_string(st.step));
    std::vector<T> adv = cfg.rho > 0.0 ? sam_perturbed(params, g1, cfg.rho) : params;

    std::vector<T> g2(params.size(), T(0));
    const double adv_loss = eval(adv, g2);
    if (!std::isfinite(adv_loss))
        throw NumericError("non-finite perturbed loss at step " + std::to_string(st.step));
    detail::check_finite(g2, "gradient");

    const double lr = current_lr<T>(cfg, st.step);
    for (size_t i = 0; i < params.size(); ++i) {
        const double v = cfg.momentum * double(st.momentum_buf[i]) + double(g2[i]);
        st.momentum_buf[i] = T(v);
        params[i] =
            T(double(params[i]) - lr * v - lr * cfg.weight_decay * double(params[i]));
    }
    st.step += 1;
    return loss;
}

}  // namespace ugcemt

// SPDX-License-Identifier: Apache-2.0
//
// Exponential-weighted-average teacher. The teacher holds parameters only;
// gradients never attach to it.
#pragma once

#include "core/errors.hpp"
#include "core/params.hpp"

namespace ugcemt {

inline constexpr double kDefaultEwaBeta = 0.99;

struct TeacherState {
    ParamSet params;
    double beta = kDefaultEwaBeta;
    long steps_seen = 0;
};

// Elementwise p_t <- beta * p_t + (1 - beta) * p_s, accumulated in double so
// each result stays inside the convex hull of its two inputs.
template <class T>
void ewa_apply(std::vector<T>& teacher, const std::vector<T>& student, double beta) {
    if (teacher.size() != student.size()) throw StateError("EWA parameter size mismatch");
    for (size_t i = 0; i < teacher.size(); ++i)
        teacher[i] = T(beta * double(teacher[i]) + (1.0 - beta) * double(student[i]));
}

inline TeacherState init_teacher(const ParamSet& student, double beta = kDefaultEwaBeta) {
    if (beta < 0.0 || beta > 1.0) throw ConfigError("ewa beta must be in [0,1]");
    TeacherState t;
    t.params = student;  // bitwise copy
    t.beta = beta;
    t.steps_seen = 0;
    return t;
}

inline void ewa_update(TeacherState& state, const ParamSet& student) {
    if (!state.params.layout->congruent(*student.layout))
        throw StateError("teacher/student layouts are not congruent");
    ewa_apply(state.params.data, student.data, state.beta);
    state.steps_seen += 1;
}

}  // namespace ugcemt

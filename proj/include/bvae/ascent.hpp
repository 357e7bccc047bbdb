#pragma once

#include <functional>
#include <vector>

#include "bvae/gaussian.hpp"

namespace bvae {

/// Objective to maximize. Writes the gradient into `grad` and may raise `flag`
/// (used for the exponent-clamp diagnostic).
using AscentObjective = std::function<double(const Vector& x, Vector& grad, bool& flag)>;

struct AscentSettings {
    // Warm-up: adaptive-moment ascent whose step shrinks as lr / (1 + t / decay)
    // and halves whenever a step would lower the objective.
    double adam_learning_rate = 0.02;
    Index adam_iters = 2000;
    double adam_decay = 500.0;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;

    // Polish: limited-memory quasi-Newton ascent with backtracking line search.
    Index lbfgs_memory = 12;
    // The polish keeps going until max|grad| <= grad_tol * polish_factor so the
    // reported point sits comfortably inside the tolerance.
    double polish_factor = 1e-2;

    Index max_iters = 50000;
    double grad_tol = 1e-8;

    // Accepted iterates may lower the objective by at most this much (relative to 1 + |f|);
    // covers roundoff once increments fall below double resolution.
    double line_search_tol = 1e-12;

    bool record_trajectory = false;
};

struct AscentResult {
    Vector x;
    double value = 0.0;
    Vector grad;
    double grad_max = 0.0;
    Index iterations = 0;
    bool flag = false;
    std::vector<double> trajectory;  // objective at each accepted iterate, starting point first
};

AscentResult maximize(const AscentObjective& objective, Vector x0, const AscentSettings& settings);

}  // namespace bvae

#include "bvae/ascent.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

namespace bvae {

namespace {

struct Point {
    Vector x;
    double value = 0.0;
    Vector grad;
    bool flag = false;

    double grad_max() const { return grad.size() == 0 ? 0.0 : grad.cwiseAbs().maxCoeff(); }
};

class Tracker {
public:
    Tracker(const AscentObjective& objective, const AscentSettings& settings)
        : objective_(objective), settings_(settings) {}

    Point eval(Vector x) const {
        Point p;
        p.x = std::move(x);
        p.grad.resize(p.x.size());
        p.value = objective_(p.x, p.grad, p.flag);
        return p;
    }

    double slack(double value) const { return settings_.line_search_tol * (1.0 + std::abs(value)); }

private:
    const AscentObjective& objective_;
    const AscentSettings& settings_;
};

struct CurvaturePair {
    Vector s;
    Vector y;  // change in the gradient of -f
    double rho;
};

// Two-loop recursion for the ascent direction (inverse-Hessian estimate of -f).
Vector lbfgs_direction(const Vector& grad, const std::deque<CurvaturePair>& memory) {
    Vector q = -grad;  // gradient of -f
    std::vector<double> alpha(memory.size());
    for (std::size_t i = memory.size(); i-- > 0;) {
        alpha[i] = memory[i].rho * memory[i].s.dot(q);
        q -= alpha[i] * memory[i].y;
    }
    if (!memory.empty()) {
        const auto& last = memory.back();
        q *= last.s.dot(last.y) / last.y.squaredNorm();
    } else {
        const double g = grad.cwiseAbs().maxCoeff();
        q *= g > 0.0 ? std::min(1.0, 1.0 / g) : 1.0;
    }
    for (std::size_t i = 0; i < memory.size(); ++i) {
        const double b = memory[i].rho * memory[i].y.dot(q);
        q += (alpha[i] - b) * memory[i].s;
    }
    return -q;
}

}  // namespace

AscentResult maximize(const AscentObjective& objective, Vector x0, const AscentSettings& settings) {
    const Tracker tracker(objective, settings);
    Point current = tracker.eval(std::move(x0));
    AscentResult result;
    Index iterations = 0;
    auto record = [&](const Point& p) {
        if (settings.record_trajectory) {
            result.trajectory.push_back(p.value);
        }
    };
    record(current);

    // Warm-up.
    if (current.grad_max() > settings.grad_tol) {
        Vector m = Vector::Zero(current.x.size());
        Vector v = Vector::Zero(current.x.size());
        double scale = 1.0;
        double b1t = 1.0;
        double b2t = 1.0;
        for (Index t = 1; t <= settings.adam_iters && iterations < settings.max_iters; ++t) {
            ++iterations;
            m = settings.adam_beta1 * m + (1.0 - settings.adam_beta1) * current.grad;
            v = settings.adam_beta2 * v + (1.0 - settings.adam_beta2) * current.grad.cwiseAbs2();
            b1t *= settings.adam_beta1;
            b2t *= settings.adam_beta2;
            const double lr = scale * settings.adam_learning_rate /
                              (1.0 + static_cast<double>(t) / settings.adam_decay);
            const Vector step = (lr / (1.0 - b1t)) *
                                (m.array() / ((v.array() / (1.0 - b2t)).sqrt() + 1e-12)).matrix();
            Point candidate = tracker.eval(current.x + step);
            if (!std::isfinite(candidate.value) || candidate.value < current.value - tracker.slack(current.value)) {
                scale *= 0.5;
                continue;
            }
            current = std::move(candidate);
            record(current);
            if (current.grad_max() <= settings.grad_tol) {
                break;
            }
        }
    }

    // Polish.
    const double target = settings.grad_tol * settings.polish_factor;
    std::deque<CurvaturePair> memory;
    while (iterations < settings.max_iters && current.grad_max() > target) {
        ++iterations;
        Vector direction = lbfgs_direction(current.grad, memory);
        double slope = current.grad.dot(direction);
        if (!(slope > 0.0)) {
            memory.clear();
            direction = lbfgs_direction(current.grad, memory);
            slope = current.grad.dot(direction);
        }
        bool accepted = false;
        Point candidate;
        for (double step = 1.0; step > 1e-20; step *= 0.5) {
            candidate = tracker.eval(current.x + step * direction);
            if (!std::isfinite(candidate.value)) {
                continue;
            }
            const bool armijo = candidate.value >= current.value + 1e-4 * step * slope;
            // Below double resolution in f: fall back to requiring progress in the gradient.
            const bool flat = candidate.value >= current.value - tracker.slack(current.value) &&
                              candidate.grad_max() < current.grad_max();
            if (armijo || flat) {
                accepted = true;
                break;
            }
        }
        if (!accepted) {
            if (memory.empty()) {
                break;  // stagnated
            }
            memory.clear();
            continue;
        }
        CurvaturePair pair{candidate.x - current.x, current.grad - candidate.grad, 0.0};
        const double sy = pair.s.dot(pair.y);
        if (sy > 1e-12 * pair.s.norm() * pair.y.norm()) {
            pair.rho = 1.0 / sy;
            memory.push_back(std::move(pair));
            if (static_cast<Index>(memory.size()) > settings.lbfgs_memory) {
                memory.pop_front();
            }
        }
        current = std::move(candidate);
        record(current);
    }

    result.x = std::move(current.x);
    result.value = current.value;
    result.grad = std::move(current.grad);
    result.grad_max = result.grad.size() == 0 ? 0.0 : result.grad.cwiseAbs().maxCoeff();
    result.iterations = iterations;
    result.flag = current.flag;
    return result;
}

}  // namespace bvae

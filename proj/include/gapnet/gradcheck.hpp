#pragma once

#include <cmath>
#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "gapnet/tape.hpp"

namespace gapnet {

enum class GradMode { value_only, with_grad };

struct GradCheckReport {
    double max_rel_err = 0.0;
    std::size_t param_index = 0;
    std::size_t coord = 0;
    double analytic = 0.0;
    double numeric = 0.0;
};

// Central-difference oracle for reverse-mode gradients. `fn` must be a
// deterministic scalar loss (fixed rng, inference-mode norm/dropout); it is
// called once in with_grad mode to populate parameter grads and then twice
// per parameter coordinate in value_only mode. Relative error uses the
// denominator max(|analytic|, |numeric|, 1e-8).
template <typename S, typename Fn>
GradCheckReport check_gradients(Fn&& fn, const std::vector<Parameter<S>*>& params,
                                double h = 1e-5) {
    for (auto* p : params) p->zero_grad();
    fn(GradMode::with_grad);
    std::vector<std::vector<S>> analytic;
    analytic.reserve(params.size());
    for (auto* p : params) analytic.push_back(p->grad.data);

    GradCheckReport rep;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        auto& value = params[pi]->value;
        for (std::size_t i = 0; i < value.size(); ++i) {
            const S saved = value[i];
            value[i] = saved + static_cast<S>(h);
            const double fp = static_cast<double>(fn(GradMode::value_only));
            value[i] = saved - static_cast<S>(h);
            const double fm = static_cast<double>(fn(GradMode::value_only));
            value[i] = saved;
            const double numeric = (fp - fm) / (2.0 * h);
            const double a = static_cast<double>(analytic[pi][i]);
            const double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-8});
            const double rel = std::fabs(a - numeric) / denom;
            if (rel > rep.max_rel_err) {
                rep.max_rel_err = rel;
                rep.param_index = pi;
                rep.coord = i;
                rep.analytic = a;
                rep.numeric = numeric;
            }
        }
    }
    return rep;
}

template <typename S, typename Fn>
GradCheckReport check_gradients(Fn&& fn, std::initializer_list<Parameter<S>*> params,
                                double h = 1e-5) {
    return check_gradients(std::forward<Fn>(fn), std::vector<Parameter<S>*>(params), h);
}

// Moves parameters to a generic position before a finite-difference check.
// Freshly initialized models put zero-input activations (self edges through
// zero biases) exactly on the LeakyReLU kink, where a central difference
// straddles two slopes and reports a spurious O(1) error.
template <typename S>
void jitter_params(const std::vector<Parameter<S>*>& params, std::mt19937& rng,
                   double amplitude = 0.05) {
    std::uniform_real_distribution<double> u(-amplitude, amplitude);
    for (auto* p : params) {
        for (auto& v : p->value.data) v += static_cast<S>(u(rng));
    }
}

}  // namespace gapnet

#pragma once

// Central finite-difference gradient checker. The loss closure must be
// deterministic given the parameter values (dropout off); it is evaluated
// once with recording to collect autodiff grads, then re-evaluated under
// NoGrad for the +/- h probes.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "htn/common.hpp"
#include "htn/params.hpp"
#include "htn/tensor.hpp"

namespace htn {

struct GradCheckEntry {
    std::string name;
    double max_rel_err = 0.0;
    double max_abs_err = 0.0;
    std::int64_t checked = 0;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;
    double max_rel_err = 0.0;
    double tolerance = 0.0;

    bool pass() const { return max_rel_err < tolerance; }
};

// Relative error with a floored denominator: tiny true gradients are judged
// against the floor instead of exploding the ratio.
inline double grad_rel_err(double a, double b, double floor_ = 1e-3) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor_});
}

// Checks d(loss)/d(param) for each named parameter against central
// differences. Large parameters are probed at up to `max_probes` seeded
// random elements; smaller ones exhaustively.
template <class S, class LossFn>
GradCheckReport finite_diff_check(LossFn loss_fn, ParameterStore<S>& params,
                                  const std::vector<std::string>& names, double tolerance,
                                  double h = 1e-5, std::int64_t max_probes = 200,
                                  std::uint64_t probe_seed = 1234) {
    static_assert(sizeof(S) == 8, "finite differences need double precision");
    GradCheckReport report;
    report.tolerance = tolerance;

    params.zero_grads();
    TensorT<S> loss = loss_fn();
    loss.backward();

    std::map<std::string, std::vector<S>> analytic;
    for (const auto& n : names) {
        auto& t = params.get(n);
        analytic[n] = t.has_grad() ? t.grad() : std::vector<S>(t.vec().size(), S(0));
    }
    params.zero_grads();

    NoGradGuard ng;
    for (const auto& n : names) {
        auto& t = params.get(n);
        GradCheckEntry entry;
        entry.name = n;
        const std::int64_t numel = t.numel();
        std::vector<std::int64_t> probes;
        if (numel <= max_probes) {
            probes.resize(static_cast<std::size_t>(numel));
            for (std::int64_t i = 0; i < numel; ++i) probes[static_cast<std::size_t>(i)] = i;
        } else {
            Rng rng = make_rng(derive_seed(probe_seed, fnv1a(n)));
            std::uniform_int_distribution<std::int64_t> pick(0, numel - 1);
            for (std::int64_t k = 0; k < max_probes; ++k) probes.push_back(pick(rng));
        }
        for (std::int64_t idx : probes) {
            const S saved = t.data()[idx];
            t.data()[idx] = saved + static_cast<S>(h);
            const double fp = static_cast<double>(loss_fn().item());
            t.data()[idx] = saved - static_cast<S>(h);
            const double fm = static_cast<double>(loss_fn().item());
            t.data()[idx] = saved;
            const double fd = (fp - fm) / (2.0 * h);
            const double ad = static_cast<double>(analytic[n][static_cast<std::size_t>(idx)]);
            entry.max_abs_err = std::max(entry.max_abs_err, std::abs(ad - fd));
            entry.max_rel_err = std::max(entry.max_rel_err, grad_rel_err(ad, fd));
            ++entry.checked;
        }
        report.max_rel_err = std::max(report.max_rel_err, entry.max_rel_err);
        report.entries.push_back(std::move(entry));
    }
    return report;
}

}  // namespace htn

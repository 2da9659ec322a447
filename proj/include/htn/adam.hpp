#pragma once

// Adam with bias correction over a named subset of a ParameterStore. Each
// training phase owns its own instance, so first/second moments stay specific
// to the loss that produced them.

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "htn/common.hpp"
#include "htn/params.hpp"

namespace htn {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

template <class S>
class Adam {
  public:
    Adam(ParameterStore<S>& store, std::vector<std::string> param_names, AdamConfig cfg = {})
        : store_(&store), names_(std::move(param_names)), cfg_(cfg) {
        for (const auto& n : names_) {
            const auto& t = store_->get(n);
            moments_[n] = Moments{std::vector<S>(t.vec().size(), S(0)),
                                  std::vector<S>(t.vec().size(), S(0))};
        }
    }

    const std::vector<std::string>& param_names() const { return names_; }
    long step_count() const { return step_; }
    const AdamConfig& config() const { return cfg_; }

    // One update over every owned parameter; requires grads populated and
    // zeroes them afterwards.
    void step() {
        ++step_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
        for (const auto& name : names_) {
            auto& t = store_->get(name);
            if (!t.has_grad())
                throw ContractError("adam step: parameter '" + name + "' has no gradient");
            auto& m = moments_[name];
            S* p = t.data();
            const std::vector<S>& g = t.grad();
            for (std::size_t i = 0; i < g.size(); ++i) {
                const double gi = static_cast<double>(g[i]);
                const double mi = cfg_.beta1 * static_cast<double>(m.m[i]) + (1.0 - cfg_.beta1) * gi;
                const double vi = cfg_.beta2 * static_cast<double>(m.v[i]) + (1.0 - cfg_.beta2) * gi * gi;
                m.m[i] = static_cast<S>(mi);
                m.v[i] = static_cast<S>(vi);
                const double mhat = mi / bc1;
                const double vhat = vi / bc2;
                p[i] = static_cast<S>(static_cast<double>(p[i]) -
                                      cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps));
            }
            t.zero_grad();
        }
    }

  private:
    struct Moments {
        std::vector<S> m, v;
    };

    ParameterStore<S>* store_;
    std::vector<std::string> names_;
    AdamConfig cfg_;
    std::map<std::string, Moments> moments_;
    long step_ = 0;
};

}  // namespace htn

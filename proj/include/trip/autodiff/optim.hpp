#pragma once

#include <cmath>
#include <string>
#include <unordered_map>

#include "trip/autodiff/tensor.hpp"

namespace trip::ad {

struct AdamWConfig {
    double lr = 5e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-6;
};

// AdamW with decoupled weight decay and bias correction. Moment state is
// keyed by parameter name; a parameter that receives no update keeps its
// bits. Weight decay is applied as a separate multiplicative shrink, so a
// zero-gradient update scales the parameter by exactly (1 - lr * wd).
template <class S>
class AdamW {
public:
    explicit AdamW(AdamWConfig cfg = {}) : cfg_(cfg) {}

    const AdamWConfig& config() const { return cfg_; }

    void update(const std::string& name, Tensor<S>& param, const Tensor<S>& grad) {
        update(name, param, grad, cfg_.lr);
    }

    void update(const std::string& name, Tensor<S>& param, const Tensor<S>& grad, double lr) {
        if (!param.same_shape(grad)) throw internal_error("adamw: grad shape mismatch");
        State& st = state_[name];
        if (st.m.numel() == 0) {
            st.m = Tensor<S>(param.shape);
            st.v = Tensor<S>(param.shape);
        }
        ++st.t;
        double bc1 = 1.0 - std::pow(cfg_.beta1, double(st.t));
        double bc2 = 1.0 - std::pow(cfg_.beta2, double(st.t));
        S b1 = S(cfg_.beta1), b2 = S(cfg_.beta2);
        S decay = S(1.0 - lr * cfg_.weight_decay);
        for (size_t i = 0; i < param.numel(); ++i) {
            S g = grad[i];
            st.m[i] = b1 * st.m[i] + (S(1) - b1) * g;
            st.v[i] = b2 * st.v[i] + (S(1) - b2) * g * g;
            double mhat = double(st.m[i]) / bc1;
            double vhat = double(st.v[i]) / bc2;
            param[i] = param[i] * decay - S(lr * mhat / (std::sqrt(vhat) + cfg_.eps));
        }
    }

    void reset() { state_.clear(); }

private:
    struct State {
        Tensor<S> m, v;
        int64_t t = 0;
    };
    AdamWConfig cfg_;
    std::unordered_map<std::string, State> state_;
};

}  // namespace trip::ad

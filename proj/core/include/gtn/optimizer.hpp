#pragma once

#include <cmath>
#include <functional>

#include "gtn/param_set.hpp"

namespace gtn {

// Per-parameter RMSProp second-moment accumulators plus hyperparameters.
struct OptimizerState {
    double learning_rate = 7e-4;
    double decay = 0.99;
    double epsilon = 0.1;
    ParameterSet accumulators; // same names/shapes as the parameters it serves

    static OptimizerState for_params(const ParameterSet& params, double lr = 7e-4,
                                     double decay = 0.99, double eps = 0.1) {
        OptimizerState st;
        st.learning_rate = lr;
        st.decay = decay;
        st.epsilon = eps;
        for (size_t i = 0; i < params.size(); ++i)
            st.accumulators.add(params.name_at(i), Tensor::zeros(params.value_at(i).shape));
        return st;
    }
};

// acc <- decay*acc + (1-decay)*g^2;  p <- p - lr*g/sqrt(acc + eps).
// Gradients are read from `grads`' gradient slots (pass the set backward()
// filled, typically the worker-local one).
inline void rmsprop_update(ParameterSet& params, const ParameterSet& grads, OptimizerState& st) {
    if (!params.same_layout(grads)) throw UsageError("rmsprop: gradient layout mismatch");
    if (!params.same_layout(st.accumulators)) throw UsageError("rmsprop: optimizer state mismatch");
    for (size_t i = 0; i < params.size(); ++i) {
        Tensor& p = params.value_at(i);
        const Tensor& g = grads.grad_at(i);
        Tensor& acc = st.accumulators.value_at(i);
        for (size_t j = 0; j < p.data.size(); ++j) {
            double gj = g.data[j];
            acc.data[j] = st.decay * acc.data[j] + (1.0 - st.decay) * gj * gj;
            p.data[j] -= st.learning_rate * gj / std::sqrt(acc.data[j] + st.epsilon);
        }
    }
}

// Central-difference gradient estimate of a deterministic scalar loss:
// (f(p+h) - f(p-h)) / 2h per scalar parameter. The estimates are returned in
// the VALUE slots of a parameter set shaped like `params`.
inline ParameterSet finite_difference_gradient(const std::function<double(ParameterSet&)>& loss_fn,
                                               ParameterSet& params, double h = 1e-5) {
    ParameterSet est;
    for (size_t i = 0; i < params.size(); ++i)
        est.add(params.name_at(i), Tensor::zeros(params.value_at(i).shape));
    for (size_t i = 0; i < params.size(); ++i) {
        Tensor& p = params.value_at(i);
        Tensor& e = est.value_at(i);
        for (size_t j = 0; j < p.data.size(); ++j) {
            double orig = p.data[j];
            p.data[j] = orig + h;
            double up = loss_fn(params);
            p.data[j] = orig - h;
            double down = loss_fn(params);
            p.data[j] = orig;
            e.data[j] = (up - down) / (2.0 * h);
        }
    }
    return est;
}

// max |a-b| / max(|a|,|b|,floor) over paired entries; the gradient-check metric.
inline double max_relative_error(const ParameterSet& analytic_grads, const ParameterSet& fd_values,
                                 double floor = 1e-8) {
    double worst = 0.0;
    for (size_t i = 0; i < analytic_grads.size(); ++i) {
        const Tensor& a = analytic_grads.grad_at(i);
        const Tensor& b = fd_values.value_at(i);
        for (size_t j = 0; j < a.data.size(); ++j) {
            double denom = std::max({std::fabs(a.data[j]), std::fabs(b.data[j]), floor});
            worst = std::max(worst, std::fabs(a.data[j] - b.data[j]) / denom);
        }
    }
    return worst;
}

} // namespace gtn

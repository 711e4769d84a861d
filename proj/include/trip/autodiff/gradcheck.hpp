#pragma once

#include <functional>
#include <vector>

#include "trip/autodiff/ops.hpp"
#include "trip/autodiff/tape.hpp"

namespace trip::ad {

struct GradCheckReport {
    double max_rel_error = 0.0;
    size_t worst_input = 0;
    size_t worst_element = 0;
    double analytic = 0.0;
    double numeric = 0.0;
};

using CheckFn = std::function<Var<double>(Tape<double>&, std::vector<Var<double>>&)>;

// Central-difference check of reverse-mode gradients in double precision.
// f must build a scalar from the given leaves; every element of every
// input is perturbed by +-eps. Relative error uses a small absolute floor
// so near-zero gradients compare absolutely.
inline GradCheckReport grad_check(const CheckFn& f, std::vector<Tensor<double>> inputs,
                                  double eps = 1e-5) {
    auto eval = [&](const std::vector<Tensor<double>>& xs) {
        Tape<double> tape;
        std::vector<Var<double>> leaves;
        leaves.reserve(xs.size());
        for (const auto& x : xs) leaves.push_back(tape.leaf(x));
        Var<double> y = f(tape, leaves);
        return y.val().scalar_value();
    };

    std::vector<Tensor<double>> analytic;
    {
        Tape<double> tape;
        std::vector<Var<double>> leaves;
        leaves.reserve(inputs.size());
        for (const auto& x : inputs) leaves.push_back(tape.leaf(x));
        Var<double> y = f(tape, leaves);
        tape.backward(y);
        for (const auto& leaf : leaves) analytic.push_back(leaf.grad());
    }

    GradCheckReport report;
    for (size_t k = 0; k < inputs.size(); ++k) {
        for (size_t i = 0; i < inputs[k].numel(); ++i) {
            double keep = inputs[k][i];
            inputs[k][i] = keep + eps;
            double fp = eval(inputs);
            inputs[k][i] = keep - eps;
            double fm = eval(inputs);
            inputs[k][i] = keep;
            double numeric = (fp - fm) / (2.0 * eps);
            double a = analytic[k][i];
            double err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-4});
            if (err > report.max_rel_error) {
                report.max_rel_error = err;
                report.worst_input = k;
                report.worst_element = i;
                report.analytic = a;
                report.numeric = numeric;
            }
        }
    }
    return report;
}

}  // namespace trip::ad

#include "trip/eval/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "trip/core/error.hpp"

namespace trip::eval {

MetricReport regression_metrics(const std::vector<double>& pred,
                                const std::vector<double>& truth) {
    if (pred.size() != truth.size())
        throw input_error("regression_metrics: length mismatch");
    if (pred.empty()) throw input_error("regression_metrics: empty input");

    size_t n = pred.size();
    MetricReport r;
    r.n_samples = n;
    double mean_true = 0;
    for (double t : truth) mean_true += t;
    mean_true /= double(n);

    double ss_res = 0, ss_tot = 0;
    for (size_t i = 0; i < n; ++i) {
        double e = pred[i] - truth[i];
        r.mae += std::abs(e);
        r.mse += e * e;
        r.max_abs_error = std::max(r.max_abs_error, std::abs(e));
        if (truth[i] == 0.0)
            throw input_error("regression_metrics: zero true value breaks MAPE");
        r.mape_percent += std::abs(e / truth[i]);
        ss_res += e * e;
        double d = truth[i] - mean_true;
        ss_tot += d * d;
    }
    r.mae /= double(n);
    r.mse /= double(n);
    r.rmse = std::sqrt(r.mse);
    r.mape_percent = 100.0 * r.mape_percent / double(n);
    r.r2 = ss_tot > 0 ? 1.0 - ss_res / ss_tot : (ss_res == 0 ? 1.0 : 0.0);
    return r;
}

namespace {

template <class T>
F1Report f1_impl(const std::vector<T>& o_pred, const std::vector<T>& o_true,
                 double threshold) {
    if (o_pred.size() != o_true.size()) throw input_error("f1_inside: length mismatch");
    F1Report r;
    for (size_t i = 0; i < o_pred.size(); ++i) {
        bool p = double(o_pred[i]) > threshold;
        bool t = double(o_true[i]) > threshold;
        if (p && t)
            ++r.tp;
        else if (p && !t)
            ++r.fp;
        else if (!p && t)
            ++r.fn;
        else
            ++r.tn;
    }
    if (r.tp + r.fp == 0 && r.tp + r.fn == 0) {
        r.degenerate = true;
        return r;
    }
    r.precision = r.tp + r.fp > 0 ? double(r.tp) / double(r.tp + r.fp) : 0.0;
    r.recall = r.tp + r.fn > 0 ? double(r.tp) / double(r.tp + r.fn) : 0.0;
    r.f1 = 2 * r.tp + r.fp + r.fn > 0
               ? 2.0 * double(r.tp) / double(2 * r.tp + r.fp + r.fn)
               : 0.0;
    return r;
}

}  // namespace

F1Report f1_inside(const std::vector<double>& o_pred, const std::vector<double>& o_true,
                   double threshold) {
    return f1_impl(o_pred, o_true, threshold);
}

F1Report f1_inside(const std::vector<float>& o_pred, const std::vector<float>& o_true,
                   double threshold) {
    return f1_impl(o_pred, o_true, threshold);
}

}  // namespace trip::eval

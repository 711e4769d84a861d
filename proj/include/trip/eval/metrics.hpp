#pragma once

#include <cstddef>
#include <vector>

namespace trip::eval {

struct MetricReport {
    double mae = 0;
    double mse = 0;
    double rmse = 0;
    double mape_percent = 0;
    double r2 = 0;
    double max_abs_error = 0;
    size_t n_samples = 0;
};

// MAE, MSE, RMSE, MAPE (percent), R^2, and max |error| over paired lists.
// MAPE requires every true value to be nonzero.
MetricReport regression_metrics(const std::vector<double>& pred,
                                const std::vector<double>& truth);

struct F1Report {
    double precision = 0;
    double recall = 0;
    double f1 = 0;
    size_t tp = 0, fp = 0, fn = 0, tn = 0;
    // Set when neither prediction nor truth contains a positive; f1 is 0.
    bool degenerate = false;
};

// Binarizes both lists at threshold (inside = value > threshold) and
// scores the inside class.
F1Report f1_inside(const std::vector<double>& o_pred, const std::vector<double>& o_true,
                   double threshold = 0.5);
F1Report f1_inside(const std::vector<float>& o_pred, const std::vector<float>& o_true,
                   double threshold = 0.5);

}  // namespace trip::eval

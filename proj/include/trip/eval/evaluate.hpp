#pragma once

#include <string>
#include <vector>

#include "trip/eval/metrics.hpp"
#include "trip/model/model.hpp"
#include "trip/train/dataset.hpp"

namespace trip::eval {

struct ShapeEvaluation {
    std::string shape_id;
    double cd_true = 0;
    double cd_pred = 0;
    double f1 = 0;
    double precision = 0;
    double recall = 0;
};

struct EvaluationReport {
    MetricReport cd;
    double mean_f1 = 0;
    double mean_precision = 0;
    double mean_recall = 0;
    std::vector<ShapeEvaluation> shapes;
};

// Regression metrics over the cd columns plus means of the occupancy scores.
EvaluationReport summarize_evaluation(std::vector<ShapeEvaluation> rows);

// Deterministic eval-mode pass (z = mu) per listed shape: the drag
// prediction from the latent, and F1 of the predicted occupancy against the
// stored field targets at threshold 0.5.
EvaluationReport evaluate_model(const model::TriplaneVae& net, const train::Dataset& dataset,
                                const std::vector<std::string>& ids);

// One row per shape: shape_id, cd_true, cd_pred, f1, precision, recall.
void save_evaluation_csv(const std::string& path, const EvaluationReport& report);

}  // namespace trip::eval

#pragma once

#include <string>
#include <vector>

#include "trip/eval/metrics.hpp"
#include "trip/model/model.hpp"
#include "trip/occupancy/occupancy.hpp"
#include "trip/train/dataset.hpp"
#include "trip/train/losses.hpp"

namespace trip::train {

enum class Regimen { Simultaneous, Sequential };
enum class OccupancyMode { SemiContinuous, Binary };

struct TrainConfig {
    double lr = 5e-5;
    double weight_decay = 1e-6;
    int epochs = 80;
    int scheduler_step = 5;
    double scheduler_gamma = 0.75;
    int batch_size = 1;        // shapes per optimizer step (gradient accumulation)
    size_t m_queries = 8192;   // query subsample per shape per step
    uint64_t seed = 0;
    Regimen regimen = Regimen::Simultaneous;
    OccupancyMode occupancy_mode = OccupancyMode::SemiContinuous;
    int phase1_epochs = -1;    // sequential regimen; -1 means half the epochs
    size_t val_queries = 8192; // fixed per-shape subsample for validation
};

// Step decay: lr * gamma^floor(epoch / step).
double lr_at_epoch(double epoch, const TrainConfig& config);

template <class S>
struct StepOutput {
    ad::Var<S> total;
    LossComponents<S> components;
    LossBreakdown breakdown;
    model::ForwardResult<S> forward;
    std::vector<S> occ_true;
};

// Forward pass plus composite loss for one shape on the given query subset.
template <class S>
StepOutput<S> shape_loss(const model::VaeNet<S>& net, const typename model::VaeNet<S>::Bound& b,
                         const ShapeRecord& rec, const std::vector<uint32_t>& query_idx,
                         const LossWeights& weights, double epoch, bool train_mode,
                         uint64_t forward_seed) {
    std::vector<Vec3> queries;
    std::vector<S> occ_true;
    queries.reserve(query_idx.size());
    occ_true.reserve(query_idx.size());
    for (uint32_t i : query_idx) {
        queries.push_back(rec.field_points[i]);
        occ_true.push_back(S(rec.field_occupancy[i]));
    }
    auto out = net.forward(b, rec.cloud, queries, train_mode, forward_seed);

    LossComponents<S> c;
    c.recon = smooth_l1(out.occupancy, occ_true, S(weights.beta_occ));
    c.cd = smooth_l1(out.cd, std::vector<S>{S(rec.cd)}, S(weights.beta_cd));
    c.kl = kl_divergence(out.mu, out.logvar);
    c.boundary = boundary_loss(out.occupancy, occ_true, S(weights.band_delta));
    c.tri = triplane_l1(out.planes);
    auto [total, breakdown] = total_loss(c, weights, epoch);
    return {total, c, breakdown, std::move(out), std::move(occ_true)};
}

struct EpochMetrics {
    int epoch = 0;
    int phase = 1;             // sequential phase index; always 1 for simultaneous
    double lr = 0;
    double kl_weight = 0;
    LossBreakdown train_mean;  // term means over the epoch's steps
    LossBreakdown val_mean;
    eval::MetricReport val_cd;
    eval::F1Report val_f1;
};

struct TrainResult {
    std::vector<EpochMetrics> epochs;
    int best_epoch = -1;       // lowest validation total loss
    std::string best_checkpoint;
    std::string metrics_csv;
};

// Optimizes the model in place. Writes one checkpoint per epoch plus
// best.trip and metrics.csv into out_dir. The dataset is taken by value
// because the binary occupancy mode rewrites its targets.
TrainResult train(model::TriplaneVae& model, Dataset dataset, const Split& split,
                  const TrainConfig& config, const LossWeights& weights,
                  const std::string& out_dir);

}  // namespace trip::train

#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "trip/geometry/normalize.hpp"
#include "trip/model/model.hpp"
#include "trip/surface/surface.hpp"

namespace trip::optimize {

struct RefinementConfig {
    double cd_target = 0.0;
    // Encoder layer groups frozen from the input side; -1 keeps the default
    // of everything but the last three (attention aggregator and the two
    // latent heads) frozen.
    int n_frozen_layer_groups = -1;
    int steps = 100;
    double lr = 1e-5;
    double weight_decay = 0.0;
    // Stop once l_opt drops below (early_stop_rel * cd_target)^2.
    double early_stop_rel = 1e-3;
};

struct RefinementTrace {
    double initial_cd = 0;
    double final_cd = 0;             // prediction of the returned model
    std::vector<double> cd_pred;     // prediction feeding each update step
    std::vector<double> l_opt;
    std::vector<double> delta_norm;  // L2 distance of trainable params from start
    ad::Tensor<float> z_opt;         // latent mean after the final step [D, H, W]
    bool early_stopped = false;

    int steps_taken() const { return int(cd_pred.size()); }
};

// Copies the model, freezes everything except the trailing encoder groups,
// and walks the copy toward the drag target with z = mu (no sampling). The
// input cloud and every frozen parameter keep their exact bytes.
std::pair<model::TriplaneVae, RefinementTrace> refine_encoder(const model::TriplaneVae& net,
                                                              const PointCloud& x_init,
                                                              const RefinementConfig& config);

struct ExtractedShapes {
    TriMesh optimized;
    TriMesh initial;
    DisplacementMap displacement;  // on the initial reconstruction's vertices
};

// Decodes the original and refined latents for x_init over a cubic lattice
// covering the warp box, extracts both 0.5 iso-surfaces, smooths them, and
// maps the geometric change. Pass denorm to undo dataset normalization.
ExtractedShapes extract_optimized_shape(const model::TriplaneVae& original,
                                        const model::TriplaneVae& refined,
                                        const PointCloud& x_init, uint32_t grid_resolution,
                                        const NormalizationTransform* denorm = nullptr,
                                        int smooth_iterations = 3, double smooth_lambda = 0.5);

// Occupancy of one latent sampled on a res^3 lattice over the warp box.
ScalarGrid decode_occupancy_grid(const model::TriplaneVae& net, const ad::Tensor<float>& z,
                                 uint32_t resolution);

void save_refinement_trace_csv(const std::string& path, const RefinementTrace& trace);

}  // namespace trip::optimize

#include "trip/optimize/refine.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>

#include "trip/autodiff/optim.hpp"
#include "trip/core/error.hpp"

namespace trip::optimize {

namespace {

std::set<std::string> all_groups(const model::TriplaneVae& net) {
    const auto& g = net.params().groups();
    return {g.begin(), g.end()};
}

ad::Tensor<float> latent_mean(const model::TriplaneVae& net, const PointCloud& cloud) {
    ad::Tape<float> tape;
    auto b = net.bind(tape, all_groups(net));
    auto [mu, logvar] = net.encode(b, cloud, nullptr, false);
    (void)logvar;
    return mu.val();
}

std::array<ad::Tensor<float>, 3> decode_plane_values(const model::TriplaneVae& net,
                                                     const ad::Tensor<float>& z) {
    ad::Tape<float> tape;
    auto b = net.bind(tape, all_groups(net));
    auto planes = net.decode_triplanes(b, tape.leaf(z, false));
    return {planes[0].val(), planes[1].val(), planes[2].val()};
}

}  // namespace

std::pair<model::TriplaneVae, RefinementTrace> refine_encoder(const model::TriplaneVae& net,
                                                              const PointCloud& x_init,
                                                              const RefinementConfig& config) {
    if (!std::isfinite(config.cd_target))
        throw config_error("refinement target must be finite");
    if (config.steps < 0) throw config_error("refinement steps must be non-negative");
    if (config.lr <= 0) throw config_error("refinement learning rate must be positive");

    std::vector<std::string> enc = net.encoder_group_names();
    int n_frozen = config.n_frozen_layer_groups < 0 ? int(enc.size()) - 3
                                                    : config.n_frozen_layer_groups;
    n_frozen = std::max(n_frozen, 0);
    if (n_frozen >= int(enc.size()))
        throw config_error("refinement would leave no encoder group trainable");

    std::set<std::string> trainable(enc.begin() + n_frozen, enc.end());
    model::TriplaneVae refined = net;
    std::set<std::string> frozen;
    for (const auto& g : refined.params().groups())
        if (trainable.count(g) == 0) frozen.insert(g);

    // Trainable entries in creation order, with their starting values for the
    // parameter-delta trace.
    std::vector<size_t> train_idx;
    std::vector<ad::Tensor<float>> start;
    {
        const auto& entries = refined.params().entries();
        for (size_t i = 0; i < entries.size(); ++i)
            if (trainable.count(entries[i].group)) {
                train_idx.push_back(i);
                start.push_back(entries[i].value);
            }
    }

    ad::AdamWConfig opt_cfg;
    opt_cfg.lr = config.lr;
    opt_cfg.weight_decay = config.weight_decay;
    ad::AdamW<float> optimizer(opt_cfg);

    RefinementTrace trace;
    double stop = config.early_stop_rel * config.cd_target;
    double stop2 = stop * stop;

    int step = 0;
    while (true) {
        ad::Tape<float> tape;
        auto bound = refined.bind(tape, frozen);
        auto [mu, logvar] = refined.encode(bound, x_init, nullptr, false);
        (void)logvar;
        ad::Var<float> cd = refined.cd_head(bound, mu);
        double cd_v = double(cd.val()[0]);
        double l_v = (cd_v - config.cd_target) * (cd_v - config.cd_target);
        if (step == 0) trace.initial_cd = cd_v;
        trace.final_cd = cd_v;
        trace.z_opt = mu.val();

        if (l_v < stop2) {
            trace.early_stopped = step < config.steps;
            break;
        }
        if (step >= config.steps) break;

        ad::Var<float> loss = ad::mean_all(ad::square_op(ad::add_scalar(cd, float(-config.cd_target))));
        tape.backward(loss);
        for (size_t i : train_idx) {
            auto& e = refined.params().entries()[i];
            optimizer.update(e.name, e.value, bound.grad_of(e.name));
        }

        double d2 = 0;
        for (size_t k = 0; k < train_idx.size(); ++k) {
            const auto& cur = refined.params().entries()[train_idx[k]].value;
            const auto& init = start[k];
            for (size_t j = 0; j < cur.numel(); ++j) {
                double d = double(cur[j]) - double(init[j]);
                d2 += d * d;
            }
        }
        trace.cd_pred.push_back(cd_v);
        trace.l_opt.push_back(l_v);
        trace.delta_norm.push_back(std::sqrt(d2));
        ++step;
    }
    return {std::move(refined), std::move(trace)};
}

ScalarGrid decode_occupancy_grid(const model::TriplaneVae& net, const ad::Tensor<float>& z,
                                 uint32_t resolution) {
    if (resolution < 2) throw config_error("extraction grid resolution must be at least 2");
    std::array<ad::Tensor<float>, 3> plane_vals = decode_plane_values(net, z);

    double half = net.config().box_warp * 0.5;
    ScalarGrid g;
    g.nx = g.ny = g.nz = resolution;
    g.origin = {-half, -half, -half};
    double step = 2.0 * half / double(resolution - 1);
    g.cell = {step, step, step};
    g.values.resize(size_t(resolution) * resolution * resolution);

    std::set<std::string> frozen = all_groups(net);
    size_t slab = size_t(resolution) * resolution;
    uint32_t slabs_per_chunk = uint32_t(std::max<size_t>(1, 65536 / slab));
    for (uint32_t z0 = 0; z0 < resolution; z0 += slabs_per_chunk) {
        uint32_t z1 = std::min(resolution, z0 + slabs_per_chunk);
        std::vector<Vec3> pts;
        pts.reserve(size_t(z1 - z0) * slab);
        for (uint32_t iz = z0; iz < z1; ++iz)
            for (uint32_t iy = 0; iy < resolution; ++iy)
                for (uint32_t ix = 0; ix < resolution; ++ix) pts.push_back(g.position(ix, iy, iz));

        ad::Tape<float> tape;
        auto b = net.bind(tape, frozen);
        std::array<ad::Var<float>, 3> planes = {tape.leaf(plane_vals[0], false),
                                                tape.leaf(plane_vals[1], false),
                                                tape.leaf(plane_vals[2], false)};
        ad::Var<float> occ = net.occupancy_head(b, net.sample_triplane_features(planes, pts));
        const ad::Tensor<float>& v = occ.val();
        size_t base = g.index(0, 0, z0);
        for (size_t i = 0; i < v.numel(); ++i) g.values[base + i] = v[i];
    }
    return g;
}

ExtractedShapes extract_optimized_shape(const model::TriplaneVae& original,
                                        const model::TriplaneVae& refined,
                                        const PointCloud& x_init, uint32_t grid_resolution,
                                        const NormalizationTransform* denorm,
                                        int smooth_iterations, double smooth_lambda) {
    ad::Tensor<float> z_init = latent_mean(original, x_init);
    ad::Tensor<float> z_opt = latent_mean(refined, x_init);

    TriMesh initial = marching_cubes(decode_occupancy_grid(original, z_init, grid_resolution), 0.5);
    TriMesh optimized = marching_cubes(decode_occupancy_grid(refined, z_opt, grid_resolution), 0.5);
    if (initial.face_count() == 0 || optimized.face_count() == 0)
        throw input_error("iso-surface extraction came up empty; occupancy never crosses 0.5");

    initial = smooth_mesh(initial, smooth_iterations, smooth_lambda);
    optimized = smooth_mesh(optimized, smooth_iterations, smooth_lambda);
    if (denorm != nullptr) {
        apply_inverse_transform(initial, *denorm);
        apply_inverse_transform(optimized, *denorm);
    }

    ExtractedShapes out;
    out.displacement = signed_distance_map(initial, optimized);
    out.initial = std::move(initial);
    out.optimized = std::move(optimized);
    return out;
}

void save_refinement_trace_csv(const std::string& path, const RefinementTrace& trace) {
    std::ofstream out(path);
    if (!out) throw input_error("cannot open " + path + " for writing");
    out << "step,cd_pred,l_opt,delta_norm\n" << std::setprecision(17);
    for (size_t i = 0; i < trace.cd_pred.size(); ++i)
        out << i << ',' << trace.cd_pred[i] << ',' << trace.l_opt[i] << ','
            << trace.delta_norm[i] << '\n';
    out.flush();
    if (!out) throw input_error("write failed: " + path);
}

}  // namespace trip::optimize

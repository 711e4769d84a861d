#pragma once

#include <cstdint>
#include <vector>

#include "trip/geometry/trimesh.hpp"

namespace trip {

enum class PointTag : uint8_t { Uniform = 0, Salient = 1 };

struct PointCloud {
    std::vector<Vec3> points;
    std::vector<uint8_t> tags;

    size_t size() const { return points.size(); }
};

struct SaliencyWeights {
    double w_edge = 1.0;
    double w_curv = 1.0;
    double alpha = 1.0;
};

// Mean angular deviation between the vertex normal and adjacent face
// normals, in radians. Isolated vertices get 0.
std::vector<double> vertex_curvature(const TriMesh& mesh);

// S_f = A_f * (w_edge * max_v C_v + w_curv * mean_v C_v)^alpha
std::vector<double> face_saliency(const TriMesh& mesh, const SaliencyWeights& weights);

// n points drawn from faces with probability proportional to saliency,
// uniform barycentric placement within each face. Throws Error(Input)
// when total saliency is zero (caller should fall back to area weights).
PointCloud sample_salient(const TriMesh& mesh, size_t n, const SaliencyWeights& weights,
                          uint64_t seed);

// n points drawn area-weighted over the surface.
PointCloud sample_area_weighted(const TriMesh& mesh, size_t n, uint64_t seed);

// Greedy max-min selection. Start point drawn from the seeded generator
// unless start_index is given. k == 0 returns empty; k > points.size()
// throws.
std::vector<uint32_t> farthest_point_sampling(const std::vector<Vec3>& points, size_t k,
                                              uint64_t seed,
                                              uint32_t start_index = UINT32_MAX);

// FPS over a dense area-weighted sample for the uniform share, saliency
// sampling for the rest. With salient_area_fallback, zero total saliency
// silently degrades the salient share to area-weighted points.
PointCloud hybrid_point_cloud(const TriMesh& mesh, size_t n, double fps_fraction,
                              size_t dense_m, const SaliencyWeights& weights, uint64_t seed,
                              bool salient_area_fallback = false);

}  // namespace trip

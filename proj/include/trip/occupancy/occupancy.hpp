#pragma once

#include <cstdint>
#include <vector>

#include "trip/geometry/trimesh.hpp"
#include "trip/spatial/bvh.hpp"
#include "trip/spatial/kdtree.hpp"

namespace trip {

enum class QueryTag : uint8_t { Uniform = 0, Surface = 1, NearSurface = 2 };

struct QuerySet {
    std::vector<Vec3> points;
    std::vector<uint8_t> tags;
};

struct OccupancyField {
    std::vector<Vec3> query_points;
    std::vector<uint8_t> tags;
    std::vector<float> occupancy;
    double cd_label = 0;
    double s_threshold = 0;
    double ratios[3] = {0, 0, 0};  // uniform, surface, near-surface
};

struct FieldConfig {
    size_t m_total = 1'280'000;
    double ratio_uniform = 0.50;
    double ratio_surface = 0.25;
    double ratio_near = 0.25;
    double sigma_frac = 0.015;   // near-surface noise stddev, fraction of mean bbox extent
    double bbox_scale = 1.1;     // uniform sampling box scale about the bbox center
    double s_frac = 0.03;        // occupancy transition width, fraction of mean bbox extent
    int n_rays = 6;
    uint64_t seed = 0;
    bool triangle_exact = false; // exact surface distance instead of nearest vertex
};

// Mixed query sampling: uniform in the scaled bounding box, area-weighted
// on the surface, and surface points pushed along face normals by
// Gaussian noise with stddev sigma_frac * mean bbox extent.
QuerySet sample_query_points(const TriMesh& mesh, size_t m_total,
                             const double ratios[3], double sigma_frac,
                             double bbox_scale, uint64_t seed);

enum class DistanceMode { NearestVertex, NearestTriangle };

// Unsigned distance from a vertex (or triangle) index, sign from the
// parity of ray intersections: each of n_rays random rays votes inside
// on an odd hit count, outside on even; the vote sum decides, ties
// resolve outside. Rays that graze an edge or vertex are re-cast with a
// fresh direction. Results are deterministic in `seed` regardless of
// thread count (each point uses its own derived stream).
std::vector<double> signed_distance(const std::vector<Vec3>& points, const TriMesh& mesh,
                                    int n_rays, uint64_t seed,
                                    DistanceMode mode = DistanceMode::NearestVertex);

// Same, reusing prebuilt indices.
std::vector<double> signed_distance(const std::vector<Vec3>& points, const KdTree& vertex_index,
                                    const Bvh& bvh, int n_rays, uint64_t seed,
                                    DistanceMode mode = DistanceMode::NearestVertex);

// clip_[0,1](0.5 - 0.5 * sdf / s)
double sdf_to_occupancy(double sdf, double s);

OccupancyField build_field(const TriMesh& mesh, double cd_label, const FieldConfig& config);

// Seeded uniform subset without replacement, M <= field size.
std::pair<std::vector<Vec3>, std::vector<float>> subsample_field(const OccupancyField& field,
                                                                 size_t m, uint64_t seed);

// Index form of the same draw.
std::vector<uint32_t> subsample_indices(size_t total, size_t m, uint64_t seed);

}  // namespace trip

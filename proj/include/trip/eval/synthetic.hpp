#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "trip/geometry/normalize.hpp"
#include "trip/geometry/trimesh.hpp"
#include "trip/surface/surface.hpp"

namespace trip::eval {

// Superellipsoid vehicle surrogate. x is the streamwise (length) axis with
// the nose at +x and the tail at -x; y is width, z is height. The body is
// the base superellipsoid
//
//   ((|y/b|)^(2/e2) + (|z/c|)^(2/e2))^(e2/e1) + (|x/a|)^(2/e1) = 1
//
// with two invertible deformations: the rear half's cross-sections shrink
// linearly to (1 - tail_taper) at the tail tip, and the nose profile is
// widened by remapping x -> a * (x/a)^(1 + nose_bluntness) on the front
// half. Both keep the inside test exact.
struct SyntheticShapeSpec {
    double e1 = 1.0;   // length-profile exponent
    double e2 = 1.0;   // cross-section exponent
    double a = 0.5;    // half length (x)
    double b = 0.25;   // half width (y)
    double c = 0.25;   // half height (z)
    double tail_taper = 0.0;      // in [0, 1)
    double nose_bluntness = 0.0;  // in [0, 4]
    uint64_t seed = 0;

    void validate() const;
    bool inside(const Vec3& p) const;
    // Cross-section area of the slice at x; zero beyond the poles.
    double section_area(double x) const;
    // Spec for the body scaled by `factor` about the origin.
    SyntheticShapeSpec scaled(double factor) const;
};

// Watertight lat-long tessellation with poles on the x axis.
TriMesh make_superellipsoid_mesh(const SyntheticShapeSpec& spec, int n_lat = 64,
                                 int n_lon = 96);

// Area of the unit superellipse |Y|^(2/e) + |Z|^(2/e) = 1.
double superellipse_area(double e);

struct DragProxy {
    double frontal_area = 0;  // largest cross-section perpendicular to x
    double rear_ratio = 0;    // rearmost-10%-slab section over frontal_area
    double value = 0;         // frontal_area + 0.5 * rear_ratio
};

DragProxy drag_proxy(const SyntheticShapeSpec& spec);
// Exact plane-slicing form; the mesh must be closed.
DragProxy drag_proxy(const TriMesh& mesh);
// Voxel form for decoded occupancy fields; cells count as occupied at >= iso.
DragProxy drag_proxy(const ScalarGrid& grid, double iso = 0.5);

struct SyntheticShape {
    std::string id;
    SyntheticShapeSpec spec;     // in normalized coordinates
    TriMesh mesh;                // normalized to unit bounding-box diagonal
    NormalizationTransform transform;
    double cd_label = 0;         // drag_proxy(spec).value
};

// Deterministic randomized family. Meshes are normalized and the labels are
// computed on the normalized spec so the regression target is a function of
// the geometry the model actually observes.
std::vector<SyntheticShape> make_synthetic_dataset(int n_shapes, uint64_t seed);

}  // namespace trip::eval

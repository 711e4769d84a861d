#pragma once

#include "trip/geometry/trimesh.hpp"

namespace trip {

// Displaces vertices inside `region` along their vertex normals.
// With falloff > 0, displacement blends linearly to zero for vertices
// within `falloff` of the region boundary (measured inside the box).
// Throws Error(Input) when the region selects no vertices or when
// |displacement| exceeds max_displacement_fraction of the mean bounding
// box extent.
TriMesh morph_region(const TriMesh& mesh, const Aabb& region, double displacement,
                     double falloff = 0.0, double max_displacement_fraction = 0.5);

}  // namespace trip

#pragma once

#include <cstddef>

#include "trip/geometry/trimesh.hpp"

namespace trip {

// Quadric edge-collapse simplification. Returns the input unchanged when
// its face count is at or below `threshold`; otherwise collapses edges in
// order of increasing quadric error until the face count drops to
// `target_faces`. Boundary edges receive constraint quadrics, collapses
// that would flip face normals or break the edge link condition are
// rejected. If rejections stall the queue above the target, the partially
// simplified mesh is finished with vertex clustering.
TriMesh decimate(const TriMesh& mesh, size_t target_faces, size_t threshold);

// Grid clustering: vertices in the same voxel merge to their mean.
// voxel_size <= 0 selects bbox diagonal / cbrt(2 * target_faces).
TriMesh cluster_decimate(const TriMesh& mesh, size_t target_faces, double voxel_size = 0);

}  // namespace trip

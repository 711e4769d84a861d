#pragma once

#include "trip/geometry/trimesh.hpp"

namespace trip {

// v' = (v + T) * S. Inverse: v = v'/S - T.
struct NormalizationTransform {
    Vec3 translation{};
    double scale = 1.0;

    Vec3 apply(const Vec3& v) const { return (v + translation) * scale; }
    Vec3 invert(const Vec3& v) const { return v / scale - translation; }
};

// Centers the bounding box at target_center and scales so its diagonal
// becomes target_diagonal. Throws Error(Input) for zero-extent meshes.
std::pair<TriMesh, NormalizationTransform> normalize(const TriMesh& mesh,
                                                     const Vec3& target_center = {},
                                                     double target_diagonal = 1.0);

void apply_transform(TriMesh& mesh, const NormalizationTransform& t);
void apply_inverse_transform(TriMesh& mesh, const NormalizationTransform& t);

}  // namespace trip

#include "trip/geometry/normalize.hpp"

#include "trip/core/error.hpp"

namespace trip {

std::pair<TriMesh, NormalizationTransform> normalize(const TriMesh& mesh,
                                                     const Vec3& target_center,
                                                     double target_diagonal) {
    if (mesh.vertices.empty()) throw input_error("normalize: empty mesh");
    Aabb box = mesh.bounds();
    double diag = box.diagonal();
    if (diag <= 0)
        throw input_error("normalize: degenerate geometry (zero-extent bounding box)");
    NormalizationTransform t;
    t.scale = target_diagonal / diag;
    t.translation = target_center / t.scale - box.center();
    TriMesh out = mesh;
    apply_transform(out, t);
    return {std::move(out), t};
}

void apply_transform(TriMesh& mesh, const NormalizationTransform& t) {
    for (auto& v : mesh.vertices) v = t.apply(v);
}

void apply_inverse_transform(TriMesh& mesh, const NormalizationTransform& t) {
    for (auto& v : mesh.vertices) v = t.invert(v);
}

}  // namespace trip

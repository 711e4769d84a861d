#include "trip/geometry/morph.hpp"

#include <algorithm>
#include <cmath>

#include "trip/core/error.hpp"

namespace trip {

TriMesh morph_region(const TriMesh& mesh, const Aabb& region, double displacement,
                     double falloff, double max_displacement_fraction) {
    if (displacement == 0.0) return mesh;

    double limit = max_displacement_fraction * mesh.bounds().mean_extent();
    if (std::abs(displacement) > limit)
        throw input_error("morph_region: |displacement| " + std::to_string(std::abs(displacement)) +
                          " exceeds allowed " + std::to_string(limit));

    std::vector<Vec3> normals = mesh.vertex_normals();
    TriMesh out = mesh;
    size_t selected = 0;
    for (size_t i = 0; i < out.vertices.size(); ++i) {
        const Vec3& v = mesh.vertices[i];
        if (!region.contains(v)) continue;
        ++selected;
        double w = 1.0;
        if (falloff > 0) {
            // Distance to the nearest box wall, inside the box.
            double d = v.x - region.lo.x;
            d = std::min(d, region.hi.x - v.x);
            d = std::min(d, v.y - region.lo.y);
            d = std::min(d, region.hi.y - v.y);
            d = std::min(d, v.z - region.lo.z);
            d = std::min(d, region.hi.z - v.z);
            w = std::clamp(d / falloff, 0.0, 1.0);
        }
        out.vertices[i] = v + normals[i] * (displacement * w);
    }
    if (selected == 0) throw input_error("morph_region: no vertices selected");
    return out;
}

}  // namespace trip

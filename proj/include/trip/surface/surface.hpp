#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "trip/geometry/trimesh.hpp"

namespace trip {

// Scalar field on a regular lattice, stored x-fastest:
// values[ix + nx * (iy + ny * iz)].
struct ScalarGrid {
    uint32_t nx = 0, ny = 0, nz = 0;
    Vec3 origin{};
    Vec3 cell{};  // per-axis spacing
    std::vector<float> values;

    size_t index(uint32_t ix, uint32_t iy, uint32_t iz) const {
        return size_t(ix) + size_t(nx) * (size_t(iy) + size_t(ny) * iz);
    }
    float at(uint32_t ix, uint32_t iy, uint32_t iz) const { return values[index(ix, iy, iz)]; }
    float& at(uint32_t ix, uint32_t iy, uint32_t iz) { return values[index(ix, iy, iz)]; }
    Vec3 position(uint32_t ix, uint32_t iy, uint32_t iz) const {
        return {origin.x + cell.x * ix, origin.y + cell.y * iy, origin.z + cell.z * iz};
    }
    // Throws when a dimension is below 2, the value count mismatches the
    // resolution, or any value is non-finite.
    void validate() const;
};

// Evaluates fn at every lattice point of a res^3 grid spanning box.
ScalarGrid sample_scalar_grid(const Aabb& box, uint32_t resolution,
                              const std::function<double(const Vec3&)>& fn);

// Iso-surface triangulation with linear edge interpolation and per-edge
// vertex welding; triangles wind so normals point toward decreasing field
// values. An iso level outside the sampled value range yields an empty mesh
// and a warning on stderr.
TriMesh marching_cubes(const ScalarGrid& grid, double iso);

// Laplacian smoothing: each iteration moves every vertex by
// lambda * (neighborhood centroid - vertex), all updates reading the
// previous positions. Shrinks closed surfaces.
TriMesh smooth_mesh(const TriMesh& mesh, int iterations = 3, double lambda_factor = 0.5);

// Taubin variant: pairs every shrink pass with an inflate pass (mu below
// -lambda) so volume stays roughly put.
TriMesh taubin_smooth(const TriMesh& mesh, int iterations = 3, double lambda_factor = 0.5,
                      double mu_factor = -0.53);

// Per-vertex signed offset of another surface relative to a reference mesh.
struct DisplacementMap {
    std::vector<double> values;  // one per reference vertex, positive outward
};

// Magnitude is the exact distance from each reference vertex to the nearest
// triangle of other; the sign follows dot(reference vertex normal,
// displacement to that point).
DisplacementMap signed_distance_map(const TriMesh& reference, const TriMesh& other);

// CSV sidecar (vertex_index, dx) carrying the per-vertex scalars STL files
// cannot hold.
void save_displacement_csv(const std::string& path, const DisplacementMap& map);
DisplacementMap load_displacement_csv(const std::string& path);

}  // namespace trip

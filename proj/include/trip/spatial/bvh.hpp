#pragma once

#include <cstdint>
#include <vector>

#include "trip/geometry/trimesh.hpp"

namespace trip {

// Bounding-volume hierarchy over mesh triangles. Supports intersection
// counting along a ray (for inside/outside parity votes) and closest
// point on the surface.
class Bvh {
public:
    Bvh() = default;
    explicit Bvh(const TriMesh& mesh);

    struct CountResult {
        uint32_t hits = 0;
        // True when some hit landed within tolerance of a triangle edge or
        // vertex; the parity count may then be unreliable and the caller
        // should re-cast with a different direction.
        bool grazing = false;
    };

    // Counts triangle intersections with origin + t*dir for t > t_min.
    CountResult count_intersections(const Vec3& origin, const Vec3& dir,
                                    double t_min = 1e-12) const;

    struct SurfacePoint {
        Vec3 point;
        uint32_t face = UINT32_MAX;
        double distance = 0;
    };
    SurfacePoint closest_point(const Vec3& q) const;

    bool empty() const { return tris_.empty(); }

private:
    struct Tri {
        Vec3 a, e1, e2;  // vertex + edge vectors (Moller-Trumbore form)
        Vec3 v0, v1, v2;
        uint32_t face;
    };
    struct Node {
        Aabb box;
        uint32_t begin = 0, count = 0;       // leaf payload
        uint32_t left = 0, right = 0;        // children when count == 0
    };

    std::vector<Tri> tris_;
    std::vector<Node> nodes_;

    uint32_t build(std::vector<uint32_t>& idx, uint32_t begin, uint32_t end,
                   std::vector<Tri>& scratch);
    void count_node(uint32_t id, const Vec3& o, const Vec3& inv_dir, const Vec3& dir,
                    double t_min, CountResult& out) const;
    void closest_node(uint32_t id, const Vec3& q, SurfacePoint& best, double& best_d2) const;
};

// Closest point on triangle abc to p (Ericson's algorithm).
Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c);

}  // namespace trip

#pragma once

#include <cstdint>

#include "trip/geometry/trimesh.hpp"

namespace trip {

// Icosahedron subdivided `subdivisions` times, vertices projected to the
// sphere. Face count is 20 * 4^subdivisions.
TriMesh make_icosphere(double radius, int subdivisions, const Vec3& center = {});

// Axis-aligned box with `segments` quads per edge per face, triangulated.
TriMesh make_box(const Vec3& lo, const Vec3& hi, int segments = 1);

// Cube helper: edge length `size`, centered at `center`.
inline TriMesh make_cube(double size, const Vec3& center = {}, int segments = 1) {
    Vec3 h{size / 2, size / 2, size / 2};
    return make_box(center - h, center + h, segments);
}

}  // namespace trip

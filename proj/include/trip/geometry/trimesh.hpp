#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "trip/geometry/vec3.hpp"

namespace trip {

// Indexed triangle mesh. Faces index into the shared vertex array.
struct TriMesh {
    std::vector<Vec3> vertices;
    std::vector<std::array<uint32_t, 3>> faces;

    size_t vertex_count() const { return vertices.size(); }
    size_t face_count() const { return faces.size(); }

    Vec3 face_normal(size_t f) const;       // unit normal, zero for degenerate faces
    double face_area(size_t f) const;
    Vec3 face_centroid(size_t f) const;

    Aabb bounds() const;
    double mean_edge_length() const;

    // Area-weighted vertex normals (normalized; zero where no area support).
    std::vector<Vec3> vertex_normals() const;
    std::vector<Vec3> face_normals() const;

    // Every undirected edge shared by exactly two faces.
    bool is_watertight() const;
    // Faces with repeated vertex indices or (near-)zero area.
    size_t degenerate_face_count(double area_eps = 1e-14) const;

    void apply_translation(const Vec3& t);
    void apply_scale(double s);
};

struct MassProperties {
    double volume = 0;     // signed; positive for outward-oriented closed meshes
    Vec3 centroid{};       // volume centroid
    double surface_area = 0;
};

// Divergence-theorem volume and centroid plus total surface area.
// Volume/centroid are meaningful only for closed meshes.
MassProperties mass_properties(const TriMesh& mesh);

// Exact duplicate-vertex welding (bitwise coordinate equality).
// Returns remap table old index -> new index.
std::vector<uint32_t> weld_vertices(TriMesh& mesh);

// Drops faces with repeated indices or area below eps.
void remove_degenerate_faces(TriMesh& mesh, double area_eps = 1e-14);

}  // namespace trip

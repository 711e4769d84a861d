#include "trip/geometry/trimesh.hpp"

#include <algorithm>
#include <cstring>
#include <unordered_map>

namespace trip {

Vec3 TriMesh::face_normal(size_t f) const {
    const auto& t = faces[f];
    Vec3 n = (vertices[t[1]] - vertices[t[0]]).cross(vertices[t[2]] - vertices[t[0]]);
    return n.normalized();
}

double TriMesh::face_area(size_t f) const {
    const auto& t = faces[f];
    return 0.5 * (vertices[t[1]] - vertices[t[0]]).cross(vertices[t[2]] - vertices[t[0]]).norm();
}

Vec3 TriMesh::face_centroid(size_t f) const {
    const auto& t = faces[f];
    return (vertices[t[0]] + vertices[t[1]] + vertices[t[2]]) / 3.0;
}

Aabb TriMesh::bounds() const {
    Aabb box;
    for (const auto& v : vertices) box.expand(v);
    return box;
}

double TriMesh::mean_edge_length() const {
    if (faces.empty()) return 0;
    double total = 0;
    for (const auto& t : faces) {
        total += (vertices[t[1]] - vertices[t[0]]).norm();
        total += (vertices[t[2]] - vertices[t[1]]).norm();
        total += (vertices[t[0]] - vertices[t[2]]).norm();
    }
    return total / (3.0 * double(faces.size()));
}

std::vector<Vec3> TriMesh::face_normals() const {
    std::vector<Vec3> out(faces.size());
    for (size_t f = 0; f < faces.size(); ++f) out[f] = face_normal(f);
    return out;
}

std::vector<Vec3> TriMesh::vertex_normals() const {
    std::vector<Vec3> out(vertices.size());
    for (size_t f = 0; f < faces.size(); ++f) {
        const auto& t = faces[f];
        // Unnormalized cross product weights by twice the face area.
        Vec3 n = (vertices[t[1]] - vertices[t[0]]).cross(vertices[t[2]] - vertices[t[0]]);
        out[t[0]] += n;
        out[t[1]] += n;
        out[t[2]] += n;
    }
    for (auto& n : out) n = n.normalized();
    return out;
}

namespace {
inline uint64_t edge_key(uint32_t a, uint32_t b) {
    if (a > b) std::swap(a, b);
    return (uint64_t(a) << 32) | b;
}
}  // namespace

bool TriMesh::is_watertight() const {
    if (faces.empty()) return false;
    std::unordered_map<uint64_t, int> edge_count;
    edge_count.reserve(faces.size() * 3);
    for (const auto& t : faces) {
        if (t[0] == t[1] || t[1] == t[2] || t[2] == t[0]) return false;
        ++edge_count[edge_key(t[0], t[1])];
        ++edge_count[edge_key(t[1], t[2])];
        ++edge_count[edge_key(t[2], t[0])];
    }
    for (const auto& [k, c] : edge_count)
        if (c != 2) return false;
    return true;
}

size_t TriMesh::degenerate_face_count(double area_eps) const {
    size_t n = 0;
    for (size_t f = 0; f < faces.size(); ++f) {
        const auto& t = faces[f];
        if (t[0] == t[1] || t[1] == t[2] || t[2] == t[0] || face_area(f) < area_eps) ++n;
    }
    return n;
}

void TriMesh::apply_translation(const Vec3& t) {
    for (auto& v : vertices) v += t;
}

void TriMesh::apply_scale(double s) {
    for (auto& v : vertices) v *= s;
}

MassProperties mass_properties(const TriMesh& mesh) {
    MassProperties mp;
    double vol6 = 0;
    Vec3 moment{};
    for (const auto& t : mesh.faces) {
        const Vec3& a = mesh.vertices[t[0]];
        const Vec3& b = mesh.vertices[t[1]];
        const Vec3& c = mesh.vertices[t[2]];
        double det = a.dot(b.cross(c));  // 6x signed tet volume against origin
        vol6 += det;
        moment += (a + b + c) * det;     // tet centroid is (a+b+c+0)/4
        mp.surface_area += 0.5 * (b - a).cross(c - a).norm();
    }
    mp.volume = vol6 / 6.0;
    if (std::abs(vol6) > 0) mp.centroid = moment / (4.0 * vol6);
    return mp;
}

std::vector<uint32_t> weld_vertices(TriMesh& mesh) {
    struct KeyHash {
        size_t operator()(const Vec3& v) const {
            auto h = [](double d) {
                uint64_t u;
                static_assert(sizeof(u) == sizeof(d));
                std::memcpy(&u, &d, 8);
                u ^= u >> 33;
                u *= 0xff51afd7ed558ccdULL;
                u ^= u >> 33;
                return u;
            };
            return h(v.x) ^ (h(v.y) * 0x9e3779b97f4a7c15ULL) ^ (h(v.z) * 0xc2b2ae3d27d4eb4fULL);
        }
    };
    std::unordered_map<Vec3, uint32_t, KeyHash> lookup;
    lookup.reserve(mesh.vertices.size());
    std::vector<Vec3> unique;
    unique.reserve(mesh.vertices.size());
    std::vector<uint32_t> remap(mesh.vertices.size());
    for (size_t i = 0; i < mesh.vertices.size(); ++i) {
        auto [it, inserted] = lookup.try_emplace(mesh.vertices[i], uint32_t(unique.size()));
        if (inserted) unique.push_back(mesh.vertices[i]);
        remap[i] = it->second;
    }
    mesh.vertices = std::move(unique);
    for (auto& t : mesh.faces)
        for (auto& idx : t) idx = remap[idx];
    return remap;
}

void remove_degenerate_faces(TriMesh& mesh, double area_eps) {
    std::vector<std::array<uint32_t, 3>> kept;
    kept.reserve(mesh.faces.size());
    for (size_t f = 0; f < mesh.faces.size(); ++f) {
        const auto& t = mesh.faces[f];
        if (t[0] == t[1] || t[1] == t[2] || t[2] == t[0]) continue;
        if (mesh.face_area(f) < area_eps) continue;
        kept.push_back(t);
    }
    mesh.faces = std::move(kept);
}

}  // namespace trip

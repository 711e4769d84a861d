#include "trip/geometry/primitives.hpp"

#include <cmath>
#include <unordered_map>

namespace trip {

TriMesh make_icosphere(double radius, int subdivisions, const Vec3& center) {
    const double t = (1.0 + std::sqrt(5.0)) / 2.0;
    TriMesh mesh;
    mesh.vertices = {
        {-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0},
        {0, -1, t}, {0, 1, t}, {0, -1, -t}, {0, 1, -t},
        {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1},
    };
    for (auto& v : mesh.vertices) v = v.normalized();
    mesh.faces = {
        {0, 11, 5}, {0, 5, 1}, {0, 1, 7}, {0, 7, 10}, {0, 10, 11},
        {1, 5, 9}, {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
        {3, 9, 4}, {3, 4, 2}, {3, 2, 6}, {3, 6, 8}, {3, 8, 9},
        {4, 9, 5}, {2, 4, 11}, {6, 2, 10}, {8, 6, 7}, {9, 8, 1},
    };

    for (int level = 0; level < subdivisions; ++level) {
        std::unordered_map<uint64_t, uint32_t> midpoint;
        midpoint.reserve(mesh.faces.size() * 3 / 2);
        auto mid = [&](uint32_t a, uint32_t b) -> uint32_t {
            uint64_t key = a < b ? (uint64_t(a) << 32 | b) : (uint64_t(b) << 32 | a);
            auto it = midpoint.find(key);
            if (it != midpoint.end()) return it->second;
            Vec3 m = ((mesh.vertices[a] + mesh.vertices[b]) * 0.5).normalized();
            uint32_t idx = uint32_t(mesh.vertices.size());
            mesh.vertices.push_back(m);
            midpoint.emplace(key, idx);
            return idx;
        };
        std::vector<std::array<uint32_t, 3>> next;
        next.reserve(mesh.faces.size() * 4);
        for (const auto& f : mesh.faces) {
            uint32_t ab = mid(f[0], f[1]), bc = mid(f[1], f[2]), ca = mid(f[2], f[0]);
            next.push_back({f[0], ab, ca});
            next.push_back({f[1], bc, ab});
            next.push_back({f[2], ca, bc});
            next.push_back({ab, bc, ca});
        }
        mesh.faces = std::move(next);
    }

    for (auto& v : mesh.vertices) v = v * radius + center;
    return mesh;
}

TriMesh make_box(const Vec3& lo, const Vec3& hi, int segments) {
    TriMesh mesh;
    int n = segments;
    // One face per box side: axis = fixed dimension, sign picks lo/hi side.
    for (int axis = 0; axis < 3; ++axis) {
        for (int sign = 0; sign < 2; ++sign) {
            int u = (axis + 1) % 3, v = (axis + 2) % 3;
            uint32_t base = uint32_t(mesh.vertices.size());
            for (int j = 0; j <= n; ++j) {
                for (int i = 0; i <= n; ++i) {
                    Vec3 p;
                    p[axis] = sign ? hi[axis] : lo[axis];
                    p[u] = lo[u] + (hi[u] - lo[u]) * double(i) / n;
                    p[v] = lo[v] + (hi[v] - lo[v]) * double(j) / n;
                    mesh.vertices.push_back(p);
                }
            }
            for (int j = 0; j < n; ++j) {
                for (int i = 0; i < n; ++i) {
                    uint32_t a = base + uint32_t(j * (n + 1) + i);
                    uint32_t b = a + 1;
                    uint32_t c = a + uint32_t(n + 1);
                    uint32_t d = c + 1;
                    // Winding flips with side so that normals point outward.
                    if (sign) {
                        mesh.faces.push_back({a, b, d});
                        mesh.faces.push_back({a, d, c});
                    } else {
                        mesh.faces.push_back({a, d, b});
                        mesh.faces.push_back({a, c, d});
                    }
                }
            }
        }
    }
    weld_vertices(mesh);
    return mesh;
}

}  // namespace trip

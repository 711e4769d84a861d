#include "trip/surface/surface.hpp"

#include <algorithm>
#include <utility>

#include "trip/core/error.hpp"
#include "trip/core/parallel.hpp"

namespace trip {

namespace {

// CSR adjacency over the undirected edges of the face set.
struct Adjacency {
    std::vector<uint32_t> offset;
    std::vector<uint32_t> nbr;
};

Adjacency vertex_adjacency(const TriMesh& mesh) {
    std::vector<std::pair<uint32_t, uint32_t>> edges;
    edges.reserve(mesh.faces.size() * 3);
    for (const auto& f : mesh.faces)
        for (int j = 0; j < 3; ++j) {
            uint32_t a = f[j], b = f[(j + 1) % 3];
            if (a == b) continue;
            edges.emplace_back(std::min(a, b), std::max(a, b));
        }
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());

    Adjacency adj;
    adj.offset.assign(mesh.vertex_count() + 1, 0);
    for (const auto& [a, b] : edges) {
        ++adj.offset[a + 1];
        ++adj.offset[b + 1];
    }
    for (size_t v = 0; v < mesh.vertex_count(); ++v) adj.offset[v + 1] += adj.offset[v];
    adj.nbr.resize(edges.size() * 2);
    std::vector<uint32_t> cursor(adj.offset.begin(), adj.offset.end() - 1);
    for (const auto& [a, b] : edges) {
        adj.nbr[cursor[a]++] = b;
        adj.nbr[cursor[b]++] = a;
    }
    return adj;
}

// One Jacobi pass: every vertex moves toward (factor > 0) or away from
// (factor < 0) its neighborhood centroid, reading only old positions.
std::vector<Vec3> centroid_pass(const std::vector<Vec3>& pos, const Adjacency& adj,
                                double factor) {
    std::vector<Vec3> out(pos.size());
    parallel_for(int64_t(pos.size()), [&](int64_t v) {
        uint32_t b = adj.offset[v], e = adj.offset[v + 1];
        if (b == e) {
            out[v] = pos[v];
            return;
        }
        Vec3 c{};
        for (uint32_t k = b; k < e; ++k) c += pos[adj.nbr[k]];
        c = c / double(e - b);
        out[v] = pos[v] + (c - pos[v]) * factor;
    });
    return out;
}

}  // namespace

TriMesh smooth_mesh(const TriMesh& mesh, int iterations, double lambda_factor) {
    if (iterations < 0) throw input_error("smoothing iterations must be non-negative");
    TriMesh out = mesh;
    if (iterations == 0 || mesh.vertex_count() == 0) return out;
    Adjacency adj = vertex_adjacency(mesh);
    for (int i = 0; i < iterations; ++i)
        out.vertices = centroid_pass(out.vertices, adj, lambda_factor);
    return out;
}

TriMesh taubin_smooth(const TriMesh& mesh, int iterations, double lambda_factor,
                      double mu_factor) {
    if (iterations < 0) throw input_error("smoothing iterations must be non-negative");
    TriMesh out = mesh;
    if (iterations == 0 || mesh.vertex_count() == 0) return out;
    Adjacency adj = vertex_adjacency(mesh);
    for (int i = 0; i < iterations; ++i) {
        out.vertices = centroid_pass(out.vertices, adj, lambda_factor);
        out.vertices = centroid_pass(out.vertices, adj, mu_factor);
    }
    return out;
}

}  // namespace trip

#include "trip/spatial/bvh.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace trip {

namespace {
constexpr uint32_t kLeafSize = 4;
constexpr double kBaryEps = 1e-9;

inline bool ray_box(const Aabb& b, const Vec3& o, const Vec3& inv_dir, double t_min) {
    double t0 = t_min, t1 = std::numeric_limits<double>::infinity();
    for (int k = 0; k < 3; ++k) {
        double ta = (b.lo[k] - o[k]) * inv_dir[k];
        double tb = (b.hi[k] - o[k]) * inv_dir[k];
        if (ta > tb) std::swap(ta, tb);
        t0 = std::fmax(t0, ta);
        t1 = std::fmin(t1, tb);
    }
    return t0 <= t1;
}

inline double aabb_dist2(const Aabb& b, const Vec3& p) {
    double d2 = 0;
    for (int k = 0; k < 3; ++k) {
        double d = std::fmax(b.lo[k] - p[k], std::fmax(0.0, p[k] - b.hi[k]));
        d2 += d * d;
    }
    return d2;
}
}  // namespace

Bvh::Bvh(const TriMesh& mesh) {
    std::vector<Tri> all;
    all.reserve(mesh.faces.size());
    for (uint32_t f = 0; f < mesh.faces.size(); ++f) {
        const auto& t = mesh.faces[f];
        Tri tr;
        tr.v0 = mesh.vertices[t[0]];
        tr.v1 = mesh.vertices[t[1]];
        tr.v2 = mesh.vertices[t[2]];
        tr.a = tr.v0;
        tr.e1 = tr.v1 - tr.v0;
        tr.e2 = tr.v2 - tr.v0;
        tr.face = f;
        all.push_back(tr);
    }
    if (all.empty()) return;
    std::vector<uint32_t> idx(all.size());
    std::iota(idx.begin(), idx.end(), 0u);
    tris_.reserve(all.size());
    nodes_.reserve(all.size() / kLeafSize * 2 + 2);
    build(idx, 0, uint32_t(all.size()), all);
}

uint32_t Bvh::build(std::vector<uint32_t>& idx, uint32_t begin, uint32_t end,
                    std::vector<Tri>& scratch) {
    uint32_t id = uint32_t(nodes_.size());
    nodes_.push_back({});
    Aabb box;
    for (uint32_t i = begin; i < end; ++i) {
        const Tri& t = scratch[idx[i]];
        box.expand(t.v0);
        box.expand(t.v1);
        box.expand(t.v2);
    }
    nodes_[id].box = box;
    if (end - begin <= kLeafSize) {
        nodes_[id].begin = uint32_t(tris_.size());
        nodes_[id].count = end - begin;
        for (uint32_t i = begin; i < end; ++i) tris_.push_back(scratch[idx[i]]);
        return id;
    }
    Vec3 ext = box.extent();
    int axis = 0;
    if (ext.y > ext.x) axis = 1;
    if (ext.z > ext[axis]) axis = 2;
    uint32_t mid = (begin + end) / 2;
    std::nth_element(idx.begin() + begin, idx.begin() + mid, idx.begin() + end,
                     [&](uint32_t a, uint32_t b) {
                         auto c = [axis](const Tri& t) {
                             return t.v0[axis] + t.v1[axis] + t.v2[axis];
                         };
                         return c(scratch[a]) < c(scratch[b]);
                     });
    uint32_t left = build(idx, begin, mid, scratch);
    uint32_t right = build(idx, mid, end, scratch);
    nodes_[id].left = left;
    nodes_[id].right = right;
    nodes_[id].count = 0;
    return id;
}

void Bvh::count_node(uint32_t id, const Vec3& o, const Vec3& inv_dir, const Vec3& dir,
                     double t_min, CountResult& out) const {
    const Node& n = nodes_[id];
    if (!ray_box(n.box, o, inv_dir, t_min)) return;
    if (n.count > 0) {
        for (uint32_t i = n.begin; i < n.begin + n.count; ++i) {
            const Tri& t = tris_[i];
            Vec3 p = dir.cross(t.e2);
            double det = t.e1.dot(p);
            if (std::abs(det) < 1e-14) continue;
            double inv = 1.0 / det;
            Vec3 s = o - t.a;
            double u = s.dot(p) * inv;
            if (u < -kBaryEps || u > 1 + kBaryEps) continue;
            Vec3 q = s.cross(t.e1);
            double v = dir.dot(q) * inv;
            if (v < -kBaryEps || u + v > 1 + kBaryEps) continue;
            double tt = t.e2.dot(q) * inv;
            if (tt <= t_min) continue;
            if (u < kBaryEps || v < kBaryEps || u + v > 1 - kBaryEps) {
                out.grazing = true;
            }
            if (u >= 0 && v >= 0 && u + v <= 1) ++out.hits;
        }
        return;
    }
    count_node(n.left, o, inv_dir, dir, t_min, out);
    count_node(n.right, o, inv_dir, dir, t_min, out);
}

Bvh::CountResult Bvh::count_intersections(const Vec3& origin, const Vec3& dir,
                                          double t_min) const {
    CountResult out;
    if (nodes_.empty()) return out;
    Vec3 inv{1.0 / dir.x, 1.0 / dir.y, 1.0 / dir.z};
    count_node(0, origin, inv, dir, t_min, out);
    return out;
}

Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
    Vec3 ab = b - a, ac = c - a, ap = p - a;
    double d1 = ab.dot(ap), d2 = ac.dot(ap);
    if (d1 <= 0 && d2 <= 0) return a;
    Vec3 bp = p - b;
    double d3 = ab.dot(bp), d4 = ac.dot(bp);
    if (d3 >= 0 && d4 <= d3) return b;
    double vc = d1 * d4 - d3 * d2;
    if (vc <= 0 && d1 >= 0 && d3 <= 0) return a + ab * (d1 / (d1 - d3));
    Vec3 cp = p - c;
    double d5 = ab.dot(cp), d6 = ac.dot(cp);
    if (d6 >= 0 && d5 <= d6) return c;
    double vb = d5 * d2 - d1 * d6;
    if (vb <= 0 && d2 >= 0 && d6 <= 0) return a + ac * (d2 / (d2 - d6));
    double va = d3 * d6 - d5 * d4;
    if (va <= 0 && d4 - d3 >= 0 && d5 - d6 >= 0)
        return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
    double denom = 1.0 / (va + vb + vc);
    return a + ab * (vb * denom) + ac * (vc * denom);
}

void Bvh::closest_node(uint32_t id, const Vec3& q, SurfacePoint& best, double& best_d2) const {
    const Node& n = nodes_[id];
    if (aabb_dist2(n.box, q) >= best_d2) return;
    if (n.count > 0) {
        for (uint32_t i = n.begin; i < n.begin + n.count; ++i) {
            const Tri& t = tris_[i];
            Vec3 cp = closest_point_on_triangle(q, t.v0, t.v1, t.v2);
            double d2 = (cp - q).norm2();
            if (d2 < best_d2) {
                best_d2 = d2;
                best.point = cp;
                best.face = t.face;
            }
        }
        return;
    }
    double dl = aabb_dist2(nodes_[n.left].box, q);
    double dr = aabb_dist2(nodes_[n.right].box, q);
    if (dl < dr) {
        closest_node(n.left, q, best, best_d2);
        closest_node(n.right, q, best, best_d2);
    } else {
        closest_node(n.right, q, best, best_d2);
        closest_node(n.left, q, best, best_d2);
    }
}

Bvh::SurfacePoint Bvh::closest_point(const Vec3& q) const {
    SurfacePoint best;
    if (nodes_.empty()) return best;
    double best_d2 = std::numeric_limits<double>::infinity();
    closest_node(0, q, best, best_d2);
    best.distance = std::sqrt(best_d2);
    return best;
}

}  // namespace trip

#include "trip/geometry/decimate.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <unordered_map>
#include <unordered_set>

#include "trip/core/error.hpp"

namespace trip {

namespace {

// Symmetric 4x4 quadric, upper triangle.
struct Quadric {
    double a[10] = {};

    void add_plane(const Vec3& n, double d, double w) {
        double p[4] = {n.x, n.y, n.z, d};
        int k = 0;
        for (int i = 0; i < 4; ++i)
            for (int j = i; j < 4; ++j) a[k++] += w * p[i] * p[j];
    }
    Quadric& operator+=(const Quadric& o) {
        for (int i = 0; i < 10; ++i) a[i] += o.a[i];
        return *this;
    }
    double eval(const Vec3& v) const {
        double p[4] = {v.x, v.y, v.z, 1.0};
        // indices: 0:xx 1:xy 2:xz 3:xw 4:yy 5:yz 6:yw 7:zz 8:zw 9:ww
        double q = a[0] * p[0] * p[0] + a[4] * p[1] * p[1] + a[7] * p[2] * p[2] + a[9];
        q += 2 * (a[1] * p[0] * p[1] + a[2] * p[0] * p[2] + a[3] * p[0] +
                  a[5] * p[1] * p[2] + a[6] * p[1] + a[8] * p[2]);
        return q;
    }
    // Minimizer of the quadric form, when the 3x3 block is invertible.
    bool optimal(Vec3& out) const {
        double m00 = a[0], m01 = a[1], m02 = a[2];
        double m11 = a[4], m12 = a[5], m22 = a[7];
        double det = m00 * (m11 * m22 - m12 * m12) - m01 * (m01 * m22 - m12 * m02) +
                     m02 * (m01 * m12 - m11 * m02);
        double scale = std::abs(m00) + std::abs(m11) + std::abs(m22);
        if (std::abs(det) < 1e-12 * scale * scale * scale + 1e-300) return false;
        double bx = -a[3], by = -a[6], bz = -a[8];
        double inv = 1.0 / det;
        double c00 = m11 * m22 - m12 * m12;
        double c01 = m02 * m12 - m01 * m22;
        double c02 = m01 * m12 - m02 * m11;
        double c11 = m00 * m22 - m02 * m02;
        double c12 = m02 * m01 - m00 * m12;
        double c22 = m00 * m11 - m01 * m01;
        out.x = inv * (c00 * bx + c01 * by + c02 * bz);
        out.y = inv * (c01 * bx + c11 * by + c12 * bz);
        out.z = inv * (c02 * bx + c12 * by + c22 * bz);
        return out.finite();
    }
};

struct Candidate {
    double error;
    uint32_t a, b;
    Vec3 pos;
    uint64_t stamp;
    bool operator<(const Candidate& o) const { return error > o.error; }  // min-heap
};

class QemSimplifier {
public:
    QemSimplifier(const TriMesh& mesh, size_t target_faces)
        : verts_(mesh.vertices), faces_(mesh.faces), target_(target_faces) {
        alive_face_.assign(faces_.size(), true);
        alive_faces_ = faces_.size();
        version_.assign(verts_.size(), 0);
        vfaces_.resize(verts_.size());
        for (uint32_t f = 0; f < faces_.size(); ++f)
            for (uint32_t k = 0; k < 3; ++k) vfaces_[faces_[f][k]].push_back(f);
        build_quadrics();
        seed_queue();
    }

    TriMesh run() {
        while (alive_faces_ > target_ && !queue_.empty()) {
            Candidate c = queue_.top();
            queue_.pop();
            if (c.stamp != uint64_t(version_[c.a]) + version_[c.b]) continue;
            if (!collapse_ok(c.a, c.b, c.pos)) continue;
            collapse(c.a, c.b, c.pos);
        }
        return compact();
    }

private:
    std::vector<Vec3> verts_;
    std::vector<std::array<uint32_t, 3>> faces_;
    size_t target_;
    std::vector<Quadric> quadrics_;
    std::vector<std::vector<uint32_t>> vfaces_;
    std::vector<bool> alive_face_;
    std::vector<uint32_t> version_;
    size_t alive_faces_ = 0;
    std::priority_queue<Candidate> queue_;

    static uint64_t ekey(uint32_t a, uint32_t b) {
        if (a > b) std::swap(a, b);
        return (uint64_t(a) << 32) | b;
    }

    void build_quadrics() {
        quadrics_.assign(verts_.size(), {});
        std::unordered_map<uint64_t, std::pair<int, uint32_t>> edge_faces;
        edge_faces.reserve(faces_.size() * 3);
        for (uint32_t f = 0; f < faces_.size(); ++f) {
            const auto& t = faces_[f];
            Vec3 nraw = (verts_[t[1]] - verts_[t[0]]).cross(verts_[t[2]] - verts_[t[0]]);
            double area2 = nraw.norm();
            if (area2 <= 0) continue;
            Vec3 n = nraw / area2;
            double w = 0.5 * area2;  // area weighting
            double d = -n.dot(verts_[t[0]]);
            for (int k = 0; k < 3; ++k) quadrics_[t[k]].add_plane(n, d, w);
            for (int k = 0; k < 3; ++k) {
                auto& e = edge_faces[ekey(t[k], t[(k + 1) % 3])];
                ++e.first;
                e.second = f;
            }
        }
        // Constraint planes pin boundary edges: perpendicular to the single
        // adjacent face, heavily weighted.
        for (const auto& [key, ef] : edge_faces) {
            if (ef.first != 1) continue;
            uint32_t u = uint32_t(key >> 32), v = uint32_t(key & 0xffffffffu);
            const auto& t = faces_[ef.second];
            Vec3 fn = (verts_[t[1]] - verts_[t[0]]).cross(verts_[t[2]] - verts_[t[0]]).normalized();
            Vec3 e = verts_[v] - verts_[u];
            Vec3 pn = e.cross(fn);
            double len = pn.norm();
            if (len <= 0) continue;
            pn = pn / len;
            double w = 1e3 * e.norm2();
            quadrics_[u].add_plane(pn, -pn.dot(verts_[u]), w);
            quadrics_[v].add_plane(pn, -pn.dot(verts_[u]), w);
        }
    }

    void seed_queue() {
        std::unordered_set<uint64_t> seen;
        seen.reserve(faces_.size() * 2);
        for (const auto& t : faces_)
            for (int k = 0; k < 3; ++k) {
                uint32_t a = t[k], b = t[(k + 1) % 3];
                if (seen.insert(ekey(a, b)).second) push_edge(a, b);
            }
    }

    void push_edge(uint32_t a, uint32_t b) {
        Quadric q = quadrics_[a];
        q += quadrics_[b];
        Vec3 best;
        double best_err;
        if (q.optimal(best)) {
            best_err = q.eval(best);
        } else {
            best = (verts_[a] + verts_[b]) * 0.5;
            best_err = q.eval(best);
        }
        for (const Vec3& cand : {verts_[a], verts_[b]}) {
            double e = q.eval(cand);
            if (e < best_err) {
                best_err = e;
                best = cand;
            }
        }
        queue_.push({best_err, a, b, best, uint64_t(version_[a]) + version_[b]});
    }

    std::vector<uint32_t> neighbors(uint32_t v) const {
        std::vector<uint32_t> out;
        out.reserve(vfaces_[v].size() * 2);
        for (uint32_t f : vfaces_[v]) {
            if (!alive_face_[f]) continue;
            for (uint32_t k = 0; k < 3; ++k)
                if (faces_[f][k] != v) out.push_back(faces_[f][k]);
        }
        std::sort(out.begin(), out.end());
        out.erase(std::unique(out.begin(), out.end()), out.end());
        return out;
    }

    bool collapse_ok(uint32_t a, uint32_t b, const Vec3& pos) {
        if (!pos.finite()) return false;
        // Link condition: shared neighbors must all come from faces on the
        // edge itself, otherwise the collapse pinches the surface.
        auto na = neighbors(a), nb = neighbors(b);
        std::vector<uint32_t> common;
        std::set_intersection(na.begin(), na.end(), nb.begin(), nb.end(),
                              std::back_inserter(common));
        size_t edge_faces = 0;
        for (uint32_t f : vfaces_[a]) {
            if (!alive_face_[f]) continue;
            const auto& t = faces_[f];
            if (t[0] == b || t[1] == b || t[2] == b) ++edge_faces;
        }
        if (edge_faces == 0) return false;
        if (common.size() != edge_faces) return false;

        // Reject normal flips among surviving faces.
        for (uint32_t v : {a, b}) {
            for (uint32_t f : vfaces_[v]) {
                if (!alive_face_[f]) continue;
                const auto& t = faces_[f];
                if ((t[0] == a || t[1] == a || t[2] == a) &&
                    (t[0] == b || t[1] == b || t[2] == b))
                    continue;  // face dies with the collapse
                Vec3 p[3], q[3];
                for (int k = 0; k < 3; ++k) {
                    p[k] = verts_[t[k]];
                    q[k] = (t[k] == v) ? pos : verts_[t[k]];
                }
                Vec3 n0 = (p[1] - p[0]).cross(p[2] - p[0]);
                Vec3 n1 = (q[1] - q[0]).cross(q[2] - q[0]);
                if (n0.dot(n1) <= 0) return false;
                if (n1.norm2() < 1e-24) return false;
            }
        }
        return true;
    }

    void collapse(uint32_t a, uint32_t b, const Vec3& pos) {
        verts_[a] = pos;
        quadrics_[a] += quadrics_[b];
        for (uint32_t f : vfaces_[b]) {
            if (!alive_face_[f]) continue;
            auto& t = faces_[f];
            if (t[0] == a || t[1] == a || t[2] == a) {
                alive_face_[f] = false;
                --alive_faces_;
            } else {
                for (uint32_t k = 0; k < 3; ++k)
                    if (t[k] == b) t[k] = a;
                vfaces_[a].push_back(f);
            }
        }
        vfaces_[b].clear();
        ++version_[a];
        ++version_[b];
        for (uint32_t n : neighbors(a)) {
            ++version_[n];
            push_edge(a, n);
        }
    }

    TriMesh compact() {
        TriMesh out;
        std::vector<uint32_t> remap(verts_.size(), UINT32_MAX);
        for (uint32_t f = 0; f < faces_.size(); ++f) {
            if (!alive_face_[f]) continue;
            std::array<uint32_t, 3> t;
            for (int k = 0; k < 3; ++k) {
                uint32_t v = faces_[f][k];
                if (remap[v] == UINT32_MAX) {
                    remap[v] = uint32_t(out.vertices.size());
                    out.vertices.push_back(verts_[v]);
                }
                t[k] = remap[v];
            }
            out.faces.push_back(t);
        }
        remove_degenerate_faces(out);
        return out;
    }
};

}  // namespace

TriMesh cluster_decimate(const TriMesh& mesh, size_t target_faces, double voxel_size) {
    Aabb box = mesh.bounds();
    double h = voxel_size > 0 ? voxel_size : box.diagonal() / std::cbrt(2.0 * double(target_faces));
    if (!(h > 0)) throw input_error("cluster_decimate: degenerate mesh");

    std::unordered_map<uint64_t, uint32_t> cell_to_cluster;
    std::vector<Vec3> sums;
    std::vector<uint32_t> counts;
    std::vector<uint32_t> vertex_cluster(mesh.vertices.size());
    for (size_t i = 0; i < mesh.vertices.size(); ++i) {
        const Vec3& v = mesh.vertices[i];
        auto cell = [&](double x, double lo) {
            return uint64_t(int64_t(std::floor((x - lo) / h)) + (1 << 20));
        };
        uint64_t key = cell(v.x, box.lo.x) | (cell(v.y, box.lo.y) << 21) |
                       (cell(v.z, box.lo.z) << 42);
        auto [it, inserted] = cell_to_cluster.try_emplace(key, uint32_t(sums.size()));
        if (inserted) {
            sums.push_back({});
            counts.push_back(0);
        }
        uint32_t c = it->second;
        sums[c] += v;
        ++counts[c];
        vertex_cluster[i] = c;
    }

    TriMesh out;
    out.vertices.resize(sums.size());
    for (size_t c = 0; c < sums.size(); ++c) out.vertices[c] = sums[c] / double(counts[c]);
    out.faces.reserve(mesh.faces.size());
    for (const auto& t : mesh.faces) {
        std::array<uint32_t, 3> m = {vertex_cluster[t[0]], vertex_cluster[t[1]],
                                     vertex_cluster[t[2]]};
        if (m[0] == m[1] || m[1] == m[2] || m[2] == m[0]) continue;
        out.faces.push_back(m);
    }
    remove_degenerate_faces(out);
    return out;
}

TriMesh decimate(const TriMesh& mesh, size_t target_faces, size_t threshold) {
    if (target_faces < 4) throw input_error("decimate: target_faces must be at least 4");
    if (mesh.faces.size() <= threshold) return mesh;
    TriMesh out = QemSimplifier(mesh, target_faces).run();
    if (out.faces.size() > target_faces) {
        // Rejected collapses can stall the queue; coarse clustering finishes the job.
        TriMesh clustered = cluster_decimate(out, target_faces);
        size_t guard = 0;
        while (clustered.faces.size() > target_faces && guard++ < 8) {
            double h = clustered.bounds().diagonal() /
                       std::cbrt(2.0 * double(target_faces)) * (1.0 + 0.3 * double(guard));
            clustered = cluster_decimate(clustered, target_faces, h);
        }
        out = std::move(clustered);
    }
    return out;
}

}  // namespace trip

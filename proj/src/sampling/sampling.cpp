#include "trip/sampling/sampling.hpp"

#include <algorithm>
#include <cmath>

#include "trip/core/error.hpp"
#include "trip/core/rng.hpp"

namespace trip {

std::vector<double> vertex_curvature(const TriMesh& mesh) {
    std::vector<Vec3> vnormals = mesh.vertex_normals();
    std::vector<double> sum(mesh.vertices.size(), 0.0);
    std::vector<uint32_t> count(mesh.vertices.size(), 0);
    for (size_t f = 0; f < mesh.faces.size(); ++f) {
        Vec3 fn = mesh.face_normal(f);
        if (fn.norm2() == 0) continue;
        for (uint32_t k = 0; k < 3; ++k) {
            uint32_t v = mesh.faces[f][k];
            double c = std::clamp(vnormals[v].dot(fn), -1.0, 1.0);
            sum[v] += std::acos(c);
            ++count[v];
        }
    }
    std::vector<double> out(mesh.vertices.size(), 0.0);
    for (size_t v = 0; v < out.size(); ++v)
        if (count[v] > 0) out[v] = sum[v] / count[v];
    return out;
}

std::vector<double> face_saliency(const TriMesh& mesh, const SaliencyWeights& weights) {
    std::vector<double> curv = vertex_curvature(mesh);
    std::vector<double> out(mesh.faces.size(), 0.0);
    for (size_t f = 0; f < mesh.faces.size(); ++f) {
        const auto& t = mesh.faces[f];
        double cmax = std::max({curv[t[0]], curv[t[1]], curv[t[2]]});
        double cmean = (curv[t[0]] + curv[t[1]] + curv[t[2]]) / 3.0;
        double term = weights.w_edge * cmax + weights.w_curv * cmean;
        out[f] = mesh.face_area(f) * std::pow(term, weights.alpha);
    }
    return out;
}

namespace {

// Inverse-CDF sampler over non-negative face weights.
struct FaceSampler {
    std::vector<double> cdf;
    double total = 0;

    explicit FaceSampler(const std::vector<double>& weights) {
        cdf.resize(weights.size());
        double acc = 0;
        for (size_t i = 0; i < weights.size(); ++i) {
            acc += weights[i];
            cdf[i] = acc;
        }
        total = acc;
    }
    size_t draw(Rng& rng) const {
        double u = rng.uniform() * total;
        auto it = std::lower_bound(cdf.begin(), cdf.end(), u);
        return std::min(size_t(it - cdf.begin()), cdf.size() - 1);
    }
};

PointCloud sample_faces(const TriMesh& mesh, const std::vector<double>& weights, size_t n,
                        uint64_t seed, PointTag tag) {
    FaceSampler sampler(weights);
    PointCloud out;
    out.points.reserve(n);
    out.tags.assign(n, uint8_t(tag));
    Rng rng(seed);
    for (size_t i = 0; i < n; ++i) {
        size_t f = sampler.draw(rng);
        const auto& t = mesh.faces[f];
        double r1 = std::sqrt(rng.uniform());
        double r2 = rng.uniform();
        double u = 1.0 - r1, v = r1 * (1.0 - r2), w = r1 * r2;
        out.points.push_back(mesh.vertices[t[0]] * u + mesh.vertices[t[1]] * v +
                             mesh.vertices[t[2]] * w);
    }
    return out;
}

}  // namespace

PointCloud sample_salient(const TriMesh& mesh, size_t n, const SaliencyWeights& weights,
                          uint64_t seed) {
    std::vector<double> sal = face_saliency(mesh, weights);
    double total = 0;
    for (double s : sal) total += s;
    if (n > 0 && !(total > 0))
        throw input_error(
            "sample_salient: total saliency is zero; fall back to area-weighted sampling");
    return sample_faces(mesh, sal, n, seed, PointTag::Salient);
}

PointCloud sample_area_weighted(const TriMesh& mesh, size_t n, uint64_t seed) {
    std::vector<double> areas(mesh.faces.size());
    double total = 0;
    for (size_t f = 0; f < mesh.faces.size(); ++f) {
        areas[f] = mesh.face_area(f);
        total += areas[f];
    }
    if (n > 0 && !(total > 0)) throw input_error("sample_area_weighted: zero total area");
    return sample_faces(mesh, areas, n, seed, PointTag::Uniform);
}

std::vector<uint32_t> farthest_point_sampling(const std::vector<Vec3>& points, size_t k,
                                              uint64_t seed, uint32_t start_index) {
    if (k > points.size())
        throw input_error("farthest_point_sampling: k=" + std::to_string(k) + " exceeds " +
                          std::to_string(points.size()) + " points");
    std::vector<uint32_t> selected;
    if (k == 0) return selected;
    selected.reserve(k);

    Rng rng(seed);
    uint32_t first = start_index != UINT32_MAX ? start_index
                                              : uint32_t(rng.below(points.size()));
    selected.push_back(first);

    std::vector<double> min_d2(points.size());
    for (size_t i = 0; i < points.size(); ++i)
        min_d2[i] = (points[i] - points[first]).norm2();

    while (selected.size() < k) {
        uint32_t best = 0;
        double best_d2 = -1;
        for (size_t i = 0; i < points.size(); ++i) {
            if (min_d2[i] > best_d2) {
                best_d2 = min_d2[i];
                best = uint32_t(i);
            }
        }
        selected.push_back(best);
        const Vec3& p = points[best];
        for (size_t i = 0; i < points.size(); ++i)
            min_d2[i] = std::min(min_d2[i], (points[i] - p).norm2());
    }
    return selected;
}

PointCloud hybrid_point_cloud(const TriMesh& mesh, size_t n, double fps_fraction,
                              size_t dense_m, const SaliencyWeights& weights, uint64_t seed,
                              bool salient_area_fallback) {
    if (n < 4) throw input_error("hybrid_point_cloud: need at least 4 points");
    if (fps_fraction < 0 || fps_fraction > 1)
        throw input_error("hybrid_point_cloud: fps_fraction outside [0,1]");
    size_t n_fps = size_t(std::ceil(fps_fraction * double(n)));
    n_fps = std::min(n_fps, n);
    size_t n_salient = n - n_fps;

    PointCloud out;
    out.points.reserve(n);
    out.tags.reserve(n);

    if (n_fps > 0) {
        size_t m = std::max(dense_m, n_fps);
        PointCloud dense = sample_area_weighted(mesh, m, mix_seed(seed, 0x644e53));
        std::vector<uint32_t> picks =
            farthest_point_sampling(dense.points, n_fps, mix_seed(seed, 0x465053));
        for (uint32_t i : picks) {
            out.points.push_back(dense.points[i]);
            out.tags.push_back(uint8_t(PointTag::Uniform));
        }
    }
    if (n_salient > 0) {
        PointCloud sal;
        try {
            sal = sample_salient(mesh, n_salient, weights, mix_seed(seed, 0x53414c));
        } catch (const Error&) {
            if (!salient_area_fallback) throw;
            sal = sample_area_weighted(mesh, n_salient, mix_seed(seed, 0x53414c));
            sal.tags.assign(sal.size(), uint8_t(PointTag::Salient));
        }
        out.points.insert(out.points.end(), sal.points.begin(), sal.points.end());
        out.tags.insert(out.tags.end(), sal.tags.begin(), sal.tags.end());
    }
    return out;
}

}  // namespace trip

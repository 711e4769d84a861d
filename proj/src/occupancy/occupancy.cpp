#include "trip/occupancy/occupancy.hpp"

#include <algorithm>
#include <cmath>

#include "trip/core/error.hpp"
#include "trip/core/parallel.hpp"
#include "trip/core/rng.hpp"
#include "trip/sampling/sampling.hpp"

namespace trip {

namespace {

Vec3 random_unit_vector(Rng& rng) {
    double z = rng.uniform(-1.0, 1.0);
    double phi = rng.uniform(0.0, 2.0 * M_PI);
    double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    return {r * std::cos(phi), r * std::sin(phi), z};
}

}  // namespace

QuerySet sample_query_points(const TriMesh& mesh, size_t m_total, const double ratios[3],
                             double sigma_frac, double bbox_scale, uint64_t seed) {
    double sum = ratios[0] + ratios[1] + ratios[2];
    if (std::abs(sum - 1.0) > 1e-6)
        throw input_error("sample_query_points: ratios sum to " + std::to_string(sum));
    if (!(sigma_frac > 0)) throw input_error("sample_query_points: sigma_frac must be positive");

    size_t m_uniform = size_t(std::llround(ratios[0] * double(m_total)));
    size_t m_surface = size_t(std::llround(ratios[1] * double(m_total)));
    m_uniform = std::min(m_uniform, m_total);
    m_surface = std::min(m_surface, m_total - m_uniform);
    size_t m_near = m_total - m_uniform - m_surface;

    Aabb box = mesh.bounds().scaled(bbox_scale);
    double sigma = sigma_frac * mesh.bounds().mean_extent();

    QuerySet out;
    out.points.reserve(m_total);
    out.tags.reserve(m_total);

    Rng rng(mix_seed(seed, 0x515054));
    for (size_t i = 0; i < m_uniform; ++i) {
        out.points.push_back({rng.uniform(box.lo.x, box.hi.x), rng.uniform(box.lo.y, box.hi.y),
                              rng.uniform(box.lo.z, box.hi.z)});
        out.tags.push_back(uint8_t(QueryTag::Uniform));
    }

    PointCloud surf = sample_area_weighted(mesh, m_surface, mix_seed(seed, 0x535246));
    for (const Vec3& p : surf.points) {
        out.points.push_back(p);
        out.tags.push_back(uint8_t(QueryTag::Surface));
    }

    // Near-surface points ride surface samples along the sampled face normal.
    std::vector<double> areas(mesh.faces.size());
    for (size_t f = 0; f < mesh.faces.size(); ++f) areas[f] = mesh.face_area(f);
    std::vector<double> cdf(areas.size());
    double acc = 0;
    for (size_t f = 0; f < areas.size(); ++f) {
        acc += areas[f];
        cdf[f] = acc;
    }
    if (m_near > 0 && !(acc > 0)) throw input_error("sample_query_points: zero surface area");
    Rng nrng(mix_seed(seed, 0x4e4552));
    for (size_t i = 0; i < m_near; ++i) {
        double u = nrng.uniform() * acc;
        size_t f = std::min(size_t(std::lower_bound(cdf.begin(), cdf.end(), u) - cdf.begin()),
                            cdf.size() - 1);
        const auto& t = mesh.faces[f];
        double r1 = std::sqrt(nrng.uniform());
        double r2 = nrng.uniform();
        Vec3 p = mesh.vertices[t[0]] * (1.0 - r1) + mesh.vertices[t[1]] * (r1 * (1.0 - r2)) +
                 mesh.vertices[t[2]] * (r1 * r2);
        out.points.push_back(p + mesh.face_normal(f) * nrng.normal(0.0, sigma));
        out.tags.push_back(uint8_t(QueryTag::NearSurface));
    }
    return out;
}

std::vector<double> signed_distance(const std::vector<Vec3>& points, const KdTree& vertex_index,
                                    const Bvh& bvh, int n_rays, uint64_t seed,
                                    DistanceMode mode) {
    if (n_rays < 1) throw input_error("signed_distance: n_rays must be at least 1");
    if (vertex_index.empty()) throw input_error("signed_distance: empty mesh");

    std::vector<double> out(points.size());
    parallel_for(points.size(), [&](size_t i) {
        const Vec3& q = points[i];
        double mag = mode == DistanceMode::NearestVertex ? vertex_index.nearest(q).distance
                                                         : bvh.closest_point(q).distance;
        Rng rng(mix_seed(seed, i));
        int vote = 0;
        for (int r = 0; r < n_rays; ++r) {
            Bvh::CountResult res;
            for (int attempt = 0; attempt < 16; ++attempt) {
                res = bvh.count_intersections(q, random_unit_vector(rng));
                if (!res.grazing) break;
            }
            vote += (res.hits % 2 == 1) ? -1 : 1;
        }
        out[i] = vote < 0 ? -mag : mag;
    });
    return out;
}

std::vector<double> signed_distance(const std::vector<Vec3>& points, const TriMesh& mesh,
                                    int n_rays, uint64_t seed, DistanceMode mode) {
    KdTree tree(mesh.vertices);
    Bvh bvh(mesh);
    return signed_distance(points, tree, bvh, n_rays, seed, mode);
}

double sdf_to_occupancy(double sdf, double s) {
    if (!(s > 0)) throw input_error("sdf_to_occupancy: s must be positive");
    return std::clamp(0.5 - 0.5 * sdf / s, 0.0, 1.0);
}

OccupancyField build_field(const TriMesh& mesh, double cd_label, const FieldConfig& config) {
    const double ratios[3] = {config.ratio_uniform, config.ratio_surface, config.ratio_near};
    QuerySet queries = sample_query_points(mesh, config.m_total, ratios, config.sigma_frac,
                                           config.bbox_scale, config.seed);
    std::vector<double> sdf =
        signed_distance(queries.points, mesh, config.n_rays, mix_seed(config.seed, 0x534447),
                        config.triangle_exact ? DistanceMode::NearestTriangle
                                              : DistanceMode::NearestVertex);
    OccupancyField field;
    field.query_points = std::move(queries.points);
    field.tags = std::move(queries.tags);
    field.s_threshold = config.s_frac * mesh.bounds().mean_extent();
    field.occupancy.resize(sdf.size());
    for (size_t i = 0; i < sdf.size(); ++i)
        field.occupancy[i] = float(sdf_to_occupancy(sdf[i], field.s_threshold));
    field.cd_label = cd_label;
    field.ratios[0] = config.ratio_uniform;
    field.ratios[1] = config.ratio_surface;
    field.ratios[2] = config.ratio_near;
    return field;
}

std::vector<uint32_t> subsample_indices(size_t total, size_t m, uint64_t seed) {
    if (m > total)
        throw input_error("subsample: m=" + std::to_string(m) + " exceeds field size " +
                          std::to_string(total));
    // Partial Fisher-Yates over an index array.
    std::vector<uint32_t> idx(total);
    for (size_t i = 0; i < total; ++i) idx[i] = uint32_t(i);
    Rng rng(seed);
    for (size_t i = 0; i < m; ++i) {
        size_t j = i + rng.below(total - i);
        std::swap(idx[i], idx[j]);
    }
    idx.resize(m);
    return idx;
}

std::pair<std::vector<Vec3>, std::vector<float>> subsample_field(const OccupancyField& field,
                                                                 size_t m, uint64_t seed) {
    std::vector<uint32_t> idx = subsample_indices(field.query_points.size(), m, seed);
    std::vector<Vec3> pts(m);
    std::vector<float> occ(m);
    for (size_t i = 0; i < m; ++i) {
        pts[i] = field.query_points[idx[i]];
        occ[i] = field.occupancy[idx[i]];
    }
    return {std::move(pts), std::move(occ)};
}

}  // namespace trip

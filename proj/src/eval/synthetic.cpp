#include "trip/eval/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "trip/core/error.hpp"
#include "trip/core/rng.hpp"

namespace trip::eval {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kFrontalWeight = 1.0;
constexpr double kRearWeight = 0.5;
constexpr double kRearSlabFraction = 0.1;

double signed_pow(double t, double m) {
    if (t == 0) return 0;
    return (t < 0 ? -1.0 : 1.0) * std::pow(std::abs(t), m);
}

// Exact cross-section area at the plane x = x0: shoelace sum over directed
// plane-triangle intersection segments. Callers guarantee no vertex lies on
// the plane.
double slice_area_at(const TriMesh& mesh, double x0) {
    double total = 0;
    for (const auto& f : mesh.faces) {
        const Vec3* vs[3] = {&mesh.vertices[f[0]], &mesh.vertices[f[1]], &mesh.vertices[f[2]]};
        double ds[3] = {vs[0]->x - x0, vs[1]->x - x0, vs[2]->x - x0};
        bool pos = ds[0] > 0 || ds[1] > 0 || ds[2] > 0;
        bool neg = ds[0] < 0 || ds[1] < 0 || ds[2] < 0;
        if (!pos || !neg) continue;
        Vec3 p[2];
        int np = 0;
        for (int e = 0; e < 3 && np < 2; ++e) {
            int i = e, j = (e + 1) % 3;
            if ((ds[i] > 0) == (ds[j] > 0)) continue;
            double t = ds[i] / (ds[i] - ds[j]);
            p[np++] = *vs[i] + (*vs[j] - *vs[i]) * t;
        }
        if (np != 2) continue;
        Vec3 n = (*vs[1] - *vs[0]).cross(*vs[2] - *vs[0]);
        // Contour direction that makes the shoelace sign positive for an
        // outward-wound mesh: e_x x n.
        Vec3 tdir{0, -n.z, n.y};
        if ((p[1] - p[0]).dot(tdir) < 0) std::swap(p[0], p[1]);
        total += 0.5 * (p[0].y * p[1].z - p[1].y * p[0].z);
    }
    return std::abs(total);
}

double nudged_slice_area(const TriMesh& mesh, double x0, double span) {
    double eps = 1e-9 * span;
    double x = x0;
    for (int attempt = 0; attempt < 16; ++attempt) {
        bool clean = true;
        for (const Vec3& v : mesh.vertices) {
            if (std::abs(v.x - x) < 1e-12 * span) {
                clean = false;
                break;
            }
        }
        if (clean) break;
        x += eps;
        eps *= 2;
    }
    return slice_area_at(mesh, x);
}

}  // namespace

double superellipse_area(double e) {
    double g = std::tgamma(1.0 + 0.5 * e);
    return 4.0 * g * g / std::tgamma(1.0 + e);
}

void SyntheticShapeSpec::validate() const {
    for (double v : {e1, e2, a, b, c, tail_taper, nose_bluntness})
        if (!std::isfinite(v)) throw input_error("synthetic shape spec has a non-finite field");
    if (e1 < 0.5 || e1 > 4.0 || e2 < 0.5 || e2 > 4.0)
        throw input_error("superellipsoid exponents must lie in [0.5, 4]");
    if (a <= 0 || b <= 0 || c <= 0)
        throw input_error("superellipsoid half-extents must be positive");
    if (tail_taper < 0 || tail_taper >= 1) throw input_error("tail taper must lie in [0, 1)");
    if (nose_bluntness < 0 || nose_bluntness > 4)
        throw input_error("nose bluntness must lie in [0, 4]");
}

bool SyntheticShapeSpec::inside(const Vec3& p) const {
    if (std::abs(p.x) >= a) return false;
    double s = p.x < 0 ? 1.0 - tail_taper * (-p.x / a) : 1.0;
    double xw = p.x > 0 ? a * std::pow(p.x / a, 1.0 + nose_bluntness) : p.x;
    double ry = std::abs(p.y) / (s * b);
    double rz = std::abs(p.z) / (s * c);
    double f = std::pow(std::pow(ry, 2.0 / e2) + std::pow(rz, 2.0 / e2), e2 / e1) +
               std::pow(std::abs(xw) / a, 2.0 / e1);
    return f < 1.0;
}

double SyntheticShapeSpec::section_area(double x) const {
    if (std::abs(x) >= a) return 0;
    double s = x < 0 ? 1.0 - tail_taper * (-x / a) : 1.0;
    double xw = x > 0 ? a * std::pow(x / a, 1.0 + nose_bluntness) : x;
    double q = 1.0 - std::pow(std::abs(xw) / a, 2.0 / e1);
    double r = std::pow(q, 0.5 * e1) * s;
    return superellipse_area(e2) * (b * r) * (c * r);
}

SyntheticShapeSpec SyntheticShapeSpec::scaled(double factor) const {
    if (!(factor > 0) || !std::isfinite(factor))
        throw input_error("scale factor must be positive");
    SyntheticShapeSpec out = *this;
    out.a *= factor;
    out.b *= factor;
    out.c *= factor;
    return out;
}

TriMesh make_superellipsoid_mesh(const SyntheticShapeSpec& spec, int n_lat, int n_lon) {
    spec.validate();
    if (n_lat < 4 || n_lon < 4)
        throw input_error("superellipsoid tessellation needs n_lat and n_lon of at least 4");

    auto place = [&](double eta, double omega) {
        double xb = spec.a * signed_pow(std::sin(eta), spec.e1);
        double r = std::pow(std::max(0.0, std::cos(eta)), spec.e1);
        double u = r * signed_pow(std::cos(omega), spec.e2);
        double v = r * signed_pow(std::sin(omega), spec.e2);
        double x = xb > 0 ? spec.a * std::pow(xb / spec.a, 1.0 / (1.0 + spec.nose_bluntness)) : xb;
        double s = x < 0 ? 1.0 - spec.tail_taper * (-x / spec.a) : 1.0;
        return Vec3{x, spec.b * u * s, spec.c * v * s};
    };

    TriMesh mesh;
    uint32_t tail = 0;
    mesh.vertices.push_back(Vec3{-spec.a, 0, 0});
    std::vector<std::vector<uint32_t>> ring(size_t(n_lat - 1));
    for (int i = 1; i < n_lat; ++i) {
        double eta = -0.5 * kPi + kPi * double(i) / n_lat;
        auto& row = ring[size_t(i - 1)];
        row.resize(size_t(n_lon));
        for (int j = 0; j < n_lon; ++j) {
            row[size_t(j)] = uint32_t(mesh.vertices.size());
            mesh.vertices.push_back(place(eta, 2.0 * kPi * double(j) / n_lon));
        }
    }
    uint32_t nose = uint32_t(mesh.vertices.size());
    mesh.vertices.push_back(Vec3{spec.a, 0, 0});

    for (int j = 0; j < n_lon; ++j) {
        int jn = (j + 1) % n_lon;
        mesh.faces.push_back({tail, ring[0][size_t(jn)], ring[0][size_t(j)]});
    }
    for (int i = 0; i + 2 < n_lat; ++i) {
        for (int j = 0; j < n_lon; ++j) {
            int jn = (j + 1) % n_lon;
            uint32_t q0 = ring[size_t(i)][size_t(j)], q1 = ring[size_t(i)][size_t(jn)];
            uint32_t q2 = ring[size_t(i + 1)][size_t(jn)], q3 = ring[size_t(i + 1)][size_t(j)];
            mesh.faces.push_back({q0, q1, q2});
            mesh.faces.push_back({q0, q2, q3});
        }
    }
    for (int j = 0; j < n_lon; ++j) {
        int jn = (j + 1) % n_lon;
        mesh.faces.push_back({ring[size_t(n_lat - 2)][size_t(j)],
                              ring[size_t(n_lat - 2)][size_t(jn)], nose});
    }
    return mesh;
}

DragProxy drag_proxy(const SyntheticShapeSpec& spec) {
    spec.validate();
    double a_max = spec.section_area(0.0);
    double rear_face = -spec.a + kRearSlabFraction * (2.0 * spec.a);
    DragProxy p;
    p.frontal_area = a_max;
    p.rear_ratio = spec.section_area(rear_face) / a_max;
    p.value = kFrontalWeight * p.frontal_area + kRearWeight * p.rear_ratio;
    return p;
}

DragProxy drag_proxy(const TriMesh& mesh) {
    if (mesh.face_count() == 0) throw input_error("drag proxy requires a non-empty mesh");
    if (!mesh.is_watertight()) throw input_error("drag proxy requires a closed mesh");
    Aabb box = mesh.bounds();
    double lo = box.lo.x, hi = box.hi.x;
    double span = hi - lo;
    if (!(span > 0)) throw input_error("mesh has no extent along the length axis");

    const int kCoarse = 128;
    double best_x = lo + 0.5 * span, best_a = -1;
    for (int i = 0; i < kCoarse; ++i) {
        double x = lo + span * (double(i) + 0.5) / kCoarse;
        double area = nudged_slice_area(mesh, x, span);
        if (area > best_a) {
            best_a = area;
            best_x = x;
        }
    }
    // Golden-section refinement around the coarse argmax; section area can
    // have a cusp-shaped peak for high length exponents.
    double step = span / kCoarse;
    double lo_x = std::max(lo, best_x - step), hi_x = std::min(hi, best_x + step);
    const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
    double x1 = hi_x - gr * (hi_x - lo_x), x2 = lo_x + gr * (hi_x - lo_x);
    double a1 = nudged_slice_area(mesh, x1, span), a2 = nudged_slice_area(mesh, x2, span);
    for (int it = 0; it < 48; ++it) {
        if (a1 < a2) {
            lo_x = x1;
            x1 = x2, a1 = a2;
            x2 = lo_x + gr * (hi_x - lo_x);
            a2 = nudged_slice_area(mesh, x2, span);
        } else {
            hi_x = x2;
            x2 = x1, a2 = a1;
            x1 = hi_x - gr * (hi_x - lo_x);
            a1 = nudged_slice_area(mesh, x1, span);
        }
        best_a = std::max({best_a, a1, a2});
    }
    if (!(best_a > 0)) throw input_error("mesh has no measurable cross-section");

    const int kRearSlices = 32;
    double rear_hi = lo + kRearSlabFraction * span;
    double rear_a = 0;
    for (int i = 0; i <= kRearSlices; ++i) {
        double x = lo + (rear_hi - lo) * double(i) / kRearSlices;
        rear_a = std::max(rear_a, nudged_slice_area(mesh, x, span));
    }

    DragProxy p;
    p.frontal_area = best_a;
    p.rear_ratio = rear_a / best_a;
    p.value = kFrontalWeight * p.frontal_area + kRearWeight * p.rear_ratio;
    return p;
}

DragProxy drag_proxy(const ScalarGrid& grid, double iso) {
    grid.validate();
    double cell_area = grid.cell.y * grid.cell.z;
    std::vector<double> slice(grid.nx, 0.0);
    uint32_t ix_min = grid.nx, ix_max = 0;
    for (uint32_t ix = 0; ix < grid.nx; ++ix) {
        size_t count = 0;
        for (uint32_t iz = 0; iz < grid.nz; ++iz)
            for (uint32_t iy = 0; iy < grid.ny; ++iy)
                if (grid.at(ix, iy, iz) >= iso) ++count;
        slice[ix] = double(count) * cell_area;
        if (count > 0) {
            ix_min = std::min(ix_min, ix);
            ix_max = std::max(ix_max, ix);
        }
    }
    if (ix_min > ix_max)
        throw input_error("occupancy grid has no occupied cells at the iso level");
    double a_max = *std::max_element(slice.begin(), slice.end());

    // Projected occupied area over the tailmost 10% of the occupied span.
    uint32_t rear_end =
        std::min(ix_max, ix_min + uint32_t(std::ceil(kRearSlabFraction * double(ix_max - ix_min))));
    size_t rear_count = 0;
    for (uint32_t iz = 0; iz < grid.nz; ++iz)
        for (uint32_t iy = 0; iy < grid.ny; ++iy) {
            bool occupied = false;
            for (uint32_t ix = ix_min; ix <= rear_end && !occupied; ++ix)
                occupied = grid.at(ix, iy, iz) >= iso;
            if (occupied) ++rear_count;
        }

    DragProxy p;
    p.frontal_area = a_max;
    p.rear_ratio = double(rear_count) * cell_area / a_max;
    p.value = kFrontalWeight * p.frontal_area + kRearWeight * p.rear_ratio;
    return p;
}

std::vector<SyntheticShape> make_synthetic_dataset(int n_shapes, uint64_t seed) {
    if (n_shapes < 1) throw input_error("synthetic dataset needs at least one shape");
    std::vector<SyntheticShape> out;
    out.reserve(size_t(n_shapes));
    for (int i = 0; i < n_shapes; ++i) {
        Rng rng(mix_seed(seed, uint64_t(i)));
        SyntheticShapeSpec spec;
        spec.e1 = rng.uniform(0.7, 2.2);
        spec.e2 = rng.uniform(0.7, 2.2);
        spec.a = rng.uniform(0.35, 0.6);
        spec.b = rng.uniform(0.18, 0.42);
        spec.c = rng.uniform(0.18, 0.42);
        spec.tail_taper = rng.uniform(0.0, 0.7);
        spec.nose_bluntness = rng.uniform(0.0, 1.0);
        spec.seed = mix_seed(seed, uint64_t(i));

        SyntheticShape shape;
        std::ostringstream id;
        id << "synth_" << std::setw(4) << std::setfill('0') << i;
        shape.id = id.str();
        auto [mesh, transform] = normalize(make_superellipsoid_mesh(spec));
        shape.mesh = std::move(mesh);
        shape.transform = transform;
        shape.spec = spec.scaled(transform.scale);
        shape.cd_label = drag_proxy(shape.spec).value;
        out.push_back(std::move(shape));
    }
    return out;
}

}  // namespace trip::eval

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>

#include "helpers.hpp"
#include "trip/core/error.hpp"
#include "trip/core/rng.hpp"
#include "trip/geometry/primitives.hpp"
#include "trip/occupancy/occupancy.hpp"
#include "trip/surface/surface.hpp"

using namespace trip;

namespace {

constexpr double kPi = 3.14159265358979323846;

// Occupancy of a centered sphere: 1 deep inside, 0 outside, linear across a
// band of half-width s about the radius.
ScalarGrid sphere_grid(double r, double s, double half_extent, uint32_t res) {
    Aabb box({-half_extent, -half_extent, -half_extent}, {half_extent, half_extent, half_extent});
    return sample_scalar_grid(box, res, [&](const Vec3& p) {
        return sdf_to_occupancy(p.norm() - r, s);
    });
}

double volume_of(const TriMesh& mesh) { return mass_properties(mesh).volume; }

double radius_stddev(const TriMesh& mesh) {
    double mean = 0;
    for (const auto& v : mesh.vertices) mean += v.norm();
    mean /= double(mesh.vertex_count());
    double var = 0;
    for (const auto& v : mesh.vertices) {
        double d = v.norm() - mean;
        var += d * d;
    }
    return std::sqrt(var / double(mesh.vertex_count()));
}

double max_radius_deviation(const TriMesh& mesh) {
    double mean = 0;
    for (const auto& v : mesh.vertices) mean += v.norm();
    mean /= double(mesh.vertex_count());
    double worst = 0;
    for (const auto& v : mesh.vertices) worst = std::max(worst, std::abs(v.norm() - mean));
    return worst;
}

}  // namespace

TEST_CASE("scalar grid accessors walk x fastest") {
    ScalarGrid g;
    g.nx = 2;
    g.ny = 3;
    g.nz = 4;
    g.origin = {1, 2, 3};
    g.cell = {0.5, 0.25, 0.125};
    g.values.resize(24);
    for (size_t i = 0; i < g.values.size(); ++i) g.values[i] = float(i);
    CHECK(g.index(1, 0, 0) == 1);
    CHECK(g.index(0, 1, 0) == 2);
    CHECK(g.index(0, 0, 1) == 6);
    CHECK(g.at(1, 2, 3) == doctest::Approx(23.0));
    Vec3 p = g.position(1, 2, 3);
    CHECK(p.x == doctest::Approx(1.5));
    CHECK(p.y == doctest::Approx(2.5));
    CHECK(p.z == doctest::Approx(3.375));
    CHECK_NOTHROW(g.validate());
}

TEST_CASE("grid validation rejects bad shapes and values") {
    ScalarGrid g;
    g.nx = g.ny = g.nz = 2;
    g.cell = {1, 1, 1};
    g.values.assign(8, 0.5f);
    CHECK_NOTHROW(g.validate());

    ScalarGrid thin = g;
    thin.nz = 1;
    thin.values.assign(4, 0.5f);
    CHECK_THROWS_AS(thin.validate(), Error);

    ScalarGrid short_values = g;
    short_values.values.pop_back();
    CHECK_THROWS_AS(short_values.validate(), Error);

    ScalarGrid poisoned = g;
    poisoned.values[3] = std::numeric_limits<float>::quiet_NaN();
    CHECK_THROWS_AS(poisoned.validate(), Error);
    CHECK_THROWS_AS(marching_cubes(poisoned, 0.5), Error);

    ScalarGrid flat_cell = g;
    flat_cell.cell.y = 0;
    CHECK_THROWS_AS(flat_cell.validate(), Error);
}

TEST_CASE("sampled grid spans the box with exact corner values") {
    Aabb box({-1, 0, 2}, {1, 4, 3});
    ScalarGrid g = sample_scalar_grid(box, 5, [](const Vec3& p) { return p.x + p.y + p.z; });
    CHECK(g.nx == 5);
    CHECK(g.values.size() == 125);
    CHECK(g.position(0, 0, 0) == box.lo);
    Vec3 far = g.position(4, 4, 4);
    CHECK(far.x == doctest::Approx(1.0));
    CHECK(far.y == doctest::Approx(4.0));
    CHECK(far.z == doctest::Approx(3.0));
    CHECK(g.at(0, 0, 0) == doctest::Approx(1.0));
    CHECK(g.at(4, 4, 4) == doctest::Approx(8.0));
    CHECK_THROWS_AS(sample_scalar_grid(box, 1, [](const Vec3&) { return 0.0; }), Error);
}

TEST_CASE("sphere extraction matches analytic area and volume") {
    ScalarGrid g = sphere_grid(0.3, 0.03, 0.45, 64);
    TriMesh mesh = marching_cubes(g, 0.5);
    REQUIRE(mesh.face_count() > 0);
    CHECK(mesh.is_watertight());
    CHECK(mesh.degenerate_face_count() == 0);

    MassProperties mp = mass_properties(mesh);
    double area_true = 4.0 * kPi * 0.3 * 0.3;
    double vol_true = 4.0 / 3.0 * kPi * 0.3 * 0.3 * 0.3;
    CHECK(mp.volume > 0);
    CHECK(std::abs(mp.surface_area - area_true) / area_true < 0.03);
    CHECK(std::abs(mp.volume - vol_true) / vol_true < 0.03);
    CHECK(mp.centroid.norm() < 1e-3);
}

TEST_CASE("face normals point toward decreasing occupancy") {
    ScalarGrid g = sphere_grid(0.3, 0.03, 0.45, 32);
    TriMesh mesh = marching_cubes(g, 0.5);
    REQUIRE(mesh.face_count() > 0);
    for (size_t f = 0; f < mesh.face_count(); ++f) {
        Vec3 outward = mesh.face_centroid(f).normalized();
        CHECK(mesh.face_normal(f).dot(outward) > 0);
    }
}

TEST_CASE("iso level outside the value range yields an empty mesh") {
    ScalarGrid zeros;
    zeros.nx = zeros.ny = zeros.nz = 4;
    zeros.cell = {0.1, 0.1, 0.1};
    zeros.values.assign(64, 0.0f);
    TriMesh empty = marching_cubes(zeros, 0.5);
    CHECK(empty.vertex_count() == 0);
    CHECK(empty.face_count() == 0);

    ScalarGrid low = zeros;
    low.values.assign(64, 0.2f);
    CHECK(marching_cubes(low, 0.5).face_count() == 0);
}

TEST_CASE("half space field extracts a planar sheet at the crossing") {
    double s = 0.1;
    Aabb box({-0.5, -0.5, -0.5}, {0.5, 0.5, 0.5});
    auto field = [&](const Vec3& p) { return sdf_to_occupancy(p.z, s); };

    for (uint32_t res : {32u, 33u}) {  // crossing mid-cell and exactly on a lattice plane
        ScalarGrid g = sample_scalar_grid(box, res, field);
        TriMesh sheet = marching_cubes(g, 0.5);
        REQUIRE(sheet.face_count() > 0);
        for (const auto& v : sheet.vertices) {
            CHECK(v.finite());
            CHECK(std::abs(v.z) <= g.cell.z + 1e-12);
        }
        for (size_t f = 0; f < sheet.face_count(); ++f)
            CHECK(sheet.face_normal(f).z > 0.99);  // occupancy decreases upward
    }
}

TEST_CASE("blob field extraction is watertight and negation flips orientation") {
    Rng rng(11);
    std::vector<Vec3> centers;
    for (int i = 0; i < 5; ++i)
        centers.push_back({rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2)});
    auto blobs = [&](const Vec3& p) {
        double acc = 0;
        for (const auto& c : centers) acc += std::exp(-(p - c).norm2() / (2 * 0.15 * 0.15));
        return acc;
    };
    Aabb box({-0.6, -0.6, -0.6}, {0.6, 0.6, 0.6});
    ScalarGrid g = sample_scalar_grid(box, 28, blobs);
    double top = *std::max_element(g.values.begin(), g.values.end());
    double iso = 0.5 * top;

    TriMesh mesh = marching_cubes(g, iso);
    REQUIRE(mesh.face_count() > 0);
    CHECK(mesh.is_watertight());
    CHECK(volume_of(mesh) > 0);

    ScalarGrid neg = g;
    for (float& v : neg.values) v = -v;
    TriMesh flipped = marching_cubes(neg, -iso);
    CHECK(flipped.vertex_count() == mesh.vertex_count());
    CHECK(flipped.face_count() == mesh.face_count());
    CHECK(flipped.is_watertight());
    CHECK(volume_of(flipped) == doctest::Approx(-volume_of(mesh)).epsilon(1e-9));
}

TEST_CASE("halving the cell size at least halves the volume error") {
    double vol_true = 4.0 / 3.0 * kPi * 0.3 * 0.3 * 0.3;
    double err_coarse =
        std::abs(volume_of(marching_cubes(sphere_grid(0.3, 0.03, 0.45, 33), 0.5)) - vol_true);
    double err_fine =
        std::abs(volume_of(marching_cubes(sphere_grid(0.3, 0.03, 0.45, 65), 0.5)) - vol_true);
    CHECK(err_fine < err_coarse / 2.0);
}

TEST_CASE("zero smoothing iterations return the mesh unchanged") {
    TriMesh mesh = make_icosphere(0.3, 2);
    TriMesh out = smooth_mesh(mesh, 0, 0.5);
    REQUIRE(out.vertex_count() == mesh.vertex_count());
    for (size_t i = 0; i < mesh.vertex_count(); ++i) CHECK(out.vertices[i] == mesh.vertices[i]);
    CHECK(out.faces == mesh.faces);
    CHECK_THROWS_AS(smooth_mesh(mesh, -1, 0.5), Error);
}

TEST_CASE("laplacian smoothing shrinks a closed surface monotonically") {
    TriMesh mesh = make_icosphere(0.3, 2);
    double prev = volume_of(mesh);
    for (int it = 1; it <= 5; ++it) {
        double vol = volume_of(smooth_mesh(mesh, it, 0.5));
        CHECK(vol < prev);
        prev = vol;
    }
}

// Sphere field with per-lattice-point jitter, so the extracted surface shows
// genuine staircase roughness for the smoothing tests to remove.
TriMesh rough_sphere_mesh() {
    Aabb box({-0.45, -0.45, -0.45}, {0.45, 0.45, 0.45});
    ScalarGrid g = sample_scalar_grid(box, 48, [](const Vec3& p) {
        double jitter = 0.04 * std::sin(73.1 * p.x + 51.7 * p.y + 29.3 * p.z);
        return sdf_to_occupancy(p.norm() - 0.3, 0.03) + jitter;
    });
    return marching_cubes(g, 0.5);
}

TEST_CASE("smoothing reduces marching cubes roughness") {
    TriMesh mesh = rough_sphere_mesh();
    REQUIRE(mesh.face_count() > 0);
    TriMesh smoothed = smooth_mesh(mesh, 5, 0.5);
    CHECK(smoothed.vertex_count() == mesh.vertex_count());
    CHECK(smoothed.faces == mesh.faces);
    CHECK(radius_stddev(smoothed) < radius_stddev(mesh));
    CHECK(max_radius_deviation(smoothed) < max_radius_deviation(mesh));
}

TEST_CASE("taubin smoothing preserves volume better than laplacian") {
    TriMesh mesh = rough_sphere_mesh();
    double vol0 = volume_of(mesh);
    double lap = volume_of(smooth_mesh(mesh, 5, 0.5));
    double tau = volume_of(taubin_smooth(mesh, 5, 0.5, -0.53));
    CHECK(std::abs(tau - vol0) < std::abs(lap - vol0));
    CHECK(radius_stddev(taubin_smooth(mesh, 5, 0.5, -0.53)) < radius_stddev(mesh));
}

TEST_CASE("identical meshes diff to zero displacement") {
    TriMesh mesh = make_icosphere(0.7, 3);
    DisplacementMap map = signed_distance_map(mesh, mesh);
    REQUIRE(map.values.size() == mesh.vertex_count());
    for (double v : map.values) CHECK(std::abs(v) < 1e-6);
}

TEST_CASE("concentric spheres diff to a uniform outward offset") {
    TriMesh inner = make_icosphere(1.0, 4);
    TriMesh outer = make_icosphere(1.1, 4);
    DisplacementMap grow = signed_distance_map(inner, outer);
    for (double v : grow.values) CHECK(v == doctest::Approx(0.1).epsilon(0.01));

    DisplacementMap shrink = signed_distance_map(outer, inner);
    for (double v : shrink.values) CHECK(v < 0);
    double mean = 0;
    for (double v : shrink.values) mean += v;
    mean /= double(shrink.values.size());
    CHECK(mean == doctest::Approx(-0.1).epsilon(0.05));
}

TEST_CASE("displacement maps ignore a rigid translation of both meshes") {
    TriMesh a = marching_cubes(sphere_grid(0.3, 0.03, 0.45, 24), 0.5);
    TriMesh b = make_icosphere(0.33, 3);
    DisplacementMap before = signed_distance_map(a, b);

    Vec3 t{0.123, -0.456, 0.789};
    TriMesh at = a, bt = b;
    at.apply_translation(t);
    bt.apply_translation(t);
    DisplacementMap after = signed_distance_map(at, bt);
    REQUIRE(after.values.size() == before.values.size());
    for (size_t i = 0; i < before.values.size(); ++i)
        CHECK(std::abs(after.values[i] - before.values[i]) < 1e-9);
}

TEST_CASE("displacement map rejects empty meshes") {
    TriMesh mesh = make_icosphere(0.5, 1);
    TriMesh empty;
    CHECK_THROWS_AS(signed_distance_map(empty, mesh), Error);
    CHECK_THROWS_AS(signed_distance_map(mesh, empty), Error);
}

TEST_CASE("displacement csv round trips exactly") {
    test::TempDir tmp;
    DisplacementMap map;
    Rng rng(5);
    for (int i = 0; i < 100; ++i) map.values.push_back(rng.normal(0.0, 0.37));
    map.values[7] = -0.0;
    std::string path = tmp.file("disp.csv");
    save_displacement_csv(path, map);

    DisplacementMap back = load_displacement_csv(path);
    REQUIRE(back.values.size() == map.values.size());
    for (size_t i = 0; i < map.values.size(); ++i) CHECK(back.values[i] == map.values[i]);

    std::ifstream in(path);
    std::string header;
    std::getline(in, header);
    CHECK(header == "vertex_index,dx");
}

TEST_CASE("malformed displacement csv is rejected") {
    test::TempDir tmp;
    CHECK_THROWS_AS(load_displacement_csv(tmp.file("absent.csv")), Error);

    std::string bad_header = tmp.file("bad_header.csv");
    std::ofstream(bad_header) << "foo,bar\n0,1.0\n";
    CHECK_THROWS_AS(load_displacement_csv(bad_header), Error);

    std::string bad_row = tmp.file("bad_row.csv");
    std::ofstream(bad_row) << "vertex_index,dx\n0,1.0\n1\n";
    CHECK_THROWS_AS(load_displacement_csv(bad_row), Error);

    std::string bad_value = tmp.file("bad_value.csv");
    std::ofstream(bad_value) << "vertex_index,dx\n0,potato\n";
    CHECK_THROWS_AS(load_displacement_csv(bad_value), Error);
}

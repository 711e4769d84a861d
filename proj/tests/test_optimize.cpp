#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "helpers.hpp"
#include "trip/geometry/primitives.hpp"
#include "trip/optimize/refine.hpp"
#include "trip/train/trainer.hpp"

using namespace trip;
using namespace trip::optimize;

namespace {

model::ModelConfig micro_config() {
    model::ModelConfig c;
    c.fourier_bands = 2;
    c.n_points = 16;
    c.encoder_channels = {8, 8};
    c.attn_heads = 2;
    c.latent_d = 4;
    c.latent_h = 2;
    c.latent_w = 2;
    c.plane_channels = 4;
    c.decoder_channels = {8, 8};
    c.norm_groups = 4;
    c.occ_hidden = 8;
    c.occ_layers = 2;
    c.cd_conv_channels = {8, 8};
    c.cd_se_reduction = 4;
    c.cd_attn_heads = 2;
    c.cd_embed = 8;
    c.cd_mlp_depth = 2;
    return c;
}

train::Dataset tiny_dataset(int n_shapes, int cloud_points, size_t field_m, uint64_t seed) {
    train::Dataset ds;
    for (int i = 0; i < n_shapes; ++i) {
        TriMesh raw = make_icosphere(0.2 + 0.03 * i, 2);
        auto [mesh, transform] = normalize(raw);
        train::ShapeRecord rec;
        rec.id = "shape_" + std::to_string(i);
        rec.mesh = mesh;
        rec.transform = transform;
        rec.cloud = hybrid_point_cloud(mesh, size_t(cloud_points), 0.5, 512, {},
                                       mix_seed(seed, uint64_t(i)), true);
        FieldConfig fc;
        fc.m_total = field_m;
        fc.seed = mix_seed(seed, 0x1000 + uint64_t(i));
        OccupancyField field = build_field(mesh, 0.2 + 0.05 * i, fc);
        rec.field_points = field.query_points;
        rec.field_occupancy = field.occupancy;
        rec.field_tags = field.tags;
        rec.s_threshold = field.s_threshold;
        rec.cd = float(field.cd_label);
        ds.shapes.push_back(std::move(rec));
    }
    return ds;
}

// One briefly trained micro model shared by the refinement tests.
struct TrainedFixture {
    model::TriplaneVae net;
    train::Dataset ds;

    TrainedFixture() : net(micro_config(), 7) {
        ds = tiny_dataset(3, 16, 96, 42);
        train::Split split;
        split.train = {ds.shapes[0].id, ds.shapes[1].id};
        split.val = {ds.shapes[2].id};
        train::TrainConfig tc;
        tc.epochs = 3;
        tc.lr = 1e-3;
        tc.m_queries = 64;
        tc.seed = 5;
        test::TempDir dir;
        train::train(net, ds, split, tc, train::LossWeights{}, dir.path);
    }
};

const TrainedFixture& trained() {
    static TrainedFixture f;
    return f;
}

std::vector<std::vector<float>> snapshot(const model::TriplaneVae& net) {
    std::vector<std::vector<float>> out;
    for (const auto& e : net.params().entries()) out.push_back(e.value.data);
    return out;
}

bool bitwise_equal(const std::vector<float>& a, const std::vector<float>& b) {
    if (a.size() != b.size()) return false;
    for (size_t i = 0; i < a.size(); ++i) {
        if (std::memcmp(&a[i], &b[i], sizeof(float)) != 0) return false;
    }
    return true;
}

}  // namespace

TEST_CASE("refinement config validation") {
    model::TriplaneVae net(micro_config(), 1);
    PointCloud x = trained().ds.shapes[0].cloud;

    RefinementConfig bad;
    bad.cd_target = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(refine_encoder(net, x, bad), Error);

    bad = RefinementConfig{};
    bad.steps = -1;
    CHECK_THROWS_AS(refine_encoder(net, x, bad), Error);

    bad = RefinementConfig{};
    bad.lr = 0;
    CHECK_THROWS_AS(refine_encoder(net, x, bad), Error);

    size_t enc_groups = net.encoder_group_names().size();
    bad = RefinementConfig{};
    bad.n_frozen_layer_groups = int(enc_groups);
    CHECK_THROWS_AS(refine_encoder(net, x, bad), Error);

    // Freezing nothing is allowed.
    RefinementConfig open;
    open.n_frozen_layer_groups = 0;
    open.steps = 1;
    CHECK_NOTHROW(refine_encoder(net, x, open));
}

TEST_CASE("zero steps returns the model unchanged") {
    const auto& fx = trained();
    PointCloud x = fx.ds.shapes[0].cloud;
    RefinementConfig cfg;
    cfg.cd_target = 0.05;
    cfg.steps = 0;

    auto before = snapshot(fx.net);
    auto [refined, trace] = refine_encoder(fx.net, x, cfg);

    CHECK(trace.steps_taken() == 0);
    CHECK_FALSE(trace.early_stopped);
    CHECK(trace.cd_pred.empty());
    CHECK(trace.l_opt.empty());
    CHECK(trace.final_cd == trace.initial_cd);
    CHECK(trace.z_opt.numel() == size_t(4 * 2 * 2));

    auto after = snapshot(refined);
    REQUIRE(after.size() == before.size());
    for (size_t i = 0; i < after.size(); ++i) CHECK(bitwise_equal(before[i], after[i]));
}

TEST_CASE("a target equal to the prediction stops before any update") {
    const auto& fx = trained();
    PointCloud x = fx.ds.shapes[1].cloud;

    RefinementConfig probe;
    probe.steps = 0;
    double initial = refine_encoder(fx.net, x, probe).second.initial_cd;
    REQUIRE(initial != 0.0);

    RefinementConfig cfg;
    cfg.cd_target = initial;
    cfg.steps = 25;
    auto before = snapshot(fx.net);
    auto [refined, trace] = refine_encoder(fx.net, x, cfg);

    CHECK(trace.early_stopped);
    CHECK(trace.steps_taken() == 0);
    auto after = snapshot(refined);
    for (size_t i = 0; i < after.size(); ++i) CHECK(bitwise_equal(before[i], after[i]));
}

TEST_CASE("a loose stopping tolerance can be satisfied immediately") {
    const auto& fx = trained();
    PointCloud x = fx.ds.shapes[1].cloud;

    RefinementConfig probe;
    probe.steps = 0;
    double initial = refine_encoder(fx.net, x, probe).second.initial_cd;

    RefinementConfig cfg;
    cfg.cd_target = initial * 0.9;
    cfg.early_stop_rel = 0.5;  // stop once within 50% of the target
    cfg.steps = 25;
    auto trace = refine_encoder(fx.net, x, cfg).second;
    CHECK(trace.early_stopped);
    CHECK(trace.steps_taken() == 0);
}

TEST_CASE("optimization error decreases on untrained models") {
    // Across many seeds the squared error to an offset target should fall
    // essentially every run; allow one flake.
    int monotone = 0;
    int runs = 0;
    for (uint64_t seed = 0; seed < 10; ++seed) {
        model::TriplaneVae net(micro_config(), seed);
        for (int shape : {0, 2}) {
            PointCloud x = trained().ds.shapes[size_t(shape)].cloud;
            RefinementConfig probe;
            probe.steps = 0;
            double initial = refine_encoder(net, x, probe).second.initial_cd;

            RefinementConfig cfg;
            cfg.cd_target = initial - 0.05;
            cfg.steps = 25;
            auto trace = refine_encoder(net, x, cfg).second;
            ++runs;
            bool ok = trace.l_opt.size() > 1;
            for (size_t i = 1; ok && i < trace.l_opt.size(); ++i) {
                if (trace.l_opt[i] > trace.l_opt[i - 1] + 1e-15) ok = false;
            }
            if (ok) ++monotone;
        }
    }
    CHECK(runs == 20);
    CHECK(monotone >= 19);
}

TEST_CASE("frozen parameters keep their bytes while trainable ones move") {
    const auto& fx = trained();
    PointCloud x = fx.ds.shapes[0].cloud;
    PointCloud x_copy = x;

    RefinementConfig probe;
    probe.steps = 0;
    double initial = refine_encoder(fx.net, x, probe).second.initial_cd;

    RefinementConfig cfg;
    cfg.cd_target = initial * 0.8;
    cfg.lr = 1e-3;
    cfg.steps = 10;
    auto [refined, trace] = refine_encoder(fx.net, x, cfg);
    REQUIRE(trace.steps_taken() == 10);
    CHECK(trace.delta_norm.back() > 0);

    // Default freezing leaves only the last three encoder groups trainable.
    auto enc = fx.net.encoder_group_names();
    std::set<std::string> trainable(enc.end() - 3, enc.end());
    CHECK(trainable.count("encoder.attn") == 1);

    bool moved = false;
    const auto& orig_entries = fx.net.params().entries();
    const auto& new_entries = refined.params().entries();
    REQUIRE(orig_entries.size() == new_entries.size());
    for (size_t i = 0; i < orig_entries.size(); ++i) {
        bool same = bitwise_equal(orig_entries[i].value.data, new_entries[i].value.data);
        if (trainable.count(orig_entries[i].group)) {
            if (!same) moved = true;
        } else {
            CHECK(same);
        }
    }
    CHECK(moved);

    // The input cloud is never touched.
    REQUIRE(x.points.size() == x_copy.points.size());
    for (size_t i = 0; i < x.points.size(); ++i) {
        CHECK(x.points[i].x == x_copy.points[i].x);
        CHECK(x.points[i].y == x_copy.points[i].y);
        CHECK(x.points[i].z == x_copy.points[i].z);
    }
    CHECK(x.tags == x_copy.tags);
}

TEST_CASE("refinement walks the prediction toward the target") {
    const auto& fx = trained();
    PointCloud x = fx.ds.shapes[0].cloud;

    RefinementConfig probe;
    probe.steps = 0;
    double initial = refine_encoder(fx.net, x, probe).second.initial_cd;
    double target = initial * 0.9;

    RefinementConfig cfg;
    cfg.cd_target = target;
    cfg.lr = 3e-4;
    cfg.steps = 100;
    auto trace = refine_encoder(fx.net, x, cfg).second;

    CHECK(trace.l_opt.back() < trace.l_opt.front());
    CHECK(std::abs(trace.final_cd - target) < std::abs(initial - target));
}

TEST_CASE("lower targets produce lower refined predictions") {
    const auto& fx = trained();
    PointCloud x = fx.ds.shapes[0].cloud;

    RefinementConfig probe;
    probe.steps = 0;
    double initial = refine_encoder(fx.net, x, probe).second.initial_cd;

    auto run = [&](double target) {
        RefinementConfig cfg;
        cfg.cd_target = target;
        cfg.lr = 3e-4;
        cfg.steps = 40;
        return refine_encoder(fx.net, x, cfg).second.final_cd;
    };
    double low = run(initial * 0.85);
    double high = run(initial * 0.95);
    CHECK(low <= high);
}

TEST_CASE("refinement is deterministic") {
    const auto& fx = trained();
    PointCloud x = fx.ds.shapes[2].cloud;

    RefinementConfig cfg;
    cfg.cd_target = 0.01;
    cfg.lr = 1e-4;
    cfg.steps = 8;
    auto [net_a, tr_a] = refine_encoder(fx.net, x, cfg);
    auto [net_b, tr_b] = refine_encoder(fx.net, x, cfg);

    CHECK(tr_a.initial_cd == tr_b.initial_cd);
    CHECK(tr_a.final_cd == tr_b.final_cd);
    CHECK(tr_a.cd_pred == tr_b.cd_pred);
    CHECK(tr_a.l_opt == tr_b.l_opt);
    CHECK(tr_a.delta_norm == tr_b.delta_norm);
    auto sa = snapshot(net_a);
    auto sb = snapshot(net_b);
    for (size_t i = 0; i < sa.size(); ++i) CHECK(bitwise_equal(sa[i], sb[i]));
}

TEST_CASE("decoded occupancy grids are deterministic and bounded") {
    const auto& fx = trained();
    PointCloud x = fx.ds.shapes[0].cloud;
    RefinementConfig probe;
    probe.steps = 0;
    auto z = refine_encoder(fx.net, x, probe).second.z_opt;

    CHECK_THROWS_AS(decode_occupancy_grid(fx.net, z, 1), Error);

    ScalarGrid g = decode_occupancy_grid(fx.net, z, 19);
    CHECK(g.nx == 19);
    CHECK(g.ny == 19);
    CHECK(g.nz == 19);
    REQUIRE(g.values.size() == size_t(19) * 19 * 19);
    for (float v : g.values) {
        CHECK(v >= 0.0f);
        CHECK(v <= 1.0f);
    }
    double warp = fx.net.config().box_warp;
    CHECK(g.origin.x == doctest::Approx(-warp / 2));
    CHECK(g.origin.x + 18 * g.cell.x == doctest::Approx(warp / 2));

    ScalarGrid h = decode_occupancy_grid(fx.net, z, 19);
    CHECK(bitwise_equal(g.values, h.values));
}

TEST_CASE("extraction from an unrefined model yields identical shapes") {
    const auto& fx = trained();
    PointCloud x = fx.ds.shapes[0].cloud;
    RefinementConfig cfg;
    cfg.cd_target = 0.05;
    cfg.steps = 0;
    auto refined = refine_encoder(fx.net, x, cfg).first;

    ExtractedShapes out = extract_optimized_shape(fx.net, refined, x, 24);
    REQUIRE(!out.initial.vertices.empty());
    REQUIRE(!out.optimized.vertices.empty());
    CHECK(out.initial.vertices.size() == out.optimized.vertices.size());
    CHECK(out.initial.faces.size() == out.optimized.faces.size());
    REQUIRE(out.displacement.values.size() == out.initial.vertices.size());
    for (double v : out.displacement.values) CHECK(std::abs(v) < 1e-9);
}

TEST_CASE("extraction after refinement reports a finite displacement field") {
    const auto& fx = trained();
    PointCloud x = fx.ds.shapes[0].cloud;

    RefinementConfig probe;
    probe.steps = 0;
    double initial = refine_encoder(fx.net, x, probe).second.initial_cd;

    RefinementConfig cfg;
    cfg.cd_target = initial * 0.9;
    cfg.lr = 3e-4;
    cfg.steps = 30;
    auto refined = refine_encoder(fx.net, x, cfg).first;

    ExtractedShapes out = extract_optimized_shape(fx.net, refined, x, 24);
    REQUIRE(!out.initial.vertices.empty());
    REQUIRE(!out.optimized.vertices.empty());
    REQUIRE(out.displacement.values.size() == out.initial.vertices.size());
    double extent = out.initial.bounds().extent().max_component();
    REQUIRE(extent > 0);
    for (double v : out.displacement.values) {
        CHECK(std::isfinite(v));
        CHECK(std::abs(v) < 0.5 * extent);
    }
}

TEST_CASE("a denormalization transform rescales meshes and displacements") {
    const auto& fx = trained();
    PointCloud x = fx.ds.shapes[1].cloud;
    RefinementConfig cfg;
    cfg.cd_target = 0.02;
    cfg.lr = 3e-4;
    cfg.steps = 10;
    auto refined = refine_encoder(fx.net, x, cfg).first;

    NormalizationTransform t;
    t.translation = Vec3{0.1, -0.2, 0.3};
    t.scale = 2.5;

    ExtractedShapes plain = extract_optimized_shape(fx.net, refined, x, 20);
    ExtractedShapes denorm = extract_optimized_shape(fx.net, refined, x, 20, &t);

    REQUIRE(plain.initial.vertices.size() == denorm.initial.vertices.size());
    for (size_t i = 0; i < plain.initial.vertices.size(); ++i) {
        Vec3 expect = t.invert(plain.initial.vertices[i]);
        CHECK(denorm.initial.vertices[i].x == doctest::Approx(expect.x).epsilon(1e-9));
        CHECK(denorm.initial.vertices[i].y == doctest::Approx(expect.y).epsilon(1e-9));
        CHECK(denorm.initial.vertices[i].z == doctest::Approx(expect.z).epsilon(1e-9));
    }
    REQUIRE(plain.displacement.values.size() == denorm.displacement.values.size());
    for (size_t i = 0; i < plain.displacement.values.size(); ++i) {
        if (std::abs(plain.displacement.values[i]) < 1e-12) continue;
        CHECK(denorm.displacement.values[i] ==
              doctest::Approx(plain.displacement.values[i] / t.scale).epsilon(1e-5));
    }
}

TEST_CASE("refinement traces round-trip through csv") {
    const auto& fx = trained();
    PointCloud x = fx.ds.shapes[0].cloud;
    RefinementConfig cfg;
    cfg.cd_target = 0.01;
    cfg.lr = 1e-4;
    cfg.steps = 5;
    auto trace = refine_encoder(fx.net, x, cfg).second;
    REQUIRE(trace.steps_taken() == 5);

    test::TempDir dir;
    std::string path = dir.file("trace.csv");
    save_refinement_trace_csv(path, trace);

    std::ifstream in(path);
    REQUIRE(in.good());
    std::string header;
    std::getline(in, header);
    CHECK(header == "step,cd_pred,l_opt,delta_norm");
    int rows = 0;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string cell;
        std::getline(ls, cell, ',');
        CHECK(std::stoi(cell) == rows);
        std::getline(ls, cell, ',');
        CHECK(std::stod(cell) == doctest::Approx(trace.cd_pred[size_t(rows)]));
        std::getline(ls, cell, ',');
        CHECK(std::stod(cell) == doctest::Approx(trace.l_opt[size_t(rows)]));
        std::getline(ls, cell, ',');
        CHECK(std::stod(cell) == doctest::Approx(trace.delta_norm[size_t(rows)]));
        ++rows;
    }
    CHECK(rows == 5);
}

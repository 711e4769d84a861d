#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "helpers.hpp"
#include "trip/autodiff/ops.hpp"
#include "trip/core/container.hpp"
#include "trip/core/rng.hpp"
#include "trip/model/model.hpp"

using namespace trip;
using namespace trip::model;

namespace {

PointCloud make_cloud(int n, uint64_t seed) {
    Rng rng(seed);
    PointCloud pc;
    pc.points.reserve(size_t(n));
    for (int i = 0; i < n; ++i)
        pc.points.push_back({rng.uniform() - 0.5, rng.uniform() - 0.5, rng.uniform() - 0.5});
    return pc;
}

std::vector<Vec3> make_queries(int k, uint64_t seed) {
    Rng rng(seed);
    std::vector<Vec3> q;
    for (int i = 0; i < k; ++i)
        q.push_back({rng.uniform() - 0.5, rng.uniform() - 0.5, rng.uniform() - 0.5});
    return q;
}

ModelConfig micro_config() {
    ModelConfig c;
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

}  // namespace

TEST_CASE("config presets pass validation and report derived sizes") {
    ModelConfig toy = ModelConfig::toy();
    CHECK_NOTHROW(toy.validate());
    CHECK(toy.feature_dim() == 57);
    CHECK(toy.plane_resolution() == 24);
    CHECK(toy.latent_tokens() == 36);

    ModelConfig paper = ModelConfig::paper();
    CHECK_NOTHROW(paper.validate());
    CHECK(paper.feature_dim() == 57);
    CHECK(paper.plane_resolution() == 384);
    CHECK(paper.latent_tokens() == 576);
}

TEST_CASE("config validation rejects inconsistent settings") {
    ModelConfig c = ModelConfig::toy();
    c.attn_heads = 5;
    CHECK_THROWS_AS(c.validate(), Error);
    c = ModelConfig::toy();
    c.norm_groups = 7;
    CHECK_THROWS_AS(c.validate(), Error);
    c = ModelConfig::toy();
    c.occ_layers = 1;
    CHECK_THROWS_AS(c.validate(), Error);
    c = ModelConfig::toy();
    c.cd_se_reduction = 3;
    CHECK_THROWS_AS(c.validate(), Error);
}

TEST_CASE("config json round-trips and rejects unknown keys") {
    ModelConfig paper = ModelConfig::paper();
    ModelConfig back = model_config_from_json(model_config_to_json(paper));
    CHECK(back.encoder_channels == paper.encoder_channels);
    CHECK(back.latent_d == paper.latent_d);
    CHECK(back.decoder_channels == paper.decoder_channels);
    CHECK(back.cd_embed == paper.cd_embed);
    CHECK(back.box_warp == doctest::Approx(paper.box_warp));

    CHECK_THROWS_AS(model_config_from_json("{\"latent_dd\": 4}"), Error);
    CHECK_THROWS_AS(model_config_from_json("{\"latent_d\": \"big\"}"), Error);
    CHECK_THROWS_AS(model_config_from_json("not json"), Error);
}

TEST_CASE("fourier features follow coords, then sin and cos triples per band") {
    Vec3 origin{0, 0, 0};
    ad::Tensor<float> f = fourier_encode<float>({origin}, 3);
    REQUIRE(f.numel() == 21);
    for (int i = 0; i < 3; ++i) CHECK(f[size_t(i)] == 0.0f);
    for (int j = 0; j < 3; ++j)
        for (int i = 0; i < 3; ++i) {
            CHECK(f[size_t(3 + 6 * j + i)] == doctest::Approx(0.0));
            CHECK(f[size_t(3 + 6 * j + 3 + i)] == doctest::Approx(1.0));
        }

    Vec3 p{0.31, -0.12, 0.47};
    ad::Tensor<float> g = fourier_encode<float>({p}, 4);
    CHECK(g[0] == doctest::Approx(0.31));
    for (int j = 0; j < 4; ++j) {
        double freq = std::pow(2.0, j) * 3.14159265358979323846;
        CHECK(g[size_t(3 + 6 * j)] == doctest::Approx(std::sin(freq * 0.31)));
        CHECK(g[size_t(3 + 6 * j + 3)] == doctest::Approx(std::cos(freq * 0.31)));
        CHECK(g[size_t(3 + 6 * j + 1)] == doctest::Approx(std::sin(freq * -0.12)));
        CHECK(g[size_t(3 + 6 * j + 4)] == doctest::Approx(std::cos(freq * -0.12)));
    }
}

TEST_CASE("integer translation by two shifts only the raw coordinate channels") {
    Vec3 p{0.31, -0.12, 0.47};
    Vec3 q{p.x + 2.0, p.y, p.z};
    ad::Tensor<double> a = fourier_encode<double>({p}, 5);
    ad::Tensor<double> b = fourier_encode<double>({q}, 5);
    CHECK(b[0] == doctest::Approx(a[0] + 2.0));
    for (size_t i = 3; i < a.numel(); ++i) CHECK(b[i] == doctest::Approx(a[i]).epsilon(1e-9));
}

TEST_CASE("morton order visits cube corners x-fastest then y then z") {
    std::vector<Vec3> corners;
    for (int z = 0; z < 2; ++z)
        for (int y = 0; y < 2; ++y)
            for (int x = 0; x < 2; ++x) corners.push_back({double(x), double(y), double(z)});
    std::vector<Vec3> shuffled = {corners[5], corners[0], corners[7], corners[2],
                                  corners[6], corners[1], corners[3], corners[4]};
    std::vector<uint32_t> order = morton_order(shuffled);
    REQUIRE(order.size() == 8);
    for (size_t rank = 0; rank < 8; ++rank) {
        const Vec3& p = shuffled[order[rank]];
        size_t code = size_t(p.x) + 2 * size_t(p.y) + 4 * size_t(p.z);
        CHECK(code == rank);
    }
}

TEST_CASE("morton order is a permutation and ignores input ordering") {
    PointCloud pc = make_cloud(200, 17);
    std::vector<uint32_t> order = morton_order(pc.points);
    std::vector<uint32_t> sorted = order;
    std::sort(sorted.begin(), sorted.end());
    for (uint32_t i = 0; i < 200; ++i) CHECK(sorted[i] == i);

    std::vector<Vec3> reversed(pc.points.rbegin(), pc.points.rend());
    std::vector<uint32_t> order2 = morton_order(reversed);
    for (size_t rank = 0; rank < order.size(); ++rank) {
        const Vec3& a = pc.points[order[rank]];
        const Vec3& b = reversed[order2[rank]];
        CHECK(a.x == b.x);
        CHECK(a.y == b.y);
        CHECK(a.z == b.z);
    }
}

TEST_CASE("parameter store covers every group referenced by the forward pass") {
    TriplaneVae net(ModelConfig::toy(), 3);
    const ParamStore& ps = net.params();
    CHECK(ps.total_elements() > 100000);

    std::set<std::string> groups(ps.groups().begin(), ps.groups().end());
    for (const auto& g : net.encoder_group_names()) CHECK(groups.count(g) == 1);
    for (const auto& g : net.cd_group_names()) CHECK(groups.count(g) == 1);
    CHECK(groups.count("decoder.proj") == 1);
    CHECK(groups.count("occ.mlp") == 1);

    for (const auto& e : ps.entries())
        for (float v : e.value.data) REQUIRE(std::isfinite(v));

    const auto& lw = ps.at("encoder.heads.logvar.w");
    for (float v : lw.data) CHECK(v == 0.0f);
    const auto& lb = ps.at("encoder.heads.logvar.b");
    for (float v : lb.data) CHECK(v == -4.0f);
}

TEST_CASE("encoder outputs the configured latent grid and checks point count") {
    ModelConfig cfg = ModelConfig::toy();
    cfg.n_points = 512;
    TriplaneVae net(cfg, 5);
    ad::Tape<float> tape;
    auto b = net.bind(tape);
    PointCloud pc = make_cloud(512, 11);
    auto [mu, logvar] = net.encode(b, pc, nullptr, false);
    CHECK(mu.shape() == (ad::Shape{16, 6, 6}));
    CHECK(logvar.shape() == (ad::Shape{16, 6, 6}));
    for (size_t i = 0; i < logvar.numel(); ++i)
        CHECK(logvar.val()[i] == doctest::Approx(-4.0));

    PointCloud small = make_cloud(100, 11);
    CHECK_THROWS_AS(net.encode(b, small, nullptr, false), Error);
}

TEST_CASE("same cloud encodes to the same latent on independent tapes") {
    ModelConfig cfg = ModelConfig::toy();
    cfg.n_points = 256;
    TriplaneVae net(cfg, 5);
    PointCloud pc = make_cloud(256, 23);
    ad::Tape<float> t1, t2;
    auto [mu1, lv1] = net.encode(net.bind(t1), pc, nullptr, false);
    auto [mu2, lv2] = net.encode(net.bind(t2), pc, nullptr, false);
    for (size_t i = 0; i < mu1.numel(); ++i) CHECK(mu1.val()[i] == mu2.val()[i]);
}

TEST_CASE("encoding is invariant to point order") {
    for (bool mean_pool : {false, true}) {
        CAPTURE(mean_pool);
        ModelConfig cfg = ModelConfig::toy();
        cfg.n_points = 128;
        cfg.mean_pool_aggregator = mean_pool;
        TriplaneVae net(cfg, 9);
        PointCloud pc = make_cloud(128, 31);
        PointCloud shuffled = pc;
        Rng rng(77);
        for (size_t i = shuffled.points.size(); i > 1; --i)
            std::swap(shuffled.points[i - 1], shuffled.points[rng.next_u64() % i]);

        ad::Tape<float> t1, t2;
        auto [mu1, lv1] = net.encode(net.bind(t1), pc, nullptr, false);
        auto [mu2, lv2] = net.encode(net.bind(t2), shuffled, nullptr, false);
        for (size_t i = 0; i < mu1.numel(); ++i)
            CHECK(mu1.val()[i] == doctest::Approx(mu2.val()[i]).epsilon(1e-5));
    }
}

TEST_CASE("latent sampling adds unit noise scaled by half log variance") {
    ad::Tape<double> tape;
    std::vector<double> mu_vals = {0.5, -1.0, 2.0, 0.0};
    ad::Var<double> mu = tape.leaf(ad::Tensor<double>({4}, mu_vals));
    ad::Var<double> logvar = tape.leaf(ad::Tensor<double>({4}, 0.0));

    Rng used(99), witness(99);
    ad::Var<double> z = reparameterize(mu, logvar, used);
    for (size_t i = 0; i < 4; ++i)
        CHECK(z.val()[i] == doctest::Approx(mu_vals[i] + witness.normal()).epsilon(1e-12));
}

TEST_CASE("sampled latent variance tracks exp of log variance") {
    double sigma = 0.5;
    ad::Tape<double> tape;
    ad::Var<double> mu = tape.leaf(ad::Tensor<double>({1}, 0.0));
    ad::Var<double> logvar = tape.leaf(ad::Tensor<double>({1}, 2.0 * std::log(sigma)));
    Rng rng(123);
    int n = 100000;
    double sum = 0.0, sq = 0.0;
    for (int i = 0; i < n; ++i) {
        ad::Var<double> z = reparameterize(mu, logvar, rng);
        double v = z.val()[0];
        sum += v;
        sq += v * v;
    }
    double var = sq / n - (sum / n) * (sum / n);
    CHECK(var == doctest::Approx(sigma * sigma).epsilon(0.02));
}

TEST_CASE("triplane features concatenate the three plane samples in order") {
    ModelConfig cfg = micro_config();
    TriplaneVae net(cfg, 1);
    int r = cfg.plane_resolution();
    int c = cfg.plane_channels;
    ad::Tape<float> tape;
    std::array<ad::Var<float>, 3> planes = {
        tape.leaf(ad::Tensor<float>({c, r, r}, 1.0f)),
        tape.leaf(ad::Tensor<float>({c, r, r}, 2.0f)),
        tape.leaf(ad::Tensor<float>({c, r, r}, 3.0f))};
    std::vector<Vec3> queries = make_queries(5, 3);
    ad::Var<float> feats = net.sample_triplane_features(planes, queries);
    CHECK(feats.shape() == (ad::Shape{5, 3 * c}));
    for (int q = 0; q < 5; ++q)
        for (int j = 0; j < 3 * c; ++j)
            CHECK(feats.val()[size_t(q * 3 * c + j)] == doctest::Approx(1.0 + j / c));
}

TEST_CASE("each plane ignores its orthogonal axis") {
    ModelConfig cfg = micro_config();
    TriplaneVae net(cfg, 1);
    int r = cfg.plane_resolution();
    int c = cfg.plane_channels;
    Rng rng(41);
    ad::Tensor<float> px({c, r, r}), py({c, r, r}), pz({c, r, r});
    for (size_t i = 0; i < px.numel(); ++i) {
        px[i] = float(rng.normal());
        py[i] = float(rng.normal());
        pz[i] = float(rng.normal());
    }
    ad::Tape<float> tape;
    std::array<ad::Var<float>, 3> planes = {tape.leaf(px), tape.leaf(py), tape.leaf(pz)};

    Vec3 base{0.21, -0.34, 0.08};
    Vec3 moved_z{base.x, base.y, -0.4};
    Vec3 moved_x{0.45, base.y, base.z};
    ad::Var<float> f =
        net.sample_triplane_features(planes, {base, moved_z, moved_x});
    auto at = [&](int q, int j) { return f.val()[size_t(q * 3 * c + j)]; };
    for (int j = 0; j < c; ++j) CHECK(at(0, j) == at(1, j));            // xy vs z shift
    for (int j = 2 * c; j < 3 * c; ++j) CHECK(at(0, j) == at(2, j));    // yz vs x shift
    bool xz_changed = false;
    for (int j = c; j < 2 * c; ++j) xz_changed |= at(0, j) != at(1, j);
    CHECK(xz_changed);
}

TEST_CASE("fresh occupancy head stays near one half") {
    ModelConfig cfg = micro_config();
    TriplaneVae net(cfg, 2);
    ad::Tape<float> tape;
    auto b = net.bind(tape);
    PointCloud pc = make_cloud(cfg.n_points, 13);
    auto out = net.forward(b, pc, make_queries(16, 19), false, 0);
    for (size_t i = 0; i < out.occupancy.numel(); ++i) {
        CHECK(out.occupancy.val()[i] > 0.3);
        CHECK(out.occupancy.val()[i] < 0.7);
    }
}

TEST_CASE("evaluation forward is reproducible and bounded") {
    ModelConfig cfg = ModelConfig::toy();
    cfg.n_points = 256;
    TriplaneVae net(cfg, 21);
    PointCloud pc = make_cloud(256, 5);
    std::vector<Vec3> queries = make_queries(24, 7);

    ad::Tape<float> t1, t2;
    auto r1 = net.forward(net.bind(t1), pc, queries, false, 100);
    auto r2 = net.forward(net.bind(t2), pc, queries, false, 200);
    REQUIRE(r1.occupancy.numel() == 24);
    REQUIRE(r1.cd.numel() == 1);
    for (size_t i = 0; i < 24; ++i) {
        float o = r1.occupancy.val()[i];
        REQUIRE(std::isfinite(o));
        CHECK(o > 0.0f);
        CHECK(o < 1.0f);
        CHECK(o == r2.occupancy.val()[i]);
    }
    CHECK(std::isfinite(r1.cd.val()[0]));
    CHECK(r1.cd.val()[0] == r2.cd.val()[0]);
    for (size_t i = 0; i < 3; ++i)
        for (size_t j = 0; j < r1.planes[i].numel(); ++j)
            REQUIRE(std::isfinite(r1.planes[i].val()[j]));
}

TEST_CASE("training forward draws noise while matched seeds reproduce it") {
    ModelConfig cfg = micro_config();
    TriplaneVae net(cfg, 8);
    PointCloud pc = make_cloud(cfg.n_points, 3);
    std::vector<Vec3> queries = make_queries(8, 9);

    ad::Tape<float> t1, t2, t3;
    auto train1 = net.forward(net.bind(t1), pc, queries, true, 55);
    auto train2 = net.forward(net.bind(t2), pc, queries, true, 55);
    auto eval1 = net.forward(net.bind(t3), pc, queries, false, 55);
    bool differs = false;
    for (size_t i = 0; i < 8; ++i) {
        CHECK(train1.occupancy.val()[i] == train2.occupancy.val()[i]);
        differs |= train1.occupancy.val()[i] != eval1.occupancy.val()[i];
    }
    CHECK(differs);
}

TEST_CASE("gradients match finite differences through the whole network") {
    ModelConfig cfg = micro_config();
    VaeNet<double> net(cfg, 4);
    PointCloud pc = make_cloud(cfg.n_points, 29);
    std::vector<Vec3> queries = make_queries(6, 37);

    auto loss_of = [&](ad::Tape<double>& tape) {
        auto b = net.bind(tape);
        auto out = net.forward(b, pc, queries, false, 12);
        ad::Var<double> l =
            ad::add(ad::mean_all(out.occupancy), ad::sum_all(out.cd));
        return std::pair{b, l};
    };

    ad::Tape<double> tape;
    auto [bound, loss] = loss_of(tape);
    tape.backward(loss);

    std::vector<std::pair<std::string, size_t>> probes = {
        {"encoder.proj.w", 5},      {"encoder.block1.conv1.w", 11},
        {"encoder.block2.norm1.g", 2}, {"encoder.attn.queries", 7},
        {"encoder.attn.wq", 13},    {"encoder.heads.mu.w", 3},
        {"decoder.proj.w", 9},      {"decoder.up1.conv1.w", 21},
        {"decoder.up2.norm2.b", 1}, {"decoder.heads.xy.w", 14},
        {"decoder.heads.yz.b", 0},  {"occ.fc1.w", 8},
        {"occ.fc2.b", 0},           {"cd.conv1.w", 17},
        {"cd.se1.w1", 4},           {"cd.attn.wv", 6},
        {"cd.mlp.fc2.w", 0}};
    for (const auto& [name, idx] : probes) {
        CAPTURE(name);
        double analytic = bound.grad_of(name)[idx];

        float* slot = &net.params().at(name)[idx];
        float orig = *slot;
        double v0 = double(orig);
        *slot = float(v0 + 1e-4);
        double vp = double(*slot);
        ad::Tape<double> tp;
        double fp = loss_of(tp).second.val().scalar_value();
        *slot = float(v0 - 1e-4);
        double vm = double(*slot);
        ad::Tape<double> tm;
        double fm = loss_of(tm).second.val().scalar_value();
        *slot = orig;

        double numeric = (fp - fm) / (vp - vm);
        double rel = std::abs(analytic - numeric) /
                     std::max({std::abs(analytic), std::abs(numeric), 1e-4});
        CAPTURE(analytic);
        CAPTURE(numeric);
        CHECK(rel < 1e-3);
    }
}

TEST_CASE("noise path carries gradient to the log variance head in training mode") {
    ModelConfig cfg = micro_config();
    VaeNet<double> net(cfg, 4);
    PointCloud pc = make_cloud(cfg.n_points, 29);
    std::vector<Vec3> queries = make_queries(6, 37);

    ad::Tape<double> tape;
    auto b = net.bind(tape);
    auto out = net.forward(b, pc, queries, true, 12);
    ad::Var<double> loss = ad::add(ad::mean_all(out.occupancy), ad::sum_all(out.cd));
    tape.backward(loss);

    ad::Tensor<double> g = b.grad_of("encoder.heads.logvar.b");
    double mag = 0.0;
    for (size_t i = 0; i < g.numel(); ++i) mag += std::abs(g[i]);
    CHECK(mag > 0.0);
}

TEST_CASE("frozen groups report exactly zero gradients") {
    ModelConfig cfg = micro_config();
    TriplaneVae net(cfg, 6);
    PointCloud pc = make_cloud(cfg.n_points, 2);
    std::vector<Vec3> queries = make_queries(4, 3);

    std::set<std::string> frozen;
    for (const auto& g : net.encoder_group_names()) frozen.insert(g);
    ad::Tape<float> tape;
    auto b = net.bind(tape, frozen);
    auto out = net.forward(b, pc, queries, false, 1);
    tape.backward(ad::add(ad::mean_all(out.occupancy), ad::sum_all(out.cd)));

    for (const auto& e : net.params().entries()) {
        ad::Tensor<float> g = b.grad_of(e.name);
        bool encoder = frozen.count(e.group) == 1;
        double mag = 0.0;
        for (size_t i = 0; i < g.numel(); ++i) mag += std::abs(double(g[i]));
        if (encoder) {
            CAPTURE(e.name);
            CHECK(mag == 0.0);
        }
    }
    CHECK(std::abs(b.grad_of("occ.fc1.w")[0]) >= 0.0);
    double dec = 0.0;
    ad::Tensor<float> gd = b.grad_of("decoder.proj.w");
    for (size_t i = 0; i < gd.numel(); ++i) dec += std::abs(double(gd[i]));
    CHECK(dec > 0.0);
}

TEST_CASE("checkpoints round-trip parameters bit for bit") {
    test::TempDir tmp;
    ModelConfig cfg = micro_config();
    TriplaneVae net(cfg, 77);
    std::string path = tmp.file("model.trip");
    net.save(path);

    TriplaneVae back = TriplaneVae::load(path);
    CHECK(back.config().encoder_channels == cfg.encoder_channels);
    CHECK(back.config().latent_d == cfg.latent_d);
    REQUIRE(back.params().entries().size() == net.params().entries().size());
    for (size_t i = 0; i < net.params().entries().size(); ++i) {
        const auto& a = net.params().entries()[i];
        const auto& b = back.params().entries()[i];
        REQUIRE(a.name == b.name);
        REQUIRE(a.value.data == b.value.data);
    }

    PointCloud pc = make_cloud(cfg.n_points, 8);
    std::vector<Vec3> queries = make_queries(5, 6);
    ad::Tape<float> t1, t2;
    auto r1 = net.forward(net.bind(t1), pc, queries, false, 4);
    auto r2 = back.forward(back.bind(t2), pc, queries, false, 4);
    for (size_t i = 0; i < 5; ++i) CHECK(r1.occupancy.val()[i] == r2.occupancy.val()[i]);
    CHECK(r1.cd.val()[0] == r2.cd.val()[0]);
}

TEST_CASE("loading a container without a model config fails") {
    test::TempDir tmp;
    TensorContainer c;
    c.metadata = "{}";
    c.set_scalar_f32("x", 1.0f);
    std::string path = tmp.file("bad.trip");
    c.save(path);
    CHECK_THROWS_AS(TriplaneVae::load(path), Error);
}

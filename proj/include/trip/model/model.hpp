#pragma once

#include <array>
#include <cstdint>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "trip/autodiff/ops.hpp"
#include "trip/autodiff/tape.hpp"
#include "trip/core/rng.hpp"
#include "trip/geometry/vec3.hpp"
#include "trip/model/params.hpp"
#include "trip/sampling/sampling.hpp"

namespace trip::model {

struct ModelConfig {
    int fourier_bands = 9;
    int n_points = 2048;

    std::vector<int> encoder_channels = {64, 64};
    int attn_heads = 8;
    double attn_dropout = 0.1;
    bool mean_pool_aggregator = false;

    int latent_d = 16;
    int latent_h = 6;
    int latent_w = 6;

    int plane_channels = 32;
    std::vector<int> decoder_channels = {48, 32};
    int norm_groups = 8;

    int occ_hidden = 64;
    int occ_layers = 3;

    std::vector<int> cd_conv_channels = {32, 32};
    int cd_se_reduction = 8;
    int cd_attn_heads = 4;
    int cd_embed = 64;
    int cd_mlp_depth = 3;

    double box_warp = 1.1;
    double logvar_min = -10.0;
    double logvar_max = 10.0;

    int feature_dim() const { return 3 * (2 * fourier_bands + 1); }
    int plane_resolution() const { return latent_h << decoder_channels.size(); }
    int latent_tokens() const { return latent_h * latent_w; }

    void validate() const;

    static ModelConfig toy();
    static ModelConfig paper();
};

std::string model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const std::string& text);

// Canonical input ordering: indices sorted by Morton code of the point
// positions quantized over their bounding box.
std::vector<uint32_t> morton_order(const std::vector<Vec3>& points);

// points: K x 3 -> K x 3(2L+1). Columns: the three raw coordinates, then
// per frequency band j the sin(2^j pi p) triple followed by the cos triple.
template <class S>
ad::Tensor<S> fourier_encode(const std::vector<Vec3>& points, int bands) {
    if (bands < 1) throw internal_error("fourier_encode: bands must be >= 1");
    int f = 3 * (2 * bands + 1);
    ad::Tensor<S> out({int(points.size()), f});
    for (size_t i = 0; i < points.size(); ++i) {
        S* row = out.ptr() + i * size_t(f);
        for (int a = 0; a < 3; ++a) row[a] = S(points[i][a]);
        double freq = 3.14159265358979323846;
        for (int j = 0; j < bands; ++j) {
            for (int a = 0; a < 3; ++a) {
                row[3 + 6 * j + a] = S(std::sin(freq * points[i][a]));
                row[3 + 6 * j + 3 + a] = S(std::cos(freq * points[i][a]));
            }
            freq *= 2.0;
        }
    }
    return out;
}

// z = mu + exp(0.5 * logvar) * eps with eps ~ N(0, I) drawn from rng.
template <class S>
ad::Var<S> reparameterize(ad::Var<S> mu, ad::Var<S> logvar, Rng& rng) {
    ad::Tensor<S> eps(mu.shape());
    for (size_t i = 0; i < eps.numel(); ++i) eps[i] = S(rng.normal());
    return ad::add(mu, ad::mul_const(ad::exp_op(ad::scale(logvar, S(0.5))), std::move(eps)));
}

template <class S>
struct ForwardResult {
    ad::Var<S> occupancy;              // [K]
    ad::Var<S> cd;                     // [1]
    ad::Var<S> mu, logvar;             // [D, H, W]
    std::array<ad::Var<S>, 3> planes;  // f_xy, f_xz, f_yz, each [C, R, R]
};

// Point-cloud VAE with a triplane occupancy decoder and a drag head.
// Parameters live outside any tape; bind() inserts them as leaves so one
// instance can serve many training steps.
template <class S>
class VaeNet {
public:
    VaeNet(ModelConfig cfg, uint64_t seed) : cfg_(std::move(cfg)) {
        cfg_.validate();
        build_params(seed);
    }

    const ModelConfig& config() const { return cfg_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }

    std::vector<std::string> encoder_group_names() const {
        std::vector<std::string> out = {"encoder.proj"};
        for (size_t i = 1; i <= cfg_.encoder_channels.size(); ++i)
            out.push_back("encoder.block" + std::to_string(i));
        out.push_back("encoder.attn");
        out.push_back("encoder.heads.mu");
        out.push_back("encoder.heads.logvar");
        return out;
    }

    std::vector<std::string> cd_group_names() const {
        std::vector<std::string> out;
        for (const auto& g : params_.groups())
            if (g.rfind("cd.", 0) == 0) out.push_back(g);
        return out;
    }

    struct Bound {
        ad::Tape<S>* tape = nullptr;
        std::unordered_map<std::string, ad::Var<S>> vars;

        ad::Var<S> at(const std::string& name) const {
            auto it = vars.find(name);
            if (it == vars.end()) throw internal_error("unbound parameter: " + name);
            return it->second;
        }

        // Gradient after backward; zero for frozen parameters.
        ad::Tensor<S> grad_of(const std::string& name) const {
            ad::Var<S> v = at(name);
            if (!tape->wants_grad(v)) return ad::Tensor<S>(v.shape());
            return tape->grad(v.id);
        }
    };

    Bound bind(ad::Tape<S>& tape, const std::set<std::string>& frozen_groups = {}) const {
        Bound b;
        b.tape = &tape;
        for (const auto& e : params_.entries()) {
            bool trainable = frozen_groups.count(e.group) == 0;
            ad::Tensor<S> value = cast_param(e.value);
            b.vars.emplace(e.name, tape.leaf(std::move(value), trainable));
        }
        return b;
    }

    // Aggregated latent tokens [T, C_enc].
    ad::Var<S> encode_points(const Bound& b, const PointCloud& cloud, Rng* dropout_rng,
                             bool train) const {
        if (int(cloud.points.size()) != cfg_.n_points)
            throw input_error("encoder expects " + std::to_string(cfg_.n_points) +
                              " points, got " + std::to_string(cloud.points.size()));
        std::vector<uint32_t> order = morton_order(cloud.points);
        std::vector<Vec3> sorted(cloud.points.size());
        for (size_t i = 0; i < order.size(); ++i) sorted[i] = cloud.points[order[i]];

        ad::Tensor<S> by_point = fourier_encode<S>(sorted, cfg_.fourier_bands);
        int n = by_point.dim(0), f = by_point.dim(1);
        ad::Tensor<S> feats({f, n});
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < f; ++j)
                feats[size_t(j) * n + i] = by_point[size_t(i) * f + j];

        ad::Var<S> x = b.tape->leaf(std::move(feats), false);
        ad::Var<S> h = ad::conv1d(x, b.at("encoder.proj.w"), b.at("encoder.proj.b"));
        int in_ch = cfg_.encoder_channels[0];
        for (size_t i = 0; i < cfg_.encoder_channels.size(); ++i) {
            std::string p = "encoder.block" + std::to_string(i + 1) + ".";
            int out_ch = cfg_.encoder_channels[i];
            ad::Var<S> h1 = ad::relu(ad::instance_norm(
                ad::conv1d(h, b.at(p + "conv1.w"), b.at(p + "conv1.b")), b.at(p + "norm1.g"),
                b.at(p + "norm1.b")));
            ad::Var<S> h2 = ad::instance_norm(
                ad::conv1d(h1, b.at(p + "conv2.w"), b.at(p + "conv2.b")), b.at(p + "norm2.g"),
                b.at(p + "norm2.b"));
            ad::Var<S> skip =
                in_ch == out_ch ? h : ad::conv1d(h, b.at(p + "skip.w"), b.at(p + "skip.b"));
            h = ad::relu(ad::add(h2, skip));
            in_ch = out_ch;
        }

        ad::Var<S> tokens = ad::transpose2d(h);  // [N, C]
        ad::Var<S> queries = b.at("encoder.attn.queries");
        ad::Var<S> agg;
        if (cfg_.mean_pool_aggregator) {
            agg = ad::add_rowvec(queries, ad::mean_rows(tokens));
        } else {
            agg = attention(b, "encoder.attn.", queries, tokens, tokens, cfg_.attn_heads,
                            train ? dropout_rng : nullptr, cfg_.attn_dropout);
        }
        return agg;
    }

    // mu, logvar as [D, H, W]; logvar clamped to the configured range.
    std::pair<ad::Var<S>, ad::Var<S>> encode(const Bound& b, const PointCloud& cloud,
                                             Rng* dropout_rng, bool train) const {
        ad::Var<S> agg = encode_points(b, cloud, dropout_rng, train);
        ad::Shape grid = {cfg_.latent_d, cfg_.latent_h, cfg_.latent_w};
        ad::Var<S> mu = ad::reshape(
            ad::transpose2d(ad::add_rowvec(ad::matmul(agg, b.at("encoder.heads.mu.w")),
                                           b.at("encoder.heads.mu.b"))),
            grid);
        ad::Var<S> logvar = ad::reshape(
            ad::transpose2d(ad::add_rowvec(ad::matmul(agg, b.at("encoder.heads.logvar.w")),
                                           b.at("encoder.heads.logvar.b"))),
            grid);
        logvar = ad::clamp_op(logvar, S(cfg_.logvar_min), S(cfg_.logvar_max));
        return {mu, logvar};
    }

    std::array<ad::Var<S>, 3> decode_triplanes(const Bound& b, ad::Var<S> z) const {
        ad::Var<S> h = ad::conv2d(z, b.at("decoder.proj.w"), b.at("decoder.proj.b"));
        for (size_t i = 0; i < cfg_.decoder_channels.size(); ++i) {
            std::string p = "decoder.up" + std::to_string(i + 1) + ".";
            h = ad::upsample2d_nearest(h, 2);
            h = ad::relu(ad::group_norm(ad::conv2d(h, b.at(p + "conv1.w"), b.at(p + "conv1.b")),
                                        cfg_.norm_groups, b.at(p + "norm1.g"),
                                        b.at(p + "norm1.b")));
            h = ad::relu(ad::group_norm(ad::conv2d(h, b.at(p + "conv2.w"), b.at(p + "conv2.b")),
                                        cfg_.norm_groups, b.at(p + "norm2.g"),
                                        b.at(p + "norm2.b")));
        }
        return {ad::conv2d(h, b.at("decoder.heads.xy.w"), b.at("decoder.heads.xy.b")),
                ad::conv2d(h, b.at("decoder.heads.xz.w"), b.at("decoder.heads.xz.b")),
                ad::conv2d(h, b.at("decoder.heads.yz.w"), b.at("decoder.heads.yz.b"))};
    }

    // Plane-space (u, v) pairs for one projection; u, v = 2 * coord / box_warp.
    ad::Tensor<S> plane_coords(const std::vector<Vec3>& queries, int axis_u, int axis_v) const {
        ad::Tensor<S> out({int(queries.size()), 2});
        S s = S(2.0 / cfg_.box_warp);
        for (size_t i = 0; i < queries.size(); ++i) {
            out[2 * i] = S(queries[i][axis_u]) * s;
            out[2 * i + 1] = S(queries[i][axis_v]) * s;
        }
        return out;
    }

    // [K, 3 * C_plane], concatenated xy, xz, yz samples.
    ad::Var<S> sample_triplane_features(const std::array<ad::Var<S>, 3>& planes,
                                        const std::vector<Vec3>& queries) const {
        ad::Var<S> sxy = ad::grid_sample_plane(planes[0], plane_coords(queries, 0, 1));
        ad::Var<S> sxz = ad::grid_sample_plane(planes[1], plane_coords(queries, 0, 2));
        ad::Var<S> syz = ad::grid_sample_plane(planes[2], plane_coords(queries, 1, 2));
        return ad::concat_cols<S>({sxy, sxz, syz});
    }

    // [K] occupancy values in (0, 1).
    ad::Var<S> occupancy_head(const Bound& b, ad::Var<S> features) const {
        if (features.val().dim(1) != 3 * cfg_.plane_channels)
            throw internal_error("occupancy head feature width mismatch");
        ad::Var<S> h = features;
        for (int i = 0; i < cfg_.occ_layers; ++i) {
            std::string p = "occ.fc" + std::to_string(i + 1) + ".";
            h = ad::add_rowvec(ad::matmul(h, b.at(p + "w")), b.at(p + "b"));
            if (i + 1 < cfg_.occ_layers) h = ad::relu(h);
        }
        return ad::reshape(ad::sigmoid(h), {int(features.val().dim(0))});
    }

    // Scalar drag prediction from the latent grid.
    ad::Var<S> cd_head(const Bound& b, ad::Var<S> z) const {
        ad::Var<S> h = z;
        for (size_t i = 0; i < cfg_.cd_conv_channels.size(); ++i) {
            std::string p = "cd.conv" + std::to_string(i + 1) + ".";
            h = ad::relu(ad::conv2d(h, b.at(p + "w"), b.at(p + "b")));
            std::string se = "cd.se" + std::to_string(i + 1) + ".";
            int c = cfg_.cd_conv_channels[i];
            ad::Var<S> pooled = ad::reshape(ad::spatial_mean(h), {1, c});
            ad::Var<S> gate = ad::sigmoid(ad::add_rowvec(
                ad::matmul(ad::relu(ad::add_rowvec(ad::matmul(pooled, b.at(se + "w1")),
                                                   b.at(se + "b1"))),
                           b.at(se + "w2")),
                b.at(se + "b2")));
            h = ad::channel_scale(h, ad::reshape(gate, {c}));
        }
        int c = cfg_.cd_conv_channels.back();
        int hw = cfg_.latent_h * cfg_.latent_w;
        ad::Var<S> tokens = ad::transpose2d(ad::reshape(h, {c, hw}));  // [HW, C]
        ad::Var<S> attended = attention(b, "cd.attn.", tokens, tokens, tokens,
                                        cfg_.cd_attn_heads, nullptr, 0.0);
        ad::Var<S> m = ad::reshape(ad::mean_rows(attended), {1, c});
        for (int i = 0; i < cfg_.cd_mlp_depth; ++i) {
            std::string p = "cd.mlp.fc" + std::to_string(i + 1) + ".";
            m = ad::add_rowvec(ad::matmul(m, b.at(p + "w")), b.at(p + "b"));
            if (i + 1 < cfg_.cd_mlp_depth) m = ad::relu(m);
        }
        return ad::reshape(m, {1});
    }

    // Train mode samples the latent and applies dropout; eval mode is
    // deterministic with z = mu.
    ForwardResult<S> forward(const Bound& b, const PointCloud& cloud,
                             const std::vector<Vec3>& queries, bool train,
                             uint64_t seed) const {
        Rng rng(mix_seed(seed, 0x464f5257ull));
        auto [mu, logvar] = encode(b, cloud, &rng, train);
        ad::Var<S> z = train ? reparameterize(mu, logvar, rng) : mu;
        std::array<ad::Var<S>, 3> planes = decode_triplanes(b, z);
        ad::Var<S> feats = sample_triplane_features(planes, queries);
        ForwardResult<S> out{occupancy_head(b, feats), cd_head(b, z), mu, logvar, planes};
        return out;
    }

    void save(const std::string& path) const;
    static VaeNet load(const std::string& path);

private:
    template <class T>
    static ad::Tensor<S> cast_param(const ad::Tensor<T>& t) {
        if constexpr (std::is_same_v<T, S>) {
            return t;
        } else {
            return t.template cast<S>();
        }
    }

    // Multi-head attention, queries [Tq, C] against keys/values [Tk, C].
    ad::Var<S> attention(const Bound& b, const std::string& prefix, ad::Var<S> q, ad::Var<S> k,
                         ad::Var<S> v, int heads, Rng* dropout_rng, double dropout_p) const {
        int c = q.val().dim(1);
        int tq = q.val().dim(0), tk = k.val().dim(0);
        int dh = c / heads;
        ad::Var<S> qp = ad::add_rowvec(ad::matmul(q, b.at(prefix + "wq")), b.at(prefix + "bq"));
        ad::Var<S> kp = ad::add_rowvec(ad::matmul(k, b.at(prefix + "wk")), b.at(prefix + "bk"));
        ad::Var<S> vp = ad::add_rowvec(ad::matmul(v, b.at(prefix + "wv")), b.at(prefix + "bv"));
        ad::Var<S> qh = ad::transpose_01_3d(ad::reshape(qp, {tq, heads, dh}));
        ad::Var<S> kh = ad::transpose_01_3d(ad::reshape(kp, {tk, heads, dh}));
        ad::Var<S> vh = ad::transpose_01_3d(ad::reshape(vp, {tk, heads, dh}));
        ad::Var<S> scores =
            ad::scale(ad::batched_matmul(qh, kh, true), S(1.0 / std::sqrt(double(dh))));
        ad::Var<S> attn = ad::softmax_lastdim(scores);
        if (dropout_rng != nullptr && dropout_p > 0.0)
            attn = ad::dropout(attn, dropout_p, *dropout_rng, true);
        ad::Var<S> ctx = ad::batched_matmul(attn, vh);  // [heads, Tq, dh]
        ad::Var<S> merged = ad::reshape(ad::transpose_01_3d(ctx), {tq, c});
        return ad::add_rowvec(ad::matmul(merged, b.at(prefix + "wo")), b.at(prefix + "bo"));
    }

    void build_params(uint64_t seed);

    ModelConfig cfg_;
    ParamStore params_;
};

using TriplaneVae = VaeNet<float>;

extern template class VaeNet<float>;
extern template class VaeNet<double>;

}  // namespace trip::model

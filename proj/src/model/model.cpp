#include "trip/model/model.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <set>
#include <utility>

#include "trip/core/container.hpp"

namespace trip::model {

using nlohmann::json;

void ModelConfig::validate() const {
    auto bad = [](const std::string& what) { throw config_error("model config: " + what); };
    if (fourier_bands < 1) bad("fourier_bands must be >= 1");
    if (n_points < 1) bad("n_points must be >= 1");
    if (encoder_channels.empty()) bad("encoder_channels must be non-empty");
    for (int c : encoder_channels)
        if (c < 1) bad("encoder channels must be positive");
    int ce = encoder_channels.back();
    if (attn_heads < 1 || ce % attn_heads != 0)
        bad("attn_heads must divide the final encoder width");
    if (latent_d < 1 || latent_h < 1 || latent_w < 1) bad("latent dimensions must be positive");
    if (plane_channels < 1) bad("plane_channels must be >= 1");
    if (decoder_channels.empty()) bad("decoder_channels must be non-empty");
    for (int c : decoder_channels) {
        if (c < 1) bad("decoder channels must be positive");
        if (norm_groups < 1 || c % norm_groups != 0)
            bad("norm_groups must divide every decoder channel count");
    }
    if (occ_hidden < 1) bad("occ_hidden must be >= 1");
    if (occ_layers < 2) bad("occ_layers must be >= 2");
    if (cd_conv_channels.empty()) bad("cd_conv_channels must be non-empty");
    for (int c : cd_conv_channels) {
        if (c < 1) bad("cd conv channels must be positive");
        if (cd_se_reduction < 1 || c % cd_se_reduction != 0)
            bad("cd_se_reduction must divide every cd conv channel count");
    }
    if (cd_attn_heads < 1 || cd_conv_channels.back() % cd_attn_heads != 0)
        bad("cd_attn_heads must divide the final cd conv width");
    if (cd_embed < 1) bad("cd_embed must be >= 1");
    if (cd_mlp_depth < 2) bad("cd_mlp_depth must be >= 2");
    if (box_warp <= 0.0) bad("box_warp must be positive");
    if (logvar_min >= logvar_max) bad("logvar range is empty");
}

ModelConfig ModelConfig::toy() { return ModelConfig{}; }

ModelConfig ModelConfig::paper() {
    ModelConfig c;
    c.n_points = 50000;
    c.encoder_channels = {256, 1024, 1024, 1024};
    c.attn_heads = 16;
    c.latent_d = 128;
    c.latent_h = 24;
    c.latent_w = 24;
    c.plane_channels = 128;
    c.decoder_channels = {512, 256, 128, 64};
    c.norm_groups = 32;
    c.occ_hidden = 128;
    c.occ_layers = 4;
    c.cd_conv_channels = {256, 128, 64, 32};
    c.cd_se_reduction = 16;
    c.cd_attn_heads = 8;
    c.cd_embed = 256;
    c.cd_mlp_depth = 4;
    return c;
}

std::string model_config_to_json(const ModelConfig& c) {
    json j;
    j["fourier_bands"] = c.fourier_bands;
    j["n_points"] = c.n_points;
    j["encoder_channels"] = c.encoder_channels;
    j["attn_heads"] = c.attn_heads;
    j["attn_dropout"] = c.attn_dropout;
    j["mean_pool_aggregator"] = c.mean_pool_aggregator;
    j["latent_d"] = c.latent_d;
    j["latent_h"] = c.latent_h;
    j["latent_w"] = c.latent_w;
    j["plane_channels"] = c.plane_channels;
    j["decoder_channels"] = c.decoder_channels;
    j["norm_groups"] = c.norm_groups;
    j["occ_hidden"] = c.occ_hidden;
    j["occ_layers"] = c.occ_layers;
    j["cd_conv_channels"] = c.cd_conv_channels;
    j["cd_se_reduction"] = c.cd_se_reduction;
    j["cd_attn_heads"] = c.cd_attn_heads;
    j["cd_embed"] = c.cd_embed;
    j["cd_mlp_depth"] = c.cd_mlp_depth;
    j["box_warp"] = c.box_warp;
    j["logvar_min"] = c.logvar_min;
    j["logvar_max"] = c.logvar_max;
    return j.dump();
}

ModelConfig model_config_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw config_error(std::string("model config is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw config_error("model config must be a JSON object");
    ModelConfig c;
    auto grab = [&](const char* key, auto& field) {
        if (j.contains(key)) {
            try {
                field = j.at(key).get<std::decay_t<decltype(field)>>();
            } catch (const json::exception&) {
                throw config_error(std::string("model config field has wrong type: ") + key);
            }
        }
    };
    grab("fourier_bands", c.fourier_bands);
    grab("n_points", c.n_points);
    grab("encoder_channels", c.encoder_channels);
    grab("attn_heads", c.attn_heads);
    grab("attn_dropout", c.attn_dropout);
    grab("mean_pool_aggregator", c.mean_pool_aggregator);
    grab("latent_d", c.latent_d);
    grab("latent_h", c.latent_h);
    grab("latent_w", c.latent_w);
    grab("plane_channels", c.plane_channels);
    grab("decoder_channels", c.decoder_channels);
    grab("norm_groups", c.norm_groups);
    grab("occ_hidden", c.occ_hidden);
    grab("occ_layers", c.occ_layers);
    grab("cd_conv_channels", c.cd_conv_channels);
    grab("cd_se_reduction", c.cd_se_reduction);
    grab("cd_attn_heads", c.cd_attn_heads);
    grab("cd_embed", c.cd_embed);
    grab("cd_mlp_depth", c.cd_mlp_depth);
    grab("box_warp", c.box_warp);
    grab("logvar_min", c.logvar_min);
    grab("logvar_max", c.logvar_max);
    static const std::set<std::string> known = {
        "fourier_bands",  "n_points",       "encoder_channels", "attn_heads",
        "attn_dropout",   "mean_pool_aggregator", "latent_d",   "latent_h",
        "latent_w",       "plane_channels", "decoder_channels", "norm_groups",
        "occ_hidden",     "occ_layers",     "cd_conv_channels", "cd_se_reduction",
        "cd_attn_heads",  "cd_embed",       "cd_mlp_depth",     "box_warp",
        "logvar_min",     "logvar_max"};
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!known.count(it.key()))
            throw config_error("unknown model config key: " + it.key());
    return c;
}

namespace {

uint64_t spread21(uint64_t v) {
    v &= 0x1fffff;
    v = (v | (v << 32)) & 0x1f00000000ffffULL;
    v = (v | (v << 16)) & 0x1f0000ff0000ffULL;
    v = (v | (v << 8)) & 0x100f00f00f00f00fULL;
    v = (v | (v << 4)) & 0x10c30c30c30c30c3ULL;
    v = (v | (v << 2)) & 0x1249249249249249ULL;
    return v;
}

}  // namespace

std::vector<uint32_t> morton_order(const std::vector<Vec3>& points) {
    Aabb box;
    for (const Vec3& p : points) box.expand(p);
    Vec3 ext = box.extent();
    auto quantize = [](double v, double lo, double e) -> uint64_t {
        if (e <= 0.0) return 0;
        double t = std::clamp((v - lo) / e, 0.0, 1.0);
        return uint64_t(std::min(t * 2097152.0, 2097151.0));
    };
    std::vector<std::pair<uint64_t, uint32_t>> keyed(points.size());
    for (size_t i = 0; i < points.size(); ++i) {
        uint64_t cx = quantize(points[i].x, box.lo.x, ext.x);
        uint64_t cy = quantize(points[i].y, box.lo.y, ext.y);
        uint64_t cz = quantize(points[i].z, box.lo.z, ext.z);
        uint64_t code = spread21(cx) | (spread21(cy) << 1) | (spread21(cz) << 2);
        keyed[i] = {code, uint32_t(i)};
    }
    std::sort(keyed.begin(), keyed.end());
    std::vector<uint32_t> order(points.size());
    for (size_t i = 0; i < points.size(); ++i) order[i] = keyed[i].second;
    return order;
}

namespace {

ad::Tensor<float> init_normal(ad::Shape shape, double stddev, Rng& rng) {
    ad::Tensor<float> t(std::move(shape));
    for (size_t i = 0; i < t.numel(); ++i) t[i] = float(rng.normal() * stddev);
    return t;
}

ad::Tensor<float> init_const(ad::Shape shape, float v) {
    return ad::Tensor<float>(std::move(shape), v);
}

double he(int fan_in) { return std::sqrt(2.0 / double(fan_in)); }
double xavier(int fan_in) { return std::sqrt(1.0 / double(fan_in)); }

}  // namespace

template <class S>
void VaeNet<S>::build_params(uint64_t seed) {
    Rng rng(mix_seed(seed, 0x50415241ull));
    ParamStore& ps = params_;
    int f = cfg_.feature_dim();

    int c0 = cfg_.encoder_channels[0];
    ps.add("encoder.proj", "encoder.proj.w", init_normal({c0, f, 1}, he(f), rng));
    ps.add("encoder.proj", "encoder.proj.b", init_const({c0}, 0.0f));
    int in = c0;
    for (size_t i = 0; i < cfg_.encoder_channels.size(); ++i) {
        int out = cfg_.encoder_channels[i];
        std::string g = "encoder.block" + std::to_string(i + 1);
        std::string p = g + ".";
        ps.add(g, p + "conv1.w", init_normal({out, in, 1}, he(in), rng));
        ps.add(g, p + "conv1.b", init_const({out}, 0.0f));
        ps.add(g, p + "norm1.g", init_const({out}, 1.0f));
        ps.add(g, p + "norm1.b", init_const({out}, 0.0f));
        ps.add(g, p + "conv2.w", init_normal({out, out, 1}, he(out), rng));
        ps.add(g, p + "conv2.b", init_const({out}, 0.0f));
        ps.add(g, p + "norm2.g", init_const({out}, 1.0f));
        ps.add(g, p + "norm2.b", init_const({out}, 0.0f));
        if (in != out) {
            ps.add(g, p + "skip.w", init_normal({out, in, 1}, he(in), rng));
            ps.add(g, p + "skip.b", init_const({out}, 0.0f));
        }
        in = out;
    }

    int ce = in;
    int tokens = cfg_.latent_tokens();
    ps.add("encoder.attn", "encoder.attn.queries", init_normal({tokens, ce}, 0.5, rng));
    for (const char* n : {"wq", "wk", "wv", "wo"})
        ps.add("encoder.attn", std::string("encoder.attn.") + n,
               init_normal({ce, ce}, xavier(ce), rng));
    for (const char* n : {"bq", "bk", "bv", "bo"})
        ps.add("encoder.attn", std::string("encoder.attn.") + n, init_const({ce}, 0.0f));

    ps.add("encoder.heads.mu", "encoder.heads.mu.w",
           init_normal({ce, cfg_.latent_d}, xavier(ce), rng));
    ps.add("encoder.heads.mu", "encoder.heads.mu.b", init_const({cfg_.latent_d}, 0.0f));
    ps.add("encoder.heads.logvar", "encoder.heads.logvar.w", init_const({ce, cfg_.latent_d}, 0.0f));
    ps.add("encoder.heads.logvar", "encoder.heads.logvar.b", init_const({cfg_.latent_d}, -4.0f));

    int d0 = cfg_.decoder_channels[0];
    ps.add("decoder.proj", "decoder.proj.w",
           init_normal({d0, cfg_.latent_d, 1, 1}, he(cfg_.latent_d), rng));
    ps.add("decoder.proj", "decoder.proj.b", init_const({d0}, 0.0f));
    in = d0;
    for (size_t i = 0; i < cfg_.decoder_channels.size(); ++i) {
        int out = cfg_.decoder_channels[i];
        std::string g = "decoder.up" + std::to_string(i + 1);
        std::string p = g + ".";
        ps.add(g, p + "conv1.w", init_normal({out, in, 3, 3}, he(in * 9), rng));
        ps.add(g, p + "conv1.b", init_const({out}, 0.0f));
        ps.add(g, p + "norm1.g", init_const({out}, 1.0f));
        ps.add(g, p + "norm1.b", init_const({out}, 0.0f));
        ps.add(g, p + "conv2.w", init_normal({out, out, 3, 3}, he(out * 9), rng));
        ps.add(g, p + "conv2.b", init_const({out}, 0.0f));
        ps.add(g, p + "norm2.g", init_const({out}, 1.0f));
        ps.add(g, p + "norm2.b", init_const({out}, 0.0f));
        in = out;
    }
    for (const char* plane : {"xy", "xz", "yz"}) {
        std::string p = std::string("decoder.heads.") + plane + ".";
        ps.add("decoder.heads", p + "w",
               init_normal({cfg_.plane_channels, in, 3, 3}, he(in * 9), rng));
        ps.add("decoder.heads", p + "b", init_const({cfg_.plane_channels}, 0.0f));
    }

    int w = 3 * cfg_.plane_channels;
    for (int i = 0; i < cfg_.occ_layers; ++i) {
        std::string p = "occ.fc" + std::to_string(i + 1) + ".";
        int out = i + 1 == cfg_.occ_layers ? 1 : cfg_.occ_hidden;
        double s = i + 1 == cfg_.occ_layers ? 0.01 : he(w);
        ps.add("occ.mlp", p + "w", init_normal({w, out}, s, rng));
        ps.add("occ.mlp", p + "b", init_const({out}, 0.0f));
        w = out;
    }

    in = cfg_.latent_d;
    for (size_t i = 0; i < cfg_.cd_conv_channels.size(); ++i) {
        int out = cfg_.cd_conv_channels[i];
        std::string g = "cd.conv" + std::to_string(i + 1);
        ps.add(g, g + ".w", init_normal({out, in, 3, 3}, he(in * 9), rng));
        ps.add(g, g + ".b", init_const({out}, 0.0f));
        std::string se = "cd.se" + std::to_string(i + 1);
        int hidden = out / cfg_.cd_se_reduction;
        ps.add(se, se + ".w1", init_normal({out, hidden}, xavier(out), rng));
        ps.add(se, se + ".b1", init_const({hidden}, 0.0f));
        ps.add(se, se + ".w2", init_normal({hidden, out}, xavier(hidden), rng));
        ps.add(se, se + ".b2", init_const({out}, 0.0f));
        in = out;
    }
    int cc = cfg_.cd_conv_channels.back();
    for (const char* n : {"wq", "wk", "wv", "wo"})
        ps.add("cd.attn", std::string("cd.attn.") + n, init_normal({cc, cc}, xavier(cc), rng));
    for (const char* n : {"bq", "bk", "bv", "bo"})
        ps.add("cd.attn", std::string("cd.attn.") + n, init_const({cc}, 0.0f));
    w = cc;
    for (int i = 0; i < cfg_.cd_mlp_depth; ++i) {
        std::string p = "cd.mlp.fc" + std::to_string(i + 1) + ".";
        int out = i + 1 == cfg_.cd_mlp_depth ? 1 : cfg_.cd_embed;
        double s = i + 1 == cfg_.cd_mlp_depth ? 0.01 : he(w);
        ps.add("cd.mlp", p + "w", init_normal({w, out}, s, rng));
        ps.add("cd.mlp", p + "b", init_const({out}, 0.0f));
        w = out;
    }
}

template <class S>
void VaeNet<S>::save(const std::string& path) const {
    TensorContainer c;
    json meta;
    meta["kind"] = "tripoptimizer.checkpoint";
    meta["model"] = json::parse(model_config_to_json(cfg_));
    c.metadata = meta.dump();
    for (const auto& e : params_.entries()) {
        std::vector<uint64_t> shape;
        for (int d : e.value.shape) shape.push_back(uint64_t(d));
        c.set_f32(e.name, std::move(shape), e.value.data);
    }
    c.save(path);
}

template <class S>
VaeNet<S> VaeNet<S>::load(const std::string& path) {
    TensorContainer c = TensorContainer::load(path);
    json meta;
    try {
        meta = json::parse(c.metadata);
    } catch (const json::exception&) {
        throw input_error("checkpoint metadata is not valid JSON: " + path);
    }
    if (!meta.contains("model")) throw input_error("checkpoint has no model config: " + path);
    ModelConfig cfg = model_config_from_json(meta["model"].dump());
    VaeNet<S> net(cfg, 0);
    for (auto& e : net.params_.entries()) {
        if (!c.has(e.name)) throw input_error("checkpoint missing parameter: " + e.name);
        const ContainerArray& a = c.get(e.name);
        if (a.dtype != DType::F32 || a.count() != e.value.numel())
            throw input_error("checkpoint parameter mismatch: " + e.name);
        std::copy(a.as_f32(), a.as_f32() + a.count(), e.value.data.begin());
    }
    return net;
}

template class VaeNet<float>;
template class VaeNet<double>;

}  // namespace trip::model

#include "trip/train/dataset.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "trip/core/container.hpp"
#include "trip/core/error.hpp"
#include "trip/core/rng.hpp"
#include "trip/eval/synthetic.hpp"

namespace trip::train {

using nlohmann::json;

namespace {

std::vector<float> pack_vec3(const std::vector<Vec3>& v) {
    std::vector<float> out;
    out.reserve(v.size() * 3);
    for (const Vec3& p : v) {
        out.push_back(float(p.x));
        out.push_back(float(p.y));
        out.push_back(float(p.z));
    }
    return out;
}

std::vector<Vec3> unpack_vec3(const ContainerArray& a, const std::string& name) {
    if (a.shape.size() != 2 || a.shape[1] != 3)
        throw input_error("shape record: expected an n x 3 array for " + name);
    const float* f = a.as_f32();
    std::vector<Vec3> out(a.shape[0]);
    for (size_t i = 0; i < out.size(); ++i)
        out[i] = {double(f[3 * i]), double(f[3 * i + 1]), double(f[3 * i + 2])};
    return out;
}

const ContainerArray& need(const TensorContainer& c, const std::string& name) {
    if (!c.has(name)) throw input_error("shape record missing array: " + name);
    return c.get(name);
}

}  // namespace

void save_shape_record(const ShapeRecord& rec, const std::string& path) {
    TensorContainer c;
    json meta;
    meta["kind"] = "tripoptimizer.shape";
    meta["id"] = rec.id;
    meta["cd"] = rec.cd;
    meta["s_threshold"] = rec.s_threshold;
    meta["normalization"] = {{"translation", {rec.transform.translation.x,
                                              rec.transform.translation.y,
                                              rec.transform.translation.z}},
                             {"scale", rec.transform.scale}};
    c.metadata = meta.dump();

    c.set_f32("mesh.vertices", {rec.mesh.vertex_count(), 3}, pack_vec3(rec.mesh.vertices));
    std::vector<int64_t> faces;
    faces.reserve(rec.mesh.face_count() * 3);
    for (const auto& f : rec.mesh.faces)
        for (uint32_t idx : f) faces.push_back(int64_t(idx));
    c.set_i64("mesh.faces", {rec.mesh.face_count(), 3}, faces);

    c.set_f32("cloud.points", {rec.cloud.points.size(), 3}, pack_vec3(rec.cloud.points));
    c.set_u8("cloud.tags", {rec.cloud.tags.size()}, rec.cloud.tags);

    c.set_f32("field.points", {rec.field_points.size(), 3}, pack_vec3(rec.field_points));
    c.set_f32("field.occupancy", {rec.field_occupancy.size()}, rec.field_occupancy);
    c.set_u8("field.tags", {rec.field_tags.size()}, rec.field_tags);
    c.save(path);
}

ShapeRecord load_shape_record(const std::string& path) {
    TensorContainer c = TensorContainer::load(path);
    json meta;
    try {
        meta = json::parse(c.metadata);
    } catch (const json::exception&) {
        throw input_error("shape record metadata is not valid JSON: " + path);
    }
    if (meta.value("kind", "") != "tripoptimizer.shape")
        throw input_error("not a shape record: " + path);

    ShapeRecord rec;
    rec.id = meta.value("id", "");
    rec.cd = meta.value("cd", 0.0f);
    rec.s_threshold = meta.value("s_threshold", 0.0);
    if (meta.contains("normalization")) {
        const json& n = meta["normalization"];
        auto t = n.value("translation", std::vector<double>{0, 0, 0});
        if (t.size() != 3) throw input_error("shape record: bad normalization block");
        rec.transform.translation = {t[0], t[1], t[2]};
        rec.transform.scale = n.value("scale", 1.0);
    }

    rec.mesh.vertices = unpack_vec3(need(c, "mesh.vertices"), "mesh.vertices");
    const ContainerArray& fa = need(c, "mesh.faces");
    if (fa.shape.size() != 2 || fa.shape[1] != 3)
        throw input_error("shape record: expected an n x 3 face array");
    const int64_t* fi = fa.as_i64();
    rec.mesh.faces.resize(fa.shape[0]);
    for (size_t i = 0; i < rec.mesh.faces.size(); ++i)
        rec.mesh.faces[i] = {uint32_t(fi[3 * i]), uint32_t(fi[3 * i + 1]),
                             uint32_t(fi[3 * i + 2])};

    rec.cloud.points = unpack_vec3(need(c, "cloud.points"), "cloud.points");
    const ContainerArray& ct = need(c, "cloud.tags");
    rec.cloud.tags.assign(ct.as_u8(), ct.as_u8() + ct.count());

    rec.field_points = unpack_vec3(need(c, "field.points"), "field.points");
    const ContainerArray& fo = need(c, "field.occupancy");
    rec.field_occupancy.assign(fo.as_f32(), fo.as_f32() + fo.count());
    const ContainerArray& ft = need(c, "field.tags");
    rec.field_tags.assign(ft.as_u8(), ft.as_u8() + ft.count());

    if (rec.field_points.size() != rec.field_occupancy.size())
        throw input_error("shape record: field arrays disagree in length");
    return rec;
}

const ShapeRecord& Dataset::at(const std::string& id) const {
    for (const ShapeRecord& s : shapes)
        if (s.id == id) return s;
    throw input_error("dataset has no shape: " + id);
}

bool Dataset::has(const std::string& id) const {
    for (const ShapeRecord& s : shapes)
        if (s.id == id) return true;
    return false;
}

std::vector<std::string> Dataset::ids() const {
    std::vector<std::string> out;
    out.reserve(shapes.size());
    for (const ShapeRecord& s : shapes) out.push_back(s.id);
    return out;
}

Dataset load_dataset(const std::string& dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw input_error("not a directory: " + dir);
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".trip") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    Dataset ds;
    for (const auto& p : files) ds.shapes.push_back(load_shape_record(p.string()));
    return ds;
}

Split load_split(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw input_error("cannot open split file: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw input_error(std::string("split file is not valid JSON: ") + e.what());
    }
    Split s;
    auto grab = [&](const char* key, std::vector<std::string>& out) {
        if (!j.contains(key)) throw input_error(std::string("split file missing key: ") + key);
        out = j.at(key).get<std::vector<std::string>>();
    };
    grab("train", s.train);
    grab("val", s.val);
    grab("test", s.test);
    return s;
}

void save_split(const Split& split, const std::string& path) {
    json j;
    j["train"] = split.train;
    j["val"] = split.val;
    j["test"] = split.test;
    std::ofstream out(path);
    if (!out) throw input_error("cannot write split file: " + path);
    out << j.dump(2) << "\n";
}

Split make_split(std::vector<std::string> ids, double train_frac, double val_frac,
                 uint64_t seed) {
    if (train_frac < 0 || val_frac < 0 || train_frac + val_frac > 1.0)
        throw config_error("split fractions must be non-negative and sum to at most 1");
    Rng rng(mix_seed(seed, 0x53504c49ull));
    for (size_t i = ids.size(); i > 1; --i)
        std::swap(ids[i - 1], ids[rng.next_u64() % i]);
    size_t n = ids.size();
    size_t n_train = size_t(std::floor(train_frac * double(n) + 0.5));
    size_t n_val = size_t(std::floor(val_frac * double(n) + 0.5));
    n_train = std::min(n_train, n);
    n_val = std::min(n_val, n - n_train);
    Split s;
    s.train.assign(ids.begin(), ids.begin() + long(n_train));
    s.val.assign(ids.begin() + long(n_train), ids.begin() + long(n_train + n_val));
    s.test.assign(ids.begin() + long(n_train + n_val), ids.end());
    return s;
}

void binarize_targets(Dataset& dataset) {
    for (ShapeRecord& s : dataset.shapes)
        for (float& o : s.field_occupancy) o = o > 0.5f ? 1.0f : 0.0f;
}

Dataset synthesize_dataset(int n_shapes, uint64_t seed, size_t cloud_points,
                           const FieldConfig& field_config) {
    Dataset ds;
    auto shapes = eval::make_synthetic_dataset(n_shapes, seed);
    ds.shapes.reserve(shapes.size());
    for (size_t i = 0; i < shapes.size(); ++i) {
        eval::SyntheticShape& shape = shapes[i];
        ShapeRecord rec;
        rec.id = shape.id;
        rec.transform = shape.transform;
        rec.cd = float(shape.cd_label);
        rec.cloud = hybrid_point_cloud(shape.mesh, cloud_points, 0.5, 16384, {},
                                       mix_seed(seed, 2 * i), true);
        FieldConfig fc = field_config;
        fc.seed = mix_seed(seed, 2 * i + 1);
        OccupancyField field = build_field(shape.mesh, shape.cd_label, fc);
        rec.field_points = std::move(field.query_points);
        rec.field_occupancy = std::move(field.occupancy);
        rec.field_tags = std::move(field.tags);
        rec.s_threshold = field.s_threshold;
        rec.mesh = std::move(shape.mesh);
        ds.shapes.push_back(std::move(rec));
    }
    return ds;
}

}  // namespace trip::train

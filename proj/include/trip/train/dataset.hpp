#pragma once

#include <string>
#include <vector>

#include "trip/geometry/normalize.hpp"
#include "trip/geometry/trimesh.hpp"
#include "trip/occupancy/occupancy.hpp"
#include "trip/sampling/sampling.hpp"

namespace trip::train {

// One preprocessed shape: normalized mesh, encoder point cloud, occupancy
// supervision field, and the drag label. Stored as a tensor container per
// shape.
struct ShapeRecord {
    std::string id;
    TriMesh mesh;
    PointCloud cloud;
    std::vector<Vec3> field_points;
    std::vector<float> field_occupancy;
    std::vector<uint8_t> field_tags;
    float cd = 0.0f;
    double s_threshold = 0.0;
    NormalizationTransform transform;
};

void save_shape_record(const ShapeRecord& rec, const std::string& path);
ShapeRecord load_shape_record(const std::string& path);

struct Dataset {
    std::vector<ShapeRecord> shapes;

    const ShapeRecord& at(const std::string& id) const;
    bool has(const std::string& id) const;
    std::vector<std::string> ids() const;
};

// Reads every *.trip file in a directory, ordered by filename.
Dataset load_dataset(const std::string& dir);

struct Split {
    std::vector<std::string> train, val, test;
};

Split load_split(const std::string& path);
void save_split(const Split& split, const std::string& path);

// Seeded shuffle, then contiguous train/val/test slices.
Split make_split(std::vector<std::string> ids, double train_frac, double val_frac,
                 uint64_t seed);

// Thresholds every occupancy target at 1/2 to exactly 0 or 1.
void binarize_targets(Dataset& dataset);

// Generates the superellipsoid family and runs the full preprocessing
// pipeline on it: point clouds, occupancy fields, drag labels. Per-shape
// sampling seeds derive from `seed`; field_config.seed is ignored.
Dataset synthesize_dataset(int n_shapes, uint64_t seed, size_t cloud_points,
                           const FieldConfig& field_config);

}  // namespace trip::train

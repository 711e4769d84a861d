#include "trip/surface/surface.hpp"

#include <fstream>
#include <iomanip>
#include <string>

#include "trip/core/error.hpp"
#include "trip/core/parallel.hpp"
#include "trip/spatial/bvh.hpp"

namespace trip {

DisplacementMap signed_distance_map(const TriMesh& reference, const TriMesh& other) {
    if (reference.vertex_count() == 0 || other.face_count() == 0)
        throw input_error("signed distance map needs two non-empty meshes");
    Bvh bvh(other);
    std::vector<Vec3> normals = reference.vertex_normals();
    DisplacementMap map;
    map.values.resize(reference.vertex_count());
    parallel_for(int64_t(reference.vertex_count()), [&](int64_t i) {
        const Vec3& v = reference.vertices[size_t(i)];
        Bvh::SurfacePoint cp = bvh.closest_point(v);
        Vec3 d = cp.point - v;
        map.values[size_t(i)] = normals[size_t(i)].dot(d) >= 0 ? cp.distance : -cp.distance;
    });
    return map;
}

void save_displacement_csv(const std::string& path, const DisplacementMap& map) {
    std::ofstream out(path);
    if (!out) throw input_error("cannot open " + path + " for writing");
    out << "vertex_index,dx\n" << std::setprecision(17);
    for (size_t i = 0; i < map.values.size(); ++i) out << i << ',' << map.values[i] << '\n';
    out.flush();
    if (!out) throw input_error("write failed: " + path);
}

DisplacementMap load_displacement_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw input_error("cannot open " + path);
    std::string line;
    if (!std::getline(in, line) || line.rfind("vertex_index,", 0) != 0)
        throw input_error(path + " is not a displacement map csv");
    DisplacementMap map;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        size_t comma = line.find(',');
        if (comma == std::string::npos)
            throw input_error("malformed displacement row in " + path + ": " + line);
        try {
            map.values.push_back(std::stod(line.substr(comma + 1)));
        } catch (const std::exception&) {
            throw input_error("malformed displacement row in " + path + ": " + line);
        }
    }
    return map;
}

}  // namespace trip

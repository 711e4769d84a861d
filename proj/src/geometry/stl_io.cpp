#include "trip/geometry/stl_io.hpp"

#include <cctype>
#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

#include "trip/core/error.hpp"

namespace trip {

namespace {

TriMesh from_triangle_soup(std::vector<Vec3>&& tri_verts) {
    TriMesh mesh;
    mesh.vertices = std::move(tri_verts);
    mesh.faces.reserve(mesh.vertices.size() / 3);
    for (uint32_t i = 0; i + 2 < mesh.vertices.size(); i += 3)
        mesh.faces.push_back({i, i + 1, i + 2});
    weld_vertices(mesh);
    remove_degenerate_faces(mesh);
    return mesh;
}

TriMesh load_binary(const std::string& path, std::ifstream& in, size_t file_size) {
    if (file_size < 84) throw input_error("STL file too small for binary header: " + path);
    in.seekg(80);
    uint32_t tri_count = 0;
    in.read(reinterpret_cast<char*>(&tri_count), 4);
    size_t expected = 84 + size_t(tri_count) * 50;
    if (file_size < expected)
        throw input_error("truncated payload in binary STL: " + path + " (declares " +
                          std::to_string(tri_count) + " triangles, needs " +
                          std::to_string(expected) + " bytes, file has " +
                          std::to_string(file_size) + ")");
    std::vector<Vec3> verts;
    verts.reserve(size_t(tri_count) * 3);
    std::vector<char> rec(50);
    for (uint32_t t = 0; t < tri_count; ++t) {
        in.read(rec.data(), 50);
        if (!in) throw input_error("read failure in binary STL: " + path);
        for (int v = 0; v < 3; ++v) {
            float xyz[3];
            std::memcpy(xyz, rec.data() + 12 + v * 12, 12);
            verts.emplace_back(xyz[0], xyz[1], xyz[2]);
        }
    }
    return from_triangle_soup(std::move(verts));
}

TriMesh load_ascii(const std::string& path, std::ifstream& in) {
    in.seekg(0);
    std::vector<Vec3> verts;
    std::string tok;
    bool in_solid = false;
    while (in >> tok) {
        if (tok == "solid") {
            in_solid = true;
            std::string rest;
            std::getline(in, rest);  // optional name
        } else if (tok == "vertex") {
            Vec3 v;
            if (!(in >> v.x >> v.y >> v.z))
                throw input_error("malformed vertex in ASCII STL: " + path);
            verts.push_back(v);
        } else if (tok == "endsolid") {
            std::string rest;
            std::getline(in, rest);
        }
    }
    if (!in_solid) throw input_error("not an STL file: " + path);
    if (verts.size() % 3 != 0)
        throw input_error("ASCII STL vertex count not a multiple of 3: " + path);
    return from_triangle_soup(std::move(verts));
}

}  // namespace

TriMesh load_stl(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw input_error("cannot open STL file: " + path);
    in.seekg(0, std::ios::end);
    size_t file_size = size_t(in.tellg());
    in.seekg(0);
    if (file_size == 0) throw input_error("empty STL file: " + path);

    // ASCII files start with "solid" and contain the keyword "facet" early on.
    // Some binary exporters also write "solid" in the header, so require both.
    char head[512] = {};
    in.read(head, std::min<size_t>(file_size, sizeof(head)));
    in.clear();
    std::string head_str(head, size_t(in.gcount()));
    size_t first = head_str.find_first_not_of(" \t\r\n");
    bool ascii = first != std::string::npos && head_str.compare(first, 5, "solid") == 0 &&
                 head_str.find("facet") != std::string::npos;
    TriMesh mesh = ascii ? load_ascii(path, in) : load_binary(path, in, file_size);
    if (mesh.faces.empty()) throw input_error("STL contains no usable triangles: " + path);
    return mesh;
}

void save_stl(const TriMesh& mesh, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw input_error("cannot open file for writing: " + path);
    char header[80] = {};
    std::snprintf(header, sizeof(header), "binary STL");
    out.write(header, 80);
    uint32_t n = uint32_t(mesh.faces.size());
    out.write(reinterpret_cast<const char*>(&n), 4);
    for (size_t f = 0; f < mesh.faces.size(); ++f) {
        Vec3 nd = mesh.face_normal(f);
        float rec[12] = {float(nd.x), float(nd.y), float(nd.z)};
        for (int v = 0; v < 3; ++v) {
            const Vec3& p = mesh.vertices[mesh.faces[f][v]];
            rec[3 + v * 3 + 0] = float(p.x);
            rec[3 + v * 3 + 1] = float(p.y);
            rec[3 + v * 3 + 2] = float(p.z);
        }
        out.write(reinterpret_cast<const char*>(rec), 48);
        uint16_t attr = 0;
        out.write(reinterpret_cast<const char*>(&attr), 2);
    }
    if (!out) throw input_error("write failure: " + path);
}

}  // namespace trip

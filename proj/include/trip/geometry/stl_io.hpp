#pragma once

#include <string>

#include "trip/geometry/trimesh.hpp"

namespace trip {

// Reads binary or ASCII STL (auto-detected), welds exactly-duplicate
// vertices, and drops degenerate faces. Throws Error(Input) on missing
// files, malformed syntax, or a binary payload shorter than its declared
// triangle count ("truncated payload").
TriMesh load_stl(const std::string& path);

// Binary little-endian STL, 80-byte header, per-face normals recomputed.
void save_stl(const TriMesh& mesh, const std::string& path);

}  // namespace trip

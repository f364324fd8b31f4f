#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "cgm/mesh.hpp"

namespace cgm {

enum class MeshFormat { Obj, Ply };

// Loads and validates a triangle mesh. Format inferred from the extension
// when not given explicitly. Polygon faces are rejected, not triangulated.
TriangleMesh load_mesh(const std::string& path);
TriangleMesh load_mesh(const std::string& path, MeshFormat format);

// ASCII PLY writer; colors (one RGB triple per vertex) are optional.
void save_ply(const std::string& path, const std::vector<Eigen::Vector3d>& positions,
              const std::vector<std::array<int, 3>>& faces,
              const std::vector<std::array<std::uint8_t, 3>>* colors = nullptr,
              const std::string& scalar_name = "", const std::vector<double>* scalar = nullptr);

// One float per vertex, newline-separated, vertex order = file order.
std::vector<double> load_intensities(const std::string& path, int expected_count);

}  // namespace cgm

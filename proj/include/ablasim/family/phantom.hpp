#pragma once

#include <string>
#include <vector>

#include "ablasim/gssa/definition.hpp"
#include "json.hpp"

namespace ablasim::family {

/// JSON phantom description:
///   {"grid": {"dimensions": [nx, ny, nz], "spacing": h, "origin": [x, y, z]},
///    "regions": [{"name": ..., "group": ..., "shape": {"type": "sphere" | "cylinder" | "box", ...}}]}
/// Spheres take center and radius, cylinders start, end and radius, boxes min
/// and max; all in metres. The origin is optional and defaults to a centred grid.
struct PhantomSpec {
  grid::VoxelGrid grid;
  std::vector<gssa::RegionDef> regions;
};

PhantomSpec parse_phantom(const nlohmann::json& j);
PhantomSpec load_phantom(const std::filesystem::path& path);

/// Adds GRID_DIMENSIONS, GRID_SPACING, GRID_ORIGIN and the regions.
void apply_phantom(gssa::SimulationDefinition& defn, const PhantomSpec& spec);

}  // namespace ablasim::family

#pragma once

#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "ablasim/grid/ops.hpp"
#include "ablasim/gssa/definition.hpp"
#include "ablasim/thermal/bioheat.hpp"

namespace ablasim::family {

/// Typed parameter access that names the offending parameter on type errors.
double number(const gssa::SimulationDefinition& defn, const std::string& name);
double number_or(const gssa::SimulationDefinition& defn, const std::string& name, double fallback);
std::string string_or(const gssa::SimulationDefinition& defn, const std::string& name, const std::string& fallback);
double needle_number(const gssa::SimulationDefinition& defn, int needle, const std::string& name);
double needle_number_or(const gssa::SimulationDefinition& defn, int needle, const std::string& name,
                        double fallback);

/// GRID_DIMENSIONS (three counts), GRID_SPACING, optional GRID_ORIGIN; the
/// default origin centres the grid on the world origin.
grid::VoxelGrid grid_from(const gssa::SimulationDefinition& defn);

/// Grid and label field painted from the definition's regions. Region idx
/// becomes the voxel label; mask payloads resolve relative to `base_dir`.
struct ModelInputs {
  grid::VoxelGrid grid;
  grid::RegionLabels labels;
  std::vector<std::string> label_group;  ///< group per label, "background" at 0
  std::vector<std::string> warnings;

  std::set<std::uint16_t> labels_in(std::initializer_list<const char*> groups) const;
  /// Voxels belonging to organ or tumour regions.
  grid::Mask tissue() const;
  std::vector<std::size_t> voxels_in(std::initializer_list<const char*> groups) const;
};

ModelInputs build_model(const gssa::SimulationDefinition& defn, const std::filesystem::path& base_dir);

/// Tissue constants per label: `<GROUP>_<QUANTITY>` overrides `TISSUE_<QUANTITY>`
/// (e.g. TUMOUR_THERMAL_CONDUCTIVITY over TISSUE_THERMAL_CONDUCTIVITY).
double tissue_number(const gssa::SimulationDefinition& defn, const std::string& group, const std::string& quantity,
                     double fallback);
double tissue_number(const gssa::SimulationDefinition& defn, const std::string& group, const std::string& quantity);

thermal::CellDeathParams cell_death_from(const gssa::SimulationDefinition& defn);
thermal::BioheatSetup bioheat_setup(const gssa::SimulationDefinition& defn, const ModelInputs& model);

grid::NeedleGeometry needle_geometry(const gssa::SimulationDefinition& defn, int needle);
/// The needle's entry point, moved along the shaft towards the tip until it
/// lies inside the grid (skin entry points are usually outside the model).
Vec3 entry_in_grid(const gssa::NeedleDef& needle, const grid::VoxelGrid& grid);

grid::NeedleShape needle_shape(const gssa::SimulationDefinition& defn, int needle);

}  // namespace ablasim::family

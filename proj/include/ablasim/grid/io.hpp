#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "ablasim/grid/voxel_grid.hpp"

namespace ablasim::grid {

class FormatError : public Error {
 public:
  using Error::Error;
};

// GSMASK1: magic, u32 dims[3], f64 spacing, f64 origin[3], then the mask
// bit-packed LSB first in linear (x fastest) order. All little-endian.
void write_mask(std::ostream& out, const Mask& mask);
Mask read_mask(std::istream& in);
void save_mask(const std::filesystem::path& path, const Mask& mask);
Mask load_mask(const std::filesystem::path& path);

// GSFLD1: magic, u32 dims[3], f64 spacing, f64 origin[3], u32 quantity,
// u32 components, then f64 values (components interleaved per voxel).
void write_field(std::ostream& out, const ScalarField& field);
ScalarField read_field(std::istream& in);
void save_field(const std::filesystem::path& path, const ScalarField& field);
ScalarField load_field(const std::filesystem::path& path);

/// Multi-component variant used for complex data (re/im interleaved).
void write_components(std::ostream& out, const VoxelGrid& grid, Quantity q, std::uint32_t components,
                      const std::vector<double>& interleaved);

/// ASCII legacy VTK STRUCTURED_POINTS export for visualisation.
void save_vtk(const std::filesystem::path& path, const ScalarField& field, const std::string& name);

}  // namespace ablasim::grid

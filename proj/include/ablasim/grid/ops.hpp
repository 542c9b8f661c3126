#pragma once

#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "ablasim/grid/voxel_grid.hpp"

namespace ablasim::grid {

struct Sphere {
  Vec3 center;
  double radius{0};
  bool operator==(const Sphere&) const = default;
};
struct Cylinder {
  Vec3 start, end;
  double radius{0};
  bool operator==(const Cylinder&) const = default;
};
struct Box {
  Vec3 min, max;
  bool operator==(const Box&) const = default;
};
using Shape = std::variant<Sphere, Cylinder, Box, Mask>;

bool shape_contains(const Shape& s, const Vec3& p);

struct PhantomRegion {
  std::uint16_t label{1};
  Shape shape;
};

struct PhantomResult {
  RegionLabels labels;
  std::vector<std::string> warnings;
};

/// Paints regions in order; later regions overwrite earlier ones.
PhantomResult build_phantom(const std::vector<PhantomRegion>& regions, const VoxelGrid& grid);

enum class NeedleGeometry { StraightMonopolar, ExtensibleTines };

std::string to_string(NeedleGeometry g);
NeedleGeometry parse_needle_geometry(const std::string& s);

struct NeedleShape {
  double shaft_radius{0};
  double active_length{0};
  int tine_count{1};
  double max_tine_extension{0};
  /// Half-angle of the tine cone around the forward shaft axis (radians).
  double umbrella_half_angle{1.0471975511965976};
};

struct NeedleRaster {
  std::vector<std::size_t> shaft;
  Vec3 tip;
  Vec3 axis;  ///< unit vector from entry towards tip
  std::vector<Vec3> tine_tips;
  std::vector<std::size_t> electrode;
};

/// Tine tip positions on the cone around the forward axis for the given
/// extension fraction in [0,1].
std::vector<Vec3> tine_tip_positions(const Vec3& tip, const Vec3& entry, const NeedleShape& shape,
                                     double extension);

NeedleRaster rasterize_needle(const Vec3& tip, const Vec3& entry, NeedleGeometry geometry,
                              const NeedleShape& shape, double extension, const VoxelGrid& grid);

enum class Compare { GreaterEqual, Greater, LessEqual, Less };

struct Restriction {
  const RegionLabels* labels{nullptr};
  std::set<std::uint16_t> allowed;
};

Mask isovolume(const ScalarField& field, double threshold, Compare direction,
               const std::optional<Restriction>& restrict_to = std::nullopt);

/// Masked voxels with at least one unmasked 6-neighbour; the grid exterior
/// counts as unmasked. Ordered by linear index.
std::vector<Index3> surface_voxels(const Mask& mask);
std::vector<Vec3> surface_points(const Mask& mask);

}  // namespace ablasim::grid

#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "ablasim/grid/voxel_grid.hpp"

namespace ablasim::eval {

/// y = R x + t, mapping the moving (segmented) lesion onto the fixed one.
struct RigidTransform {
  Eigen::Matrix3d rotation{Eigen::Matrix3d::Identity()};
  Vec3 translation{};

  Vec3 apply(const Vec3& p) const;
  RigidTransform inverse() const;
};

struct Registration {
  RigidTransform transform;
  double mean_squared_distance{0};  ///< m², moving surface to nearest fixed surface point
  int iterations{0};
};

/// Centroid alignment followed by point-to-point ICP on surface points with
/// a least-squares (Kabsch) rotation; at most 50 iterations, stopping once
/// the mean squared distance improves by less than 1e-9 m². Returns the best
/// transform seen.
Registration rigid_register(const grid::Mask& moving, const grid::Mask& fixed);

/// Nearest-neighbour resampling of `moving` through `t` onto its own grid.
grid::Mask transform_mask(const grid::Mask& moving, const RigidTransform& t);

struct MetricsReport {
  double dice{0}, sn{0}, ppv{0};
  double aae_mm{0};
  RigidTransform transform;
  std::size_t segmented_voxels{0}, simulated_voxels{0}, intersection_voxels{0};

  std::string to_json() const;
  /// "DICE,SN,PPV,AAE" to three decimals.
  std::string csv_row() const;
};

/// S = segmented (after registration), Σ = simulated, on the same grid.
/// AAE averages, over the surface voxels of S, the distance in mm from the
/// voxel centre to the nearest surface voxel centre of Σ.
MetricsReport overlap_metrics(const grid::Mask& segmented, const grid::Mask& simulated);

/// Registers the segmented lesion onto the simulated one, then measures.
MetricsReport evaluate(const grid::Mask& segmented, const grid::Mask& simulated, bool register_first = true);

/// Exact squared Euclidean distance transform in voxel units (separable
/// lower-envelope algorithm): for every voxel, the squared index distance to
/// the nearest site. Infinity everywhere when there are no sites.
std::vector<double> squared_distance_transform(const grid::VoxelGrid& grid, const std::vector<std::uint8_t>& sites);

}  // namespace ablasim::eval

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "ablasim/error.hpp"
#include "ablasim/vec3.hpp"

namespace ablasim::grid {

struct Index3 {
  int i{0}, j{0}, k{0};
  bool operator==(const Index3&) const = default;
};

/// Uniform, isotropic Cartesian grid. Voxel (i,j,k) is centred at
/// origin + h*(i,j,k); x is the fastest-varying index in linear storage.
class VoxelGrid {
 public:
  VoxelGrid() = default;
  VoxelGrid(std::array<int, 3> dims, double spacing, Vec3 origin = {});

  const std::array<int, 3>& dims() const { return dims_; }
  int nx() const { return dims_[0]; }
  int ny() const { return dims_[1]; }
  int nz() const { return dims_[2]; }
  double spacing() const { return h_; }
  const Vec3& origin() const { return origin_; }
  std::size_t size() const {
    return static_cast<std::size_t>(dims_[0]) * dims_[1] * dims_[2];
  }

  std::size_t linear(int i, int j, int k) const {
    return (static_cast<std::size_t>(k) * dims_[1] + j) * dims_[0] + i;
  }
  std::size_t linear(const Index3& p) const { return linear(p.i, p.j, p.k); }
  Index3 unravel(std::size_t n) const;

  Vec3 center(int i, int j, int k) const {
    return {origin_.x + h_ * i, origin_.y + h_ * j, origin_.z + h_ * k};
  }
  Vec3 center(std::size_t n) const {
    auto p = unravel(n);
    return center(p.i, p.j, p.k);
  }

  bool in_range(int i, int j, int k) const {
    return i >= 0 && j >= 0 && k >= 0 && i < dims_[0] && j < dims_[1] && k < dims_[2];
  }
  /// True when `p` lies inside the union of voxel cells.
  bool contains(const Vec3& p) const;
  /// Voxel whose centre is nearest to `p`, clamped into range.
  Index3 nearest(const Vec3& p) const;
  bool on_boundary(int i, int j, int k) const {
    return i == 0 || j == 0 || k == 0 || i == dims_[0] - 1 || j == dims_[1] - 1 || k == dims_[2] - 1;
  }

  bool operator==(const VoxelGrid&) const = default;

 private:
  std::array<int, 3> dims_{2, 2, 2};
  double h_{1.0};
  Vec3 origin_{};
};

enum class Quantity : std::uint32_t {
  Generic = 0,
  Temperature,
  DeathFraction,
  AliveFraction,
  Potential,
  Sar,
  FieldMagnitude,
  Label,
};

std::string to_string(Quantity q);

struct ScalarField {
  VoxelGrid grid;
  std::vector<double> values;
  Quantity quantity{Quantity::Generic};

  ScalarField() = default;
  ScalarField(VoxelGrid g, double fill = 0.0, Quantity q = Quantity::Generic)
      : grid(g), values(g.size(), fill), quantity(q) {}

  double& operator[](std::size_t n) { return values[n]; }
  double operator[](std::size_t n) const { return values[n]; }
  double& at(int i, int j, int k) { return values[grid.linear(i, j, k)]; }
  double at(int i, int j, int k) const { return values[grid.linear(i, j, k)]; }

  /// Trilinear interpolation; points outside are clamped to the nearest cell.
  double sample(const Vec3& p) const;
};

struct Mask {
  VoxelGrid grid;
  std::vector<std::uint8_t> bits;

  Mask() = default;
  explicit Mask(VoxelGrid g, bool fill = false) : grid(g), bits(g.size(), fill ? 1 : 0) {}

  bool operator[](std::size_t n) const { return bits[n] != 0; }
  bool at(int i, int j, int k) const { return bits[grid.linear(i, j, k)] != 0; }
  void set(std::size_t n, bool v = true) { bits[n] = v ? 1 : 0; }
  std::size_t count() const;
  bool empty() const { return count() == 0; }
  bool operator==(const Mask&) const = default;
};

/// Label 0 is background and 1 is conventionally the organ; higher values
/// follow the region index assignment of the simulation definition.
struct RegionLabels {
  VoxelGrid grid;
  std::vector<std::uint16_t> labels;

  RegionLabels() = default;
  explicit RegionLabels(VoxelGrid g) : grid(g), labels(g.size(), 0) {}
  std::uint16_t operator[](std::size_t n) const { return labels[n]; }
  bool operator==(const RegionLabels&) const = default;
};

/// 6-connected component labelling. Returns one id per voxel (0 = not in
/// mask, components numbered from 1) and the number of components.
std::pair<std::vector<int>, int> connected_components(const Mask& mask);

}  // namespace ablasim::grid

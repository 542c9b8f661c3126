#include "ablasim/grid/voxel_grid.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace ablasim::grid {

VoxelGrid::VoxelGrid(std::array<int, 3> dims, double spacing, Vec3 origin)
    : dims_(dims), h_(spacing), origin_(origin) {
  for (int d : dims_)
    if (d < 2) throw Error("grid dimensions must be at least 2");
  if (!(spacing > 0) || !std::isfinite(spacing)) throw Error("grid spacing must be positive");
}

Index3 VoxelGrid::unravel(std::size_t n) const {
  Index3 p;
  p.i = static_cast<int>(n % dims_[0]);
  n /= dims_[0];
  p.j = static_cast<int>(n % dims_[1]);
  p.k = static_cast<int>(n / dims_[1]);
  return p;
}

bool VoxelGrid::contains(const Vec3& p) const {
  const double lo[3] = {origin_.x - h_ / 2, origin_.y - h_ / 2, origin_.z - h_ / 2};
  const double c[3] = {p.x, p.y, p.z};
  for (int a = 0; a < 3; ++a) {
    double hi = lo[a] + h_ * dims_[a];
    if (!(c[a] >= lo[a] && c[a] <= hi)) return false;
  }
  return true;
}

Index3 VoxelGrid::nearest(const Vec3& p) const {
  auto idx = [&](double c, double o, int n) {
    int v = static_cast<int>(std::lround((c - o) / h_));
    return std::clamp(v, 0, n - 1);
  };
  return {idx(p.x, origin_.x, dims_[0]), idx(p.y, origin_.y, dims_[1]), idx(p.z, origin_.z, dims_[2])};
}

std::string to_string(Quantity q) {
  switch (q) {
    case Quantity::Generic: return "generic";
    case Quantity::Temperature: return "temperature";
    case Quantity::DeathFraction: return "death_fraction";
    case Quantity::AliveFraction: return "alive_fraction";
    case Quantity::Potential: return "potential";
    case Quantity::Sar: return "sar";
    case Quantity::FieldMagnitude: return "field_magnitude";
    case Quantity::Label: return "label";
  }
  return "generic";
}

double ScalarField::sample(const Vec3& p) const {
  const double h = grid.spacing();
  const Vec3& o = grid.origin();
  double f[3] = {(p.x - o.x) / h, (p.y - o.y) / h, (p.z - o.z) / h};
  int base[3];
  double w[3];
  for (int a = 0; a < 3; ++a) {
    int n = grid.dims()[a];
    double c = std::clamp(f[a], 0.0, static_cast<double>(n - 1));
    int b = std::min(static_cast<int>(std::floor(c)), n - 2);
    base[a] = b;
    w[a] = c - b;
  }
  double acc = 0;
  for (int dk = 0; dk < 2; ++dk)
    for (int dj = 0; dj < 2; ++dj)
      for (int di = 0; di < 2; ++di) {
        double wt = (di ? w[0] : 1 - w[0]) * (dj ? w[1] : 1 - w[1]) * (dk ? w[2] : 1 - w[2]);
        acc += wt * at(base[0] + di, base[1] + dj, base[2] + dk);
      }
  return acc;
}

std::size_t Mask::count() const {
  return static_cast<std::size_t>(std::count_if(bits.begin(), bits.end(), [](auto b) { return b != 0; }));
}

std::pair<std::vector<int>, int> connected_components(const Mask& mask) {
  const auto& g = mask.grid;
  std::vector<int> comp(g.size(), 0);
  int next = 0;
  std::vector<std::size_t> stack;
  for (std::size_t seed = 0; seed < g.size(); ++seed) {
    if (!mask[seed] || comp[seed]) continue;
    ++next;
    comp[seed] = next;
    stack.push_back(seed);
    while (!stack.empty()) {
      auto n = stack.back();
      stack.pop_back();
      auto p = g.unravel(n);
      const int nb[6][3] = {{-1, 0, 0}, {1, 0, 0}, {0, -1, 0}, {0, 1, 0}, {0, 0, -1}, {0, 0, 1}};
      for (auto& d : nb) {
        int i = p.i + d[0], j = p.j + d[1], k = p.k + d[2];
        if (!g.in_range(i, j, k)) continue;
        auto m = g.linear(i, j, k);
        if (mask[m] && !comp[m]) {
          comp[m] = next;
          stack.push_back(m);
        }
      }
    }
  }
  return {std::move(comp), next};
}

}  // namespace ablasim::grid

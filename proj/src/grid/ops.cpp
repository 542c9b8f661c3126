#include "ablasim/grid/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace ablasim::grid {

namespace {

double segment_distance(const Vec3& p, const Vec3& a, const Vec3& b) {
  Vec3 ab = b - a;
  double len2 = ab.dot(ab);
  double t = len2 > 0 ? std::clamp((p - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
  return (p - (a + ab * t)).norm();
}

// Any unit vector orthogonal to `axis`.
Vec3 orthogonal(const Vec3& axis) {
  Vec3 ref = std::abs(axis.x) < 0.9 ? Vec3{1, 0, 0} : Vec3{0, 1, 0};
  return axis.cross(ref).normalized();
}

}  // namespace

bool shape_contains(const Shape& s, const Vec3& p) {
  return std::visit(
      [&](const auto& sh) -> bool {
        using T = std::decay_t<decltype(sh)>;
        if constexpr (std::is_same_v<T, Sphere>) {
          return (p - sh.center).norm() <= sh.radius;
        } else if constexpr (std::is_same_v<T, Cylinder>) {
          Vec3 ax = sh.end - sh.start;
          double t = (p - sh.start).dot(ax) / ax.dot(ax);
          if (t < 0 || t > 1) return false;
          return (p - (sh.start + ax * t)).norm() <= sh.radius;
        } else if constexpr (std::is_same_v<T, Box>) {
          return p.x >= sh.min.x && p.x <= sh.max.x && p.y >= sh.min.y && p.y <= sh.max.y &&
                 p.z >= sh.min.z && p.z <= sh.max.z;
        } else {
          if (!sh.grid.contains(p)) return false;
          auto q = sh.grid.nearest(p);
          return sh.at(q.i, q.j, q.k);
        }
      },
      s);
}

PhantomResult build_phantom(const std::vector<PhantomRegion>& regions, const VoxelGrid& grid) {
  PhantomResult out{RegionLabels(grid), {}};
  for (std::size_t r = 0; r < regions.size(); ++r) {
    const auto& reg = regions[r];
    std::size_t painted = 0;
    for (std::size_t n = 0; n < grid.size(); ++n) {
      if (shape_contains(reg.shape, grid.center(n))) {
        out.labels.labels[n] = reg.label;
        ++painted;
      }
    }
    if (painted == 0)
      out.warnings.push_back("region " + std::to_string(r) + " (label " + std::to_string(reg.label) +
                             ") does not intersect the grid");
  }
  return out;
}

std::string to_string(NeedleGeometry g) {
  return g == NeedleGeometry::StraightMonopolar ? "straight_monopolar" : "extensible_tines";
}

NeedleGeometry parse_needle_geometry(const std::string& s) {
  if (s == "straight_monopolar") return NeedleGeometry::StraightMonopolar;
  if (s == "extensible_tines") return NeedleGeometry::ExtensibleTines;
  throw Error("unknown needle geometry '" + s + "'");
}

std::vector<Vec3> tine_tip_positions(const Vec3& tip, const Vec3& entry, const NeedleShape& shape,
                                     double extension) {
  Vec3 axis = (tip - entry).normalized();
  Vec3 u = orthogonal(axis);
  Vec3 v = axis.cross(u);
  double reach = std::clamp(extension, 0.0, 1.0) * shape.max_tine_extension;
  double ca = std::cos(shape.umbrella_half_angle), sa = std::sin(shape.umbrella_half_angle);
  std::vector<Vec3> tips;
  tips.reserve(shape.tine_count);
  for (int t = 0; t < shape.tine_count; ++t) {
    double theta = 2 * std::numbers::pi * t / shape.tine_count;
    Vec3 dir = axis * ca + (u * std::cos(theta) + v * std::sin(theta)) * sa;
    tips.push_back(tip + dir * reach);
  }
  return tips;
}

NeedleRaster rasterize_needle(const Vec3& tip, const Vec3& entry, NeedleGeometry geometry,
                              const NeedleShape& shape, double extension, const VoxelGrid& grid) {
  if (tip == entry) throw Error("needle tip and entry coincide");
  if (!grid.contains(tip) || !grid.contains(entry)) throw Error("needle endpoints outside the grid");
  if (!(shape.shaft_radius > 0)) throw Error("needle shaft radius must be positive");

  NeedleRaster r;
  r.tip = tip;
  r.axis = (tip - entry).normalized();

  std::vector<std::uint8_t> in(grid.size(), 0);
  const double h = grid.spacing();
  // Bounding box of the shaft, padded by the radius.
  auto lo = grid.nearest({std::min(tip.x, entry.x) - shape.shaft_radius - h,
                          std::min(tip.y, entry.y) - shape.shaft_radius - h,
                          std::min(tip.z, entry.z) - shape.shaft_radius - h});
  auto hi = grid.nearest({std::max(tip.x, entry.x) + shape.shaft_radius + h,
                          std::max(tip.y, entry.y) + shape.shaft_radius + h,
                          std::max(tip.z, entry.z) + shape.shaft_radius + h});
  for (int k = lo.k; k <= hi.k; ++k)
    for (int j = lo.j; j <= hi.j; ++j)
      for (int i = lo.i; i <= hi.i; ++i)
        if (segment_distance(grid.center(i, j, k), tip, entry) < shape.shaft_radius)
          in[grid.linear(i, j, k)] = 1;
  // Thin shafts still occupy the voxels they pass through.
  double len = (tip - entry).norm();
  int samples = static_cast<int>(std::ceil(len / (0.5 * h)));
  for (int s = 0; s <= samples; ++s) {
    Vec3 p = entry + (tip - entry) * (static_cast<double>(s) / samples);
    in[grid.linear(grid.nearest(p))] = 1;
  }
  for (std::size_t n = 0; n < grid.size(); ++n)
    if (in[n]) r.shaft.push_back(n);

  if (geometry == NeedleGeometry::ExtensibleTines) {
    if (shape.tine_count < 1) throw Error("extensible needle needs at least one tine");
    r.tine_tips = tine_tip_positions(tip, entry, shape, extension);
    for (auto& t : r.tine_tips)
      if (!grid.contains(t)) throw Error("tine tip outside the grid");
  }

  if (shape.active_length > 0) {
    for (auto n : r.shaft) {
      double along = (tip - grid.center(n)).dot(r.axis);
      if (along <= shape.active_length * (1 + 1e-12) + 1e-12 * grid.spacing()) r.electrode.push_back(n);
    }
  }
  return r;
}

Mask isovolume(const ScalarField& field, double threshold, Compare direction,
               const std::optional<Restriction>& restrict_to) {
  Mask m(field.grid);
  for (std::size_t n = 0; n < field.values.size(); ++n) {
    double v = field.values[n];
    bool hit = false;
    switch (direction) {
      case Compare::GreaterEqual: hit = v >= threshold; break;
      case Compare::Greater: hit = v > threshold; break;
      case Compare::LessEqual: hit = v <= threshold; break;
      case Compare::Less: hit = v < threshold; break;
    }
    if (hit && restrict_to && restrict_to->labels)
      hit = restrict_to->allowed.count(restrict_to->labels->labels[n]) > 0;
    m.bits[n] = hit ? 1 : 0;
  }
  return m;
}

std::vector<Index3> surface_voxels(const Mask& mask) {
  const auto& g = mask.grid;
  std::vector<Index3> out;
  for (int k = 0; k < g.nz(); ++k)
    for (int j = 0; j < g.ny(); ++j)
      for (int i = 0; i < g.nx(); ++i) {
        if (!mask.at(i, j, k)) continue;
        bool edge = g.on_boundary(i, j, k) || !mask.at(i - 1, j, k) || !mask.at(i + 1, j, k) ||
                    !mask.at(i, j - 1, k) || !mask.at(i, j + 1, k) || !mask.at(i, j, k - 1) ||
                    !mask.at(i, j, k + 1);
        if (edge) out.push_back({i, j, k});
      }
  if (out.empty()) throw Error("empty surface");
  return out;
}

std::vector<Vec3> surface_points(const Mask& mask) {
  std::vector<Vec3> pts;
  for (auto& p : surface_voxels(mask)) pts.push_back(mask.grid.center(p.i, p.j, p.k));
  return pts;
}

}  // namespace ablasim::grid

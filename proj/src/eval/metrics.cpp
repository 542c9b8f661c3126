#include "ablasim/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include "ablasim/grid/ops.hpp"
#include "json.hpp"

namespace ablasim::eval {

namespace {

Eigen::Vector3d ev(const Vec3& v) { return {v.x, v.y, v.z}; }
Vec3 vv(const Eigen::Vector3d& v) { return {v.x(), v.y(), v.z()}; }

/// Static 3-d tree over a point set, nearest-neighbour queries only.
class KdTree {
 public:
  explicit KdTree(std::vector<Vec3> pts) : pts_(std::move(pts)), order_(pts_.size()) {
    std::iota(order_.begin(), order_.end(), 0);
    build(0, order_.size(), 0);
  }

  /// Index and squared distance of the nearest point.
  std::pair<std::size_t, double> nearest(const Vec3& q) const {
    std::pair<std::size_t, double> best{0, std::numeric_limits<double>::infinity()};
    search(0, order_.size(), 0, q, best);
    return best;
  }
  const Vec3& point(std::size_t n) const { return pts_[n]; }

 private:
  static double coord(const Vec3& p, int axis) { return axis == 0 ? p.x : axis == 1 ? p.y : p.z; }

  void build(std::size_t lo, std::size_t hi, int axis) {
    if (hi - lo <= 1) return;
    std::size_t mid = (lo + hi) / 2;
    std::nth_element(order_.begin() + lo, order_.begin() + mid, order_.begin() + hi,
                     [&](std::size_t a, std::size_t b) { return coord(pts_[a], axis) < coord(pts_[b], axis); });
    build(lo, mid, (axis + 1) % 3);
    build(mid + 1, hi, (axis + 1) % 3);
  }

  void search(std::size_t lo, std::size_t hi, int axis, const Vec3& q, std::pair<std::size_t, double>& best) const {
    if (lo >= hi) return;
    std::size_t mid = (lo + hi) / 2;
    const Vec3& p = pts_[order_[mid]];
    double d = (p - q).dot(p - q);
    if (d < best.second || (d == best.second && order_[mid] < best.first)) best = {order_[mid], d};
    double delta = coord(q, axis) - coord(p, axis);
    int next = (axis + 1) % 3;
    if (delta < 0) {
      search(lo, mid, next, q, best);
      if (delta * delta <= best.second) search(mid + 1, hi, next, q, best);
    } else {
      search(mid + 1, hi, next, q, best);
      if (delta * delta <= best.second) search(lo, mid, next, q, best);
    }
  }

  std::vector<Vec3> pts_;
  std::vector<std::size_t> order_;
};

Vec3 centroid(const grid::Mask& m) {
  Vec3 c;
  std::size_t count = 0;
  for (std::size_t n = 0; n < m.bits.size(); ++n)
    if (m[n]) {
      c += m.grid.center(n);
      ++count;
    }
  return c / static_cast<double>(count);
}

/// 1-d lower envelope of parabolas: f holds squared distances along a line.
void edt_line(std::vector<double>& f, std::vector<double>& d, std::vector<int>& v, std::vector<double>& z) {
  const double inf = std::numeric_limits<double>::infinity();
  int n = static_cast<int>(f.size());
  int k = -1;
  for (int q = 0; q < n; ++q) {
    if (f[q] == inf) continue;
    if (k < 0) {
      k = 0;
      v[0] = q;
      z[0] = -inf;
      z[1] = inf;
      continue;
    }
    double s;
    for (;;) {
      int p = v[k];
      s = ((f[q] + double(q) * q) - (f[p] + double(p) * p)) / (2.0 * (q - p));
      if (s <= z[k] && k > 0) --k;
      else break;
    }
    if (s <= z[k]) {
      v[k] = q;
      z[k + 1] = inf;
    } else {
      ++k;
      v[k] = q;
      z[k] = s;
      z[k + 1] = inf;
    }
  }
  if (k < 0) {
    std::fill(d.begin(), d.end(), inf);
    return;
  }
  int j = 0;
  for (int q = 0; q < n; ++q) {
    while (z[j + 1] < q) ++j;
    double dq = q - v[j];
    d[q] = dq * dq + f[v[j]];
  }
}

}  // namespace

Vec3 RigidTransform::apply(const Vec3& p) const { return vv(rotation * ev(p)) + translation; }

RigidTransform RigidTransform::inverse() const {
  RigidTransform t;
  t.rotation = rotation.transpose();
  t.translation = vv(-(t.rotation * ev(translation)));
  return t;
}

Registration rigid_register(const grid::Mask& moving, const grid::Mask& fixed) {
  if (moving.empty() || fixed.empty()) throw Error("registration needs two non-empty masks");
  auto src = grid::surface_points(moving);
  KdTree tree(grid::surface_points(fixed));

  RigidTransform t;
  t.translation = centroid(fixed) - centroid(moving);
  auto msd = [&](const RigidTransform& tr) {
    double s = 0;
    for (const auto& p : src) s += tree.nearest(tr.apply(p)).second;
    return s / src.size();
  };
  Registration best{t, msd(t), 0};
  double previous = best.mean_squared_distance;
  for (int it = 1; it <= 50; ++it) {
    Eigen::Vector3d ca = Eigen::Vector3d::Zero(), cb = Eigen::Vector3d::Zero();
    std::vector<Eigen::Vector3d> a(src.size()), b(src.size());
    for (std::size_t n = 0; n < src.size(); ++n) {
      a[n] = ev(src[n]);
      b[n] = ev(tree.point(tree.nearest(t.apply(src[n])).first));
      ca += a[n];
      cb += b[n];
    }
    ca /= double(src.size());
    cb /= double(src.size());
    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    for (std::size_t n = 0; n < src.size(); ++n) cov += (a[n] - ca) * (b[n] - cb).transpose();
    Eigen::JacobiSVD<Eigen::Matrix3d> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Eigen::Matrix3d u = svd.matrixU(), v = svd.matrixV();
    Eigen::Matrix3d fix = Eigen::Matrix3d::Identity();
    if ((v * u.transpose()).determinant() < 0) fix(2, 2) = -1;
    t.rotation = v * fix * u.transpose();
    t.translation = vv(cb - t.rotation * ca);
    double current = msd(t);
    if (current < best.mean_squared_distance) best = {t, current, it};
    if (previous - current < 1e-9) break;
    previous = current;
  }
  return best;
}

grid::Mask transform_mask(const grid::Mask& moving, const RigidTransform& t) {
  const auto& g = moving.grid;
  auto inv = t.inverse();
  grid::Mask out(g);
  double h = g.spacing();
  for (std::size_t n = 0; n < g.size(); ++n) {
    Vec3 s = (inv.apply(g.center(n)) - g.origin()) / h;
    int i = static_cast<int>(std::lround(s.x)), j = static_cast<int>(std::lround(s.y)),
        k = static_cast<int>(std::lround(s.z));
    if (g.in_range(i, j, k) && moving.at(i, j, k)) out.set(n);
  }
  return out;
}

std::vector<double> squared_distance_transform(const grid::VoxelGrid& g, const std::vector<std::uint8_t>& sites) {
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> d(g.size());
  for (std::size_t n = 0; n < d.size(); ++n) d[n] = sites[n] ? 0.0 : inf;
  const auto& dims = g.dims();
  int longest = std::max({dims[0], dims[1], dims[2]});
  std::vector<double> f, out, z(longest + 1);
  std::vector<int> v(longest);
  for (int axis = 0; axis < 3; ++axis) {
    int a1 = (axis + 1) % 3, a2 = (axis + 2) % 3;
    int n = dims[axis];
    f.resize(n);
    out.resize(n);
    for (int p = 0; p < dims[a2]; ++p)
      for (int q = 0; q < dims[a1]; ++q) {
        auto idx = [&](int r) {
          std::array<int, 3> c{};
          c[axis] = r;
          c[a1] = q;
          c[a2] = p;
          return g.linear(c[0], c[1], c[2]);
        };
        for (int r = 0; r < n; ++r) f[r] = d[idx(r)];
        edt_line(f, out, v, z);
        for (int r = 0; r < n; ++r) d[idx(r)] = out[r];
      }
  }
  return d;
}

MetricsReport overlap_metrics(const grid::Mask& segmented, const grid::Mask& simulated) {
  if (!(segmented.grid == simulated.grid)) throw Error("metrics need masks on the same grid");
  MetricsReport r;
  for (std::size_t n = 0; n < segmented.bits.size(); ++n) {
    bool s = segmented[n], t = simulated[n];
    r.segmented_voxels += s;
    r.simulated_voxels += t;
    r.intersection_voxels += s && t;
  }
  double inter = static_cast<double>(r.intersection_voxels);
  if (r.segmented_voxels + r.simulated_voxels > 0)
    r.dice = 2 * inter / static_cast<double>(r.segmented_voxels + r.simulated_voxels);
  if (r.segmented_voxels > 0) r.sn = inter / static_cast<double>(r.segmented_voxels);
  if (r.simulated_voxels > 0) r.ppv = inter / static_cast<double>(r.simulated_voxels);

  const auto& g = simulated.grid;
  auto target = grid::surface_voxels(simulated);
  if (target.empty()) throw Error("simulated lesion has no surface");
  std::vector<std::uint8_t> sites(g.size(), 0);
  for (const auto& p : target) sites[g.linear(p)] = 1;
  auto d2 = squared_distance_transform(g, sites);
  auto from = grid::surface_voxels(segmented);
  if (!from.empty()) {
    double sum = 0;
    for (const auto& p : from) sum += std::sqrt(d2[g.linear(p)]);
    r.aae_mm = 1000.0 * g.spacing() * sum / static_cast<double>(from.size());
  }
  return r;
}

MetricsReport evaluate(const grid::Mask& segmented, const grid::Mask& simulated, bool register_first) {
  if (!register_first) return overlap_metrics(segmented, simulated);
  auto reg = rigid_register(segmented, simulated);
  auto r = overlap_metrics(transform_mask(segmented, reg.transform), simulated);
  r.transform = reg.transform;
  return r;
}

std::string MetricsReport::to_json() const {
  nlohmann::ordered_json j;
  j["dice"] = dice;
  j["sn"] = sn;
  j["ppv"] = ppv;
  j["aae_mm"] = aae_mm;
  j["segmented_voxels"] = segmented_voxels;
  j["simulated_voxels"] = simulated_voxels;
  j["intersection_voxels"] = intersection_voxels;
  auto rot = nlohmann::json::array();
  for (int i = 0; i < 3; ++i) rot.push_back({transform.rotation(i, 0), transform.rotation(i, 1), transform.rotation(i, 2)});
  j["transform"] = {{"rotation", rot},
                    {"translation", {transform.translation.x, transform.translation.y, transform.translation.z}}};
  return j.dump(2);
}

std::string MetricsReport::csv_row() const {
  char buf[128];
  std::snprintf(buf, sizeof buf, "%.3f,%.3f,%.3f,%.3f", dice, sn, ppv, aae_mm);
  return buf;
}

}  // namespace ablasim::eval

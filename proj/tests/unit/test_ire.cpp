#include <cmath>
#include <random>

#include "ablasim/em/ire.hpp"
#include "doctest.h"

using namespace ablasim;
using namespace ablasim::em;

namespace {

grid::VoxelGrid cube(int n, double extent) {
  double h = extent / (n - 1);
  return grid::VoxelGrid({n, n, n}, h, {-extent / 2, -extent / 2, -extent / 2});
}

Electrode electrode_where(const grid::VoxelGrid& g, std::function<bool(const Vec3&)> inside) {
  Electrode e;
  for (std::size_t n = 0; n < g.size(); ++n)
    if (inside(g.center(n))) e.voxels.push_back(n);
  e.inside = std::move(inside);
  return e;
}

// Concentric spheres: inner radius a at V, everything beyond b at 0.
double sphere_capacitor_error(int n) {
  const double a = 0.0052, b = 0.0171, V = 100;
  auto g = cube(n, 0.04);
  auto anode = electrode_where(g, [&](const Vec3& p) { return p.norm() <= a; });
  auto cathode = electrode_where(g, [&](const Vec3& p) { return p.norm() >= b; });
  std::vector<double> sigma(g.size(), 0.3);
  auto sol = solve_ire(g, sigma, anode, V, cathode);
  double worst = 0;
  const double margin = 0.04 / 31 * 2;
  for (std::size_t k = 0; k < g.size(); ++k) {
    double r = g.center(k).norm();
    if (r < a + margin || r > b - margin) continue;
    double exact = V / (r * r * (1 / a - 1 / b));
    worst = std::max(worst, std::abs(sol.field[k] - exact) / exact);
  }
  return worst;
}

}  // namespace

TEST_CASE("parallel plates give the uniform field V/d") {
  auto g = cube(64, 0.063);
  const double d = 0.0403, V = 1500;
  auto anode = electrode_where(g, [&](const Vec3& p) { return p.x <= -d / 2; });
  auto cathode = electrode_where(g, [&](const Vec3& p) { return p.x >= d / 2; });
  std::vector<double> sigma(g.size(), 0.25);
  auto sol = solve_ire(g, sigma, anode, V, cathode);
  CHECK(sol.relative_residual < 1e-8);
  double worst = 0;
  for (int k = 8; k < 56; ++k)
    for (int j = 8; j < 56; ++j)
      for (int i = 0; i < 64; ++i) {
        Vec3 c = g.center(i, j, k);
        if (std::abs(c.x) > d / 2 - 2 * g.spacing()) continue;
        worst = std::max(worst, std::abs(sol.field.at(i, j, k) - V / d) / (V / d));
      }
  CHECK(worst < 0.01);
}

TEST_CASE("potential is linear in the applied voltage and obeys the maximum principle") {
  auto g = cube(24, 0.03);
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> u(0.05, 0.8);
  std::vector<double> sigma(g.size());
  for (auto& s : sigma) s = u(rng);
  grid::Cylinder c1{{-0.006, 0, -0.008}, {-0.006, 0, 0.008}, 0.0009};
  grid::Cylinder c2{{0.007, 0.002, -0.008}, {0.007, 0.002, 0.008}, 0.0009};
  auto anode = electrode_where(g, [&](const Vec3& p) { return grid::shape_contains(c1, p); });
  auto cathode = electrode_where(g, [&](const Vec3& p) { return grid::shape_contains(c2, p); });
  REQUIRE(!anode.voxels.empty());
  REQUIRE(!cathode.voxels.empty());
  auto s1 = solve_ire(g, sigma, anode, 1000, cathode);
  auto s2 = solve_ire(g, sigma, anode, 2000, cathode);
  double worst = 0;
  for (std::size_t n = 0; n < g.size(); ++n) {
    worst = std::max(worst, std::abs(s2.potential[n] - 2 * s1.potential[n]));
    CHECK(s1.potential[n] >= 0.0);
    CHECK(s1.potential[n] <= 1000.0);
  }
  CHECK(worst <= 1e-10);

  auto neg = solve_ire(g, sigma, anode, -500, cathode);
  for (double v : neg.potential.values) {
    CHECK(v <= 0.0);
    CHECK(v >= -500.0);
  }
}

TEST_CASE("net current through an electrode-free box vanishes") {
  auto g = cube(32, 0.031);
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> u(0.1, 0.6);
  std::vector<double> sigma(g.size());
  for (auto& s : sigma) s = u(rng);
  auto anode = electrode_where(g, [](const Vec3& p) { return (p - Vec3{-0.008, 0, 0}).norm() < 0.002; });
  auto cathode = electrode_where(g, [](const Vec3& p) { return (p - Vec3{0.008, 0, 0}).norm() < 0.002; });
  auto sol = solve_ire(g, sigma, anode, 800, cathode);

  auto face = [&](std::size_t a, std::size_t b) {
    double s = 2 * sigma[a] * sigma[b] / (sigma[a] + sigma[b]);
    return s * (sol.potential[a] - sol.potential[b]) * g.spacing();
  };
  // Outward current of an index box [lo, hi]^3.
  auto box_current = [&](int lo, int hi) {
    double net = 0;
    for (int k = lo; k <= hi; ++k)
      for (int j = lo; j <= hi; ++j)
        for (int i = lo; i <= hi; ++i) {
          std::size_t p = g.linear(i, j, k);
          int c[3] = {i, j, k};
          for (int ax = 0; ax < 3; ++ax)
            for (int dir : {-1, 1}) {
              int q[3] = {c[0], c[1], c[2]};
              q[ax] += dir;
              if (q[ax] < lo || q[ax] > hi) net += face(p, g.linear(q[0], q[1], q[2]));
            }
        }
    return net;
  };
  // Box around the anode: carries the full electrode current.
  double electrode_current = std::abs(box_current(5, 14));
  REQUIRE(electrode_current > 0);
  // Box between the electrodes, clear of both.
  double net = box_current(13, 18);
  CHECK(std::abs(net) < 1e-6 * electrode_current);
}

TEST_CASE("grid refinement reduces the field error of a spherical capacitor") {
  double coarse = sphere_capacitor_error(32);
  double fine = sphere_capacitor_error(63);
  MESSAGE("sphere capacitor max relative |E| error: coarse " << coarse << ", fine " << fine);
  CHECK(coarse / fine >= 1.5);
  CHECK(fine < 0.05);
}

TEST_CASE("overlapping electrodes are rejected") {
  auto g = cube(8, 0.007);
  Electrode a{{1, 2, 3}, {}}, b{{3, 4}, {}};
  std::vector<double> sigma(g.size(), 1.0);
  CHECK_THROWS_WITH_AS(solve_ire(g, sigma, a, 1, b), doctest::Contains("overlap"), Error);
}

TEST_CASE("pairing sequence: max field lesion, order invariance, gap bridging") {
  gssa::SimulationDefinition d;
  d.family = "ire_potential";
  d.parameters["GRID_DIMENSIONS"] = FloatList{40, 40, 40};
  d.parameters["GRID_SPACING"] = 0.0008;
  d.parameters["CONSTANT_IRE_FIELD_THRESHOLD"] = 50000.0;
  d.parameters["NEEDLE_SHAFT_RADIUS"] = 0.0006;
  d.parameters["NEEDLE_ACTIVE_LENGTH"] = 0.01;
  d.parameters["TISSUE_ELECTRIC_CONDUCTIVITY"] = 0.2;
  d.needles.push_back({1, "straight_monopolar", {-0.006, 0, -0.005}, {-0.006, 0, 0.02}, {}});
  d.needles.push_back({2, "straight_monopolar", {0.006, 0, -0.005}, {0.006, 0, 0.02}, {}});
  d.needles.push_back({3, "straight_monopolar", {0, 0.008, -0.005}, {0, 0.008, 0.02}, {}});
  d.regions.push_back({"liver", "organ", grid::Box{{-1, -1, -1}, {1, 1, 1}}});
  d.parameters["CONSTANT_IRE_NEEDLEPAIR_VOLTAGE"] = PointList{{1, 2, 1500}};
  auto model = family::build_model(d, ".");

  SUBCASE("single pairing lesion is the isovolume of that solve") {
    auto r = run_ire(d, model);
    CHECK(r.solves == 1);
    auto e1 = needle_electrode(d, 1, model.grid), e2 = needle_electrode(d, 2, model.grid);
    auto sol = solve_ire(model.grid, conductivity_map(d, model), e1, 1500, e2);
    CHECK(r.e_max.values == sol.field.values);
    CHECK(r.lesion == grid::isovolume(sol.field, 50000, grid::Compare::GreaterEqual,
                                      grid::Restriction{&model.labels, {1}}));
    // Mid-gap |E| exceeds the threshold, so the lesion joins both needles.
    CHECK(sol.field.sample({0, 0, 0}) > 50000);
    auto [comp, count] = grid::connected_components(r.lesion);
    auto tip1 = model.grid.nearest({-0.0045, 0, 0}), tip2 = model.grid.nearest({0.0045, 0, 0});
    int c1 = comp[model.grid.linear(tip1)], c2 = comp[model.grid.linear(tip2)];
    CHECK(c1 > 0);
    CHECK(c1 == c2);
  }

  SUBCASE("pairing order does not matter without conductivity change") {
    d.parameters["CONSTANT_IRE_NEEDLEPAIR_VOLTAGE"] = PointList{{1, 2, 1500}, {2, 3, 1300}, {3, 1, 1700}};
    auto forward = run_ire(d, model);
    d.parameters["CONSTANT_IRE_NEEDLEPAIR_VOLTAGE"] = PointList{{3, 1, 1700}, {1, 2, 1500}, {2, 3, 1300}};
    auto permuted = run_ire(d, model);
    CHECK(forward.solves == 3);
    CHECK(forward.e_max.values == permuted.e_max.values);
    CHECK(forward.lesion == permuted.lesion);

    d.parameters["IRE_CONDUCTIVITY_INCREASE"] = 2.0;
    d.parameters["IRE_REVERSIBLE_THRESHOLD"] = 30000.0;
    auto grown = run_ire(d, model);
    double max_sigma = *std::max_element(grown.sigma.begin(), grown.sigma.end());
    CHECK(max_sigma == doctest::Approx(0.2 * 27));
  }

  SUBCASE("pairing validation") {
    CHECK_THROWS_AS(parse_pairings(PointList{{1, 1, 100}}, 3), Error);
    CHECK_THROWS_AS(parse_pairings(PointList{{1, 4, 100}}, 3), Error);
    CHECK_THROWS_AS(parse_pairings(PointList{{1.5, 2, 100}}, 3), Error);
    CHECK_THROWS_AS(parse_pairings(FloatList{1, 2, 100}, 3), Error);
  }
}

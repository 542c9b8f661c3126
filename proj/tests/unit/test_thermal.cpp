#include <algorithm>
#include <cmath>
#include <random>
#include <tuple>

#include "ablasim/thermal/bioheat.hpp"
#include "ablasim/thermal/cryo.hpp"
#include "doctest.h"

using namespace ablasim;
using namespace ablasim::thermal;
using grid::ScalarField;
using grid::VoxelGrid;

namespace {

BioheatSetup unit_setup(VoxelGrid g) {
  BioheatSetup s;
  s.labels = grid::RegionLabels(g);
  s.tissue = {TissueProperties{1, 1, 1, 0}};
  s.body_temperature = 37;
  s.cell_death = {0, 0, 40, 0.8, 0.99};
  return s;
}

BioheatSetup liver_setup(VoxelGrid g) {
  BioheatSetup s;
  s.labels = grid::RegionLabels(g);
  s.tissue = {TissueProperties{1060, 3600, 0.52, 0.0064}, TissueProperties{1040, 3700, 0.60, 0.012}};
  s.body_temperature = 37;
  s.cell_death = {3.33e-3, 7.77e-3, 40.5, 0.8, 0.99};
  return s;
}

}  // namespace

TEST_CASE("perfusion source is gated on the dead fraction") {
  Blood blood{1060, 3600};
  double q = perfusion_source(50, 0.9, 0.004, blood, 37, 0.8, PerfusionMode::DeadGated);
  CHECK(q == doctest::Approx(-198432.0).epsilon(1e-12));
  CHECK(perfusion_source(50, 0.0, 0.004, blood, 37, 0.8, PerfusionMode::DeadGated) == 0.0);
  CHECK(perfusion_source(37, 0.9, 0.004, blood, 37, 0.8, PerfusionMode::DeadGated) == 0.0);
  CHECK(perfusion_source(37, 0.0, 0.004, blood, 37, 0.8, PerfusionMode::AliveGated) == 0.0);
  CHECK(perfusion_source(50, 0.0, 0.004, blood, 37, 0.8, PerfusionMode::AliveGated) ==
        doctest::Approx(-198432.0).epsilon(1e-12));
}

TEST_CASE("cell death rates") {
  CellDeathParams zero{0, 0, 40, 0.8, 0.99};
  auto [a, d] = step_cell_death(80, 0.7, 0.1, zero, 1.0);
  CHECK(a == 0.7);
  CHECK(d == 0.1);

  CellDeathParams p{1, 0, 50, 0.8, 0.99};
  auto fixed = cell_death_rates(90, 1.0, 0.0, p);
  CHECK(fixed.d_alive == 0.0);
  CHECK(fixed.d_dead == 0.0);

  auto r = cell_death_rates(50, 0.5, 0.25, p);
  CHECK(r.d_dead == doctest::Approx(std::exp(1.0) * 0.5 * 0.25).epsilon(1e-14));
  CHECK(r.d_dead == doctest::Approx(0.3397852).epsilon(1e-6));
}

TEST_CASE("cell death stays on the simplex and D is monotone without recovery") {
  CellDeathParams p{3.33e-3, 0, 40.5, 0.8, 0.99};
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> temp(20, 140);
  for (int trial = 0; trial < 200; ++trial) {
    double T = temp(rng), a = 0.99, d = 0;
    for (int s = 0; s < 50; ++s) {
      auto [na, nd] = step_cell_death(T, a, d, p, 5.0);
      CHECK(na >= 0);
      CHECK(nd >= d);
      CHECK(na + nd <= 1.0);
      a = na;
      d = nd;
    }
  }
}

TEST_CASE("RK4 cell death tracks a tiny-step explicit Euler oracle over 600 s") {
  CellDeathParams p{3.33e-3, 7.77e-3, 40.5, 0.8, 0.99};
  const double dt = 1.0;
  double worst = 0;
  for (double T : {37.0, 45.0, 55.0, 65.0, 75.0, 85.0, 95.0, 105.0}) {
    double a = 0.99, d = 0, ea = 0.99, ed = 0;
    const double kf = p.forward_rate * std::exp(T / p.temperature_scale), h = dt / 1000;
    for (int step = 0; step < 600; ++step) {
      std::tie(a, d) = step_cell_death(T, a, d, p, dt);
      for (int k = 0; k < 1000; ++k) {
        double v = 1 - ea - ed;
        double da = -kf * (1 - ea) * ea + p.backward_rate * v, dd = kf * (1 - ea) * v;
        ea += h * da;
        ed += h * dd;
      }
      worst = std::max({worst, std::abs(a - ea), std::abs(d - ed)});
    }
  }
  MESSAGE("max |RK4 - Euler| = " << worst);
  CHECK(worst < 1e-4);
}

TEST_CASE("discrete Laplacian of a quadratic is exact in the interior") {
  VoxelGrid g({9, 7, 6}, 0.01);
  ScalarField f(g);
  const double a = 3.7;
  for (std::size_t n = 0; n < g.size(); ++n) {
    double x = g.center(n).x;
    f[n] = a * x * x;
  }
  std::vector<double> k(g.size(), 1.0), out(g.size());
  diffusion_operator(f, k, out);
  for (int kk = 1; kk < g.nz() - 1; ++kk)
    for (int j = 1; j < g.ny() - 1; ++j)
      for (int i = 1; i < g.nx() - 1; ++i) CHECK(std::abs(out[g.linear(i, j, kk)] - 2 * a) < 1e-10);
}

TEST_CASE("uniform body temperature is an equilibrium") {
  VoxelGrid g({10, 10, 10}, 1e-3);
  BioheatSolver solver(liver_setup(g));
  auto s = solver.initial_state();
  ScalarField q(g, 0.0);
  for (int i = 0; i < 20; ++i) solver.step(s, &q, 0.5);
  for (double t : s.temperature.values) CHECK(t == 37.0);
}

TEST_CASE("explicit step refuses time steps above the stability bound") {
  VoxelGrid g({6, 6, 6}, 1e-3);
  BioheatSolver solver(liver_setup(g));
  auto s = solver.initial_state();
  CHECK_THROWS_AS(solver.step(s, nullptr, solver.stability_limit() * 1.01), SolverError);
  CHECK_NOTHROW(solver.step(s, nullptr, solver.stability_limit()));
}

TEST_CASE("steady 1D conduction approaches the linear profile") {
  VoxelGrid g({21, 3, 3}, 1.0);
  auto setup = unit_setup(g);
  setup.boundary = {BoundaryKind::Dirichlet, BoundaryKind::Insulated, BoundaryKind::Insulated};
  BioheatSolver solver(setup);
  auto s = solver.initial_state();
  for (std::size_t n = 0; n < g.size(); ++n) {
    auto p = g.unravel(n);
    s.temperature[n] = p.i == 0 ? 100.0 : (p.i == 20 ? 0.0 : 50.0);
  }
  double dt = solver.stability_limit();
  for (int it = 0; it < 20000; ++it) solver.step(s, nullptr, dt);
  double worst = 0;
  for (std::size_t n = 0; n < g.size(); ++n) {
    auto p = g.unravel(n);
    worst = std::max(worst, std::abs(s.temperature[n] - 100.0 * (1 - p.i / 20.0)));
  }
  CHECK(worst / 100.0 < 1e-3);
}

TEST_CASE("discrete energy budget closes each step") {
  VoxelGrid g({12, 12, 12}, 1e-3);
  auto setup = liver_setup(g);
  setup.perfusion_mode = PerfusionMode::AliveGated;
  for (std::size_t n = 0; n < g.size(); ++n) setup.labels.labels[n] = g.center(n).x > 0.006 ? 1 : 0;
  BioheatSolver solver(setup);
  auto s = solver.initial_state();
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> u(30, 90);
  for (std::size_t n = 0; n < g.size(); ++n)
    if (!solver.is_fixed(n)) s.temperature[n] = u(rng);
  ScalarField q(g, 0.0);
  q.at(6, 6, 6) = 5e7;
  double dt = 0.9 * solver.stability_limit();
  double h3 = std::pow(g.spacing(), 3);
  for (int step = 0; step < 10; ++step) {
    double e0 = solver.heat_content(s);
    double inflow = solver.boundary_inflow(s.temperature, dt);
    auto perf = solver.perfusion(s);
    double sources = 0;
    for (std::size_t n = 0; n < g.size(); ++n)
      if (!solver.is_fixed(n)) sources += (q[n] + perf[n]) * h3 * dt;
    solver.step(s, &q, dt);
    double e1 = solver.heat_content(s);
    CHECK(std::abs(e1 - e0 - inflow - sources) / std::abs(e0) < 1e-8);
  }
}

TEST_CASE("maximum principle without sources") {
  VoxelGrid g({14, 14, 14}, 1e-3);
  BioheatSolver solver(liver_setup(g));
  auto s = solver.initial_state();
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> u(-20, 60);
  for (std::size_t n = 0; n < g.size(); ++n)
    if (!solver.is_fixed(n)) s.temperature[n] = 37 + u(rng);
  auto spread = [&] {
    double m = 0;
    for (double t : s.temperature.values) m = std::max(m, std::abs(t - 37));
    return m;
  };
  double prev = spread();
  for (int i = 0; i < 40; ++i) {
    solver.step(s, nullptr, solver.stability_limit());
    double now = spread();
    CHECK(now <= prev);
    prev = now;
    for (std::size_t n = 0; n < g.size(); ++n) {
      CHECK(s.alive[n] >= 0);
      CHECK(s.dead[n] >= 0);
      CHECK(s.alive[n] + s.dead[n] <= 1.0);
    }
  }
}

TEST_CASE("cryo effective properties") {
  CryoMaterial m{1800, 3600, 2.2, 0.55, 333000, -10, 0};
  auto mid = cryo_effective_properties(-5, m);
  CHECK(mid.heat_capacity == 19350.0);
  CHECK(mid.conductivity == doctest::Approx(1.7875).epsilon(1e-14));
  auto below = cryo_effective_properties(-11, m);
  CHECK(below.heat_capacity == 1800);
  CHECK(below.conductivity == 2.2);
  auto above = cryo_effective_properties(1, m);
  CHECK(above.heat_capacity == 3600);
  CHECK(above.conductivity == 0.55);
  // Inclusive mushy boundaries.
  CHECK(cryo_effective_properties(-10, m).heat_capacity == 19350.0);
  CHECK(cryo_effective_properties(0, m).heat_capacity == 19350.0);
  CHECK(cryo_effective_properties(0, m).conductivity == doctest::Approx((2.2 + 0.55) / 2));
  CHECK(cryo_effective_properties(0, m, ConductivityMode::Continuous).conductivity == doctest::Approx(0.55));

  std::mt19937 rng(5);
  std::uniform_real_distribution<double> u(100, 5000), lat(1, 5e5);
  for (int i = 0; i < 100; ++i) {
    CryoMaterial r{u(rng), u(rng), 1, 1, lat(rng), -8, -1};
    // The mushy capacity exceeds both phases exactly when the latent term
    // outweighs half the capacity gap: h_sf > |c_l - c_s| (T_l - T_s).
    bool dominant = r.latent_heat > std::abs(r.liquid_heat_capacity - r.solid_heat_capacity) * 7;
    double c = cryo_effective_properties(-4, r).heat_capacity;
    CHECK((c > std::max(r.solid_heat_capacity, r.liquid_heat_capacity)) == dominant);
  }
  // Tissue-like constants are well inside the dominant regime.
  CHECK(cryo_effective_properties(-4, CryoMaterial{}).heat_capacity > 3600);
}

TEST_CASE("cryo step above liquidus reduces to the bioheat step") {
  VoxelGrid g({8, 8, 8}, 1e-3);
  auto setup = liver_setup(g);
  CryoMaterial m{1800, 3600, 2.2, 0.52, 333000, -8, -1};
  setup.tissue = {TissueProperties{1060, m.liquid_heat_capacity, m.liquid_conductivity, 0}};
  BioheatSolver solver(setup);
  auto a = solver.initial_state();
  for (std::size_t n = 0; n < g.size(); ++n)
    if (!solver.is_fixed(n)) a.temperature[n] = 37 + 10 * std::sin(static_cast<double>(n));
  auto b = a;
  double dt = 0.5 * solver.stability_limit();
  std::vector<std::size_t> none;
  for (int i = 0; i < 5; ++i) {
    solver.step(a, nullptr, dt);
    step_cryo(solver, b, m, ProbeSink{none, 0}, dt);
  }
  for (std::size_t n = 0; n < g.size(); ++n) CHECK(a.temperature[n] == b.temperature[n]);
}

TEST_CASE("two symmetric cryo probes give a mirror-symmetric field") {
  VoxelGrid g({21, 11, 11}, 1e-3);
  auto setup = liver_setup(g);
  setup.tissue = {TissueProperties{1060, 3600, 0.52, 0}};
  BioheatSolver solver(setup);
  auto s = solver.initial_state();
  CryoMaterial m{1800, 3600, 2.2, 0.52, 333000, -8, -1};
  std::vector<std::size_t> probe;
  for (int k = 3; k < 8; ++k) {
    probe.push_back(g.linear(6, 5, k));
    probe.push_back(g.linear(14, 5, k));
  }
  double dt = 0.5 * std::pow(g.spacing(), 2) * 1060 * m.solid_heat_capacity / (6 * m.solid_conductivity);
  for (int i = 0; i < 60; ++i) step_cryo(solver, s, m, ProbeSink{probe, -150}, dt);
  for (int k = 0; k < g.nz(); ++k)
    for (int j = 0; j < g.ny(); ++j)
      for (int i = 0; i < g.nx(); ++i)
        CHECK(std::abs(s.temperature.at(i, j, k) - s.temperature.at(20 - i, j, k)) < 1e-10);
}

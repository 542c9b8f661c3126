#include "ablasim/thermal/bioheat.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace ablasim::thermal {

namespace {

double harmonic(double a, double b) {
  double s = a + b;
  return s > 0 ? 2 * a * b / s : 0.0;
}

void project_simplex(double& a, double& d) {
  a = std::clamp(a, 0.0, 1.0);
  d = std::clamp(d, 0.0, 1.0);
  if (a + d > 1) a = 1 - d;
}

}  // namespace

void CellDeathParams::validate() const {
  if (!(forward_rate >= 0) || !(backward_rate >= 0)) throw Error("cell death rates must be non-negative");
  if (!(temperature_scale > 0)) throw Error("cell death temperature scale must be positive");
  if (!(threshold > 0 && threshold < 1)) throw Error("cell death threshold must lie in (0,1)");
  if (!(initial_alive >= 0 && initial_alive <= 1)) throw Error("initial alive fraction must lie in [0,1]");
}

double perfusion_source(double temperature, double dead, double perfusion_rate, const Blood& blood,
                        double body_temperature, double threshold, PerfusionMode mode) {
  bool active = mode == PerfusionMode::DeadGated ? dead >= threshold : dead < threshold;
  if (!active) return 0.0;
  return perfusion_rate * blood.density * blood.specific_heat * (body_temperature - temperature);
}

CellDeathRates cell_death_rates(double temperature, double alive, double dead, const CellDeathParams& p) {
  double kf = p.forward_rate * std::exp(temperature / p.temperature_scale);
  double vulnerable = 1 - alive - dead;
  return {-kf * (1 - alive) * alive + p.backward_rate * vulnerable, kf * (1 - alive) * vulnerable};
}

std::pair<double, double> step_cell_death(double temperature, double alive, double dead,
                                          const CellDeathParams& p, double dt) {
  constexpr double kMaxChange = 0.05;
  double a = alive, d = dead;
  double remaining = dt;
  double sub = dt;
  // The exponential factor is constant over the step since T is frozen.
  const double kf = p.forward_rate * std::exp(temperature / p.temperature_scale);
  auto rhs = [&](double a_, double d_) -> std::pair<double, double> {
    double v = 1 - a_ - d_;
    return {-kf * (1 - a_) * a_ + p.backward_rate * v, kf * (1 - a_) * v};
  };
  while (remaining > 0) {
    sub = std::min(sub, remaining);
    auto [k1a, k1d] = rhs(a, d);
    auto [k2a, k2d] = rhs(a + 0.5 * sub * k1a, d + 0.5 * sub * k1d);
    auto [k3a, k3d] = rhs(a + 0.5 * sub * k2a, d + 0.5 * sub * k2d);
    auto [k4a, k4d] = rhs(a + sub * k3a, d + sub * k3d);
    double da = sub / 6 * (k1a + 2 * k2a + 2 * k3a + k4a);
    double dd = sub / 6 * (k1d + 2 * k2d + 2 * k3d + k4d);
    if ((std::abs(da) > kMaxChange || std::abs(dd) > kMaxChange) && sub > dt * 1e-9) {
      sub *= 0.5;
      continue;
    }
    a += da;
    d += dd;
    project_simplex(a, d);
    remaining -= sub;
    if (remaining < dt * 1e-14) break;
  }
  return {a, d};
}

void diffusion_operator(const grid::ScalarField& temperature, std::span<const double> conductivity,
                        std::span<double> out) {
  const auto& g = temperature.grid;
  const double inv_h2 = 1.0 / (g.spacing() * g.spacing());
  const int nx = g.nx(), ny = g.ny(), nz = g.nz();
  const std::size_t sx = 1, sy = static_cast<std::size_t>(nx), sz = static_cast<std::size_t>(nx) * ny;
  const auto& T = temperature.values;
  for (int k = 0; k < nz; ++k)
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i < nx; ++i) {
        std::size_t n = g.linear(i, j, k);
        double t = T[n], kc = conductivity[n];
        double acc = 0;
        if (i > 0) acc += harmonic(kc, conductivity[n - sx]) * (T[n - sx] - t);
        if (i < nx - 1) acc += harmonic(kc, conductivity[n + sx]) * (T[n + sx] - t);
        if (j > 0) acc += harmonic(kc, conductivity[n - sy]) * (T[n - sy] - t);
        if (j < ny - 1) acc += harmonic(kc, conductivity[n + sy]) * (T[n + sy] - t);
        if (k > 0) acc += harmonic(kc, conductivity[n - sz]) * (T[n - sz] - t);
        if (k < nz - 1) acc += harmonic(kc, conductivity[n + sz]) * (T[n + sz] - t);
        out[n] = acc * inv_h2;
      }
}

BioheatSolver::BioheatSolver(BioheatSetup setup) : setup_(std::move(setup)) {
  setup_.cell_death.validate();
  const auto& g = grid();
  const auto n = g.size();
  if (setup_.labels.labels.size() != n) throw Error("label field does not match grid");
  rho_c_.resize(n);
  k_.resize(n);
  perfusion_rate_.resize(n);
  for (std::size_t v = 0; v < n; ++v) {
    auto lab = setup_.labels.labels[v];
    if (lab >= setup_.tissue.size()) throw Error("no tissue properties for label " + std::to_string(lab));
    const auto& t = setup_.tissue[lab];
    if (!(t.density > 0 && t.specific_heat > 0 && t.conductivity > 0 && t.perfusion_rate >= 0))
      throw Error("tissue properties must be positive (label " + std::to_string(lab) + ")");
    rho_c_[v] = t.density * t.specific_heat;
    k_[v] = t.conductivity;
    perfusion_rate_[v] = t.perfusion_rate;
  }
  boundary_fixed_.assign(n, 0);
  for (int k = 0; k < g.nz(); ++k)
    for (int j = 0; j < g.ny(); ++j)
      for (int i = 0; i < g.nx(); ++i) {
        bool fix = (setup_.boundary[0] == BoundaryKind::Dirichlet && (i == 0 || i == g.nx() - 1)) ||
                   (setup_.boundary[1] == BoundaryKind::Dirichlet && (j == 0 || j == g.ny() - 1)) ||
                   (setup_.boundary[2] == BoundaryKind::Dirichlet && (k == 0 || k == g.nz() - 1));
        boundary_fixed_[g.linear(i, j, k)] = fix ? 1 : 0;
      }
  fixed_ = boundary_fixed_;
}

BioheatState BioheatSolver::initial_state() const {
  const auto& g = grid();
  return {grid::ScalarField(g, setup_.body_temperature, grid::Quantity::Temperature),
          grid::ScalarField(g, setup_.cell_death.initial_alive, grid::Quantity::AliveFraction),
          grid::ScalarField(g, 0.0, grid::Quantity::DeathFraction), 0.0};
}

double BioheatSolver::stability_limit() const {
  double min_rc = *std::min_element(rho_c_.begin(), rho_c_.end());
  double max_k = *std::max_element(k_.begin(), k_.end());
  double h = grid().spacing();
  return h * h * min_rc / (6 * max_k);
}

void BioheatSolver::set_pinned(std::span<const std::size_t> voxels) {
  fixed_ = boundary_fixed_;
  for (auto n : voxels) fixed_.at(n) = 1;
}

void BioheatSolver::clear_pinned() { fixed_ = boundary_fixed_; }

grid::ScalarField BioheatSolver::perfusion(const BioheatState& state) const {
  grid::ScalarField q(grid(), 0.0, grid::Quantity::Sar);
  for (std::size_t n = 0; n < q.values.size(); ++n)
    q[n] = perfusion_source(state.temperature[n], state.dead[n], perfusion_rate_[n], setup_.blood,
                            setup_.body_temperature, setup_.cell_death.threshold, setup_.perfusion_mode);
  return q;
}

void BioheatSolver::explicit_update(const grid::ScalarField& t_old, const grid::ScalarField& dead,
                                    std::span<const double> rho_c, std::span<const double> k,
                                    const grid::ScalarField* q_inst, double dt, grid::ScalarField& t_new,
                                    std::span<const std::uint8_t> extra_fixed) const {
  const auto n = t_old.values.size();
  std::vector<double> div(n);
  diffusion_operator(t_old, k, div);
  t_new.grid = t_old.grid;
  t_new.quantity = grid::Quantity::Temperature;
  t_new.values.resize(n);
  for (std::size_t v = 0; v < n; ++v) {
    if (fixed_[v] || (!extra_fixed.empty() && extra_fixed[v])) {
      t_new[v] = t_old[v];
      continue;
    }
    double src = perfusion_source(t_old[v], dead[v], perfusion_rate_[v], setup_.blood, setup_.body_temperature,
                                  setup_.cell_death.threshold, setup_.perfusion_mode);
    if (q_inst) src += (*q_inst)[v];
    t_new[v] = t_old[v] + dt / rho_c[v] * (div[v] + src);
  }
}

void BioheatSolver::advance_cell_death(BioheatState& state, double dt) const {
  const auto& p = setup_.cell_death;
  for (std::size_t v = 0; v < state.temperature.values.size(); ++v) {
    auto [a, d] = step_cell_death(state.temperature[v], state.alive[v], state.dead[v], p, dt);
    state.alive[v] = a;
    state.dead[v] = d;
  }
}

void BioheatSolver::step(BioheatState& state, const grid::ScalarField* q_inst, double dt) const {
  if (!(dt > 0)) throw SolverError("time step must be positive");
  double limit = stability_limit();
  if (dt > limit)
    throw SolverError("time step " + std::to_string(dt) + " s exceeds the explicit stability bound " +
                      std::to_string(limit) + " s");
  if (q_inst && q_inst->values.size() != state.temperature.values.size())
    throw Error("heat source does not match grid");
  grid::ScalarField next;
  explicit_update(state.temperature, state.dead, rho_c_, k_, q_inst, dt, next);
  state.temperature = std::move(next);
  advance_cell_death(state, dt);
  state.time += dt;
}

double BioheatSolver::heat_content(const BioheatState& state) const {
  double h3 = std::pow(grid().spacing(), 3);
  double e = 0;
  for (std::size_t v = 0; v < rho_c_.size(); ++v)
    if (!fixed_[v]) e += rho_c_[v] * state.temperature[v] * h3;
  return e;
}

double BioheatSolver::boundary_inflow(const grid::ScalarField& temperature, double dt) const {
  const auto& g = grid();
  const double h = g.spacing();
  const auto& T = temperature.values;
  double flow = 0;
  for (int k = 0; k < g.nz(); ++k)
    for (int j = 0; j < g.ny(); ++j)
      for (int i = 0; i < g.nx(); ++i) {
        auto n = g.linear(i, j, k);
        if (fixed_[n]) continue;
        const int nb[6][3] = {{i - 1, j, k}, {i + 1, j, k}, {i, j - 1, k}, {i, j + 1, k}, {i, j, k - 1}, {i, j, k + 1}};
        for (auto& q : nb) {
          if (!g.in_range(q[0], q[1], q[2])) continue;
          auto m = g.linear(q[0], q[1], q[2]);
          if (!fixed_[m]) continue;
          flow += harmonic(k_[n], k_[m]) * (T[m] - T[n]) * h;  // k (ΔT/h) h²
        }
      }
  return flow * dt;
}

}  // namespace ablasim::thermal

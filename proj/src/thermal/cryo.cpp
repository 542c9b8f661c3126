#include "ablasim/thermal/cryo.hpp"

#include <algorithm>
#include <cmath>

namespace ablasim::thermal {

void CryoMaterial::validate() const {
  if (!(solid_heat_capacity > 0 && liquid_heat_capacity > 0 && solid_conductivity > 0 &&
        liquid_conductivity > 0 && latent_heat > 0))
    throw Error("cryo material constants must be positive");
  if (!(solidus < liquidus)) throw Error("solidus must lie below liquidus");
}

EffectiveProperties cryo_effective_properties(double temperature, const CryoMaterial& m,
                                              ConductivityMode mode) {
  if (temperature < m.solidus) return {m.solid_heat_capacity, m.solid_conductivity};
  if (temperature > m.liquidus) return {m.liquid_heat_capacity, m.liquid_conductivity};
  double span = m.liquidus - m.solidus;
  double c = (m.solid_heat_capacity + m.liquid_heat_capacity) / 2 + m.latent_heat / (2 * span);
  double slope = (m.liquid_conductivity - m.solid_conductivity) * (temperature - m.solidus);
  double k = mode == ConductivityMode::HalfSlope ? m.solid_conductivity + slope / (2 * span)
                                                 : m.solid_conductivity + slope / span;
  return {c, k};
}

namespace {

void effective_arrays(const BioheatSolver& solver, const grid::ScalarField& t_eval, const CryoMaterial& m,
                      ConductivityMode mode, std::vector<double>& rho_c, std::vector<double>& k) {
  const auto& setup = solver.setup();
  const auto n = t_eval.values.size();
  rho_c.resize(n);
  k.resize(n);
  for (std::size_t v = 0; v < n; ++v) {
    auto props = cryo_effective_properties(t_eval[v], m, mode);
    rho_c[v] = setup.tissue[setup.labels.labels[v]].density * props.heat_capacity;
    k[v] = props.conductivity;
  }
}

double bound(const BioheatSolver& solver, const std::vector<double>& rho_c, const std::vector<double>& k) {
  double h = solver.grid().spacing();
  return h * h * *std::min_element(rho_c.begin(), rho_c.end()) / (6 * *std::max_element(k.begin(), k.end()));
}

}  // namespace

double cryo_stability_limit(const BioheatSolver& solver, const grid::ScalarField& temperature,
                            const CryoMaterial& material, ConductivityMode mode) {
  std::vector<double> rho_c, k;
  effective_arrays(solver, temperature, material, mode, rho_c, k);
  return bound(solver, rho_c, k);
}

CryoStepInfo step_cryo(const BioheatSolver& solver, BioheatState& state, const CryoMaterial& material,
                       const ProbeSink& probe, double dt, ConductivityMode mode) {
  return step_cryo(solver, state, material, std::span<const ProbeSink>(&probe, 1), dt, mode);
}

CryoStepInfo step_cryo(const BioheatSolver& solver, BioheatState& state, const CryoMaterial& material,
                       std::span<const ProbeSink> probes, double dt, ConductivityMode mode) {
  material.validate();
  if (!(dt > 0)) throw SolverError("time step must be positive");
  constexpr int kMaxPasses = 8;
  constexpr double kTolerance = 1e-3;

  const auto n = state.temperature.values.size();
  std::vector<std::uint8_t> probe_mask(n, 0);
  for (const auto& probe : probes)
    for (auto v : probe.voxels) {
      probe_mask.at(v) = 1;
      state.temperature[v] = probe.temperature;
    }

  const grid::ScalarField t_old = state.temperature;
  grid::ScalarField t_eval = t_old, t_prev = t_old, t_new;
  std::vector<double> rho_c, k;
  CryoStepInfo info;
  for (int pass = 1; pass <= kMaxPasses; ++pass) {
    effective_arrays(solver, t_eval, material, mode, rho_c, k);
    double limit = bound(solver, rho_c, k);
    if (dt > limit)
      throw SolverError("time step " + std::to_string(dt) + " s exceeds the explicit stability bound " +
                        std::to_string(limit) + " s");
    solver.explicit_update(t_old, state.dead, rho_c, k, nullptr, dt, t_new, probe_mask);
    double diff = 0, scale = 1;
    for (std::size_t v = 0; v < n; ++v) {
      diff = std::max(diff, std::abs(t_new[v] - t_prev[v]));
      scale = std::max(scale, std::abs(t_new[v]));
    }
    info.picard_iterations = pass;
    info.last_relative_change = diff / scale;
    if (info.last_relative_change <= kTolerance) break;
    t_prev = t_new;
    for (std::size_t v = 0; v < n; ++v) t_eval[v] = 0.5 * (t_old[v] + t_new[v]);
  }
  state.temperature = std::move(t_new);
  state.time += dt;
  return info;
}

}  // namespace ablasim::thermal

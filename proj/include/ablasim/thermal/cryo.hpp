#pragma once

#include <span>
#include <utility>

#include "ablasim/thermal/bioheat.hpp"

namespace ablasim::thermal {

struct CryoMaterial {
  double solid_heat_capacity{1800};   ///< c_s
  double liquid_heat_capacity{3600};  ///< c_l
  double solid_conductivity{2.2};     ///< k_s
  double liquid_conductivity{0.52};   ///< k_l
  double latent_heat{333000};         ///< h_sf, J/kg
  double solidus{-8};                 ///< T_s, °C
  double liquidus{-1};                ///< T_l, °C

  void validate() const;
};

/// `HalfSlope` keeps the mushy-zone conductivity k_s + (k_l − k_s)(T − T_s)/(2(T_l − T_s)),
/// which jumps at T_l; `Continuous` drops the factor 1/2 so k reaches k_l.
enum class ConductivityMode { HalfSlope, Continuous };

struct EffectiveProperties {
  double heat_capacity;
  double conductivity;
};

/// Effective heat capacity method; T_s <= T <= T_l takes the mushy branch.
EffectiveProperties cryo_effective_properties(double temperature, const CryoMaterial& m,
                                              ConductivityMode mode = ConductivityMode::HalfSlope);

struct ProbeSink {
  std::span<const std::size_t> voxels;
  double temperature{-150};
};

struct CryoStepInfo {
  int picard_iterations{0};
  double last_relative_change{0};
};

/// Explicit step with temperature-dependent properties. Properties are
/// evaluated at the start-of-step temperature, then re-evaluated at the
/// midpoint and the update repeated while the iterate changes by more than
/// 1e-3 relative (at most 8 passes). Probe voxels are held at the sink
/// temperature; density comes from the per-label tissue table.
CryoStepInfo step_cryo(const BioheatSolver& solver, BioheatState& state, const CryoMaterial& material,
                       const ProbeSink& probe, double dt,
                       ConductivityMode mode = ConductivityMode::HalfSlope);

/// Several probes, each held at its own temperature.
CryoStepInfo step_cryo(const BioheatSolver& solver, BioheatState& state, const CryoMaterial& material,
                       std::span<const ProbeSink> probes, double dt,
                       ConductivityMode mode = ConductivityMode::HalfSlope);

/// Stability bound for the cryo step at the given temperature field.
double cryo_stability_limit(const BioheatSolver& solver, const grid::ScalarField& temperature,
                            const CryoMaterial& material, ConductivityMode mode);

}  // namespace ablasim::thermal

#pragma once

#include <array>
#include <span>
#include <utility>
#include <vector>

#include "ablasim/grid/voxel_grid.hpp"

namespace ablasim::thermal {

/// Per-label tissue constants for the Pennes equation (SI units).
struct TissueProperties {
  double density{1060};        ///< ρ, kg/m³
  double specific_heat{3600};  ///< c, J/(kg·K)
  double conductivity{0.52};   ///< k, W/(m·K)
  double perfusion_rate{0};    ///< ν, 1/s
};

struct Blood {
  double density{1060};
  double specific_heat{3600};
};

/// Which cells receive the perfusion sink. `DeadGated` applies it where
/// D >= D0 (the default); `AliveGated` applies
/// it where D < D0.
enum class PerfusionMode { DeadGated, AliveGated };

struct CellDeathParams {
  double forward_rate{0};       ///< k̄_f, 1/s
  double backward_rate{0};      ///< k_b, 1/s
  double temperature_scale{1};  ///< T_k, °C
  double threshold{0.8};        ///< D0
  double initial_alive{0.99};   ///< A at t = 0

  void validate() const;
};

enum class BoundaryKind { Dirichlet, Insulated };

struct BioheatSetup {
  grid::RegionLabels labels;
  std::vector<TissueProperties> tissue;  ///< indexed by label
  Blood blood;
  double body_temperature{37};
  CellDeathParams cell_death;
  PerfusionMode perfusion_mode{PerfusionMode::DeadGated};
  /// Per axis: Dirichlet pins the outer voxel layer at its current value,
  /// Insulated drops the missing neighbour flux.
  std::array<BoundaryKind, 3> boundary{BoundaryKind::Dirichlet, BoundaryKind::Dirichlet,
                                       BoundaryKind::Dirichlet};
};

struct BioheatState {
  grid::ScalarField temperature;
  grid::ScalarField alive;
  grid::ScalarField dead;
  double time{0};
};

/// Q_perf for a single voxel.
double perfusion_source(double temperature, double dead, double perfusion_rate, const Blood& blood,
                        double body_temperature, double threshold, PerfusionMode mode);

struct CellDeathRates {
  double d_alive;
  double d_dead;
};

/// Right-hand side of the three-state (alive/vulnerable/dead) model.
CellDeathRates cell_death_rates(double temperature, double alive, double dead, const CellDeathParams& p);

/// Advances (A, D) by dt at fixed temperature with RK4, halving the substep
/// until no variable changes by more than 0.05 per substep, and projecting
/// onto {A, D >= 0, A + D <= 1} after each substep.
std::pair<double, double> step_cell_death(double temperature, double alive, double dead,
                                          const CellDeathParams& p, double dt);

/// ∇·(k∇T) per voxel using harmonic-mean face conductivities. Faces outside
/// the grid carry no flux; callers decide which voxels are updated.
void diffusion_operator(const grid::ScalarField& temperature, std::span<const double> conductivity,
                        std::span<double> out);

class BioheatSolver {
 public:
  explicit BioheatSolver(BioheatSetup setup);

  const BioheatSetup& setup() const { return setup_; }
  const grid::VoxelGrid& grid() const { return setup_.labels.grid; }

  /// T = T_body, A = A0, D = 0.
  BioheatState initial_state() const;

  /// Explicit stability bound h²·min(ρc)/(6·max k).
  double stability_limit() const;

  /// Voxels held at their current temperature during steps, in addition to
  /// the Dirichlet boundary layers.
  void set_pinned(std::span<const std::size_t> voxels);
  void clear_pinned();
  bool is_fixed(std::size_t n) const { return fixed_[n] != 0; }

  grid::ScalarField perfusion(const BioheatState& state) const;

  /// One explicit Euler step of ρc ∂T/∂t − ∇·(k∇T) = Q_inst + Q_perf
  /// followed by the cell-death update at the new temperature.
  /// `q_inst` may be null for no instrument heating.
  void step(BioheatState& state, const grid::ScalarField* q_inst, double dt) const;

  /// Σ ρc T h³ over the voxels the solver updates.
  double heat_content(const BioheatState& state) const;

  /// Heat flowing into updated voxels from fixed ones over one step of
  /// length dt (W·s), evaluated on the pre-step temperature.
  double boundary_inflow(const grid::ScalarField& temperature, double dt) const;

  const std::vector<double>& volumetric_heat_capacity() const { return rho_c_; }
  const std::vector<double>& conductivity() const { return k_; }

  /// Explicit update with caller-supplied ρc and k (used by the cryo step).
  void explicit_update(const grid::ScalarField& t_old, const grid::ScalarField& dead,
                       std::span<const double> rho_c, std::span<const double> k,
                       const grid::ScalarField* q_inst, double dt, grid::ScalarField& t_new,
                       std::span<const std::uint8_t> extra_fixed = {}) const;

  void advance_cell_death(BioheatState& state, double dt) const;

 private:
  BioheatSetup setup_;
  std::vector<double> rho_c_, k_, perfusion_rate_;
  std::vector<std::uint8_t> boundary_fixed_, fixed_;
};

}  // namespace ablasim::thermal

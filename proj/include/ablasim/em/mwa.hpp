#pragma once

#include <complex>
#include <functional>
#include <vector>

#include "ablasim/family/setup.hpp"
#include "ablasim/thermal/bioheat.hpp"

namespace ablasim::em {

/// Node-centred r–z half-plane: r_i = i·h (i = 0 on the axis),
/// z_j = z0 + j·h. The antenna tip sits at z = 0 and its shaft runs
/// towards +z.
struct AxisymGrid {
  int nr{0}, nz{0};
  double h{0};
  double z0{0};

  std::size_t size() const { return static_cast<std::size_t>(nr) * nz; }
  std::size_t index(int i, int j) const { return static_cast<std::size_t>(j) * nr + i; }
  double r(int i) const { return i * h; }
  double z(int j) const { return z0 + j * h; }
};

/// Coaxial slot antenna: inner conductor, PTFE-like dielectric, outer
/// conductor with one annular slot, shorted at the tip.
struct CoaxAntenna {
  double inner_radius{0.15e-3};
  double outer_radius{0.55e-3};  ///< inner surface of the outer conductor
  double conductor_thickness{0.1e-3};
  double slot_offset{5e-3};  ///< slot centre, measured from the tip
  double slot_length{1e-3};
  double dielectric_permittivity{2.03};
};

enum class NodeKind : std::uint8_t { Medium, Feed, Conductor };

struct MwaProblem {
  AxisymGrid grid;
  CoaxAntenna antenna;
  double frequency{2.45e9};
  /// Medium properties per node; probe nodes are overwritten by the solver.
  std::vector<double> eps_r, sigma, mu_r;
};

struct MwaField {
  AxisymGrid grid;
  std::vector<std::complex<double>> h;  ///< H_φ, A/m
  std::vector<NodeKind> kind;
  std::vector<std::complex<double>> eps_c;  ///< ε_r − iσ/(ωε0) used for the solve
  std::vector<double> sigma;
  double omega{0}, k0{0};
  double power{0};
  double relative_residual{0};
  std::vector<double> residual_history;
  /// Effective coax radii after snapping to nodes.
  double coax_a{0}, coax_b{0};
};

struct MwaSolveOptions {
  double tolerance{1e-8};
  int max_refinements{6};
};

/// Frequency-domain solve of ∇×[(ε_r − iσ/(ωε0))⁻¹∇×H] − μ_r k0² H = 0 for
/// H = H_φ e_φ. H_φ = 0 on the axis, conductors are perfect (zero
/// tangential E), the coax feed at the top carries an incident TEM wave of
/// the requested power, and the remaining outer edges are first-order
/// absorbing. Direct sparse LU with iterative refinement.
MwaField solve_mwa_field(const MwaProblem& problem, double power, const MwaSolveOptions& options = {});

/// Residual of the assembled discrete system for an arbitrary field, relative
/// to the right-hand side norm.
double mwa_relative_residual(const MwaProblem& problem, double power, const std::vector<std::complex<double>>& h);

enum class SarMode { Gradient, Standard };

/// Per-node heating factor g with Q = ½σg: |∇H_φ| (gradient) or |E|²
/// with E = ∇×H/(iωε0ε_c) (standard). Zero inside the probe.
std::vector<double> heating_factor(const MwaField& field, SarMode mode);

/// Q_inst per node.
std::vector<double> sar_from_field(const MwaField& field, SarMode mode);

/// Samples an axisymmetric nodal quantity into the 3D grid by nearest (r, z)
/// around the probe axis through `tip` along `shaft_direction` (tip → entry).
/// Voxels outside the half-plane get 0.
grid::ScalarField revolve(const std::vector<double>& values, const AxisymGrid& ax, const Vec3& tip,
                          const Vec3& shaft_direction, const grid::VoxelGrid& grid);

/// Voxel average of the nearest-(r, z) samples on an s×s×s lattice of points
/// inside each voxel. Keeps the deposited total close to the axisymmetric
/// integral where the field varies within a voxel (next to the probe).
grid::ScalarField revolve_averaged(const std::vector<double>& values, const AxisymGrid& ax, const Vec3& tip,
                                   const Vec3& shaft_direction, const grid::VoxelGrid& grid, int samples);

struct MwaRunRow {
  double time;
  std::string phase;
  double power;
  double temperature_max;
  std::size_t lesion_voxels;
};

struct MwaResult {
  thermal::BioheatState state;
  grid::Mask lesion;
  grid::ScalarField sar;  ///< Q_inst at the last step
  std::vector<MwaRunRow> history;
  int field_solves{0};
  std::vector<double> relative_residuals;
};

using Progress = std::function<void(double fraction, const std::string& message)>;

/// Couples the field solve to the bioheat model. The field is solved once at
/// the start (MWA_RECOMPUTE_INTERVAL unset or 0) or every K bioheat steps with
/// σ(T) re-evaluated; between solves Q = ½σ(T)·g with g from the last solve.
MwaResult couple_mwa(const gssa::SimulationDefinition& defn, const family::ModelInputs& model,
                     const Progress& progress = {});

}  // namespace ablasim::em

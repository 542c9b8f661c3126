#pragma once

#include <functional>
#include <set>
#include <span>
#include <vector>

#include "ablasim/family/setup.hpp"
#include "ablasim/grid/ops.hpp"

namespace ablasim::em {

/// Electrode voxels held at a fixed potential. When the electrode's
/// containment test is known, the potential is imposed on its surface between
/// voxel centres (cut-cell distance) rather than at the nearest voxel centre.
struct Electrode {
  std::vector<std::size_t> voxels;
  std::function<bool(const Vec3&)> inside;
};

struct PotentialOptions {
  double tolerance{1e-8};  ///< relative residual
  int max_iterations{20000};
};

struct PotentialSolution {
  grid::ScalarField potential;  ///< V
  grid::ScalarField field;      ///< |E|, V/m; zero inside electrodes
  int iterations{0};
  double relative_residual{0};
};

/// ∇·(σ∇φ) = 0 with φ = voltage on the anode, 0 on the cathode and zero
/// normal flux on the grid boundary. Jacobi-preconditioned conjugate
/// gradients; the converged iterate is projected onto the range of the
/// boundary data, where the exact discrete solution lies.
PotentialSolution solve_ire(const grid::VoxelGrid& grid, std::span<const double> sigma, const Electrode& anode,
                            double voltage, const Electrode& cathode, const PotentialOptions& options = {});

struct Pairing {
  int anode;    ///< needle index, from 1
  int cathode;  ///< needle index, from 1
  double voltage;
};

/// Reads (anode, cathode, volts) triples from a point_list.
std::vector<Pairing> parse_pairings(const Value& value, int needle_count);

struct IreLesionOptions {
  double threshold{0};             ///< E_th, V/m
  double conductivity_increase{0};  ///< β
  double reversible_threshold{0};   ///< E_rev, V/m
  PotentialOptions solver;
};

struct IreResult {
  grid::ScalarField e_max;
  grid::Mask lesion;
  std::vector<double> sigma;  ///< conductivity after the last pairing
  int solves{0};
};

using Progress = std::function<void(double fraction, const std::string& message)>;

/// Max-field lesion over an ordered pairing sequence. After each pairing
/// σ ← σ·(1 + β·1[|E| > E_rev]). The lesion is E_max ≥ E_th restricted to
/// `tissue_labels`.
IreResult ire_protocol_lesion(const grid::RegionLabels& labels, const std::set<std::uint16_t>& tissue_labels,
                              std::vector<double> sigma, const std::vector<Electrode>& electrodes,
                              const std::vector<Pairing>& pairings, const IreLesionOptions& options,
                              const Progress& progress = {});

/// Electrode for the active segment of a needle.
Electrode needle_electrode(const gssa::SimulationDefinition& defn, int needle, const grid::VoxelGrid& grid);

/// Per-voxel conductivity from TISSUE_ELECTRIC_CONDUCTIVITY and group overrides.
std::vector<double> conductivity_map(const gssa::SimulationDefinition& defn, const family::ModelInputs& model);

IreResult run_ire(const gssa::SimulationDefinition& defn, const family::ModelInputs& model,
                  const Progress& progress = {});

}  // namespace ablasim::em

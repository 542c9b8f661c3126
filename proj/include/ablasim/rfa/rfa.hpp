#pragma once

#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "ablasim/family/setup.hpp"
#include "ablasim/grid/voxel_grid.hpp"
#include "ablasim/thermal/bioheat.hpp"

namespace ablasim::rfa {

struct GaussianSource {
  std::vector<Vec3> centers;
  double sigma{0.0025};  ///< m
};

struct Deposition {
  grid::ScalarField q;             ///< W/m³
  std::vector<double> amplitudes;  ///< peak value of each center's Gaussian, W/m³
};

/// Q(x) = Σ a_i exp(−|x−c_i|²/(2σ²)); each center carries total_power/N of
/// the voxel-summed power Σ Q h³.
Deposition gaussian_deposition(const GaussianSource& source, double total_power, const grid::VoxelGrid& grid);

struct PidController {
  double kp{0}, ki{0}, kd{0};
  double setpoint{0};
  double out_min{0}, out_max{1};
  double integral{0};
  std::optional<double> last_measurement{};
};

/// Positional PID, derivative on measurement. While the output saturates in
/// the direction of the error the accumulator is held at the value that just
/// reaches the clamp (it never grows past it).
double pid_step(PidController& ctrl, double measured, double dt);

struct HistoryRow {
  double time;
  std::string phase;
  double power;
  double tine_temperature_avg;
  double tine_temperature_min;
  std::size_t lesion_voxels;
};

void write_history_csv(std::ostream& out, const std::vector<HistoryRow>& rows);

struct RfaResult {
  thermal::BioheatState state;
  grid::Mask lesion;
  std::vector<HistoryRow> history;
  std::vector<Vec3> tine_tips;  ///< at the final extension
  bool terminated_by_protocol{false};
};

using Progress = std::function<void(double fraction, const std::string& message)>;

/// Staged RFA run: per 1 s tick the protocol sees tine thermocouple readings,
/// sets power and extension; the PID trims the protocol power towards the
/// temperature setpoint; bioheat substeps fill the tick.
RfaResult run_rfa(const gssa::SimulationDefinition& defn, const family::ModelInputs& model,
                  const Progress& progress = {});

}  // namespace ablasim::rfa

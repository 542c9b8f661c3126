#pragma once

#include <functional>
#include <string>
#include <vector>

#include "ablasim/family/setup.hpp"
#include "ablasim/thermal/cryo.hpp"

namespace ablasim::family {

struct CryoRow {
  double time;
  std::string phase;
  double flow_rate;
  double probe_temperature;  ///< mean over needles
  double temperature_min;
  std::size_t lesion_voxels;
};

struct CryoResult {
  thermal::BioheatState state;
  grid::ScalarField minimum_temperature;
  grid::Mask lesion;
  std::vector<CryoRow> history;
};

/// Probe surface temperature for a flow fraction from a float_list of
/// (flow, °C) pairs, linear in between and clamped at the ends.
double flow_to_temperature(const FloatList& table, double flow);

/// Freeze–thaw run: each tick the protocol sets flow_rate, the probe voxels
/// are held at the mapped temperature and the effective-heat-capacity step
/// fills the tick. Lesion = voxels whose minimum temperature reached
/// CRYO_LESION_ISOTHERM, restricted to tissue.
CryoResult run_cryo(const gssa::SimulationDefinition& defn, const ModelInputs& model,
                    const std::function<void(double, const std::string&)>& progress = {});

}  // namespace ablasim::family

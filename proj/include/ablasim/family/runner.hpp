#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "ablasim/gssa/definition.hpp"
#include "json.hpp"

namespace ablasim::family {

using Progress = std::function<void(double fraction, const std::string& message)>;

struct RunSummary {
  std::string family;
  std::size_t lesion_voxels{0};
  double lesion_volume_ml{0};
  double simulated_time{0};
  std::vector<std::string> artifacts;  ///< file names inside the output directory
  std::vector<std::string> warnings;

  nlohmann::json to_json() const;
};

/// Families this build can run.
const std::vector<std::string>& registered_families();
bool is_registered(const std::string& family);

/// Builds the model, runs the family solver and writes into `out_dir`:
/// lesion.gsmask, the family's fields (.gsfld), history.csv and summary.json.
/// Mask files in the definition resolve against `base_dir`. When
/// LESION_FIELD / LESION_THRESHOLD / LESION_DIRECTION are present they
/// replace the family's built-in lesion rule.
RunSummary run_definition(const gssa::SimulationDefinition& defn, const std::filesystem::path& base_dir,
                          const std::filesystem::path& out_dir, const Progress& progress = {});

}  // namespace ablasim::family

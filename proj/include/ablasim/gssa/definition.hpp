#pragma once

#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "ablasim/grid/ops.hpp"
#include "ablasim/protocol/protocol.hpp"
#include "ablasim/value.hpp"

namespace ablasim::gssa {

using ParameterMap = std::map<std::string, Value>;

struct NeedleDef {
  int index{1};
  std::string geometry_class;  ///< needle geometry tag, e.g. "extensible_tines"
  Vec3 tip, entry;
  ParameterMap parameters;
  bool operator==(const NeedleDef&) const = default;
};

/// Reference to a `.gsmask` file, relative to the definition file.
struct MaskFile {
  std::string path;
  bool operator==(const MaskFile&) const = default;
};

using RegionPayload = std::variant<MaskFile, grid::Sphere, grid::Cylinder, grid::Box>;

struct RegionDef {
  std::string name;
  std::string group;  ///< e.g. "organ", "tumour", "vessels"
  RegionPayload payload;
  bool operator==(const RegionDef&) const = default;
};

/// Simulation-tier payload handed to a numerical-model family. It carries no
/// abstract entity identifiers beyond the family name.
struct SimulationDefinition {
  std::string family;
  ParameterMap parameters;
  std::vector<NeedleDef> needles;
  std::vector<RegionDef> regions;
  std::vector<protocol::AlgorithmDef> algorithms;
  std::optional<double> duration;  ///< hint, seconds

  bool operator==(const SimulationDefinition&) const = default;
};

/// Checks the structural invariants: non-empty family, needle indices dense
/// from 1, unique region names.
void validate(const SimulationDefinition& defn);

/// Canonical GSSA-XML: sorted attributes, fixed section order, LF endings,
/// two-space indentation.
std::string to_xml(const SimulationDefinition& defn);

/// Parses and validates against the closed version-1 schema.
SimulationDefinition from_xml(std::string_view text);

class LookupError : public Error {
 public:
  LookupError(const std::string& msg, std::vector<std::string> near)
      : Error(msg), near_(std::move(near)) {}
  const std::vector<std::string>& near_matches() const { return near_; }

 private:
  std::vector<std::string> near_;
};

/// Global parameter lookup; unknown names raise LookupError listing
/// similarly spelled parameters.
const Value& param(const SimulationDefinition& defn, const std::string& name);
/// Per-needle lookup falling back to the global scope.
const Value& needle_param(const SimulationDefinition& defn, int needle_index, const std::string& name);
bool has_param(const SimulationDefinition& defn, const std::string& name);

struct RegionRef {
  std::string name;
  std::string group;
  int idx;  ///< grid label; 0 is background, regions count from 1 in document order
  const RegionPayload* payload;
};

std::vector<RegionRef> regions_in_group(const SimulationDefinition& defn, const std::string& group);
std::vector<RegionRef> all_regions(const SimulationDefinition& defn);

/// Parses every algorithm body and links its free variables against the
/// definition's parameters.
std::vector<protocol::ProtocolProgram> link_algorithms(const SimulationDefinition& defn);

}  // namespace ablasim::gssa

#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ablasim/gssa/definition.hpp"
#include "ablasim/protocol/protocol.hpp"
#include "ablasim/value.hpp"
#include "json.hpp"

namespace ablasim::domain {

struct Parameter {
  std::string name;
  ValueType value_type{ValueType::Float};
  std::optional<Value> default_value;
  std::optional<std::string> units;
};

enum class Editable { Hidden, Optional, Required };
enum class Widget { NumberBox, Slider, PowerTimeGraph, Checkbox, Text };

/// The target is the entity whose `attributions` list holds the record.
struct Attribution {
  std::string parameter;
  std::optional<Value> override_value;
  Editable editable{Editable::Hidden};
  std::optional<Widget> widget_hint;
};

struct NeedleSpec {
  std::string id;
  std::string manufacturer_model;
  grid::NeedleGeometry geometry{grid::NeedleGeometry::StraightMonopolar};
  double shaft_radius{0.00075};
  double active_length{0.02};
  int tine_count{1};
  double max_tine_extension{0.02};
  std::vector<Attribution> attributions;
};

struct CompatRow {
  std::string needle;
  int min_count{0};
  int max_count{0};
};

struct PowerGeneratorSpec {
  std::string id;
  std::string manufacturer_model;
  std::vector<Attribution> attributions;
  std::vector<CompatRow> compat;
};

enum class Organ { Liver, Lung, Kidney, Phantom };

struct ContextSpec {
  std::string id;
  Organ organ{Organ::Liver};
  std::vector<Attribution> attributions;
};

enum class Modality { Rfa, Mwa, Cryo, Ire };

struct ProtocolSpec {
  std::string id;
  Modality modality{Modality::Rfa};
  std::vector<protocol::AlgorithmDef> algorithms;
  std::vector<Attribution> attributions;
};

struct RegionRequirement {
  std::string group;
  int min{0};
  int max{0};
};

enum class LesionDirection { AtLeast, AtMost };

struct ResultSpec {
  std::string field;
  double threshold{0};
  LesionDirection direction{LesionDirection::AtLeast};
};

struct NumericalModelSpec {
  std::string id;
  std::string family;
  std::vector<RegionRequirement> required_regions;
  std::vector<Attribution> attributions;
  std::optional<ResultSpec> result_spec;
};

struct Combination {
  std::string id;
  std::string context;
  std::string power_generator;
  std::string protocol;
  std::string numerical_model;
  std::vector<std::string> allowed_needles;
  bool is_public{false};
};

struct ConcreteNeedle {
  std::string spec;
  Vec3 tip, entry;
  std::map<std::string, Value> parameters;  ///< simulation-time values for this needle
};

const std::vector<std::string>& known_families();

/// Thrown when an entity reference cannot be resolved.
class MissingEntity : public Error {
 public:
  MissingEntity(std::string kind, std::string id)
      : Error("missing " + kind + " entity '" + id + "'"), kind_(std::move(kind)), id_(std::move(id)) {}
  const std::string& kind() const { return kind_; }
  const std::string& id() const { return id_; }

 private:
  std::string kind_, id_;
};

class MissingRequired : public Error {
 public:
  explicit MissingRequired(std::string name)
      : Error("missing required parameter '" + name + "'"), name_(std::move(name)) {}
  const std::string& parameter() const { return name_; }

 private:
  std::string name_;
};

class ParameterTypeError : public Error {
 public:
  ParameterTypeError(std::string name, const std::string& detail)
      : Error("type error for parameter '" + name + "': " + detail), name_(std::move(name)) {}
  const std::string& parameter() const { return name_; }

 private:
  std::string name_;
};

class CompatViolation : public Error {
 public:
  using Error::Error;
};

/// Flat entity store: one JSON document per entity under
/// `<root>/<kind>/<id>.json`, kinds parameter, needle, power_generator,
/// context, protocol, numerical_model, combination.
class Registry {
 public:
  std::map<std::string, Parameter> parameters;
  std::map<std::string, NeedleSpec> needles;
  std::map<std::string, PowerGeneratorSpec> generators;
  std::map<std::string, ContextSpec> contexts;
  std::map<std::string, ProtocolSpec> protocols;
  std::map<std::string, NumericalModelSpec> models;
  std::map<std::string, Combination> combinations;

  static Registry load(const std::filesystem::path& root);
  void save(const std::filesystem::path& root) const;

  static const std::vector<std::string>& kinds();
  /// Replaces or inserts one entity from its JSON document; checks the
  /// entity's own invariants and that `id` matches the document.
  void put(const std::string& kind, const std::string& id, const nlohmann::json& document);
  /// Throws MissingEntity when absent.
  nlohmann::json get(const std::string& kind, const std::string& id) const;
  std::vector<std::string> ids(const std::string& kind) const;

  const Parameter& parameter(const std::string& name) const;
  const NeedleSpec& needle(const std::string& id) const;
  const PowerGeneratorSpec& generator(const std::string& id) const;
  const ContextSpec& context(const std::string& id) const;
  const ProtocolSpec& protocol(const std::string& id) const;
  const NumericalModelSpec& model(const std::string& id) const;
  const Combination& combination(const std::string& id) const;
};

/// JSON forms, snake_case keys as in the structs above. Values are plain
/// JSON decoded against the parameter's declared type.
nlohmann::json to_json(const Parameter&);
nlohmann::json to_json(const NeedleSpec&);
nlohmann::json to_json(const PowerGeneratorSpec&);
nlohmann::json to_json(const ContextSpec&);
nlohmann::json to_json(const ProtocolSpec&);
nlohmann::json to_json(const NumericalModelSpec&);
nlohmann::json to_json(const Combination&);
nlohmann::json value_to_json(const Value& v);
Value value_from_json(const nlohmann::json& j, ValueType t);

struct ValidationReport {
  std::vector<std::string> unfillable;     ///< sorted, unique
  std::vector<std::string> compat_errors;  ///< one line per offending needle
  bool ok() const { return unfillable.empty() && compat_errors.empty(); }
  std::string to_text() const;
};

/// A parameter attributed anywhere in the combination is fillable when it has
/// a default, an override in some attribution, or an editable attribution.
/// Every allowed needle needs a compat row in the generator.
ValidationReport validate_combination(const Combination& combination, const Registry& registry);

enum class Source { User, Needle, Protocol, Generator, Context, Model, Default };
std::string_view to_string(Source s);

struct ResolvedValue {
  Value value;
  Source source;
};

struct ResolvedParameters {
  std::map<std::string, ResolvedValue> global;
  std::vector<std::map<std::string, ResolvedValue>> needles;  ///< parallel to the concrete needles
};

/// Highest available source wins: user > needle > protocol > generator >
/// context > model > default. Needle attributions bind in that needle's
/// scope; a ConcreteNeedle's own values are user input for its scope, and
/// global user input applies in every scope the parameter is attributed in.
/// Parameters with no available value (optional and unset) are omitted.
ResolvedParameters resolve_parameters(const Combination& combination, const Registry& registry,
                                      const std::vector<ConcreteNeedle>& needles,
                                      const std::map<std::string, Value>& user_inputs);

struct ConcretizeInputs {
  std::vector<ConcreteNeedle> needles;
  std::map<std::string, Value> user_inputs;
  std::vector<gssa::RegionDef> regions;
  std::optional<double> duration;
};

/// Simulation-tier definition: family, resolved parameters, needles with
/// geometric constants as NEEDLE_* parameters, protocol algorithms, regions.
/// A result spec becomes LESION_FIELD / LESION_THRESHOLD / LESION_DIRECTION.
gssa::SimulationDefinition concretize(const Combination& combination, const Registry& registry,
                                      const ConcretizeInputs& inputs);

}  // namespace ablasim::domain

#include "ablasim/domain/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>

namespace ablasim::domain {

using nlohmann::json;

namespace {

template <class E>
struct EnumNames {
  std::vector<std::pair<E, const char*>> names;

  const char* name(E e) const {
    for (auto& [v, n] : names)
      if (v == e) return n;
    return "?";
  }
  E parse(const std::string& s, const char* what) const {
    for (auto& [v, n] : names)
      if (s == n) return v;
    std::string options;
    for (auto& [v, n] : names) options += (options.empty() ? "" : ", ") + std::string(n);
    throw Error("unknown " + std::string(what) + " '" + s + "' (expected one of " + options + ")");
  }
};

const EnumNames<Editable> editable_names{{{Editable::Hidden, "hidden"},
                                          {Editable::Optional, "optional"},
                                          {Editable::Required, "required"}}};
const EnumNames<Widget> widget_names{{{Widget::NumberBox, "number_box"},
                                      {Widget::Slider, "slider"},
                                      {Widget::PowerTimeGraph, "power_time_graph"},
                                      {Widget::Checkbox, "checkbox"},
                                      {Widget::Text, "text"}}};
const EnumNames<Organ> organ_names{
    {{Organ::Liver, "liver"}, {Organ::Lung, "lung"}, {Organ::Kidney, "kidney"}, {Organ::Phantom, "phantom"}}};
const EnumNames<Modality> modality_names{
    {{Modality::Rfa, "RFA"}, {Modality::Mwa, "MWA"}, {Modality::Cryo, "CRYO"}, {Modality::Ire, "IRE"}}};
const EnumNames<LesionDirection> direction_names{
    {{LesionDirection::AtLeast, "at_least"}, {LesionDirection::AtMost, "at_most"}}};

/// Reads a required key, naming the entity and key on failure.
template <class T>
T req(const json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) throw Error(where + ": missing field '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw Error(where + ": field '" + key + "' has the wrong type");
  }
}

template <class T>
T opt(const json& j, const char* key, T fallback, const std::string& where) {
  if (!j.contains(key) || j.at(key).is_null()) return fallback;
  return req<T>(j, key, where);
}

/// Plain JSON to the most natural typed value.
Value infer_value(const json& j, const std::string& where) {
  if (j.is_boolean()) return Value(j.get<bool>());
  if (j.is_number_integer()) return Value(j.get<std::int64_t>());
  if (j.is_number()) return Value(j.get<double>());
  if (j.is_string()) return Value(j.get<std::string>());
  if (j.is_array()) {
    if (!j.empty() && j.front().is_array()) {
      PointList pts;
      for (const auto& p : j) {
        if (!p.is_array() || p.size() != 3) throw Error(where + ": points need three coordinates");
        pts.push_back({p[0].get<double>(), p[1].get<double>(), p[2].get<double>()});
      }
      return Value(pts);
    }
    FloatList l;
    for (const auto& x : j) {
      if (!x.is_number()) throw Error(where + ": list entries must be numbers");
      l.push_back(x.get<double>());
    }
    return Value(l);
  }
  throw Error(where + ": unsupported value");
}

Attribution attribution_from(const json& j, const std::string& where) {
  Attribution a;
  a.parameter = req<std::string>(j, "parameter", where);
  if (j.contains("override_value") && !j["override_value"].is_null())
    a.override_value = infer_value(j["override_value"], where + " attribution " + a.parameter);
  a.editable = editable_names.parse(opt<std::string>(j, "editable", "hidden", where), "editable");
  if (j.contains("widget_hint") && !j["widget_hint"].is_null())
    a.widget_hint = widget_names.parse(req<std::string>(j, "widget_hint", where), "widget hint");
  return a;
}

std::vector<Attribution> attributions_from(const json& j, const std::string& where) {
  std::vector<Attribution> out;
  if (!j.contains("attributions")) return out;
  std::set<std::string> seen;
  for (const auto& a : j.at("attributions")) {
    out.push_back(attribution_from(a, where));
    if (!seen.insert(out.back().parameter).second)
      throw Error(where + ": parameter '" + out.back().parameter + "' attributed twice");
  }
  return out;
}

json attributions_json(const std::vector<Attribution>& list) {
  json out = json::array();
  for (const auto& a : list) {
    json j{{"parameter", a.parameter}, {"editable", editable_names.name(a.editable)}};
    if (a.override_value) j["override_value"] = value_to_json(*a.override_value);
    if (a.widget_hint) j["widget_hint"] = widget_names.name(*a.widget_hint);
    out.push_back(j);
  }
  return out;
}

void check_id(const std::string& id, const std::string& where) {
  if (id.empty() || id.find_first_of("/\\") != std::string::npos || id == "." || id == "..")
    throw Error(where + ": invalid id '" + id + "'");
}

Parameter parameter_from(const json& j) {
  Parameter p;
  p.name = req<std::string>(j, "name", "parameter");
  static const std::regex pattern("[A-Z][A-Z0-9_]*");
  if (!std::regex_match(p.name, pattern)) throw Error("parameter name '" + p.name + "' must match [A-Z][A-Z0-9_]*");
  std::string where = "parameter " + p.name;
  auto t = parse_value_type(req<std::string>(j, "value_type", where));
  if (!t) throw Error(where + ": unknown value_type");
  p.value_type = *t;
  if (j.contains("default_value") && !j["default_value"].is_null())
    p.default_value = value_from_json(j["default_value"], p.value_type);
  if (j.contains("units") && !j["units"].is_null()) p.units = req<std::string>(j, "units", where);
  return p;
}

NeedleSpec needle_from(const json& j) {
  NeedleSpec n;
  n.id = req<std::string>(j, "id", "needle");
  std::string where = "needle " + n.id;
  check_id(n.id, where);
  n.manufacturer_model = opt<std::string>(j, "manufacturer_model", "", where);
  n.geometry = grid::parse_needle_geometry(req<std::string>(j, "geometry", where));
  n.shaft_radius = opt<double>(j, "shaft_radius", n.shaft_radius, where);
  n.active_length = opt<double>(j, "active_length", n.active_length, where);
  n.tine_count = opt<int>(j, "tine_count", n.tine_count, where);
  n.max_tine_extension = opt<double>(j, "max_tine_extension", n.max_tine_extension, where);
  if (!(n.shaft_radius > 0 && n.active_length > 0 && n.max_tine_extension > 0 && n.tine_count > 0))
    throw Error(where + ": geometric constants must be positive");
  n.attributions = attributions_from(j, where);
  return n;
}

PowerGeneratorSpec generator_from(const json& j) {
  PowerGeneratorSpec g;
  g.id = req<std::string>(j, "id", "power_generator");
  std::string where = "power_generator " + g.id;
  check_id(g.id, where);
  g.manufacturer_model = opt<std::string>(j, "manufacturer_model", "", where);
  g.attributions = attributions_from(j, where);
  if (j.contains("compat"))
    for (const auto& row : j["compat"]) {
      CompatRow r{req<std::string>(row, "needle", where), req<int>(row, "min_count", where),
                  req<int>(row, "max_count", where)};
      if (!(0 <= r.min_count && r.min_count <= r.max_count))
        throw Error(where + ": compat row for '" + r.needle + "' needs 0 <= min_count <= max_count");
      g.compat.push_back(r);
    }
  return g;
}

ContextSpec context_from(const json& j) {
  ContextSpec c;
  c.id = req<std::string>(j, "id", "context");
  std::string where = "context " + c.id;
  check_id(c.id, where);
  c.organ = organ_names.parse(req<std::string>(j, "organ", where), "organ");
  c.attributions = attributions_from(j, where);
  for (const auto& a : c.attributions) {
    if (!a.override_value) continue;
    const auto& v = *a.override_value;
    if (v.type() != ValueType::Float && v.type() != ValueType::Int) continue;
    double x = v.as_number();
    if (a.parameter == "BODY_TEMPERATURE") {
      if (!(x >= 30 && x <= 42)) throw Error(where + ": BODY_TEMPERATURE must lie in [30, 42] degC");
    } else if (!(x > 0)) {
      throw Error(where + ": material constant " + a.parameter + " must be positive");
    }
  }
  return c;
}

ProtocolSpec protocol_from(const json& j) {
  ProtocolSpec p;
  p.id = req<std::string>(j, "id", "protocol");
  std::string where = "protocol " + p.id;
  check_id(p.id, where);
  p.modality = modality_names.parse(req<std::string>(j, "modality", where), "modality");
  std::set<std::string> results;
  if (j.contains("algorithms"))
    for (const auto& a : j["algorithms"]) {
      protocol::AlgorithmDef def;
      def.result = req<std::string>(a, "result", where);
      def.arguments = opt<std::vector<std::string>>(a, "arguments", {}, where);
      def.body = req<std::string>(a, "body", where);
      if (!results.insert(def.result).second) throw Error(where + ": duplicate algorithm result '" + def.result + "'");
      protocol::parse_protocol(def.body);
      p.algorithms.push_back(std::move(def));
    }
  p.attributions = attributions_from(j, where);
  return p;
}

NumericalModelSpec model_from(const json& j) {
  NumericalModelSpec m;
  m.id = req<std::string>(j, "id", "numerical_model");
  std::string where = "numerical_model " + m.id;
  check_id(m.id, where);
  m.family = req<std::string>(j, "family", where);
  const auto& fams = known_families();
  if (std::find(fams.begin(), fams.end(), m.family) == fams.end())
    throw Error(where + ": unknown family '" + m.family + "'");
  if (j.contains("required_regions"))
    for (const auto& r : j["required_regions"]) {
      RegionRequirement req_{req<std::string>(r, "group", where), req<int>(r, "min", where), req<int>(r, "max", where)};
      if (!(0 <= req_.min && req_.min <= req_.max))
        throw Error(where + ": region group '" + req_.group + "' needs 0 <= min <= max");
      m.required_regions.push_back(req_);
    }
  m.attributions = attributions_from(j, where);
  if (j.contains("result_spec") && !j["result_spec"].is_null()) {
    const auto& r = j["result_spec"];
    ResultSpec rs{req<std::string>(r, "field", where), req<double>(r, "threshold", where),
                  direction_names.parse(req<std::string>(r, "direction", where), "direction")};
    if (!std::isfinite(rs.threshold)) throw Error(where + ": result threshold must be finite");
    m.result_spec = rs;
  }
  return m;
}

Combination combination_from(const json& j) {
  Combination c;
  c.id = req<std::string>(j, "id", "combination");
  std::string where = "combination " + c.id;
  check_id(c.id, where);
  c.context = req<std::string>(j, "context", where);
  c.power_generator = req<std::string>(j, "power_generator", where);
  c.protocol = req<std::string>(j, "protocol", where);
  c.numerical_model = req<std::string>(j, "numerical_model", where);
  c.allowed_needles = req<std::vector<std::string>>(j, "allowed_needles", where);
  if (c.allowed_needles.empty()) throw Error(where + ": allowed_needles must not be empty");
  c.is_public = opt<bool>(j, "public", false, where);
  return c;
}

template <class M>
const typename M::mapped_type& lookup(const M& map, const std::string& kind, const std::string& id) {
  auto it = map.find(id);
  if (it == map.end()) throw MissingEntity(kind, id);
  return it->second;
}

struct Member {
  Source source;
  const std::vector<Attribution>* attributions;
};

std::vector<Member> global_members(const Combination& c, const Registry& r) {
  return {{Source::Protocol, &r.protocol(c.protocol).attributions},
          {Source::Generator, &r.generator(c.power_generator).attributions},
          {Source::Context, &r.context(c.context).attributions},
          {Source::Model, &r.model(c.numerical_model).attributions}};
}

const Attribution* find_attr(const std::vector<Attribution>& list, const std::string& name) {
  for (const auto& a : list)
    if (a.parameter == name) return &a;
  return nullptr;
}

Value typed(const Parameter& p, const Value& v) {
  if (!conforms(v, p.value_type))
    throw ParameterTypeError(p.name, "expected " + std::string(to_string(p.value_type)) + ", got " +
                                         std::string(to_string(v.type())));
  return coerce(v, p.value_type);
}

}  // namespace

const std::vector<std::string>& known_families() {
  static const std::vector<std::string> f{"bioheat_rfa", "bioheat_mwa", "cryo_effective_capacity", "ire_potential"};
  return f;
}

json value_to_json(const Value& v) {
  return std::visit(
      [](const auto& x) -> json {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, PointList>) {
          json a = json::array();
          for (const auto& p : x) a.push_back({p[0], p[1], p[2]});
          return a;
        } else {
          return json(x);
        }
      },
      v.storage());
}

Value value_from_json(const json& j, ValueType t) {
  Value v = infer_value(j, "value");
  if (v.type() == ValueType::FloatList && v.as_float_list().empty() && t == ValueType::PointList) return Value(PointList{});
  if (!conforms(v, t))
    throw Error("value " + j.dump() + " does not conform to " + std::string(to_string(t)));
  return coerce(v, t);
}

json to_json(const Parameter& p) {
  json j{{"name", p.name}, {"value_type", to_string(p.value_type)}};
  if (p.default_value) j["default_value"] = value_to_json(*p.default_value);
  if (p.units) j["units"] = *p.units;
  return j;
}

json to_json(const NeedleSpec& n) {
  return {{"id", n.id},
          {"manufacturer_model", n.manufacturer_model},
          {"geometry", grid::to_string(n.geometry)},
          {"shaft_radius", n.shaft_radius},
          {"active_length", n.active_length},
          {"tine_count", n.tine_count},
          {"max_tine_extension", n.max_tine_extension},
          {"attributions", attributions_json(n.attributions)}};
}

json to_json(const PowerGeneratorSpec& g) {
  json compat = json::array();
  for (const auto& r : g.compat) compat.push_back({{"needle", r.needle}, {"min_count", r.min_count}, {"max_count", r.max_count}});
  return {{"id", g.id},
          {"manufacturer_model", g.manufacturer_model},
          {"attributions", attributions_json(g.attributions)},
          {"compat", compat}};
}

json to_json(const ContextSpec& c) {
  return {{"id", c.id}, {"organ", organ_names.name(c.organ)}, {"attributions", attributions_json(c.attributions)}};
}

json to_json(const ProtocolSpec& p) {
  json algs = json::array();
  for (const auto& a : p.algorithms) algs.push_back({{"result", a.result}, {"arguments", a.arguments}, {"body", a.body}});
  return {{"id", p.id},
          {"modality", modality_names.name(p.modality)},
          {"algorithms", algs},
          {"attributions", attributions_json(p.attributions)}};
}

json to_json(const NumericalModelSpec& m) {
  json regions = json::array();
  for (const auto& r : m.required_regions) regions.push_back({{"group", r.group}, {"min", r.min}, {"max", r.max}});
  json j{{"id", m.id},
         {"family", m.family},
         {"required_regions", regions},
         {"attributions", attributions_json(m.attributions)}};
  if (m.result_spec)
    j["result_spec"] = {{"field", m.result_spec->field},
                        {"threshold", m.result_spec->threshold},
                        {"direction", direction_names.name(m.result_spec->direction)}};
  return j;
}

json to_json(const Combination& c) {
  return {{"id", c.id},
          {"context", c.context},
          {"power_generator", c.power_generator},
          {"protocol", c.protocol},
          {"numerical_model", c.numerical_model},
          {"allowed_needles", c.allowed_needles},
          {"public", c.is_public}};
}

const std::vector<std::string>& Registry::kinds() {
  static const std::vector<std::string> k{"parameter", "needle",          "power_generator", "context",
                                          "protocol",  "numerical_model", "combination"};
  return k;
}

void Registry::put(const std::string& kind, const std::string& id, const json& doc) {
  auto check = [&](const std::string& doc_id) {
    if (doc_id != id) throw Error(kind + " document id '" + doc_id + "' does not match '" + id + "'");
  };
  if (kind == "parameter") {
    auto p = parameter_from(doc);
    check(p.name);
    parameters[id] = std::move(p);
  } else if (kind == "needle") {
    auto n = needle_from(doc);
    check(n.id);
    needles[id] = std::move(n);
  } else if (kind == "power_generator") {
    auto g = generator_from(doc);
    check(g.id);
    generators[id] = std::move(g);
  } else if (kind == "context") {
    auto c = context_from(doc);
    check(c.id);
    contexts[id] = std::move(c);
  } else if (kind == "protocol") {
    auto p = protocol_from(doc);
    check(p.id);
    protocols[id] = std::move(p);
  } else if (kind == "numerical_model") {
    auto m = model_from(doc);
    check(m.id);
    models[id] = std::move(m);
  } else if (kind == "combination") {
    auto c = combination_from(doc);
    check(c.id);
    combinations[id] = std::move(c);
  } else {
    throw Error("unknown entity kind '" + kind + "'");
  }
}

json Registry::get(const std::string& kind, const std::string& id) const {
  if (kind == "parameter") return to_json(parameter(id));
  if (kind == "needle") return to_json(needle(id));
  if (kind == "power_generator") return to_json(generator(id));
  if (kind == "context") return to_json(context(id));
  if (kind == "protocol") return to_json(protocol(id));
  if (kind == "numerical_model") return to_json(model(id));
  if (kind == "combination") return to_json(combination(id));
  throw Error("unknown entity kind '" + kind + "'");
}

std::vector<std::string> Registry::ids(const std::string& kind) const {
  std::vector<std::string> out;
  auto keys = [&](const auto& m) {
    for (const auto& [k, v] : m) out.push_back(k);
  };
  if (kind == "parameter") keys(parameters);
  else if (kind == "needle") keys(needles);
  else if (kind == "power_generator") keys(generators);
  else if (kind == "context") keys(contexts);
  else if (kind == "protocol") keys(protocols);
  else if (kind == "numerical_model") keys(models);
  else if (kind == "combination") keys(combinations);
  else throw Error("unknown entity kind '" + kind + "'");
  return out;
}

Registry Registry::load(const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(root)) throw Error("entity store '" + root.string() + "' is not a directory");
  Registry r;
  for (const auto& kind : kinds()) {
    fs::path dir = root / kind;
    if (!fs::is_directory(dir)) continue;
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir))
      if (e.path().extension() == ".json") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      std::ifstream in(f);
      json doc;
      try {
        doc = json::parse(in);
      } catch (const json::exception& e) {
        throw Error(f.string() + ": " + e.what());
      }
      try {
        r.put(kind, f.stem().string(), doc);
      } catch (const Error& e) {
        throw Error(f.string() + ": " + e.what());
      }
    }
  }
  return r;
}

void Registry::save(const std::filesystem::path& root) const {
  namespace fs = std::filesystem;
  for (const auto& kind : kinds()) {
    auto list = ids(kind);
    if (list.empty()) continue;
    fs::create_directories(root / kind);
    for (const auto& id : list) {
      std::ofstream out(root / kind / (id + ".json"));
      out << get(kind, id).dump(2) << "\n";
    }
  }
}

const Parameter& Registry::parameter(const std::string& name) const { return lookup(parameters, "parameter", name); }
const NeedleSpec& Registry::needle(const std::string& id) const { return lookup(needles, "needle", id); }
const PowerGeneratorSpec& Registry::generator(const std::string& id) const {
  return lookup(generators, "power_generator", id);
}
const ContextSpec& Registry::context(const std::string& id) const { return lookup(contexts, "context", id); }
const ProtocolSpec& Registry::protocol(const std::string& id) const { return lookup(protocols, "protocol", id); }
const NumericalModelSpec& Registry::model(const std::string& id) const {
  return lookup(models, "numerical_model", id);
}
const Combination& Registry::combination(const std::string& id) const {
  return lookup(combinations, "combination", id);
}

std::string ValidationReport::to_text() const {
  if (ok()) return "ok\n";
  std::string out;
  for (const auto& p : unfillable) out += "unfillable parameter: " + p + "\n";
  for (const auto& c : compat_errors) out += "compat: " + c + "\n";
  return out;
}

ValidationReport validate_combination(const Combination& c, const Registry& r) {
  std::vector<const std::vector<Attribution>*> lists;
  for (const auto& m : global_members(c, r)) lists.push_back(m.attributions);
  for (const auto& id : c.allowed_needles) lists.push_back(&r.needle(id).attributions);

  std::set<std::string> attributed, fillable;
  for (const auto* list : lists)
    for (const auto& a : *list) {
      const auto& p = r.parameter(a.parameter);
      if (a.override_value) typed(p, *a.override_value);
      attributed.insert(a.parameter);
      if (a.override_value || a.editable != Editable::Hidden || p.default_value) fillable.insert(a.parameter);
    }
  ValidationReport report;
  std::set_difference(attributed.begin(), attributed.end(), fillable.begin(), fillable.end(),
                      std::back_inserter(report.unfillable));
  const auto& gen = r.generator(c.power_generator);
  for (const auto& id : c.allowed_needles) {
    bool found = std::any_of(gen.compat.begin(), gen.compat.end(), [&](const CompatRow& row) { return row.needle == id; });
    if (!found) report.compat_errors.push_back("needle '" + id + "' has no compat row in generator '" + gen.id + "'");
  }
  return report;
}

std::string_view to_string(Source s) {
  switch (s) {
    case Source::User: return "user";
    case Source::Needle: return "needle";
    case Source::Protocol: return "protocol";
    case Source::Generator: return "generator";
    case Source::Context: return "context";
    case Source::Model: return "model";
    case Source::Default: return "default";
  }
  return "?";
}

ResolvedParameters resolve_parameters(const Combination& c, const Registry& r, const std::vector<ConcreteNeedle>& needles,
                                      const std::map<std::string, Value>& user_inputs) {
  auto members = global_members(c, r);
  std::map<std::string, std::vector<const Attribution*>> all;
  for (const auto& m : members)
    for (const auto& a : *m.attributions) all[a.parameter].push_back(&a);
  for (const auto& n : needles) {
    if (std::find(c.allowed_needles.begin(), c.allowed_needles.end(), n.spec) == c.allowed_needles.end())
      throw CompatViolation("needle '" + n.spec + "' is not allowed in combination '" + c.id + "'");
    for (const auto& a : r.needle(n.spec).attributions) all[a.parameter].push_back(&a);
  }
  auto editable = [&](const std::string& name) {
    auto it = all.find(name);
    return it != all.end() && std::any_of(it->second.begin(), it->second.end(),
                                          [](const Attribution* a) { return a->editable != Editable::Hidden; });
  };
  auto required = [&](const std::string& name) {
    auto it = all.find(name);
    return it != all.end() && std::any_of(it->second.begin(), it->second.end(),
                                          [](const Attribution* a) { return a->editable == Editable::Required; });
  };
  for (const auto& [name, v] : user_inputs)
    if (!editable(name)) throw Error("parameter '" + name + "' is not editable in combination '" + c.id + "'");
  for (const auto& n : needles)
    for (const auto& [name, v] : n.parameters)
      if (!editable(name)) throw Error("parameter '" + name + "' is not editable in combination '" + c.id + "'");

  auto pick = [&](const std::string& name, const Value* needle_user, const Attribution* needle_attr)
      -> std::optional<ResolvedValue> {
    const auto& p = r.parameter(name);
    if (needle_user) return ResolvedValue{typed(p, *needle_user), Source::User};
    if (auto u = user_inputs.find(name); u != user_inputs.end()) return ResolvedValue{typed(p, u->second), Source::User};
    if (required(name)) throw MissingRequired(name);
    if (needle_attr && needle_attr->override_value) return ResolvedValue{typed(p, *needle_attr->override_value), Source::Needle};
    for (const auto& m : members)
      if (auto* a = find_attr(*m.attributions, name); a && a->override_value)
        return ResolvedValue{typed(p, *a->override_value), m.source};
    if (p.default_value) return ResolvedValue{*p.default_value, Source::Default};
    return std::nullopt;
  };

  ResolvedParameters out;
  std::set<std::string> global_names;
  for (const auto& m : members)
    for (const auto& a : *m.attributions) global_names.insert(a.parameter);
  for (const auto& name : global_names)
    if (auto v = pick(name, nullptr, nullptr)) out.global.emplace(name, *v);
  for (const auto& n : needles) {
    auto& scope = out.needles.emplace_back();
    for (const auto& a : r.needle(n.spec).attributions) {
      auto it = n.parameters.find(a.parameter);
      if (auto v = pick(a.parameter, it == n.parameters.end() ? nullptr : &it->second, &a)) scope.emplace(a.parameter, *v);
    }
  }
  return out;
}

gssa::SimulationDefinition concretize(const Combination& c, const Registry& r, const ConcretizeInputs& in) {
  auto report = validate_combination(c, r);
  if (!report.ok()) throw Error("combination '" + c.id + "' does not validate:\n" + report.to_text());
  const auto& gen = r.generator(c.power_generator);
  std::map<std::string, int> counts;
  for (const auto& n : in.needles) ++counts[n.spec];
  for (const auto& id : c.allowed_needles) {
    for (const auto& row : gen.compat)
      if (row.needle == id && counts[id] > 0 && (counts[id] < row.min_count || counts[id] > row.max_count))
        throw CompatViolation("generator '" + gen.id + "' takes " + std::to_string(row.min_count) + " to " +
                              std::to_string(row.max_count) + " '" + id + "' needles, got " +
                              std::to_string(counts[id]));
  }
  if (in.needles.empty()) throw CompatViolation("at least one needle is required");

  const auto& model = r.model(c.numerical_model);
  for (const auto& req : model.required_regions) {
    int n = static_cast<int>(std::count_if(in.regions.begin(), in.regions.end(),
                                           [&](const gssa::RegionDef& rd) { return rd.group == req.group; }));
    if (n < req.min || n > req.max)
      throw Error("numerical model '" + model.id + "' needs " + std::to_string(req.min) + " to " +
                  std::to_string(req.max) + " regions in group '" + req.group + "', got " + std::to_string(n));
  }

  auto resolved = resolve_parameters(c, r, in.needles, in.user_inputs);
  gssa::SimulationDefinition d;
  d.family = model.family;
  for (const auto& [k, v] : resolved.global) d.parameters[k] = v.value;
  if (model.result_spec) {
    d.parameters["LESION_FIELD"] = model.result_spec->field;
    d.parameters["LESION_THRESHOLD"] = model.result_spec->threshold;
    d.parameters["LESION_DIRECTION"] = direction_names.name(model.result_spec->direction);
  }
  for (std::size_t i = 0; i < in.needles.size(); ++i) {
    const auto& cn = in.needles[i];
    const auto& spec = r.needle(cn.spec);
    gssa::NeedleDef nd;
    nd.index = static_cast<int>(i + 1);
    nd.geometry_class = grid::to_string(spec.geometry);
    nd.tip = cn.tip;
    nd.entry = cn.entry;
    if (cn.tip == cn.entry) throw Error("needle " + std::to_string(nd.index) + " tip and entry coincide");
    nd.parameters["NEEDLE_SHAFT_RADIUS"] = spec.shaft_radius;
    nd.parameters["NEEDLE_ACTIVE_LENGTH"] = spec.active_length;
    nd.parameters["NEEDLE_TINE_COUNT"] = spec.tine_count;
    nd.parameters["NEEDLE_MAX_TINE_EXTENSION"] = spec.max_tine_extension;
    for (const auto& [k, v] : resolved.needles[i]) nd.parameters[k] = v.value;
    d.needles.push_back(std::move(nd));
  }
  d.regions = in.regions;
  d.algorithms = r.protocol(c.protocol).algorithms;
  d.duration = in.duration;
  gssa::validate(d);
  return d;
}

}  // namespace ablasim::domain

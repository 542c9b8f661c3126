#include "ablasim/gssa/definition.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include "ablasim/gssa/xml.hpp"

namespace ablasim::gssa {

void validate(const SimulationDefinition& defn) {
  if (defn.family.empty()) throw Error("simulation family is empty");
  for (std::size_t i = 0; i < defn.needles.size(); ++i)
    if (defn.needles[i].index != static_cast<int>(i) + 1)
      throw Error("needle indices must run 1.." + std::to_string(defn.needles.size()) + " in order");
  std::set<std::string> names;
  for (const auto& r : defn.regions) {
    if (r.name.empty() || r.group.empty()) throw Error("region needs a name and a group");
    if (!names.insert(r.name).second) throw Error("duplicate region '" + r.name + "'");
  }
  if (defn.duration && !(*defn.duration > 0)) throw Error("duration must be positive");
}

namespace {

using Attrs = std::vector<std::pair<std::string, std::string>>;

class Writer {
 public:
  std::string str() const { return out_.str(); }

  void open(int depth, const std::string& name, Attrs attrs, bool empty) {
    indent(depth);
    out_ << '<' << name;
    std::sort(attrs.begin(), attrs.end());
    for (const auto& [k, v] : attrs) out_ << ' ' << k << "=\"" << escape_attribute(v) << '"';
    out_ << (empty ? "/>\n" : ">\n");
  }
  void close(int depth, const std::string& name) {
    indent(depth);
    out_ << "</" << name << ">\n";
  }
  void text_element(int depth, const std::string& name, Attrs attrs, const std::string& text) {
    indent(depth);
    out_ << '<' << name;
    std::sort(attrs.begin(), attrs.end());
    for (const auto& [k, v] : attrs) out_ << ' ' << k << "=\"" << escape_attribute(v) << '"';
    out_ << '>' << escape_text(text) << "</" << name << ">\n";
  }
  void raw(const std::string& s) { out_ << s; }

 private:
  std::ostringstream out_;
  void indent(int depth) {
    for (int i = 0; i < depth; ++i) out_ << "  ";
  }
};

std::string num(double d) { return format_double(d); }

void write_parameters(Writer& w, int depth, const ParameterMap& params) {
  if (params.empty()) {
    w.open(depth, "parameters", {}, true);
    return;
  }
  w.open(depth, "parameters", {}, false);
  for (const auto& [name, v] : params)
    w.open(depth + 1, "parameter",
           {{"name", name}, {"type", std::string(to_string(v.type()))}, {"value", encode_value(v)}}, true);
  w.close(depth, "parameters");
}

Attrs point_attrs(const Vec3& p) { return {{"x", num(p.x)}, {"y", num(p.y)}, {"z", num(p.z)}}; }

void write_shape(Writer& w, int depth, const RegionPayload& payload) {
  std::visit(
      [&](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, MaskFile>) {
          w.open(depth, "mask", {{"file", s.path}}, true);
        } else if constexpr (std::is_same_v<T, grid::Sphere>) {
          w.open(depth, "sphere",
                 {{"cx", num(s.center.x)}, {"cy", num(s.center.y)}, {"cz", num(s.center.z)}, {"radius", num(s.radius)}},
                 true);
        } else if constexpr (std::is_same_v<T, grid::Cylinder>) {
          w.open(depth, "cylinder",
                 {{"sx", num(s.start.x)},
                  {"sy", num(s.start.y)},
                  {"sz", num(s.start.z)},
                  {"ex", num(s.end.x)},
                  {"ey", num(s.end.y)},
                  {"ez", num(s.end.z)},
                  {"radius", num(s.radius)}},
                 true);
        } else {
          w.open(depth, "box",
                 {{"minx", num(s.min.x)},
                  {"miny", num(s.min.y)},
                  {"minz", num(s.min.z)},
                  {"maxx", num(s.max.x)},
                  {"maxy", num(s.max.y)},
                  {"maxz", num(s.max.z)}},
                 true);
        }
      },
      payload);
}

std::string join(const std::vector<std::string>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ' ';
    s += v[i];
  }
  return s;
}

}  // namespace

std::string to_xml(const SimulationDefinition& defn) {
  validate(defn);
  Writer w;
  w.raw("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
  Attrs root{{"family", defn.family}, {"version", "1"}};
  if (defn.duration) root.emplace_back("duration", num(*defn.duration));
  w.open(0, "simulation", root, false);
  write_parameters(w, 1, defn.parameters);

  if (defn.needles.empty()) {
    w.open(1, "needles", {}, true);
  } else {
    w.open(1, "needles", {}, false);
    for (const auto& n : defn.needles) {
      w.open(2, "needle", {{"index", std::to_string(n.index)}, {"class", n.geometry_class}}, false);
      w.open(3, "tip", point_attrs(n.tip), true);
      w.open(3, "entry", point_attrs(n.entry), true);
      write_parameters(w, 3, n.parameters);
      w.close(2, "needle");
    }
    w.close(1, "needles");
  }

  if (defn.regions.empty()) {
    w.open(1, "regions", {}, true);
  } else {
    w.open(1, "regions", {}, false);
    for (const auto& r : defn.regions) {
      w.open(2, "region", {{"name", r.name}, {"group", r.group}}, false);
      write_shape(w, 3, r.payload);
      w.close(2, "region");
    }
    w.close(1, "regions");
  }

  if (defn.algorithms.empty()) {
    w.open(1, "algorithms", {}, true);
  } else {
    w.open(1, "algorithms", {}, false);
    for (const auto& a : defn.algorithms)
      w.text_element(2, "algorithm", {{"result", a.result}, {"arguments", join(a.arguments)}}, a.body);
    w.close(1, "algorithms");
  }
  w.close(0, "simulation");
  return w.str();
}

namespace {

[[noreturn]] void schema_error(const XmlElement& e, const std::string& msg) {
  throw XmlError(XmlErrorKind::Schema, e.line, e.column, msg);
}

void check_attributes(const XmlElement& e, std::initializer_list<const char*> required,
                      std::initializer_list<const char*> optional = {}) {
  for (const auto& [k, v] : e.attributes) {
    bool known = std::any_of(required.begin(), required.end(), [&](const char* r) { return k == r; }) ||
                 std::any_of(optional.begin(), optional.end(), [&](const char* r) { return k == r; });
    if (!known) schema_error(e, "unknown attribute '" + k + "' on <" + e.name + ">");
  }
  for (const char* r : required)
    if (!e.attribute(r)) schema_error(e, "<" + e.name + "> requires attribute '" + r + "'");
}

void check_no_text(const XmlElement& e) {
  if (std::any_of(e.text.begin(), e.text.end(), [](char c) { return c != ' ' && c != '\t' && c != '\n' && c != '\r'; }))
    schema_error(e, "unexpected text inside <" + e.name + ">");
}

void check_leaf(const XmlElement& e) {
  check_no_text(e);
  if (!e.children.empty()) schema_error(e.children.front(), "unexpected element <" + e.children.front().name + ">");
}

double number_attr(const XmlElement& e, const char* key) {
  try {
    return decode_value(*e.attribute(key), ValueType::Float).as_number();
  } catch (const Error& ex) {
    schema_error(e, std::string("attribute '") + key + "': " + ex.what());
  }
}

Vec3 point(const XmlElement& e) {
  check_attributes(e, {"x", "y", "z"});
  check_leaf(e);
  return {number_attr(e, "x"), number_attr(e, "y"), number_attr(e, "z")};
}

ParameterMap read_parameters(const XmlElement& e) {
  check_attributes(e, {});
  check_no_text(e);
  ParameterMap out;
  for (const auto& p : e.children) {
    if (p.name != "parameter") schema_error(p, "unknown element <" + p.name + "> in <parameters>");
    check_attributes(p, {"name", "type", "value"});
    check_leaf(p);
    const std::string& name = *p.attribute("name");
    if (name.empty()) schema_error(p, "empty parameter name");
    auto type = parse_value_type(*p.attribute("type"));
    if (!type) schema_error(p, "unknown parameter type '" + *p.attribute("type") + "'");
    Value v;
    try {
      v = decode_value(*p.attribute("value"), *type);
    } catch (const Error& ex) {
      schema_error(p, "parameter '" + name + "': " + ex.what());
    }
    if (!out.emplace(name, std::move(v)).second) schema_error(p, "duplicate parameter '" + name + "'");
  }
  return out;
}

NeedleDef read_needle(const XmlElement& e) {
  check_attributes(e, {"index", "class"});
  check_no_text(e);
  NeedleDef n;
  try {
    n.index = static_cast<int>(decode_value(*e.attribute("index"), ValueType::Int).as_int());
  } catch (const Error& ex) {
    schema_error(e, std::string("needle index: ") + ex.what());
  }
  n.geometry_class = *e.attribute("class");
  bool tip = false, entry = false, params = false;
  for (const auto& c : e.children) {
    if (c.name == "tip") {
      if (tip) schema_error(c, "duplicate <tip>");
      n.tip = point(c);
      tip = true;
    } else if (c.name == "entry") {
      if (entry) schema_error(c, "duplicate <entry>");
      n.entry = point(c);
      entry = true;
    } else if (c.name == "parameters") {
      if (params) schema_error(c, "duplicate <parameters>");
      n.parameters = read_parameters(c);
      params = true;
    } else {
      schema_error(c, "unknown element <" + c.name + "> in <needle>");
    }
  }
  if (!tip || !entry) schema_error(e, "<needle> requires <tip> and <entry>");
  return n;
}

RegionPayload read_shape(const XmlElement& s) {
  check_leaf(s);
  if (s.name == "mask") {
    check_attributes(s, {"file"});
    return MaskFile{*s.attribute("file")};
  }
  if (s.name == "sphere") {
    check_attributes(s, {"cx", "cy", "cz", "radius"});
    return grid::Sphere{{number_attr(s, "cx"), number_attr(s, "cy"), number_attr(s, "cz")}, number_attr(s, "radius")};
  }
  if (s.name == "cylinder") {
    check_attributes(s, {"sx", "sy", "sz", "ex", "ey", "ez", "radius"});
    return grid::Cylinder{{number_attr(s, "sx"), number_attr(s, "sy"), number_attr(s, "sz")},
                          {number_attr(s, "ex"), number_attr(s, "ey"), number_attr(s, "ez")},
                          number_attr(s, "radius")};
  }
  if (s.name == "box") {
    check_attributes(s, {"minx", "miny", "minz", "maxx", "maxy", "maxz"});
    return grid::Box{{number_attr(s, "minx"), number_attr(s, "miny"), number_attr(s, "minz")},
                     {number_attr(s, "maxx"), number_attr(s, "maxy"), number_attr(s, "maxz")}};
  }
  schema_error(s, "unknown region shape <" + s.name + ">");
}

std::vector<std::string> split_words(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}

}  // namespace

SimulationDefinition from_xml(std::string_view text) {
  XmlElement root = parse_xml(text);
  if (root.name != "simulation") schema_error(root, "root element must be <simulation>, found <" + root.name + ">");
  check_attributes(root, {"family", "version"}, {"duration"});
  check_no_text(root);
  if (*root.attribute("version") != "1") schema_error(root, "unsupported version '" + *root.attribute("version") + "'");

  SimulationDefinition d;
  d.family = *root.attribute("family");
  if (d.family.empty()) schema_error(root, "empty family");
  if (root.attribute("duration")) {
    d.duration = number_attr(root, "duration");
    if (!(*d.duration > 0)) schema_error(root, "duration must be positive");
  }

  std::set<std::string> seen;
  for (const auto& sec : root.children) {
    if (!seen.insert(sec.name).second) schema_error(sec, "duplicate <" + sec.name + "> section");
    if (sec.name == "parameters") {
      d.parameters = read_parameters(sec);
    } else if (sec.name == "needles") {
      check_attributes(sec, {});
      check_no_text(sec);
      for (const auto& n : sec.children) {
        if (n.name != "needle") schema_error(n, "unknown element <" + n.name + "> in <needles>");
        d.needles.push_back(read_needle(n));
        if (d.needles.back().index != static_cast<int>(d.needles.size()))
          schema_error(n, "needle index " + std::to_string(d.needles.back().index) + " out of sequence, expected " +
                              std::to_string(d.needles.size()));
      }
    } else if (sec.name == "regions") {
      check_attributes(sec, {});
      check_no_text(sec);
      std::set<std::string> names;
      for (const auto& r : sec.children) {
        if (r.name != "region") schema_error(r, "unknown element <" + r.name + "> in <regions>");
        check_attributes(r, {"name", "group"});
        check_no_text(r);
        RegionDef rd;
        rd.name = *r.attribute("name");
        rd.group = *r.attribute("group");
        if (rd.name.empty() || rd.group.empty()) schema_error(r, "region name and group must be non-empty");
        if (!names.insert(rd.name).second)
          throw XmlError(XmlErrorKind::DuplicateRegion, r.line, r.column, "duplicate region '" + rd.name + "'");
        if (r.children.size() != 1) schema_error(r, "<region> needs exactly one shape element");
        rd.payload = read_shape(r.children.front());
        d.regions.push_back(std::move(rd));
      }
    } else if (sec.name == "algorithms") {
      check_attributes(sec, {});
      check_no_text(sec);
      for (const auto& a : sec.children) {
        if (a.name != "algorithm") schema_error(a, "unknown element <" + a.name + "> in <algorithms>");
        check_attributes(a, {"result"}, {"arguments"});
        if (!a.children.empty()) schema_error(a.children.front(), "unexpected element inside <algorithm>");
        protocol::AlgorithmDef ad;
        ad.result = *a.attribute("result");
        if (ad.result.empty()) schema_error(a, "empty algorithm result");
        if (auto args = a.attribute("arguments")) ad.arguments = split_words(*args);
        ad.body = a.text;
        d.algorithms.push_back(std::move(ad));
      }
    } else {
      schema_error(sec, "unknown element <" + sec.name + "> in <simulation>");
    }
  }
  return d;
}

namespace {

std::size_t edit_distance(const std::string& a, const std::string& b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      std::size_t sub = prev[j - 1] + (std::toupper(a[i - 1]) == std::toupper(b[j - 1]) ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

std::vector<std::string> near_matches(const std::string& name, const std::vector<const ParameterMap*>& scopes) {
  std::vector<std::pair<std::size_t, std::string>> scored;
  std::size_t limit = std::max<std::size_t>(2, name.size() / 4);
  std::set<std::string> seen;
  for (const auto* m : scopes)
    for (const auto& [k, v] : *m) {
      if (!seen.insert(k).second) continue;
      std::size_t d = edit_distance(name, k);
      if (d <= limit) scored.emplace_back(d, k);
    }
  std::sort(scored.begin(), scored.end());
  std::vector<std::string> out;
  for (std::size_t i = 0; i < scored.size() && i < 5; ++i) out.push_back(scored[i].second);
  return out;
}

[[noreturn]] void unknown(const std::string& name, const std::vector<const ParameterMap*>& scopes) {
  auto near = near_matches(name, scopes);
  std::string msg = "unknown parameter '" + name + "'";
  if (!near.empty()) {
    msg += "; did you mean ";
    for (std::size_t i = 0; i < near.size(); ++i) msg += (i ? ", " : "") + near[i];
    msg += "?";
  }
  throw LookupError(msg, std::move(near));
}

}  // namespace

const Value& param(const SimulationDefinition& defn, const std::string& name) {
  auto it = defn.parameters.find(name);
  if (it == defn.parameters.end()) unknown(name, {&defn.parameters});
  return it->second;
}

bool has_param(const SimulationDefinition& defn, const std::string& name) {
  return defn.parameters.count(name) > 0;
}

const Value& needle_param(const SimulationDefinition& defn, int needle_index, const std::string& name) {
  if (needle_index < 1 || needle_index > static_cast<int>(defn.needles.size()))
    throw Error("no needle with index " + std::to_string(needle_index));
  const auto& local = defn.needles[needle_index - 1].parameters;
  if (auto it = local.find(name); it != local.end()) return it->second;
  if (auto it = defn.parameters.find(name); it != defn.parameters.end()) return it->second;
  unknown(name, {&local, &defn.parameters});
}

std::vector<RegionRef> all_regions(const SimulationDefinition& defn) {
  std::vector<RegionRef> out;
  for (std::size_t i = 0; i < defn.regions.size(); ++i) {
    const auto& r = defn.regions[i];
    out.push_back({r.name, r.group, static_cast<int>(i) + 1, &r.payload});
  }
  return out;
}

std::vector<RegionRef> regions_in_group(const SimulationDefinition& defn, const std::string& group) {
  std::vector<RegionRef> out;
  for (auto& r : all_regions(defn))
    if (r.group == group) out.push_back(r);
  return out;
}

std::vector<protocol::ProtocolProgram> link_algorithms(const SimulationDefinition& defn) {
  std::set<std::string> names;
  for (const auto& [k, v] : defn.parameters) names.insert(k);
  for (const auto& n : defn.needles)
    for (const auto& [k, v] : n.parameters) names.insert(k);
  std::vector<protocol::ProtocolProgram> out;
  for (const auto& a : defn.algorithms) {
    auto prog = protocol::parse_protocol(a.body);
    std::set<std::string> extra(a.arguments.begin(), a.arguments.end());
    extra.insert(a.result);
    protocol::link_protocol(prog, names, extra);
    out.push_back(std::move(prog));
  }
  return out;
}

}  // namespace ablasim::gssa

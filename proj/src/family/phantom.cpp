#include "ablasim/family/phantom.hpp"

#include <fstream>

namespace ablasim::family {

using nlohmann::json;

namespace {

Vec3 point(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 3 || !j[0].is_number() || !j[1].is_number() || !j[2].is_number())
    throw Error(where + " must be a list of three numbers");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

double number(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key) || !j[key].is_number()) throw Error(where + ": '" + key + "' must be a number");
  return j[key].get<double>();
}

const json& field(const json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) throw Error(where + ": missing '" + key + "'");
  return j[key];
}

}  // namespace

PhantomSpec parse_phantom(const json& j) {
  PhantomSpec spec;
  const auto& g = field(j, "grid", "phantom");
  const auto& dims = field(g, "dimensions", "phantom grid");
  if (!dims.is_array() || dims.size() != 3) throw Error("phantom grid: 'dimensions' must list three counts");
  std::array<int, 3> n{};
  for (int a = 0; a < 3; ++a) {
    if (!dims[a].is_number_integer() || dims[a].get<int>() < 1) throw Error("phantom grid: dimensions must be positive integers");
    n[a] = dims[a].get<int>();
  }
  double h = number(g, "spacing", "phantom grid");
  Vec3 origin = g.contains("origin") ? point(g["origin"], "phantom grid origin")
                                     : Vec3{-0.5 * h * (n[0] - 1), -0.5 * h * (n[1] - 1), -0.5 * h * (n[2] - 1)};
  spec.grid = grid::VoxelGrid(n, h, origin);

  for (const auto& r : field(j, "regions", "phantom")) {
    gssa::RegionDef def;
    if (!r.contains("name") || !r["name"].is_string()) throw Error("phantom region needs a name");
    def.name = r["name"].get<std::string>();
    std::string where = "phantom region " + def.name;
    if (!r.contains("group") || !r["group"].is_string()) throw Error(where + ": missing group");
    def.group = r["group"].get<std::string>();
    const auto& s = field(r, "shape", where);
    std::string type = field(s, "type", where).get<std::string>();
    if (type == "sphere") {
      def.payload = grid::Sphere{point(field(s, "center", where), where + " center"), number(s, "radius", where)};
    } else if (type == "cylinder") {
      def.payload = grid::Cylinder{point(field(s, "start", where), where + " start"),
                                   point(field(s, "end", where), where + " end"), number(s, "radius", where)};
    } else if (type == "box") {
      def.payload = grid::Box{point(field(s, "min", where), where + " min"), point(field(s, "max", where), where + " max")};
    } else {
      throw Error(where + ": unknown shape type '" + type + "'");
    }
    spec.regions.push_back(std::move(def));
  }
  return spec;
}

PhantomSpec load_phantom(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open phantom spec '" + path.string() + "'");
  try {
    return parse_phantom(json::parse(in));
  } catch (const json::exception& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

void apply_phantom(gssa::SimulationDefinition& defn, const PhantomSpec& spec) {
  const auto& g = spec.grid;
  defn.parameters["GRID_DIMENSIONS"] = FloatList{double(g.nx()), double(g.ny()), double(g.nz())};
  defn.parameters["GRID_SPACING"] = g.spacing();
  defn.parameters["GRID_ORIGIN"] = FloatList{g.origin().x, g.origin().y, g.origin().z};
  defn.regions.insert(defn.regions.end(), spec.regions.begin(), spec.regions.end());
}

}  // namespace ablasim::family

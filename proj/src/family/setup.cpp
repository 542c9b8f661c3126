#include "ablasim/family/setup.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "ablasim/grid/io.hpp"

namespace ablasim::family {

using gssa::SimulationDefinition;

namespace {

double as_number_named(const Value& v, const std::string& name) {
  try {
    return v.as_number();
  } catch (const Error& e) {
    throw Error("parameter '" + name + "': " + e.what());
  }
}

std::string upper(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::toupper(c); });
  return s;
}

}  // namespace

double number(const SimulationDefinition& defn, const std::string& name) {
  return as_number_named(gssa::param(defn, name), name);
}

double number_or(const SimulationDefinition& defn, const std::string& name, double fallback) {
  return gssa::has_param(defn, name) ? number(defn, name) : fallback;
}

std::string string_or(const SimulationDefinition& defn, const std::string& name, const std::string& fallback) {
  if (!gssa::has_param(defn, name)) return fallback;
  const Value& v = gssa::param(defn, name);
  if (v.type() != ValueType::String) throw Error("parameter '" + name + "' must be a string");
  return v.as_string();
}

double needle_number(const SimulationDefinition& defn, int needle, const std::string& name) {
  return as_number_named(gssa::needle_param(defn, needle, name), name);
}

double needle_number_or(const SimulationDefinition& defn, int needle, const std::string& name, double fallback) {
  const auto& local = defn.needles.at(needle - 1).parameters;
  if (local.count(name) || gssa::has_param(defn, name)) return needle_number(defn, needle, name);
  return fallback;
}

grid::VoxelGrid grid_from(const SimulationDefinition& defn) {
  const Value& dv = gssa::param(defn, "GRID_DIMENSIONS");
  if (dv.type() != ValueType::FloatList || dv.as_float_list().size() != 3)
    throw Error("parameter 'GRID_DIMENSIONS' must be a float_list of three counts");
  std::array<int, 3> dims{};
  for (int a = 0; a < 3; ++a) {
    double d = dv.as_float_list()[a];
    if (d != std::floor(d) || d < 2 || d > 4096) throw Error("parameter 'GRID_DIMENSIONS' has an invalid count");
    dims[a] = static_cast<int>(d);
  }
  double h = number(defn, "GRID_SPACING");
  Vec3 origin{-h * (dims[0] - 1) / 2, -h * (dims[1] - 1) / 2, -h * (dims[2] - 1) / 2};
  if (gssa::has_param(defn, "GRID_ORIGIN")) {
    const Value& ov = gssa::param(defn, "GRID_ORIGIN");
    if (ov.type() != ValueType::FloatList || ov.as_float_list().size() != 3)
      throw Error("parameter 'GRID_ORIGIN' must be a float_list of three coordinates");
    origin = {ov.as_float_list()[0], ov.as_float_list()[1], ov.as_float_list()[2]};
  }
  return grid::VoxelGrid(dims, h, origin);
}

std::set<std::uint16_t> ModelInputs::labels_in(std::initializer_list<const char*> groups) const {
  std::set<std::uint16_t> out;
  for (std::size_t l = 0; l < label_group.size(); ++l)
    for (const char* g : groups)
      if (label_group[l] == g) out.insert(static_cast<std::uint16_t>(l));
  return out;
}

grid::Mask ModelInputs::tissue() const {
  auto allowed = labels_in({"organ", "tumour"});
  grid::Mask m(grid);
  for (std::size_t n = 0; n < grid.size(); ++n)
    if (allowed.count(labels[n])) m.set(n);
  return m;
}

std::vector<std::size_t> ModelInputs::voxels_in(std::initializer_list<const char*> groups) const {
  auto allowed = labels_in(groups);
  std::vector<std::size_t> out;
  for (std::size_t n = 0; n < grid.size(); ++n)
    if (allowed.count(labels[n])) out.push_back(n);
  return out;
}

ModelInputs build_model(const SimulationDefinition& defn, const std::filesystem::path& base_dir) {
  ModelInputs m;
  m.grid = grid_from(defn);
  m.label_group.push_back("background");
  std::vector<grid::PhantomRegion> regions;
  for (const auto& r : gssa::all_regions(defn)) {
    m.label_group.push_back(r.group);
    grid::Shape shape = std::visit(
        [&](const auto& p) -> grid::Shape {
          using T = std::decay_t<decltype(p)>;
          if constexpr (std::is_same_v<T, gssa::MaskFile>) {
            return grid::load_mask(base_dir / p.path);
          } else {
            return p;
          }
        },
        *r.payload);
    regions.push_back({static_cast<std::uint16_t>(r.idx), std::move(shape)});
  }
  auto painted = grid::build_phantom(regions, m.grid);
  m.labels = std::move(painted.labels);
  m.warnings = std::move(painted.warnings);
  return m;
}

double tissue_number(const SimulationDefinition& defn, const std::string& group, const std::string& quantity,
                     double fallback) {
  std::string specific = upper(group) + "_" + quantity;
  if (gssa::has_param(defn, specific)) return number(defn, specific);
  return number_or(defn, "TISSUE_" + quantity, fallback);
}

double tissue_number(const SimulationDefinition& defn, const std::string& group, const std::string& quantity) {
  std::string specific = upper(group) + "_" + quantity;
  if (gssa::has_param(defn, specific)) return number(defn, specific);
  return number(defn, "TISSUE_" + quantity);
}

thermal::CellDeathParams cell_death_from(const SimulationDefinition& defn) {
  thermal::CellDeathParams p;
  p.forward_rate = number(defn, "CELL_DEATH_FORWARD_RATE");
  p.backward_rate = number(defn, "CELL_DEATH_BACKWARD_RATE");
  p.temperature_scale = number(defn, "CELL_DEATH_TEMPERATURE_SCALE");
  p.threshold = number_or(defn, "CELL_DEATH_THRESHOLD", 0.8);
  p.initial_alive = number_or(defn, "CELL_DEATH_INITIAL_ALIVE", 0.99);
  p.validate();
  return p;
}

thermal::BioheatSetup bioheat_setup(const SimulationDefinition& defn, const ModelInputs& model) {
  thermal::BioheatSetup s;
  s.labels = model.labels;
  for (const auto& group : model.label_group) {
    thermal::TissueProperties t;
    t.density = tissue_number(defn, group, "DENSITY", 1060);
    t.specific_heat = tissue_number(defn, group, "SPECIFIC_HEAT_CAPACITY", 3600);
    t.conductivity = tissue_number(defn, group, "THERMAL_CONDUCTIVITY", 0.512);
    t.perfusion_rate = tissue_number(defn, group, "PERFUSION_RATE", 0.0064);
    if (!(t.density > 0 && t.specific_heat > 0 && t.conductivity > 0 && t.perfusion_rate >= 0))
      throw Error("non-physical tissue constants for group '" + group + "'");
    s.tissue.push_back(t);
  }
  s.blood.density = number_or(defn, "BLOOD_DENSITY", 1060);
  s.blood.specific_heat = number_or(defn, "BLOOD_SPECIFIC_HEAT_CAPACITY", 3639);
  s.body_temperature = number_or(defn, "BODY_TEMPERATURE", 37);
  s.cell_death = cell_death_from(defn);
  std::string mode = string_or(defn, "PERFUSION_MODE", "dead_gated");
  if (mode == "dead_gated") s.perfusion_mode = thermal::PerfusionMode::DeadGated;
  else if (mode == "alive_gated") s.perfusion_mode = thermal::PerfusionMode::AliveGated;
  else throw Error("parameter 'PERFUSION_MODE' must be 'dead_gated' or 'alive_gated'");
  std::string boundary = string_or(defn, "THERMAL_BOUNDARY", "dirichlet");
  thermal::BoundaryKind kind;
  if (boundary == "dirichlet") kind = thermal::BoundaryKind::Dirichlet;
  else if (boundary == "insulated") kind = thermal::BoundaryKind::Insulated;
  else throw Error("parameter 'THERMAL_BOUNDARY' must be 'dirichlet' or 'insulated'");
  s.boundary = {kind, kind, kind};
  return s;
}

grid::NeedleGeometry needle_geometry(const SimulationDefinition& defn, int needle) {
  return grid::parse_needle_geometry(defn.needles.at(needle - 1).geometry_class);
}

Vec3 entry_in_grid(const gssa::NeedleDef& needle, const grid::VoxelGrid& grid) {
  if (!grid.contains(needle.tip)) throw Error("needle " + std::to_string(needle.index) + " tip lies outside the grid");
  if (grid.contains(needle.entry)) return needle.entry;
  double lo = 0, hi = 1;  // fraction from tip towards entry
  for (int it = 0; it < 60; ++it) {
    double mid = 0.5 * (lo + hi);
    if (grid.contains(needle.tip + (needle.entry - needle.tip) * mid)) lo = mid;
    else hi = mid;
  }
  return needle.tip + (needle.entry - needle.tip) * lo;
}

grid::NeedleShape needle_shape(const SimulationDefinition& defn, int needle) {
  grid::NeedleShape s;
  s.shaft_radius = needle_number_or(defn, needle, "NEEDLE_SHAFT_RADIUS", 0.00075);
  s.active_length = needle_number_or(defn, needle, "NEEDLE_ACTIVE_LENGTH", 0.02);
  s.tine_count = static_cast<int>(needle_number_or(defn, needle, "NEEDLE_TINE_COUNT", 9));
  s.max_tine_extension = needle_number_or(defn, needle, "NEEDLE_MAX_TINE_EXTENSION", 0.02);
  if (!(s.shaft_radius > 0) || !(s.active_length >= 0) || s.tine_count < 1 || !(s.max_tine_extension >= 0))
    throw Error("invalid needle geometry parameters for needle " + std::to_string(needle));
  return s;
}

}  // namespace ablasim::family

#include "ablasim/family/runner.hpp"

#include <algorithm>
#include <fstream>

#include "ablasim/em/ire.hpp"
#include "ablasim/em/mwa.hpp"
#include "ablasim/family/cryo_run.hpp"
#include "ablasim/grid/io.hpp"
#include "ablasim/grid/ops.hpp"
#include "ablasim/rfa/rfa.hpp"

namespace ablasim::family {

namespace fs = std::filesystem;

namespace {

struct Outputs {
  std::map<std::string, grid::ScalarField> fields;
  grid::Mask lesion;
  std::string history;
  double time{0};
};

std::string csv_cell(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
  return out + "\"";
}

std::optional<grid::Mask> custom_lesion(const gssa::SimulationDefinition& defn, const ModelInputs& model,
                                        const std::map<std::string, grid::ScalarField>& fields) {
  if (!gssa::has_param(defn, "LESION_FIELD")) return std::nullopt;
  std::string name = string_or(defn, "LESION_FIELD", "");
  double threshold = number(defn, "LESION_THRESHOLD");
  std::string dir = string_or(defn, "LESION_DIRECTION", "at_least");
  grid::Compare cmp;
  if (dir == "at_least") cmp = grid::Compare::GreaterEqual;
  else if (dir == "at_most") cmp = grid::Compare::LessEqual;
  else throw Error("parameter 'LESION_DIRECTION' must be 'at_least' or 'at_most'");
  auto it = fields.find(name);
  if (it == fields.end()) {
    std::string names;
    for (const auto& [k, v] : fields) names += (names.empty() ? "" : ", ") + k;
    throw Error("LESION_FIELD '" + name + "' is not produced by family " + defn.family + " (available: " + names + ")");
  }
  return grid::isovolume(it->second, threshold, cmp, grid::Restriction{&model.labels, model.labels_in({"organ", "tumour"})});
}

Outputs run_rfa_family(const gssa::SimulationDefinition& defn, const ModelInputs& model, const Progress& p) {
  auto r = rfa::run_rfa(defn, model, p);
  Outputs o;
  o.fields["temperature"] = r.state.temperature;
  o.fields["dead"] = r.state.dead;
  o.lesion = r.lesion;
  std::ostringstream csv;
  rfa::write_history_csv(csv, r.history);
  o.history = csv.str();
  o.time = r.state.time;
  return o;
}

Outputs run_mwa_family(const gssa::SimulationDefinition& defn, const ModelInputs& model, const Progress& p) {
  auto r = em::couple_mwa(defn, model, p);
  Outputs o;
  o.fields["temperature"] = r.state.temperature;
  o.fields["dead"] = r.state.dead;
  o.fields["sar"] = r.sar;
  o.lesion = r.lesion;
  std::string csv = "time,phase,power,temperature_max,lesion_voxels\n";
  for (const auto& row : r.history)
    csv += format_double(row.time) + "," + csv_cell(row.phase) + "," + format_double(row.power) + "," +
           format_double(row.temperature_max) + "," + std::to_string(row.lesion_voxels) + "\n";
  o.history = csv;
  o.time = r.state.time;
  return o;
}

Outputs run_cryo_family(const gssa::SimulationDefinition& defn, const ModelInputs& model, const Progress& p) {
  auto r = run_cryo(defn, model, p);
  Outputs o;
  o.fields["temperature"] = r.state.temperature;
  o.fields["minimum_temperature"] = r.minimum_temperature;
  o.lesion = r.lesion;
  std::string csv = "time,phase,flow_rate,probe_temperature,temperature_min,lesion_voxels\n";
  for (const auto& row : r.history)
    csv += format_double(row.time) + "," + csv_cell(row.phase) + "," + format_double(row.flow_rate) + "," +
           format_double(row.probe_temperature) + "," + format_double(row.temperature_min) + "," +
           std::to_string(row.lesion_voxels) + "\n";
  o.history = csv;
  o.time = r.state.time;
  return o;
}

Outputs run_ire_family(const gssa::SimulationDefinition& defn, const ModelInputs& model, const Progress& p) {
  auto pairings = em::parse_pairings(gssa::param(defn, "CONSTANT_IRE_NEEDLEPAIR_VOLTAGE"),
                                     static_cast<int>(defn.needles.size()));
  auto r = em::run_ire(defn, model, p);
  Outputs o;
  o.fields["field_max"] = r.e_max;
  o.lesion = r.lesion;
  std::string csv = "pairing,anode,cathode,voltage\n";
  for (std::size_t i = 0; i < pairings.size(); ++i)
    csv += std::to_string(i + 1) + "," + std::to_string(pairings[i].anode) + "," +
           std::to_string(pairings[i].cathode) + "," + format_double(pairings[i].voltage) + "\n";
  o.history = csv;
  return o;
}

using Runner = Outputs (*)(const gssa::SimulationDefinition&, const ModelInputs&, const Progress&);

const std::map<std::string, Runner>& runners() {
  static const std::map<std::string, Runner> r{{"bioheat_rfa", run_rfa_family},
                                               {"bioheat_mwa", run_mwa_family},
                                               {"cryo_effective_capacity", run_cryo_family},
                                               {"ire_potential", run_ire_family}};
  return r;
}

}  // namespace

nlohmann::json RunSummary::to_json() const {
  nlohmann::ordered_json j;
  j["family"] = family;
  j["lesion_voxels"] = lesion_voxels;
  j["lesion_volume_ml"] = lesion_volume_ml;
  j["simulated_time"] = simulated_time;
  j["artifacts"] = artifacts;
  j["warnings"] = warnings;
  return j;
}

const std::vector<std::string>& registered_families() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> v;
    for (const auto& [k, r] : runners()) v.push_back(k);
    return v;
  }();
  return names;
}

bool is_registered(const std::string& family) { return runners().count(family) > 0; }

RunSummary run_definition(const gssa::SimulationDefinition& defn, const fs::path& base_dir, const fs::path& out_dir,
                          const Progress& progress) {
  auto it = runners().find(defn.family);
  if (it == runners().end()) throw Error("unknown numerical model family '" + defn.family + "'");
  gssa::validate(defn);
  auto model = build_model(defn, base_dir);
  auto out = it->second(defn, model, progress);
  if (auto custom = custom_lesion(defn, model, out.fields)) out.lesion = *custom;

  fs::create_directories(out_dir);
  RunSummary s;
  s.family = defn.family;
  s.warnings = model.warnings;
  s.simulated_time = out.time;
  s.lesion_voxels = out.lesion.count();
  double h = model.grid.spacing();
  s.lesion_volume_ml = static_cast<double>(s.lesion_voxels) * h * h * h * 1e6;

  grid::save_mask(out_dir / "lesion.gsmask", out.lesion);
  s.artifacts.push_back("lesion.gsmask");
  for (const auto& [name, f] : out.fields) {
    grid::save_field(out_dir / (name + ".gsfld"), f);
    s.artifacts.push_back(name + ".gsfld");
  }
  {
    std::ofstream csv(out_dir / "history.csv", std::ios::binary);
    csv << out.history;
  }
  s.artifacts.push_back("history.csv");
  s.artifacts.push_back("summary.json");
  std::ofstream(out_dir / "summary.json", std::ios::binary) << s.to_json().dump(2) << "\n";
  if (progress) progress(1.0, "finished");
  return s;
}

}  // namespace ablasim::family

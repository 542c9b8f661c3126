#include "ablasim/family/cryo_run.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

#include "ablasim/grid/ops.hpp"
#include "ablasim/protocol/protocol.hpp"

namespace ablasim::family {

double flow_to_temperature(const FloatList& table, double flow) {
  if (table.size() < 2 || table.size() % 2) throw Error("flow/temperature table needs (flow, temperature) pairs");
  std::size_t n = table.size() / 2;
  for (std::size_t i = 1; i < n; ++i)
    if (!(table[2 * i] > table[2 * i - 2])) throw Error("flow/temperature table must have increasing flow values");
  if (flow <= table[0]) return table[1];
  if (flow >= table[2 * n - 2]) return table[2 * n - 1];
  for (std::size_t i = 1; i < n; ++i)
    if (flow <= table[2 * i]) {
      double x0 = table[2 * i - 2], y0 = table[2 * i - 1], x1 = table[2 * i], y1 = table[2 * i + 1];
      return y0 + (y1 - y0) * (flow - x0) / (x1 - x0);
    }
  return table[2 * n - 1];
}

CryoResult run_cryo(const gssa::SimulationDefinition& defn, const ModelInputs& model,
                    const std::function<void(double, const std::string&)>& progress) {
  if (defn.needles.empty()) throw Error("cryoablation run needs at least one probe");
  const auto& G = model.grid;

  thermal::CryoMaterial mat;
  mat.solid_heat_capacity = number_or(defn, "CRYO_SOLID_HEAT_CAPACITY", mat.solid_heat_capacity);
  mat.liquid_heat_capacity = number_or(defn, "CRYO_LIQUID_HEAT_CAPACITY", mat.liquid_heat_capacity);
  mat.solid_conductivity = number_or(defn, "CRYO_SOLID_CONDUCTIVITY", mat.solid_conductivity);
  mat.liquid_conductivity = number_or(defn, "CRYO_LIQUID_CONDUCTIVITY", mat.liquid_conductivity);
  mat.latent_heat = number_or(defn, "CRYO_LATENT_HEAT", mat.latent_heat);
  mat.solidus = number_or(defn, "CRYO_SOLIDUS", mat.solidus);
  mat.liquidus = number_or(defn, "CRYO_LIQUIDUS", mat.liquidus);
  mat.validate();
  std::string kmode = string_or(defn, "CRYO_CONDUCTIVITY_MODE", "half_slope");
  thermal::ConductivityMode mode;
  if (kmode == "half_slope") mode = thermal::ConductivityMode::HalfSlope;
  else if (kmode == "continuous") mode = thermal::ConductivityMode::Continuous;
  else throw Error("parameter 'CRYO_CONDUCTIVITY_MODE' must be 'half_slope' or 'continuous'");
  const double isotherm = number(defn, "CRYO_LESION_ISOTHERM");
  const double tick = number_or(defn, "CRYO_TICK", 1.0);
  const double max_duration = number_or(defn, "MAX_DURATION", 3600);
  if (!(tick > 0)) throw Error("parameter 'CRYO_TICK' must be positive");

  thermal::BioheatSolver solver(bioheat_setup(defn, model));
  solver.set_pinned(model.voxels_in({"vessels"}));

  struct Probe {
    std::vector<std::size_t> voxels;
    FloatList table;
    Vec3 tip;
  };
  std::vector<Probe> probes;
  for (const auto& n : defn.needles) {
    auto shape = needle_shape(defn, n.index);
    auto raster = grid::rasterize_needle(n.tip, entry_in_grid(n, G), grid::NeedleGeometry::StraightMonopolar, shape,
                                         0.0, G);
    Probe p;
    p.voxels = raster.electrode.empty() ? raster.shaft : raster.electrode;
    p.tip = n.tip;
    const auto& local = n.parameters;
    if (local.count("CRYO_FLOW_TEMPERATURE_TABLE") || gssa::has_param(defn, "CRYO_FLOW_TEMPERATURE_TABLE")) {
      const Value& v = gssa::needle_param(defn, n.index, "CRYO_FLOW_TEMPERATURE_TABLE");
      if (v.type() != ValueType::FloatList) throw Error("parameter 'CRYO_FLOW_TEMPERATURE_TABLE' must be a float_list");
      p.table = v.as_float_list();
    } else {
      p.table = {0.0, 37.0, 1.0, -150.0};
    }
    flow_to_temperature(p.table, 0.0);
    probes.push_back(std::move(p));
  }

  std::optional<protocol::ProtocolProgram> program;
  protocol::EvalContext ctx;
  ctx.parameters = &defn.parameters;
  double end_time = 0;
  if (!defn.algorithms.empty()) {
    const protocol::AlgorithmDef* alg = &defn.algorithms.front();
    for (const auto& a : defn.algorithms)
      if (a.result == "flow_rate") alg = &a;
    program = protocol::parse_protocol(alg->body);
    std::set<std::string> names;
    for (const auto& [k, v] : defn.parameters) names.insert(k);
    protocol::link_protocol(*program, names, std::set<std::string>(alg->arguments.begin(), alg->arguments.end()));
    ctx.variables["flow_rate"] = number_or(defn, "CRYO_FLOW_RATE", 0.0);
  } else {
    if (!defn.duration) throw Error("cryoablation run without a protocol needs a duration");
    end_time = *defn.duration;
  }
  const double constant_flow = number_or(defn, "CRYO_FLOW_RATE", 1.0);
  const double horizon = program ? defn.duration.value_or(max_duration) : end_time;

  CryoResult result;
  result.state = solver.initial_state();
  auto& state = result.state;
  result.minimum_temperature = state.temperature;

  // Stability bound over the whole property range: frozen and unfrozen extremes.
  grid::ScalarField probe_t(G, mat.solidus - 1), warm_t(G, mat.liquidus + 1), mushy_t(G, 0.5 * (mat.solidus + mat.liquidus));
  double limit = std::min({thermal::cryo_stability_limit(solver, probe_t, mat, mode),
                           thermal::cryo_stability_limit(solver, warm_t, mat, mode),
                           thermal::cryo_stability_limit(solver, mushy_t, mat, mode), solver.stability_limit()});
  const int substeps = std::max(1, static_cast<int>(std::ceil(tick / (0.9 * limit))));
  const double dt = tick / substeps;
  const auto tissue = model.labels_in({"organ", "tumour"});

  for (;;) {
    double flow = constant_flow;
    std::string phase = "constant";
    double tmin = *std::min_element(state.temperature.values.begin(), state.temperature.values.end());
    double tmax = *std::max_element(state.temperature.values.begin(), state.temperature.values.end());
    if (program) {
      double tip_avg = 0;
      for (const auto& p : probes) tip_avg += state.temperature.sample(p.tip);
      tip_avg /= probes.size();
      ctx.time = state.time;
      ctx.variables["time"] = state.time;
      ctx.variables["phase"] = static_cast<double>(ctx.phase);
      ctx.variables["temperature_avg"] = tip_avg;
      ctx.variables["temperature_max"] = tmax;
      auto r = protocol::tick(*program, ctx);
      if (r.terminated) break;
      if (state.time >= max_duration)
        throw Error("protocol did not reach END within MAX_DURATION (" + format_double(max_duration) + " s)");
      ctx.variables = std::move(r.variables);
      ctx.phase = r.phase;
      flow = std::clamp(ctx.variables["flow_rate"], 0.0, 1.0);
      phase = program->phases[ctx.phase].name;
    } else if (state.time >= end_time - 1e-9 * tick) {
      break;
    }

    std::vector<thermal::ProbeSink> sinks;
    double probe_avg = 0;
    for (const auto& p : probes) {
      double t = flow_to_temperature(p.table, flow);
      sinks.push_back({p.voxels, t});
      probe_avg += t;
    }
    probe_avg /= probes.size();
    for (int s = 0; s < substeps; ++s) {
      thermal::step_cryo(solver, state, mat, sinks, dt, mode);
      for (std::size_t n = 0; n < G.size(); ++n)
        result.minimum_temperature[n] = std::min(result.minimum_temperature[n], state.temperature[n]);
    }
    tmin = *std::min_element(state.temperature.values.begin(), state.temperature.values.end());
    std::size_t lesion = 0;
    for (std::size_t n = 0; n < G.size(); ++n)
      if (result.minimum_temperature[n] <= isotherm && tissue.count(model.labels[n])) ++lesion;
    result.history.push_back({state.time, phase, flow, probe_avg, tmin, lesion});
    if (progress) progress(std::min(1.0, state.time / horizon), "t=" + format_double(state.time) + " s, " + phase);
  }
  result.lesion = grid::isovolume(result.minimum_temperature, isotherm, grid::Compare::LessEqual,
                                  grid::Restriction{&model.labels, tissue});
  return result;
}

}  // namespace ablasim::family

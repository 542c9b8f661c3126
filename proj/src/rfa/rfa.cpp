#include "ablasim/rfa/rfa.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "ablasim/grid/ops.hpp"
#include "ablasim/protocol/protocol.hpp"

namespace ablasim::rfa {

Deposition gaussian_deposition(const GaussianSource& source, double total_power, const grid::VoxelGrid& grid) {
  if (source.centers.empty()) throw Error("Gaussian deposition needs at least one center");
  if (!(source.sigma > 0)) throw Error("Gaussian width must be positive");
  if (!(total_power >= 0)) throw Error("deposited power must be non-negative");
  for (const auto& c : source.centers)
    if (!grid.contains(c)) throw Error("Gaussian center lies outside the grid");

  Deposition out{grid::ScalarField(grid, 0.0, grid::Quantity::Sar), {}};
  const double h3 = grid.spacing() * grid.spacing() * grid.spacing();
  const double inv = 1.0 / (2 * source.sigma * source.sigma);
  const double share = total_power / static_cast<double>(source.centers.size());
  std::vector<double> g(grid.size());
  for (const auto& c : source.centers) {
    double sum = 0;
    for (std::size_t n = 0; n < grid.size(); ++n) {
      Vec3 d = grid.center(n) - c;
      g[n] = std::exp(-d.dot(d) * inv);
      sum += g[n];
    }
    double a = share / (sum * h3);
    out.amplitudes.push_back(a);
    for (std::size_t n = 0; n < grid.size(); ++n) out.q[n] += a * g[n];
  }
  return out;
}

double pid_step(PidController& c, double measured, double dt) {
  if (!(dt > 0)) throw Error("PID step needs dt > 0");
  double error = c.setpoint - measured;
  double p = c.kp * error;
  double d = c.last_measurement ? -c.kd * (measured - *c.last_measurement) / dt : 0.0;
  c.last_measurement = measured;
  double candidate = c.integral + c.ki * error * dt;
  double raw = p + candidate + d;
  if (raw > c.out_max && error > 0)
    c.integral = std::max(c.integral, std::min(candidate, c.out_max - p - d));
  else if (raw < c.out_min && error < 0)
    c.integral = std::min(c.integral, std::max(candidate, c.out_min - p - d));
  else
    c.integral = candidate;
  return std::clamp(p + c.integral + d, c.out_min, c.out_max);
}

void write_history_csv(std::ostream& out, const std::vector<HistoryRow>& rows) {
  out << "time,phase,power,tine_temperature_avg,tine_temperature_min,lesion_voxels\n";
  for (const auto& r : rows)
    out << format_double(r.time) << ',' << r.phase << ',' << format_double(r.power) << ','
        << format_double(r.tine_temperature_avg) << ',' << format_double(r.tine_temperature_min) << ','
        << r.lesion_voxels << '\n';
}

namespace {

struct Probe {
  double avg, min, max;
};

Probe read_thermocouples(const grid::ScalarField& t, const std::vector<Vec3>& tips) {
  Probe p{0, 1e300, -1e300};
  for (const auto& x : tips) {
    double v = t.sample(x);
    p.avg += v;
    p.min = std::min(p.min, v);
    p.max = std::max(p.max, v);
  }
  p.avg /= static_cast<double>(tips.size());
  return p;
}

const protocol::AlgorithmDef& power_algorithm(const gssa::SimulationDefinition& defn) {
  for (const auto& a : defn.algorithms)
    if (a.result == "power") return a;
  if (defn.algorithms.empty()) throw Error("RFA run needs a protocol algorithm");
  return defn.algorithms.front();
}

}  // namespace

RfaResult run_rfa(const gssa::SimulationDefinition& defn, const family::ModelInputs& model,
                  const Progress& progress) {
  std::vector<int> needles;
  for (const auto& n : defn.needles)
    if (family::needle_geometry(defn, n.index) == grid::NeedleGeometry::ExtensibleTines) needles.push_back(n.index);
  if (needles.empty()) throw Error("RFA run needs an extensible_tines needle");

  const auto& algorithm = power_algorithm(defn);
  auto program = protocol::parse_protocol(algorithm.body);
  std::set<std::string> names;
  for (const auto& [k, v] : defn.parameters) names.insert(k);
  std::set<std::string> extra(algorithm.arguments.begin(), algorithm.arguments.end());
  extra.insert({"extension", "target_temperature"});
  protocol::link_protocol(program, names, extra);

  const double tick = family::number_or(defn, "RFA_TICK", 1.0);
  const double max_duration = family::number_or(defn, "MAX_DURATION", 3600);
  const double max_power = family::number_or(defn, "RFA_MAX_POWER", 250);
  const double impedance = family::number_or(defn, "IMPEDANCE", 50);
  if (!(tick > 0) || !(max_duration > 0) || !(max_power >= 0)) throw Error("invalid RFA timing or power limits");

  GaussianSource source;
  source.sigma = family::needle_number_or(defn, needles.front(), "RFA_GAUSSIAN_SIGMA", 0.0025);

  PidController pid;
  pid.kp = family::number_or(defn, "RFA_PID_KP", 0.05);
  pid.ki = family::number_or(defn, "RFA_PID_KI", 0.005);
  pid.kd = family::number_or(defn, "RFA_PID_KD", 0.0);
  pid.out_min = 0;
  pid.out_max = 1;
  if (!std::isfinite(pid.kp) || !std::isfinite(pid.ki) || !std::isfinite(pid.kd)) throw Error("PID gains must be finite");

  thermal::BioheatSolver solver(family::bioheat_setup(defn, model));
  auto vessels = model.voxels_in({"vessels"});
  solver.set_pinned(vessels);
  auto tissue = model.labels_in({"organ", "tumour"});
  const double threshold = solver.setup().cell_death.threshold;

  RfaResult result;
  result.state = solver.initial_state();
  auto& state = result.state;

  const int substeps = std::max(1, static_cast<int>(std::ceil(tick / (0.9 * solver.stability_limit()))));
  const double dt = tick / substeps;

  auto tine_tips_at = [&](double extension) {
    std::vector<Vec3> tips;
    for (int idx : needles) {
      const auto& n = defn.needles[idx - 1];
      auto t = grid::tine_tip_positions(n.tip, n.entry, family::needle_shape(defn, idx), extension);
      tips.insert(tips.end(), t.begin(), t.end());
    }
    for (const auto& p : tips)
      if (!model.grid.contains(p)) throw Error("tine tip lies outside the grid");
    return tips;
  };

  protocol::EvalContext ctx;
  ctx.parameters = &defn.parameters;
  ctx.variables["power"] = 0;
  ctx.variables["extension"] = 1;
  ctx.variables["target_temperature"] = family::number_or(defn, "RFA_TARGET_TEMPERATURE", 105);

  double current_extension = -1;
  std::vector<Vec3> tips = tine_tips_at(1.0);
  grid::ScalarField unit_q;
  grid::ScalarField q(model.grid, 0.0, grid::Quantity::Sar);
  double horizon = defn.duration.value_or(max_duration);

  for (;;) {
    Probe probe = read_thermocouples(state.temperature, tips);
    double tmax = *std::max_element(state.temperature.values.begin(), state.temperature.values.end());
    ctx.time = state.time;
    ctx.variables["time"] = state.time;
    ctx.variables["phase"] = static_cast<double>(ctx.phase);
    ctx.variables["temperature_avg"] = probe.avg;
    ctx.variables["temperature_max"] = tmax;
    ctx.variables["tine_temperature_min"] = probe.min;
    ctx.variables["impedance"] = impedance;

    auto r = protocol::tick(program, ctx);
    if (r.terminated) {
      result.terminated_by_protocol = true;
      break;
    }
    if (state.time >= max_duration)
      throw Error("protocol did not reach END within MAX_DURATION (" + format_double(max_duration) + " s)");
    ctx.variables = std::move(r.variables);
    ctx.phase = r.phase;

    double extension = std::clamp(ctx.variables["extension"], 0.0, 1.0);
    if (extension != current_extension) {
      current_extension = extension;
      tips = tine_tips_at(extension);
      source.centers = tips;
      unit_q = gaussian_deposition(source, 1.0, model.grid).q;
      probe = read_thermocouples(state.temperature, tips);
    }
    pid.setpoint = ctx.variables["target_temperature"];
    double trim = pid_step(pid, probe.avg, tick);
    double requested = std::max(0.0, ctx.variables["power"]);
    double applied = std::min(requested * trim, max_power);
    for (std::size_t n = 0; n < q.values.size(); ++n) q[n] = unit_q[n] * applied;
    ctx.variables["power"] = requested;

    for (int s = 0; s < substeps; ++s) solver.step(state, &q, dt);

    Probe after = read_thermocouples(state.temperature, tips);
    std::size_t lesion = 0;
    for (std::size_t n = 0; n < state.dead.values.size(); ++n)
      if (state.dead[n] >= threshold && tissue.count(model.labels[n])) ++lesion;
    result.history.push_back(
        {state.time, program.phases[ctx.phase].name, applied, after.avg, after.min, lesion});
    if (progress)
      progress(std::min(1.0, state.time / horizon),
               "t=" + format_double(state.time) + " s, phase " + program.phases[ctx.phase].name);
  }

  result.tine_tips = tips;
  result.lesion = grid::isovolume(state.dead, threshold, grid::Compare::GreaterEqual,
                                  grid::Restriction{&model.labels, tissue});
  return result;
}

}  // namespace ablasim::rfa

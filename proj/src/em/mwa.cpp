#include "ablasim/em/mwa.hpp"

#include <Eigen/SparseCore>
#include <Eigen/SparseLU>
#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

#include "ablasim/grid/ops.hpp"
#include "ablasim/protocol/protocol.hpp"

namespace ablasim::em {

namespace {

using cd = std::complex<double>;
constexpr double kC0 = 299792458.0;
constexpr double kEps0 = 8.8541878128e-12;
constexpr double kMu0 = 1.25663706212e-6;
const cd kI{0.0, 1.0};

struct Layout {
  std::vector<NodeKind> kind;
  int i_in, i_out, n_t, j_tip;
  double a, b;
};

Layout classify(const AxisymGrid& g, const CoaxAntenna& ant) {
  if (g.nr < 16 || g.nz < 16) throw Error("axisymmetric grid needs at least 16 nodes per direction");
  if (!(g.h > 0)) throw Error("axisymmetric spacing must be positive");
  Layout L;
  L.j_tip = static_cast<int>(std::lround(-g.z0 / g.h));
  if (L.j_tip < 1 || L.j_tip >= g.nz - 2 || std::abs(g.z(L.j_tip)) > 1e-9 * g.h)
    throw Error("antenna tip must fall on an interior axisymmetric node");
  L.i_in = std::max(0, static_cast<int>(std::lround(ant.inner_radius / g.h - 0.5)));
  L.i_out = static_cast<int>(std::lround(ant.outer_radius / g.h + 0.5));
  L.n_t = std::max(1, static_cast<int>(std::lround(ant.conductor_thickness / g.h)));
  if (L.i_out < L.i_in + 2) throw Error("coax dielectric is thinner than one axisymmetric node");
  if (L.i_out + L.n_t + 2 >= g.nr) throw Error("axisymmetric grid too narrow for the antenna");
  L.a = (L.i_in + 0.5) * g.h;
  L.b = (L.i_out - 0.5) * g.h;

  int slot_lo = static_cast<int>(std::lround((ant.slot_offset - ant.slot_length / 2) / g.h)) + L.j_tip;
  int slot_hi = static_cast<int>(std::lround((ant.slot_offset + ant.slot_length / 2) / g.h)) + L.j_tip;
  if (ant.slot_length > 0 && (slot_lo <= L.j_tip || slot_hi >= g.nz - 1))
    throw Error("antenna slot must lie between the tip and the feed");

  L.kind.assign(g.size(), NodeKind::Medium);
  for (int j = L.j_tip; j < g.nz; ++j)
    for (int i = 0; i < L.i_out + L.n_t; ++i) {
      NodeKind k;
      if (j == L.j_tip || i <= L.i_in) k = NodeKind::Conductor;
      else if (i < L.i_out) k = NodeKind::Feed;
      else if (ant.slot_length > 0 && j >= slot_lo && j <= slot_hi) k = NodeKind::Feed;
      else k = NodeKind::Conductor;
      L.kind[g.index(i, j)] = k;
    }
  return L;
}

struct System {
  Layout layout;
  std::vector<cd> eps_c;
  std::vector<int> index;
  Eigen::SparseMatrix<cd> A;
  Eigen::VectorXcd b;
  double omega, k0;
};

System assemble(const MwaProblem& p, double power) {
  const auto& g = p.grid;
  if (p.eps_r.size() != g.size() || p.sigma.size() != g.size() || p.mu_r.size() != g.size())
    throw Error("axisymmetric material arrays do not match the grid");
  if (!(power >= 0)) throw Error("input power must be non-negative");
  System s;
  s.layout = classify(g, p.antenna);
  const auto& kind = s.layout.kind;
  s.omega = 2 * std::numbers::pi * p.frequency;
  s.k0 = s.omega / kC0;
  const double h = g.h, k0 = s.k0;
  const double eps_d = p.antenna.dielectric_permittivity;

  std::vector<double> mu(g.size());
  s.eps_c.resize(g.size());
  for (std::size_t n = 0; n < g.size(); ++n) {
    if (kind[n] == NodeKind::Medium) {
      if (!(p.sigma[n] >= 0) || !(p.eps_r[n] > 0) || !(p.mu_r[n] > 0)) throw Error("invalid tissue dielectric properties");
      s.eps_c[n] = cd(p.eps_r[n], -p.sigma[n] / (s.omega * kEps0));
      mu[n] = p.mu_r[n];
    } else {
      s.eps_c[n] = cd(eps_d, 0.0);
      mu[n] = 1.0;
    }
  }

  s.index.assign(g.size(), -1);
  int unknowns = 0;
  for (int j = 0; j < g.nz; ++j)
    for (int i = 1; i < g.nr; ++i)
      if (kind[g.index(i, j)] != NodeKind::Conductor) s.index[g.index(i, j)] = unknowns++;

  // Incident TEM wave in the feed.
  const double eta = kMu0 * kC0 / std::sqrt(eps_d);
  const double current = std::sqrt(4 * std::numbers::pi * power / (eta * std::log(s.layout.b / s.layout.a)));
  const double cos_bh = 1 - eps_d * k0 * k0 * h * h / 2;
  if (!(cos_bh > -1)) throw Error("axisymmetric spacing too coarse for the feed wavelength");
  const double beta_port = std::sin(std::acos(cos_bh)) / h;

  auto conductor = [&](int i, int j) { return kind[g.index(i, j)] == NodeKind::Conductor; };
  auto face = [&](std::size_t m, std::size_t n) {
    if (kind[m] == NodeKind::Conductor || kind[n] == NodeKind::Conductor) return cd(0.0);
    return 2.0 / (s.eps_c[m] + s.eps_c[n]);
  };

  std::vector<Eigen::Triplet<cd>> trip;
  trip.reserve(static_cast<std::size_t>(unknowns) * 5);
  s.b = Eigen::VectorXcd::Zero(unknowns);
  for (int j = 0; j < g.nz; ++j)
    for (int i = 1; i < g.nr; ++i) {
      std::size_t P = g.index(i, j);
      int row = s.index[P];
      if (row < 0) continue;
      cd diag = -mu[P] * k0 * k0 * h * h;
      cd a_p = 1.0 / s.eps_c[P];
      cd k_local = k0 * std::sqrt(mu[P] * s.eps_c[P]);
      auto couple = [&](int ii, int jj, cd w) {
        int col = s.index[g.index(ii, jj)];
        if (col >= 0) trip.emplace_back(row, col, -w);
      };

      for (int d : {-1, 1}) {
        int jj = j + d;
        if (jj >= 0 && jj < g.nz) {
          cd af = face(P, g.index(i, jj));
          diag += af;
          couple(i, jj, af);
        } else {
          // ghost node from ∂H/∂z = c·H + src
          cd c, src = 0.0;
          if (d > 0 && kind[P] == NodeKind::Feed) {
            c = -kI * beta_port;
            src = 2.0 * kI * beta_port * current / (2 * std::numbers::pi * g.r(i));
          } else {
            c = d > 0 ? -kI * k_local : kI * k_local;
          }
          diag += a_p * (1.0 - 2.0 * h * static_cast<double>(d) * c);
          if (!conductor(i, j - d)) couple(i, j - d, a_p);
          s.b[row] += a_p * static_cast<double>(d) * 2.0 * h * src;
        }
      }
      const double ri = g.r(i);
      for (int d : {-1, 1}) {
        int ii = i + d;
        double rf = (i + 0.5 * d) * h;
        if (ii < g.nr) {
          cd w = face(P, g.index(ii, j)) / rf;
          diag += w * ri;
          if (ii >= 1) couple(ii, j, w * g.r(ii));
        } else {
          cd c = -(kI * k_local + 1.0 / (2 * ri));
          double rg = (i + 1) * h;
          cd w = a_p / rf;
          diag += w * (ri - 2.0 * h * c * rg);
          if (!conductor(i - 1, j)) couple(i - 1, j, w * rg);
        }
      }
      trip.emplace_back(row, row, diag);
    }
  s.A.resize(unknowns, unknowns);
  s.A.setFromTriplets(trip.begin(), trip.end());
  return s;
}

}  // namespace

MwaField solve_mwa_field(const MwaProblem& problem, double power, const MwaSolveOptions& options) {
  System s = assemble(problem, power);
  const auto& g = problem.grid;
  MwaField f;
  f.grid = g;
  f.kind = s.layout.kind;
  f.eps_c = s.eps_c;
  f.sigma.assign(g.size(), 0.0);
  for (std::size_t n = 0; n < g.size(); ++n)
    if (f.kind[n] == NodeKind::Medium) f.sigma[n] = problem.sigma[n];
  f.omega = s.omega;
  f.k0 = s.k0;
  f.power = power;
  f.coax_a = s.layout.a;
  f.coax_b = s.layout.b;
  f.h.assign(g.size(), cd(0.0));

  double bnorm = s.b.norm();
  if (bnorm == 0) return f;

  Eigen::SparseLU<Eigen::SparseMatrix<cd>, Eigen::COLAMDOrdering<int>> lu;
  lu.analyzePattern(s.A);
  lu.factorize(s.A);
  if (lu.info() != Eigen::Success) throw SolverError("field matrix factorization failed: " + lu.lastErrorMessage());
  Eigen::VectorXcd x = lu.solve(s.b);
  for (int it = 0;; ++it) {
    Eigen::VectorXcd r = s.b - s.A * x;
    double rel = r.norm() / bnorm;
    f.residual_history.push_back(rel);
    if (!std::isfinite(rel)) throw SolverError("field solve produced non-finite values");
    if (rel < options.tolerance) {
      f.relative_residual = rel;
      break;
    }
    if (it >= options.max_refinements) {
      std::string hist;
      for (double v : f.residual_history) hist += (hist.empty() ? "" : ", ") + format_double(v);
      throw SolverError("field solve did not reach relative residual " + format_double(options.tolerance) +
                        "; residual history: " + hist);
    }
    x += lu.solve(r);
  }
  for (std::size_t n = 0; n < g.size(); ++n)
    if (s.index[n] >= 0) f.h[n] = x[s.index[n]];
  return f;
}

double mwa_relative_residual(const MwaProblem& problem, double power, const std::vector<std::complex<double>>& h) {
  System s = assemble(problem, power);
  Eigen::VectorXcd x(s.A.rows());
  for (std::size_t n = 0; n < problem.grid.size(); ++n)
    if (s.index[n] >= 0) x[s.index[n]] = h[n];
  double bnorm = s.b.norm();
  return (s.b - s.A * x).norm() / (bnorm > 0 ? bnorm : 1.0);
}

std::vector<double> heating_factor(const MwaField& f, SarMode mode) {
  const auto& g = f.grid;
  std::vector<double> out(g.size(), 0.0);
  auto valid = [&](int i, int j) {
    return i >= 0 && i < g.nr && j >= 0 && j < g.nz && f.kind[g.index(i, j)] != NodeKind::Conductor;
  };
  auto value = [&](int i, int j) { return f.h[g.index(i, j)]; };
  auto derivative = [&](int i, int j, int di, int dj) {
    bool lo = valid(i - di, j - dj), hi = valid(i + di, j + dj);
    cd c = value(i, j);
    if (lo && hi) return (value(i + di, j + dj) - value(i - di, j - dj)) / (2 * g.h);
    if (hi) return (value(i + di, j + dj) - c) / g.h;
    if (lo) return (c - value(i - di, j - dj)) / g.h;
    return cd(0.0);
  };
  for (int j = 0; j < g.nz; ++j)
    for (int i = 0; i < g.nr; ++i) {
      std::size_t n = g.index(i, j);
      if (f.kind[n] != NodeKind::Medium) continue;
      cd dz, dr, curl_z;
      if (i == 0) {
        dz = 0.0;
        dr = valid(1, j) ? value(1, j) / g.h : cd(0.0);
        curl_z = 2.0 * dr;
      } else {
        dz = derivative(i, j, 0, 1);
        dr = derivative(i, j, 1, 0);
        curl_z = dr + value(i, j) / g.r(i);
      }
      if (mode == SarMode::Gradient) {
        out[n] = std::sqrt(std::norm(dr) + std::norm(dz));
      } else {
        cd scale = 1.0 / (f.eps_c[n] * kI * f.omega * kEps0);
        out[n] = std::norm(scale) * (std::norm(dz) + std::norm(curl_z));
      }
    }
  return out;
}

grid::ScalarField revolve_averaged(const std::vector<double>& values, const AxisymGrid& ax, const Vec3& tip,
                                   const Vec3& shaft_direction, const grid::VoxelGrid& grid, int samples) {
  if (samples < 1) throw Error("revolve sample count must be positive");
  grid::ScalarField out(grid, 0.0, grid::Quantity::Sar);
  Vec3 u = shaft_direction.normalized();
  const double h = grid.spacing();
  std::vector<double> offsets(samples);
  for (int a = 0; a < samples; ++a) offsets[a] = h * ((a + 0.5) / samples - 0.5);
  const double weight = 1.0 / (static_cast<double>(samples) * samples * samples);
  for (std::size_t n = 0; n < grid.size(); ++n) {
    Vec3 c = grid.center(n) - tip;
    double sum = 0;
    for (double ox : offsets)
      for (double oy : offsets)
        for (double oz : offsets) {
          Vec3 d = c + Vec3{ox, oy, oz};
          double z = d.dot(u);
          double r = (d - u * z).norm();
          long i = std::lround(r / ax.h), j = std::lround((z - ax.z0) / ax.h);
          if (i < ax.nr && j >= 0 && j < ax.nz) sum += values[ax.index(static_cast<int>(i), static_cast<int>(j))];
        }
    out[n] = sum * weight;
  }
  return out;
}

std::vector<double> sar_from_field(const MwaField& field, SarMode mode) {
  auto g = heating_factor(field, mode);
  for (std::size_t n = 0; n < g.size(); ++n) g[n] *= 0.5 * field.sigma[n];
  return g;
}

grid::ScalarField revolve(const std::vector<double>& values, const AxisymGrid& ax, const Vec3& tip,
                          const Vec3& shaft_direction, const grid::VoxelGrid& grid) {
  grid::ScalarField out(grid, 0.0, grid::Quantity::Sar);
  Vec3 u = shaft_direction.normalized();
  for (std::size_t n = 0; n < grid.size(); ++n) {
    Vec3 d = grid.center(n) - tip;
    double z = d.dot(u);
    double r = (d - u * z).norm();
    long i = std::lround(r / ax.h), j = std::lround((z - ax.z0) / ax.h);
    if (i < ax.nr && j >= 0 && j < ax.nz) out[n] = values[ax.index(static_cast<int>(i), static_cast<int>(j))];
  }
  return out;
}

namespace {

struct Antenna {
  Vec3 tip, u, e1, e2;
  MwaProblem problem;
  std::vector<double> g3d;  // heating factor at reference power
};

// Orthonormal frame around the shaft direction.
void frame(const Vec3& u, Vec3& e1, Vec3& e2) {
  Vec3 ref = std::abs(u.x) < 0.9 ? Vec3{1, 0, 0} : Vec3{0, 1, 0};
  e1 = u.cross(ref).normalized();
  e2 = u.cross(e1);
}

constexpr int kAzimuths = 8;

}  // namespace

MwaResult couple_mwa(const gssa::SimulationDefinition& defn, const family::ModelInputs& model,
                     const Progress& progress) {
  using family::number_or;
  if (defn.needles.empty()) throw Error("MWA run needs at least one antenna needle");
  const auto& G = model.grid;

  std::string mode_name = family::string_or(defn, "MWA_SAR_MODE", "gradient");
  SarMode mode;
  if (mode_name == "gradient") mode = SarMode::Gradient;
  else if (mode_name == "standard") mode = SarMode::Standard;
  else throw Error("parameter 'MWA_SAR_MODE' must be 'gradient' or 'standard'");

  const double frequency = number_or(defn, "CONSTANT_MWA_FREQUENCY", 2.45e9);
  const double dsigma_dT = number_or(defn, "MWA_CONDUCTIVITY_TEMPERATURE_COEFFICIENT", 0.0);
  const double recompute = number_or(defn, "MWA_RECOMPUTE_INTERVAL", 0.0);
  const double ax_h = number_or(defn, "MWA_AXISYM_SPACING", 1.25e-4);
  const double ax_radius = number_or(defn, "MWA_AXISYM_RADIUS", 0.025);
  const double ax_below = number_or(defn, "MWA_AXISYM_BELOW_TIP", 0.02);
  const double ax_above = number_or(defn, "MWA_AXISYM_ABOVE_TIP", 0.03);
  const double tick = number_or(defn, "MWA_TICK", 1.0);
  const int revolve_samples = static_cast<int>(number_or(defn, "MWA_REVOLVE_SAMPLES", 4));
  const double max_duration = number_or(defn, "MAX_DURATION", 3600);
  if (!(ax_h > 0) || !(tick > 0) || recompute < 0 || revolve_samples < 1) throw Error("invalid MWA discretization parameters");

  // Per-label electromagnetic constants at body temperature.
  std::vector<double> eps_label, sigma_label, mu_label;
  for (const auto& group : model.label_group) {
    eps_label.push_back(family::tissue_number(defn, group, "RELATIVE_PERMITTIVITY", 43.03));
    sigma_label.push_back(family::tissue_number(defn, group, "ELECTRIC_CONDUCTIVITY", 1.69));
    mu_label.push_back(family::tissue_number(defn, group, "RELATIVE_PERMEABILITY", 1.0));
  }

  thermal::BioheatSolver solver(family::bioheat_setup(defn, model));
  solver.set_pinned(model.voxels_in({"vessels"}));
  const double body = solver.setup().body_temperature;
  auto sigma_at = [&](std::uint16_t label, double T) {
    return std::max(0.0, sigma_label[label] + dsigma_dT * (T - body));
  };

  std::vector<Antenna> antennas;
  for (const auto& n : defn.needles) {
    Antenna a;
    a.tip = n.tip;
    if (!G.contains(n.tip)) throw Error("antenna " + std::to_string(n.index) + " tip lies outside the grid");
    a.u = (n.entry - n.tip).normalized();
    frame(a.u, a.e1, a.e2);
    auto& p = a.problem;
    p.frequency = frequency;
    p.antenna.inner_radius = family::needle_number_or(defn, n.index, "MWA_INNER_RADIUS", 0.15e-3);
    p.antenna.outer_radius = family::needle_number_or(defn, n.index, "MWA_OUTER_RADIUS", 0.55e-3);
    p.antenna.conductor_thickness = family::needle_number_or(defn, n.index, "MWA_CONDUCTOR_THICKNESS", 0.1e-3);
    p.antenna.slot_offset = family::needle_number_or(defn, n.index, "MWA_SLOT_OFFSET", 5e-3);
    p.antenna.slot_length = family::needle_number_or(defn, n.index, "MWA_SLOT_LENGTH", 1e-3);
    p.antenna.dielectric_permittivity = family::needle_number_or(defn, n.index, "MWA_DIELECTRIC_PERMITTIVITY", 2.03);
    int below = static_cast<int>(std::ceil(ax_below / ax_h));
    p.grid = {static_cast<int>(std::ceil(ax_radius / ax_h)) + 1, below + static_cast<int>(std::ceil(ax_above / ax_h)) + 1,
              ax_h, -below * ax_h};
    antennas.push_back(std::move(a));
  }

  // Node materials: majority label over azimuths; temperature averaged.
  auto fill_materials = [&](Antenna& a, const grid::ScalarField& T) {
    auto& p = a.problem;
    p.eps_r.assign(p.grid.size(), 0);
    p.sigma.assign(p.grid.size(), 0);
    p.mu_r.assign(p.grid.size(), 0);
    for (int j = 0; j < p.grid.nz; ++j)
      for (int i = 0; i < p.grid.nr; ++i) {
        std::map<std::uint16_t, int> votes;
        double tsum = 0;
        int tcount = 0;
        for (int k = 0; k < kAzimuths; ++k) {
          double th = 2 * std::numbers::pi * k / kAzimuths;
          Vec3 x = a.tip + a.u * p.grid.z(j) + (a.e1 * std::cos(th) + a.e2 * std::sin(th)) * p.grid.r(i);
          std::uint16_t label = 0;
          if (G.contains(x)) {
            auto q = G.nearest(x);
            label = model.labels[G.linear(q)];
            tsum += T.sample(x);
            ++tcount;
          }
          ++votes[label];
        }
        auto best = std::max_element(votes.begin(), votes.end(),
                                     [](const auto& x, const auto& y) { return x.second < y.second; })->first;
        double temp = tcount ? tsum / tcount : body;
        std::size_t n = p.grid.index(i, j);
        p.eps_r[n] = eps_label[best];
        p.sigma[n] = sigma_at(best, temp);
        p.mu_r[n] = mu_label[best];
      }
  };

  MwaResult result;
  result.state = solver.initial_state();
  auto& state = result.state;

  auto solve_fields = [&]() {
    for (auto& a : antennas) {
      fill_materials(a, state.temperature);
      auto field = solve_mwa_field(a.problem, 1.0);
      result.relative_residuals.push_back(field.relative_residual);
      a.g3d = revolve_averaged(heating_factor(field, mode), a.problem.grid, a.tip, a.u, G, revolve_samples).values;
      ++result.field_solves;
    }
  };
  solve_fields();

  std::optional<protocol::ProtocolProgram> program;
  protocol::EvalContext ctx;
  ctx.parameters = &defn.parameters;
  double constant_power = 0;
  double end_time = 0;
  if (!defn.algorithms.empty()) {
    const protocol::AlgorithmDef* alg = &defn.algorithms.front();
    for (const auto& a : defn.algorithms)
      if (a.result == "power") alg = &a;
    program = protocol::parse_protocol(alg->body);
    std::set<std::string> names;
    for (const auto& [k, v] : defn.parameters) names.insert(k);
    protocol::link_protocol(*program, names, std::set<std::string>(alg->arguments.begin(), alg->arguments.end()));
    ctx.variables["power"] = number_or(defn, "CONSTANT_INPUT_POWER", 0.0);
  } else {
    constant_power = family::number(defn, "CONSTANT_INPUT_POWER");
    if (!defn.duration) throw Error("MWA run without a protocol needs a duration");
    end_time = *defn.duration;
  }
  const double horizon = program ? defn.duration.value_or(max_duration) : end_time;

  const int substeps = std::max(1, static_cast<int>(std::ceil(tick / (0.9 * solver.stability_limit()))));
  const double dt = tick / substeps;
  const auto tissue = model.labels_in({"organ", "tumour"});
  const double threshold = solver.setup().cell_death.threshold;
  grid::ScalarField q(G, 0.0, grid::Quantity::Sar);
  long steps = 0;
  const double impedance = number_or(defn, "IMPEDANCE", 50);

  for (;;) {
    double power = constant_power;
    std::string phase = "constant";
    if (program) {
      double tmax = *std::max_element(state.temperature.values.begin(), state.temperature.values.end());
      double tip_avg = 0;
      for (const auto& a : antennas) tip_avg += state.temperature.sample(a.tip);
      tip_avg /= antennas.size();
      ctx.time = state.time;
      ctx.variables["time"] = state.time;
      ctx.variables["phase"] = static_cast<double>(ctx.phase);
      ctx.variables["temperature_avg"] = tip_avg;
      ctx.variables["temperature_max"] = tmax;
      ctx.variables["impedance"] = impedance;
      auto r = protocol::tick(*program, ctx);
      if (r.terminated) break;
      if (state.time >= max_duration)
        throw Error("protocol did not reach END within MAX_DURATION (" + format_double(max_duration) + " s)");
      ctx.variables = std::move(r.variables);
      ctx.phase = r.phase;
      power = std::max(0.0, ctx.variables["power"]);
      phase = program->phases[ctx.phase].name;
    } else if (state.time >= end_time - 1e-9 * tick) {
      break;
    }
    // Field amplitude scales with √P: g ∝ |H| in gradient mode, ∝ |H|² otherwise.
    const double scale = mode == SarMode::Gradient ? std::sqrt(power) : power;
    for (int s = 0; s < substeps; ++s) {
      if (recompute >= 1 && steps > 0 && steps % static_cast<long>(recompute) == 0) solve_fields();
      for (std::size_t n = 0; n < G.size(); ++n) {
        double g = 0;
        for (const auto& a : antennas) g += a.g3d[n];
        q[n] = 0.5 * sigma_at(model.labels[n], state.temperature[n]) * g * scale;
      }
      solver.step(state, &q, dt);
      ++steps;
    }
    std::size_t lesion = 0;
    for (std::size_t n = 0; n < G.size(); ++n)
      if (state.dead[n] >= threshold && tissue.count(model.labels[n])) ++lesion;
    double tmax = *std::max_element(state.temperature.values.begin(), state.temperature.values.end());
    result.history.push_back({state.time, phase, power, tmax, lesion});
    if (progress)
      progress(std::min(1.0, state.time / horizon), "t=" + format_double(state.time) + " s, " + phase);
  }
  result.sar = q;
  result.lesion = grid::isovolume(state.dead, threshold, grid::Compare::GreaterEqual,
                                  grid::Restriction{&model.labels, tissue});
  return result;
}

}  // namespace ablasim::em

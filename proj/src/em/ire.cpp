#include "ablasim/em/ire.hpp"

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseCore>
#include <algorithm>
#include <cmath>

namespace ablasim::em {

namespace {

constexpr int kFree = -1;
constexpr double kMinFraction = 1e-3;

// Fraction of the centre-to-centre distance from `outside` to the electrode
// surface towards `inside`, by bisection on the containment test.
double surface_fraction(const std::function<bool(const Vec3&)>& contains, const Vec3& outside, const Vec3& inside) {
  if (!contains(inside) || contains(outside)) return 1.0;
  double lo = 0, hi = 1;
  for (int it = 0; it < 60; ++it) {
    double mid = 0.5 * (lo + hi);
    if (contains(outside + (inside - outside) * mid)) hi = mid;
    else lo = mid;
  }
  return std::max(hi, kMinFraction);
}

struct Neighbour {
  bool exists;
  bool fixed;
  std::size_t n;
};

}  // namespace

PotentialSolution solve_ire(const grid::VoxelGrid& g, std::span<const double> sigma, const Electrode& anode,
                            double voltage, const Electrode& cathode, const PotentialOptions& options) {
  const std::size_t N = g.size();
  if (sigma.size() != N) throw Error("conductivity map does not match the grid");
  for (double s : sigma)
    if (!(s > 0) || !std::isfinite(s)) throw Error("electric conductivity must be positive and finite");
  if (anode.voxels.empty() || cathode.voxels.empty()) throw Error("electrode voxel sets must be non-empty");

  // 0 = free, 1 = anode, 2 = cathode
  std::vector<std::uint8_t> role(N, 0);
  for (auto n : anode.voxels) role.at(n) = 1;
  for (auto n : cathode.voxels) {
    if (role.at(n) == 1) throw Error("anode and cathode electrodes overlap");
    role[n] = 2;
  }
  auto fixed_value = [&](std::size_t n) { return role[n] == 1 ? voltage : 0.0; };
  auto inside_of = [&](std::size_t n) -> const std::function<bool(const Vec3&)>& {
    return role[n] == 1 ? anode.inside : cathode.inside;
  };

  std::vector<int> index(N, kFree);
  int unknowns = 0;
  for (std::size_t n = 0; n < N; ++n)
    if (role[n] == 0) index[n] = unknowns++;

  auto neighbour = [&](const grid::Index3& p, int axis, int dir) -> Neighbour {
    std::array<int, 3> q{p.i, p.j, p.k};
    q[axis] += dir;
    if (!g.in_range(q[0], q[1], q[2])) return {false, false, 0};
    std::size_t m = g.linear(q[0], q[1], q[2]);
    return {true, role[m] != 0, m};
  };
  // Distance fraction from free voxel n to its fixed neighbour m.
  auto fraction = [&](std::size_t n, std::size_t m) {
    const auto& inside = inside_of(m);
    return inside ? surface_fraction(inside, g.center(n), g.center(m)) : 1.0;
  };

  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(static_cast<std::size_t>(unknowns) * 7);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(unknowns);
  for (std::size_t n = 0; n < N; ++n) {
    if (role[n] != 0) continue;
    auto p = g.unravel(n);
    int row = index[n];
    double diag = 0;
    for (int axis = 0; axis < 3; ++axis)
      for (int dir : {-1, 1}) {
        auto nb = neighbour(p, axis, dir);
        if (!nb.exists) continue;
        if (nb.fixed) {
          double c = sigma[n] / fraction(n, nb.n);
          diag += c;
          rhs[row] += c * fixed_value(nb.n);
        } else {
          double c = 2 * sigma[n] * sigma[nb.n] / (sigma[n] + sigma[nb.n]);
          diag += c;
          triplets.emplace_back(row, index[nb.n], -c);
        }
      }
    triplets.emplace_back(row, row, diag);
  }
  Eigen::SparseMatrix<double> A(unknowns, unknowns);
  A.setFromTriplets(triplets.begin(), triplets.end());

  PotentialSolution sol{grid::ScalarField(g, 0.0, grid::Quantity::Potential),
                        grid::ScalarField(g, 0.0, grid::Quantity::FieldMagnitude)};
  Eigen::VectorXd x = Eigen::VectorXd::Zero(unknowns);
  if (unknowns > 0 && rhs.squaredNorm() > 0) {
    Eigen::ConjugateGradient<Eigen::SparseMatrix<double>, Eigen::Lower | Eigen::Upper,
                             Eigen::DiagonalPreconditioner<double>>
        cg;
    cg.setTolerance(options.tolerance);
    cg.setMaxIterations(options.max_iterations);
    cg.compute(A);
    x = cg.solve(rhs);
    sol.iterations = static_cast<int>(cg.iterations());
    sol.relative_residual = (rhs - A * x).norm() / rhs.norm();
    if (cg.info() != Eigen::Success || !(sol.relative_residual < options.tolerance * 10))
      throw SolverError("potential solve did not converge: relative residual " +
                        format_double(sol.relative_residual) + " after " + std::to_string(sol.iterations) +
                        " iterations");
  }

  const double lo = std::min(0.0, voltage), hi = std::max(0.0, voltage);
  for (std::size_t n = 0; n < N; ++n)
    sol.potential[n] = role[n] ? fixed_value(n) : std::clamp(x[index[n]], lo, hi);

  const double h = g.spacing();
  for (std::size_t n = 0; n < N; ++n) {
    if (role[n]) continue;
    auto p = g.unravel(n);
    double e2 = 0;
    for (int axis = 0; axis < 3; ++axis) {
      double d[2] = {0, 0}, v[2] = {0, 0};
      bool have[2] = {false, false};
      for (int s = 0; s < 2; ++s) {
        auto nb = neighbour(p, axis, s ? 1 : -1);
        if (!nb.exists) continue;
        have[s] = true;
        d[s] = nb.fixed ? fraction(n, nb.n) * h : h;
        v[s] = sol.potential[nb.n];
      }
      double phi = sol.potential[n], grad = 0;
      if (have[0] && have[1])
        grad = (d[0] * d[0] * (v[1] - phi) + d[1] * d[1] * (phi - v[0])) / (d[0] * d[1] * (d[0] + d[1]));
      else if (have[1])
        grad = (v[1] - phi) / d[1];
      else if (have[0])
        grad = (phi - v[0]) / d[0];
      e2 += grad * grad;
    }
    sol.field[n] = std::sqrt(e2);
  }
  return sol;
}

std::vector<Pairing> parse_pairings(const Value& value, int needle_count) {
  if (value.type() != ValueType::PointList)
    throw Error("parameter 'CONSTANT_IRE_NEEDLEPAIR_VOLTAGE' must be a point_list of (anode, cathode, volts)");
  std::vector<Pairing> out;
  for (const auto& t : value.as_point_list()) {
    auto idx = [&](double d) {
      if (d != std::floor(d) || d < 1 || d > needle_count)
        throw Error("needle pairing refers to needle " + format_double(d) + ", which does not exist");
      return static_cast<int>(d);
    };
    Pairing p{idx(t[0]), idx(t[1]), t[2]};
    if (p.anode == p.cathode) throw Error("needle pairing uses needle " + std::to_string(p.anode) + " twice");
    if (!std::isfinite(p.voltage)) throw Error("needle pairing voltage must be finite");
    out.push_back(p);
  }
  if (out.empty()) throw Error("no needle pairings given");
  return out;
}

IreResult ire_protocol_lesion(const grid::RegionLabels& labels, const std::set<std::uint16_t>& tissue_labels,
                              std::vector<double> sigma, const std::vector<Electrode>& electrodes,
                              const std::vector<Pairing>& pairings, const IreLesionOptions& options,
                              const Progress& progress) {
  const auto& g = labels.grid;
  IreResult r{grid::ScalarField(g, 0.0, grid::Quantity::FieldMagnitude), grid::Mask(g), {}, 0};
  for (std::size_t k = 0; k < pairings.size(); ++k) {
    const auto& p = pairings[k];
    auto sol = solve_ire(g, sigma, electrodes.at(p.anode - 1), p.voltage, electrodes.at(p.cathode - 1), options.solver);
    ++r.solves;
    for (std::size_t n = 0; n < g.size(); ++n) {
      r.e_max[n] = std::max(r.e_max[n], sol.field[n]);
      if (options.conductivity_increase != 0 && sol.field[n] > options.reversible_threshold)
        sigma[n] *= 1 + options.conductivity_increase;
    }
    if (progress)
      progress(static_cast<double>(k + 1) / pairings.size(),
               "pairing " + std::to_string(p.anode) + "-" + std::to_string(p.cathode) + " solved");
  }
  r.lesion = grid::isovolume(r.e_max, options.threshold, grid::Compare::GreaterEqual,
                             grid::Restriction{&labels, tissue_labels});
  r.sigma = std::move(sigma);
  return r;
}

Electrode needle_electrode(const gssa::SimulationDefinition& defn, int needle, const grid::VoxelGrid& grid) {
  const auto& n = defn.needles.at(needle - 1);
  auto shape = family::needle_shape(defn, needle);
  auto raster = grid::rasterize_needle(n.tip, family::entry_in_grid(n, grid), family::needle_geometry(defn, needle), shape, 1.0, grid);
  if (raster.electrode.empty()) throw Error("needle " + std::to_string(needle) + " has no active electrode voxels");
  grid::Shape active = grid::Cylinder{n.tip, n.tip - raster.axis * shape.active_length, shape.shaft_radius};
  return {raster.electrode, [active](const Vec3& p) { return grid::shape_contains(active, p); }};
}

std::vector<double> conductivity_map(const gssa::SimulationDefinition& defn, const family::ModelInputs& model) {
  std::vector<double> per_label;
  for (const auto& group : model.label_group)
    per_label.push_back(family::tissue_number(defn, group, "ELECTRIC_CONDUCTIVITY", 0.2));
  std::vector<double> sigma(model.grid.size());
  for (std::size_t n = 0; n < sigma.size(); ++n) sigma[n] = per_label[model.labels[n]];
  return sigma;
}

IreResult run_ire(const gssa::SimulationDefinition& defn, const family::ModelInputs& model, const Progress& progress) {
  int count = static_cast<int>(defn.needles.size());
  if (count < 2) throw Error("IRE needs at least two needles");
  auto pairings = parse_pairings(gssa::param(defn, "CONSTANT_IRE_NEEDLEPAIR_VOLTAGE"), count);
  std::vector<Electrode> electrodes;
  for (int i = 1; i <= count; ++i) electrodes.push_back(needle_electrode(defn, i, model.grid));
  IreLesionOptions opt;
  opt.threshold = family::number(defn, "CONSTANT_IRE_FIELD_THRESHOLD");
  opt.conductivity_increase = family::number_or(defn, "IRE_CONDUCTIVITY_INCREASE", 0);
  opt.reversible_threshold = family::number_or(defn, "IRE_REVERSIBLE_THRESHOLD", 0);
  return ire_protocol_lesion(model.labels, model.labels_in({"organ", "tumour"}), conductivity_map(defn, model),
                             electrodes, pairings, opt, progress);
}

}  // namespace ablasim::em

#include <signal.h>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "ablasim/domain/model.hpp"
#include "ablasim/eval/metrics.hpp"
#include "ablasim/family/phantom.hpp"
#include "ablasim/family/runner.hpp"
#include "ablasim/family/setup.hpp"
#include "ablasim/grid/io.hpp"
#include "ablasim/grid/ops.hpp"
#include "ablasim/gssa/xml.hpp"
#include "ablasim/orchestrator/http.hpp"

using namespace ablasim;
namespace fs = std::filesystem;

namespace {

/// Exit codes: 0 success, 1 validation failure, 2 runtime error.
class ValidationFailure : public Error {
 public:
  using Error::Error;
};

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error("cannot read '" + p.string() + "'");
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Vec3 parse_point(const std::string& text) {
  std::istringstream in(text);
  Vec3 p;
  char c1, c2;
  if (!(in >> p.x >> c1 >> p.y >> c2 >> p.z) || c1 != ',' || c2 != ',')
    throw ValidationFailure("expected a point x,y,z, got '" + text + "'");
  return p;
}

std::pair<std::string, std::string> split_assignment(const std::string& s) {
  auto eq = s.find('=');
  if (eq == std::string::npos || eq == 0) throw ValidationFailure("expected NAME=VALUE, got '" + s + "'");
  return {s.substr(0, eq), s.substr(eq + 1)};
}

Value typed_value(const domain::Registry& reg, const std::string& name, const std::string& text) {
  try {
    return decode_value(text, reg.parameter(name).value_type);
  } catch (const domain::MissingEntity&) {
    throw;
  } catch (const Error& e) {
    throw ValidationFailure("parameter " + name + ": " + e.what());
  }
}

/// "tip=x,y,z,entry=x,y,z[,spec=ID][,NAME=VALUE...]": comma-separated
/// key=value items; items without '=' continue the previous value.
domain::ConcreteNeedle parse_needle(const std::string& text, const domain::Registry& reg,
                                    const domain::Combination& combo) {
  std::vector<std::pair<std::string, std::string>> items;
  std::stringstream in(text);
  std::string tok;
  while (std::getline(in, tok, ',')) {
    if (tok.find('=') != std::string::npos) items.push_back(split_assignment(tok));
    else if (!items.empty()) items.back().second += "," + tok;
    else throw ValidationFailure("bad needle specification '" + text + "'");
  }
  domain::ConcreteNeedle n;
  n.spec = combo.allowed_needles.front();
  bool tip = false, entry = false;
  for (auto& [k, v] : items) {
    if (k == "tip") n.tip = parse_point(v), tip = true;
    else if (k == "entry") n.entry = parse_point(v), entry = true;
    else if (k == "spec") n.spec = v;
    else n.parameters[k] = typed_value(reg, k, v);
  }
  if (!tip || !entry) throw ValidationFailure("needle needs tip= and entry=");
  return n;
}

class ProgressPrinter {
 public:
  void operator()(double fraction, const std::string& message) {
    double pct = std::clamp(100.0 * fraction, 0.0, 100.0);
    auto now = std::chrono::steady_clock::now();
    if (pct < last_ + 1.0 && now - when_ < std::chrono::seconds(10) && pct < 100.0) return;
    last_ = std::max(last_, pct);
    when_ = now;
    std::cout << nlohmann::json{{"percent", last_}, {"message", message}}.dump() << std::endl;
  }

 private:
  double last_{-100};
  std::chrono::steady_clock::time_point when_{std::chrono::steady_clock::now()};
};

int cmd_validate(const fs::path& store, const std::string& id) {
  auto reg = domain::Registry::load(store);
  auto report = domain::validate_combination(reg.combination(id), reg);
  std::cout << report.to_text();
  return report.ok() ? 0 : 1;
}

int cmd_concretize(const fs::path& store, const std::string& id, const std::vector<std::string>& needles,
                   const std::vector<std::string>& params, const std::string& phantom, double duration,
                   const std::string& out) {
  auto reg = domain::Registry::load(store);
  const auto& combo = reg.combination(id);
  domain::ConcretizeInputs in;
  for (const auto& n : needles) in.needles.push_back(parse_needle(n, reg, combo));
  for (const auto& p : params) {
    auto [k, v] = split_assignment(p);
    in.user_inputs[k] = typed_value(reg, k, v);
  }
  std::optional<family::PhantomSpec> ph;
  if (!phantom.empty()) {
    ph = family::load_phantom(phantom);
    in.regions = ph->regions;
  }
  if (duration > 0) in.duration = duration;
  gssa::SimulationDefinition d;
  try {
    d = domain::concretize(combo, reg, in);
  } catch (const domain::MissingEntity&) {
    throw;
  } catch (const Error& e) {
    throw ValidationFailure(e.what());
  }
  if (ph) {
    d.regions.clear();
    family::apply_phantom(d, *ph);
  }
  auto xml = gssa::to_xml(d);
  if (out.empty() || out == "-") {
    std::cout << xml;
  } else {
    std::ofstream(out, std::ios::binary) << xml;
  }
  return 0;
}

int cmd_run(const fs::path& file, const fs::path& out, bool progress_json) {
  gssa::SimulationDefinition d;
  try {
    d = gssa::from_xml(read_text(file));
    gssa::validate(d);
  } catch (const Error& e) {
    throw ValidationFailure(file.string() + ": " + e.what());
  }
  if (!family::is_registered(d.family)) throw ValidationFailure("unknown numerical model family '" + d.family + "'");
  ProgressPrinter printer;
  family::Progress progress;
  if (progress_json) progress = [&](double f, const std::string& m) { printer(f, m); };
  auto summary = family::run_definition(d, fs::absolute(file).parent_path(), out, progress);
  if (!progress_json) std::cout << summary.to_json().dump(2) << "\n";
  return 0;
}

int cmd_metrics(const fs::path& simulated, const fs::path& reference, bool no_register, const std::string& json_out) {
  auto sim = grid::load_mask(simulated);
  auto ref = grid::load_mask(reference);
  auto report = eval::evaluate(ref, sim, !no_register);
  if (!json_out.empty()) std::ofstream(json_out, std::ios::binary) << report.to_json() << "\n";
  std::cout << report.csv_row() << "\n";
  return 0;
}

int cmd_phantom(const fs::path& spec_path, const fs::path& out) {
  auto spec = family::load_phantom(spec_path);
  gssa::SimulationDefinition d;
  d.family = "phantom";
  family::apply_phantom(d, spec);
  auto model = family::build_model(d, ".");
  fs::create_directories(out);
  grid::ScalarField labels(model.grid, 0.0, grid::Quantity::Label);
  for (std::size_t n = 0; n < model.grid.size(); ++n) labels[n] = model.labels[n];
  grid::save_field(out / "labels.gsfld", labels);
  for (const auto& r : spec.regions) {
    gssa::SimulationDefinition one;
    one.family = "phantom";
    family::apply_phantom(one, family::PhantomSpec{spec.grid, {r}});
    auto alone = family::build_model(one, ".");
    grid::Mask m(model.grid);
    for (std::size_t n = 0; n < m.bits.size(); ++n) m.set(n, alone.labels[n] != 0);
    grid::save_mask(out / (r.name + ".gsmask"), m);
  }
  for (const auto& w : model.warnings) std::cerr << "warning: " << w << "\n";
  std::cout << "wrote labels.gsfld and " << spec.regions.size() << " region masks to " << out.string() << "\n";
  return 0;
}

int cmd_serve(const fs::path& store, const fs::path& data, const std::string& address, unsigned short port,
              int workers) {
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);

  orchestrator::ServiceConfig cfg;
  cfg.data_dir = data;
  cfg.workers = workers;
  cfg.worker_command = {fs::canonical("/proc/self/exe").string(), "run"};
  orchestrator::Service service(cfg);
  orchestrator::HttpServer server(service, store, address, port);
  std::cout << "listening on " << address << ":" << server.port() << std::endl;
  int sig = 0;
  sigwait(&set, &sig);
  server.stop();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Percutaneous ablation planning simulator"};
  app.require_subcommand(1);
  std::string store = "entities";
  app.add_option("--store", store, "Entity store directory")->capture_default_str();

  std::string combo;
  auto* validate = app.add_subcommand("validate", "Validate a combination from the entity store");
  validate->add_option("combination", combo)->required();

  std::vector<std::string> needles, params;
  std::string phantom, out_file = "-";
  double duration = 0;
  auto* concretize = app.add_subcommand("concretize", "Write the simulation definition for a combination");
  concretize->add_option("combination", combo)->required();
  concretize->add_option("--needle", needles, "tip=x,y,z,entry=x,y,z[,spec=ID][,NAME=VALUE]")->required();
  concretize->add_option("--param", params, "NAME=VALUE user input");
  concretize->add_option("--phantom", phantom, "Phantom spec supplying grid and regions");
  concretize->add_option("--duration", duration, "Duration hint in seconds");
  concretize->add_option("--out", out_file, "Output .gssa.xml (default stdout)");

  std::string definition, out_dir;
  bool progress_json = false;
  auto* run = app.add_subcommand("run", "Run a simulation definition locally");
  run->add_option("definition", definition)->required()->check(CLI::ExistingFile);
  run->add_option("--out", out_dir)->required();
  run->add_flag("--progress-json", progress_json, "Emit JSON progress lines on stdout");

  std::string simulated, reference, metrics_json;
  bool no_register = false;
  auto* metrics = app.add_subcommand("metrics", "DICE,SN,PPV,AAE of a simulated lesion against a reference");
  metrics->add_option("simulated", simulated)->required()->check(CLI::ExistingFile);
  metrics->add_option("reference", reference)->required()->check(CLI::ExistingFile);
  metrics->add_flag("--no-register", no_register, "Skip rigid registration");
  metrics->add_option("--json", metrics_json, "Also write the full report as JSON");

  std::string phantom_spec, phantom_out;
  auto* ph = app.add_subcommand("phantom", "Build phantom labels and region masks");
  ph->add_option("spec", phantom_spec)->required()->check(CLI::ExistingFile);
  ph->add_option("--out", phantom_out)->required();

  std::string data_dir = "ablasim-data", address = "127.0.0.1";
  unsigned short port = 8080;
  int workers = 2;
  auto* serve = app.add_subcommand("serve", "Run the simulation service");
  serve->add_option("--data", data_dir)->capture_default_str();
  serve->add_option("--address", address)->capture_default_str();
  serve->add_option("--port", port)->capture_default_str();
  serve->add_option("--workers", workers)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*validate) return cmd_validate(store, combo);
    if (*concretize) return cmd_concretize(store, combo, needles, params, phantom, duration, out_file);
    if (*run) return cmd_run(definition, out_dir, progress_json);
    if (*metrics) return cmd_metrics(simulated, reference, no_register, metrics_json);
    if (*ph) return cmd_phantom(phantom_spec, phantom_out);
    if (*serve) return cmd_serve(store, data_dir, address, port, workers);
  } catch (const ValidationFailure& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}

#include <chrono>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include <unistd.h>

#include <boost/asio/connect.hpp>
#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

#include "ablasim/gssa/definition.hpp"
#include "ablasim/orchestrator/http.hpp"
#include "ablasim/orchestrator/service.hpp"
#include "doctest.h"
#include "httplib.h"

using namespace ablasim;
using namespace ablasim::orchestrator;
using namespace std::chrono_literals;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path = fs::temp_directory_path() / ("ablasim_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

ServiceConfig fake_config(const fs::path& data, int workers = 2) {
  ServiceConfig c;
  c.data_dir = data;
  c.worker_command = {"/bin/sh", std::string(ABLASIM_TEST_SUPPORT) + "/fake_worker.sh"};
  c.workers = workers;
  c.kill_grace = 300ms;
  return c;
}

std::string fake_definition(const std::string& mode, int tag = 0, const std::string& delay = "0.01") {
  gssa::SimulationDefinition d;
  d.family = "bioheat_rfa";
  d.parameters["FAKE_MODE"] = mode;
  d.parameters["FAKE_DELAY"] = delay;
  d.parameters["TAG"] = std::int64_t{tag};
  return gssa::to_xml(d);
}

JobSnapshot wait_final(const Service& s, const std::string& id, std::chrono::seconds limit = 30s) {
  auto until = std::chrono::steady_clock::now() + limit;
  for (;;) {
    auto snap = s.status(id);
    if (is_final(snap.state)) return snap;
    REQUIRE(std::chrono::steady_clock::now() < until);
    std::this_thread::sleep_for(5ms);
  }
}

JobSnapshot wait_state(const Service& s, const std::string& id, JobState want) {
  auto until = std::chrono::steady_clock::now() + 20s;
  for (;;) {
    auto snap = s.status(id);
    if (snap.state == want) return snap;
    REQUIRE(std::chrono::steady_clock::now() < until);
    std::this_thread::sleep_for(2ms);
  }
}

// Independent transition table.
bool allowed(JobState a, JobState b) {
  using S = JobState;
  static const std::set<std::pair<S, S>> table{{S::Queued, S::Running},    {S::Queued, S::Cancelled},
                                               {S::Running, S::Running},   {S::Running, S::Succeeded},
                                               {S::Running, S::Failed},    {S::Running, S::Cancelled}};
  return table.count({a, b}) > 0;
}

std::uint64_t fnv1a_oracle(const std::string& s) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Checks one job's event history; returns the final state.
JobState check_history(const std::vector<JobEvent>& ev) {
  REQUIRE(!ev.empty());
  CHECK(ev.front().state == JobState::Queued);
  for (std::size_t i = 0; i < ev.size(); ++i) {
    CHECK(ev[i].seq == i);
    if (i == 0) continue;
    CHECK(allowed(ev[i - 1].state, ev[i].state));
    CHECK(ev[i].percent >= ev[i - 1].percent);
    CHECK(ev[i].timestamp >= ev[i - 1].timestamp);
  }
  for (std::size_t i = 0; i + 1 < ev.size(); ++i) CHECK_FALSE(is_final(ev[i].state));
  CHECK(is_final(ev.back().state));
  return ev.back().state;
}

}  // namespace

TEST_CASE("200 randomized jobs with random cancels never take an illegal transition") {
  TempDir dir("fuzz");
  std::mt19937 rng(20240611);
  const char* modes[] = {"ok", "ok", "ok", "ok", "fail", "crash", "noisy", "slow"};
  std::vector<std::string> ids, mode_of;
  std::vector<std::string> xml_of;
  std::set<std::string> cancelled;
  {
    Service s(fake_config(dir.path, 4));
    for (int i = 0; i < 200; ++i) {
      std::string mode = modes[rng() % 8];
      auto xml = fake_definition(mode == "slow" ? "ok" : mode, i, mode == "slow" ? "0.05" : "0.005");
      ids.push_back(s.submit(xml));
      mode_of.push_back(mode);
      xml_of.push_back(xml);
      if (rng() % 10 < 3) {
        const auto& victim = ids[rng() % ids.size()];
        s.cancel(victim);
        cancelled.insert(victim);
      }
      if (rng() % 4 == 0) std::this_thread::sleep_for(std::chrono::milliseconds(rng() % 15));
    }
    for (const auto& id : ids) wait_final(s, id, 120s);

    std::map<JobState, int> tally;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      CAPTURE(i);
      auto ev = s.events(ids[i]);
      auto final_state = check_history(ev);
      ++tally[final_state];
      auto snap = s.status(ids[i]);
      CHECK(snap.state == final_state);
      if (final_state == JobState::Cancelled) CHECK(cancelled.count(ids[i]) == 1);
      if (!cancelled.count(ids[i])) {
        if (mode_of[i] == "fail" || mode_of[i] == "crash") CHECK(final_state == JobState::Failed);
        else CHECK(final_state == JobState::Succeeded);
      }
      if (final_state == JobState::Succeeded) CHECK(ev.back().percent == 100.0);

      // Durable log equals the in-memory stream; the definition is stored verbatim.
      std::istringstream log(slurp(dir.path / "jobs" / ids[i] / "events.jsonl"));
      std::string line;
      std::size_t n = 0;
      while (std::getline(log, line)) {
        auto e = JobEvent::from_json(json::parse(line));
        REQUIRE(n < ev.size());
        CHECK(e.state == ev[n].state);
        CHECK(e.percent == ev[n].percent);
        ++n;
      }
      CHECK(n == ev.size());
      CHECK(slurp(dir.path / "jobs" / ids[i] / "definition.gssa.xml") == xml_of[i]);
      char sum[17];
      std::snprintf(sum, sizeof sum, "%016llx", static_cast<unsigned long long>(fnv1a_oracle(xml_of[i])));
      CHECK(snap.checksum == sum);
    }
    MESSAGE("succeeded " << tally[JobState::Succeeded] << ", failed " << tally[JobState::Failed] << ", cancelled "
                         << tally[JobState::Cancelled]);
    CHECK(tally[JobState::Succeeded] > 0);
    CHECK(tally[JobState::Failed] > 0);
    CHECK(tally[JobState::Cancelled] > 0);
  }
}

TEST_CASE("a crashing worker fails its job with diagnostics and the service keeps serving") {
  TempDir dir("crash");
  Service s(fake_config(dir.path));
  auto crash = s.submit(fake_definition("crash"));
  auto snap = wait_final(s, crash);
  CHECK(snap.state == JobState::Failed);
  CHECK(snap.message.find("signal 11") != std::string::npos);
  CHECK(snap.message.find("segmentation fault in solver") != std::string::npos);
  CHECK(snap.percent == 10.0);

  auto fail = s.submit(fake_definition("fail"));
  snap = wait_final(s, fail);
  CHECK(snap.state == JobState::Failed);
  CHECK(snap.message.find("code 3") != std::string::npos);
  CHECK(snap.message.find("no tissue") != std::string::npos);

  auto ok = s.submit(fake_definition("ok"));
  snap = wait_final(s, ok);
  CHECK(snap.state == JobState::Succeeded);
  CHECK(snap.artifacts == std::vector<std::string>{"lesion.gsmask", "summary.json"});
  CHECK(s.fetch_artifact(ok, "summary.json") == "{\"ok\":true}\n");
}

TEST_CASE("progress is clamped monotone and malformed progress lines are ignored") {
  TempDir dir("noisy");
  Service s(fake_config(dir.path));
  auto id = s.submit(fake_definition("noisy"));
  wait_final(s, id);
  auto ev = s.events(id);
  check_history(ev);
  std::vector<double> pct;
  for (const auto& e : ev)
    if (e.state == JobState::Running) pct.push_back(e.percent);
  // RUNNING at 0 on start, then 30, 30 (for "20"), 90.
  CHECK(pct == std::vector<double>{0, 30, 30, 90});
  CHECK(ev[3].message == "backwards");
}

TEST_CASE("cancel is idempotent; stubborn workers are killed after the grace period") {
  TempDir dir("cancel");
  Service s(fake_config(dir.path, 1));
  auto stubborn = s.submit(fake_definition("stubborn"));
  auto queued = s.submit(fake_definition("ok"));
  wait_state(s, stubborn, JobState::Running);
  // Wait for the worker's first progress line so the TERM trap is armed.
  while (s.status(stubborn).percent < 5) std::this_thread::sleep_for(2ms);

  auto q1 = s.cancel(queued);
  auto q2 = s.cancel(queued);
  CHECK(q1.state == JobState::Cancelled);
  CHECK(q2.state == JobState::Cancelled);

  auto t0 = std::chrono::steady_clock::now();
  s.cancel(stubborn);
  s.cancel(stubborn);
  auto snap = wait_final(s, stubborn);
  auto elapsed = std::chrono::steady_clock::now() - t0;
  CHECK(snap.state == JobState::Cancelled);
  CHECK(elapsed >= 250ms);
  CHECK(elapsed < 5s);
  s.cancel(stubborn);

  for (const auto& id : {stubborn, queued}) {
    auto ev = s.events(id);
    check_history(ev);
    CHECK(std::count_if(ev.begin(), ev.end(), [](const JobEvent& e) { return e.state == JobState::Cancelled; }) == 1);
  }
  CHECK_THROWS_AS(s.cancel("no-such-job"), UnknownJob);
}

TEST_CASE("artifacts are only served for final jobs and only by listed name") {
  TempDir dir("fetch");
  Service s(fake_config(dir.path, 1));
  auto id = s.submit(fake_definition("ok", 0, "0.2"));
  CHECK_THROWS_AS(s.fetch_artifact(id, "summary.json"), NotReady);
  wait_final(s, id);
  CHECK_THROWS_AS(s.fetch_artifact(id, "missing.csv"), ArtifactNotFound);
  CHECK_THROWS_AS(s.fetch_artifact(id, "../meta.json"), ArtifactNotFound);
  CHECK_THROWS_AS(s.fetch_artifact("nope", "summary.json"), UnknownJob);
  CHECK(s.fetch_artifact(id, "lesion.gsmask") == "lesion\n");
}

TEST_CASE("submissions that are not valid definitions are rejected") {
  TempDir dir("reject");
  Service s(fake_config(dir.path));
  CHECK_THROWS_AS(s.submit("<simulation"), Rejected);
  CHECK_THROWS_AS(s.submit("<simulation family=\"laser\" version=\"1\"/>"), Rejected);
  CHECK(s.list().empty());
}

TEST_CASE("a pool of one never runs two jobs at once") {
  TempDir dir("pool");
  Service s(fake_config(dir.path, 1));
  std::vector<std::string> ids;
  for (int i = 0; i < 6; ++i) ids.push_back(s.submit(fake_definition("ok", i, "0.02")));
  int max_running = 0;
  std::vector<std::string> start_order;
  for (;;) {
    auto all = s.list();
    int running = 0;
    bool done = true;
    for (const auto& j : all) {
      if (j.state == JobState::Running) {
        ++running;
        if (std::find(start_order.begin(), start_order.end(), j.id) == start_order.end()) start_order.push_back(j.id);
      }
      done = done && is_final(j.state);
    }
    max_running = std::max(max_running, running);
    if (done) break;
    std::this_thread::sleep_for(1ms);
  }
  CHECK(max_running == 1);
  CHECK(start_order == ids);
}

TEST_CASE("restart recovery: running jobs become FAILED interrupted, queued jobs run") {
  TempDir dir("recover");
  auto write_job = [&](const std::string& id, const std::vector<std::string>& states, const std::string& created,
                       const std::string& torn = "") {
    auto jd = dir.path / "jobs" / id;
    fs::create_directories(jd / "out");
    std::ofstream(jd / "definition.gssa.xml") << fake_definition("ok");
    std::ofstream(jd / "meta.json")
        << json{{"id", id}, {"family", "bioheat_rfa"}, {"created", created}, {"checksum", "0"}}.dump();
    std::ofstream log(jd / "events.jsonl");
    for (std::size_t i = 0; i < states.size(); ++i)
      log << json{{"seq", i}, {"state", states[i]}, {"percent", 10.0 * i}, {"message", "m"}, {"timestamp", created}}.dump()
          << "\n";
    log << torn;
  };
  write_job("a-running", {"QUEUED", "RUNNING", "RUNNING"}, "2026-01-01T00:00:00.000Z", "{\"seq\":3,\"sta");
  write_job("b-queued", {"QUEUED"}, "2026-01-01T00:00:01.000Z");
  write_job("c-done", {"QUEUED", "RUNNING", "SUCCEEDED"}, "2026-01-01T00:00:02.000Z");
  std::ofstream(dir.path / "jobs" / "c-done" / "out" / "summary.json") << "{}";

  Service s(fake_config(dir.path));
  auto a = s.status("a-running");
  CHECK(a.state == JobState::Failed);
  CHECK(a.message == "interrupted");
  CHECK(a.percent == 20.0);
  check_history(s.events("a-running"));
  CHECK(wait_final(s, "b-queued").state == JobState::Succeeded);
  auto c = s.status("c-done");
  CHECK(c.state == JobState::Succeeded);
  CHECK(c.artifacts == std::vector<std::string>{"summary.json"});
  CHECK(s.list().size() == 3);
  CHECK(s.list().front().id == "a-running");
}

TEST_CASE("the real command-line worker runs a small definition end to end") {
  TempDir dir("real");
  ServiceConfig c;
  c.data_dir = dir.path;
  c.worker_command = {ABLASIM_CLI, "run"};
  c.workers = 1;
  Service s(c);

  gssa::SimulationDefinition d;
  d.family = "bioheat_rfa";
  d.parameters["GRID_DIMENSIONS"] = FloatList{16, 16, 16};
  d.parameters["GRID_SPACING"] = 0.002;
  d.parameters["CELL_DEATH_FORWARD_RATE"] = 3.33e-3;
  d.parameters["CELL_DEATH_BACKWARD_RATE"] = 7.77e-3;
  d.parameters["CELL_DEATH_TEMPERATURE_SCALE"] = 40.5;
  d.needles.push_back({1, "extensible_tines", {0, 0, 0}, {0, 0, 0.03}, {{"NEEDLE_MAX_TINE_EXTENSION", 0.008}}});
  d.regions.push_back({"liver", "organ", grid::Box{{-1, -1, -1}, {1, 1, 1}}});
  d.algorithms.push_back({"power", {"time"}, "WHEN time >= 0 SET power = 20\nWHEN time >= 30 END\n"});
  auto xml = gssa::to_xml(d);
  auto id = s.submit(xml);
  auto snap = wait_final(s, id, 120s);
  INFO(snap.message);
  REQUIRE(snap.state == JobState::Succeeded);
  CHECK(std::find(snap.artifacts.begin(), snap.artifacts.end(), "summary.json") != snap.artifacts.end());
  CHECK(std::find(snap.artifacts.begin(), snap.artifacts.end(), "lesion.gsmask") != snap.artifacts.end());
  auto summary = json::parse(s.fetch_artifact(id, "summary.json"));
  CHECK(summary["family"] == "bioheat_rfa");
  CHECK(summary["simulated_time"].get<double>() == doctest::Approx(30));
  auto ev = s.events(id);
  check_history(ev);
  CHECK(ev.size() > 4);
}

namespace {

std::vector<json> watch(unsigned short port, const std::string& id) {
  namespace beast = boost::beast;
  namespace asio = boost::asio;
  asio::io_context io;
  asio::ip::tcp::resolver resolver(io);
  beast::websocket::stream<asio::ip::tcp::socket> ws(io);
  asio::connect(ws.next_layer(), resolver.resolve("127.0.0.1", std::to_string(port)));
  ws.handshake("127.0.0.1", "/jobs/" + id + "/events");
  std::vector<json> out;
  beast::flat_buffer buf;
  beast::error_code ec;
  for (;;) {
    ws.read(buf, ec);
    if (ec) break;
    out.push_back(json::parse(beast::buffers_to_string(buf.data())));
    buf.consume(buf.size());
  }
  CHECK(ec == beast::websocket::error::closed);
  return out;
}

}  // namespace

TEST_CASE("HTTP and WebSocket front end") {
  TempDir dir("http");
  TempDir store("store");
  fs::copy(fs::path(ABLASIM_SOURCE_DIR) / "demo" / "entities", store.path, fs::copy_options::recursive);
  Service s(fake_config(dir.path, 1));
  HttpServer server(s, store.path, "127.0.0.1", 0);
  httplib::Client cli("127.0.0.1", server.port());

  auto res = cli.Post("/jobs", fake_definition("ok", 1, "0.05"), "application/xml");
  REQUIRE(res);
  CHECK(res->status == 201);
  auto id = json::parse(res->body)["id"].get<std::string>();
  CHECK(json::parse(res->body)["state"] == "QUEUED");

  res = cli.Get("/jobs/" + id + "/artifacts/summary.json");
  REQUIRE(res);
  CHECK(res->status == 409);
  CHECK(json::parse(res->body)["reason"] == "not ready");

  auto events = watch(server.port(), id);
  REQUIRE(events.size() >= 3);
  CHECK(events.front()["state"] == "QUEUED");
  CHECK(events.back()["state"] == "SUCCEEDED");
  for (std::size_t i = 1; i < events.size(); ++i) {
    CHECK(events[i]["seq"].get<int>() == events[i - 1]["seq"].get<int>() + 1);
    CHECK(events[i]["percent"].get<double>() >= events[i - 1]["percent"].get<double>());
    CHECK(events[i].contains("timestamp"));
  }
  // A late subscriber replays the full history.
  CHECK(watch(server.port(), id).size() == events.size());

  res = cli.Get("/jobs/" + id);
  REQUIRE(res);
  CHECK(res->status == 200);
  auto snap = json::parse(res->body);
  CHECK(snap["state"] == "SUCCEEDED");
  res = cli.Get("/jobs/" + id + "/artifacts/summary.json");
  REQUIRE(res);
  CHECK(res->status == 200);
  CHECK(res->body == "{\"ok\":true}\n");
  CHECK(cli.Get("/jobs/" + id + "/artifacts/nothing")->status == 404);
  CHECK(cli.Get("/jobs/unknown")->status == 404);
  CHECK(cli.Post("/jobs", "<simulation", "application/xml")->status == 400);
  CHECK(json::parse(cli.Get("/jobs")->body).size() == 1);

  res = cli.Post("/jobs/" + id + "/cancel", "", "application/json");
  REQUIRE(res);
  CHECK(res->status == 200);
  CHECK(json::parse(res->body)["acknowledged"] == true);

  // Entity store.
  res = cli.Get("/entities/combination");
  REQUIRE(res);
  CHECK(json::parse(res->body).size() == 4);
  res = cli.Get("/entities/combination/liver_ire");
  REQUIRE(res);
  CHECK(json::parse(res->body)["power_generator"] == "ire_pulse_generator");
  CHECK(cli.Get("/entities/needle/ghost")->status == 404);

  json param{{"name", "TUMOUR_DENSITY"}, {"value_type", "float"}, {"default_value", 1050}};
  res = cli.Put("/entities/parameter/TUMOUR_DENSITY", param.dump(), "application/json");
  REQUIRE(res);
  CHECK(res->status == 200);
  CHECK(fs::exists(store.path / "parameter" / "TUMOUR_DENSITY.json"));
  CHECK(cli.Put("/entities/parameter/OTHER", param.dump(), "application/json")->status == 400);

  res = cli.Post("/combinations/validate", json{{"id", "liver_rfa_rita"}}.dump(), "application/json");
  REQUIRE(res);
  CHECK(json::parse(res->body)["ok"] == true);
  json combo{{"id", "draft"},          {"context", "liver"}, {"power_generator", "cryo_console"},
             {"protocol", "mwa_40w_5min"}, {"numerical_model", "mwa_axisymmetric"}, {"allowed_needles", {"mwa_slot_antenna"}}};
  res = cli.Post("/combinations/validate", combo.dump(), "application/json");
  REQUIRE(res);
  auto report = json::parse(res->body);
  CHECK(report["ok"] == false);
  CHECK(report["compat_errors"].size() == 1);
  combo["context"] = "lung";
  CHECK(cli.Post("/combinations/validate", combo.dump(), "application/json")->status == 404);

  // Concretization over HTTP matches the CLI-generated demo case byte for byte.
  json phantom = json::parse(std::ifstream(fs::path(ABLASIM_SOURCE_DIR) / "demo" / "phantoms" / "liver_tumour.json"));
  json body{{"needles",
             {{{"tip", {-0.0075, 0, -0.01}}, {"entry", {-0.0075, 0, 0.06}}},
              {{"tip", {0.0075, 0, -0.01}}, {"entry", {0.0075, 0, 0.06}}}}},
            {"parameters", {{"CONSTANT_IRE_NEEDLEPAIR_VOLTAGE", {{1, 2, 2250}}}}},
            {"phantom", phantom}};
  res = cli.Post("/combinations/liver_ire/concretize", body.dump(), "application/json");
  REQUIRE(res);
  CHECK(res->status == 200);
  CHECK(res->body == slurp(fs::path(ABLASIM_SOURCE_DIR) / "demo" / "cases" / "ire.gssa.xml"));
  auto one = body;
  one["needles"].erase(1);
  res = cli.Post("/combinations/liver_ire/concretize", one.dump(), "application/json");
  CHECK(res->status == 422);
  CHECK(json::parse(res->body)["kind"] == "compat_violation");
  auto none = body;
  none.erase("parameters");
  res = cli.Post("/combinations/liver_ire/concretize", none.dump(), "application/json");
  CHECK(res->status == 422);
  CHECK(json::parse(res->body)["kind"] == "missing_required");
  CHECK(cli.Post("/combinations/nothing/concretize", body.dump(), "application/json")->status == 404);
  CHECK(json::parse(cli.Get("/entities/combination?public=true")->body).size() == 4);

  server.stop();
}

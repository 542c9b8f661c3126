#include "ablasim/orchestrator/service.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <boost/uuid/uuid.hpp>
#include <boost/uuid/uuid_generators.hpp>
#include <boost/uuid/uuid_io.hpp>
#include <cstdio>
#include <cstring>
#include <ctime>
#include <fstream>
#include <sstream>

#include "ablasim/family/runner.hpp"
#include "ablasim/gssa/definition.hpp"
#include "ablasim/gssa/xml.hpp"

extern char** environ;

namespace ablasim::orchestrator {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string now_iso() {
  auto now = std::chrono::system_clock::now();
  auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday,
                tm.tm_hour, tm.tm_min, tm.tm_sec, static_cast<int>(ms));
  return buf;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string tail(const std::string& s, std::size_t n) { return s.size() <= n ? s : s.substr(s.size() - n); }

bool safe_name(const std::string& name) {
  return !name.empty() && name != "." && name != ".." && name.find('/') == std::string::npos &&
         name.find('\\') == std::string::npos;
}

}  // namespace

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string_view to_string(JobState s) {
  switch (s) {
    case JobState::Queued: return "QUEUED";
    case JobState::Running: return "RUNNING";
    case JobState::Succeeded: return "SUCCEEDED";
    case JobState::Failed: return "FAILED";
    case JobState::Cancelled: return "CANCELLED";
  }
  return "?";
}

std::optional<JobState> parse_job_state(std::string_view s) {
  for (auto st : {JobState::Queued, JobState::Running, JobState::Succeeded, JobState::Failed, JobState::Cancelled})
    if (to_string(st) == s) return st;
  return std::nullopt;
}

bool is_final(JobState s) { return s == JobState::Succeeded || s == JobState::Failed || s == JobState::Cancelled; }

bool legal_transition(JobState from, JobState to) {
  switch (from) {
    case JobState::Queued: return to == JobState::Running || to == JobState::Cancelled;
    case JobState::Running: return to != JobState::Queued;
    default: return false;
  }
}

json JobEvent::to_json() const {
  return {{"seq", seq}, {"state", to_string(state)}, {"percent", percent}, {"message", message}, {"timestamp", timestamp}};
}

JobEvent JobEvent::from_json(const json& j) {
  JobEvent e;
  e.seq = j.at("seq").get<std::uint64_t>();
  auto st = parse_job_state(j.at("state").get<std::string>());
  if (!st) throw Error("bad job state in event log");
  e.state = *st;
  e.percent = j.at("percent").get<double>();
  e.message = j.at("message").get<std::string>();
  e.timestamp = j.at("timestamp").get<std::string>();
  return e;
}

json JobSnapshot::to_json() const {
  return {{"id", id},           {"family", family},         {"state", to_string(state)},
          {"percent", percent}, {"message", message},       {"artifacts", artifacts},
          {"created", created}, {"updated", updated},       {"checksum", checksum}};
}

struct Service::Job {
  std::string id, family, checksum, created;
  fs::path dir;
  std::vector<JobEvent> events;
  JobState state{JobState::Queued};
  double percent{0};
  std::string message;
  std::vector<std::string> artifacts;
  pid_t pid{-1};
  bool cancel_requested{false};
  std::chrono::steady_clock::time_point cancel_time;
};

Service::Service(ServiceConfig config) : config_(std::move(config)) {
  if (config_.workers < 1) throw Error("worker pool size must be at least 1");
  if (config_.worker_command.empty()) throw Error("worker command is empty");
  fs::create_directories(config_.data_dir / "jobs");
  recover();
  for (int i = 0; i < config_.workers; ++i) threads_.emplace_back([this] { scheduler_loop(); });
}

Service::~Service() {
  {
    std::lock_guard lock(mutex_);
    stopping_ = true;
    for (auto& [id, job] : jobs_)
      if (job->pid > 0) ::kill(job->pid, SIGKILL);
  }
  changed_.notify_all();
  for (auto& t : threads_) t.join();
}

void Service::append(Job& job, JobState state, double percent, const std::string& message) {
  if (job.events.empty() ? state != JobState::Queued : !legal_transition(job.state, state))
    throw std::logic_error("illegal job transition " + std::string(to_string(job.state)) + " -> " +
                             std::string(to_string(state)));
  JobEvent e{job.events.size(), state, percent, message, now_iso()};
  {
    std::ofstream log(job.dir / "events.jsonl", std::ios::app | std::ios::binary);
    log << e.to_json().dump() << "\n";
  }
  job.events.push_back(e);
  job.state = state;
  job.percent = percent;
  job.message = message;
  changed_.notify_all();
}

void Service::recover() {
  std::vector<std::shared_ptr<Job>> found;
  for (const auto& entry : fs::directory_iterator(config_.data_dir / "jobs")) {
    if (!entry.is_directory()) continue;
    auto meta_path = entry.path() / "meta.json";
    if (!fs::exists(meta_path)) continue;
    auto job = std::make_shared<Job>();
    json meta = json::parse(read_file(meta_path));
    job->id = meta.at("id").get<std::string>();
    job->family = meta.at("family").get<std::string>();
    job->created = meta.at("created").get<std::string>();
    job->checksum = meta.at("checksum").get<std::string>();
    job->dir = entry.path();
    std::istringstream log(read_file(entry.path() / "events.jsonl"));
    std::string line;
    while (std::getline(log, line)) {
      if (line.empty()) continue;
      JobEvent e;
      try {
        e = JobEvent::from_json(json::parse(line));
      } catch (const std::exception&) {
        break;  // torn final line from a crash
      }
      if (!job->events.empty() && !legal_transition(job->state, e.state)) break;
      job->events.push_back(e);
      job->state = e.state;
      job->percent = e.percent;
      job->message = e.message;
    }
    if (job->events.empty()) continue;
    found.push_back(job);
  }
  std::sort(found.begin(), found.end(),
            [](const auto& a, const auto& b) { return std::tie(a->created, a->id) < std::tie(b->created, b->id); });
  for (auto& job : found) {
    if (job->state == JobState::Running) append(*job, JobState::Failed, job->percent, "interrupted");
    if (job->state == JobState::Succeeded && fs::is_directory(job->dir / "out")) {
      for (const auto& f : fs::directory_iterator(job->dir / "out")) job->artifacts.push_back(f.path().filename().string());
      std::sort(job->artifacts.begin(), job->artifacts.end());
    }
    if (job->state == JobState::Queued) queue_.push_back(job->id);
    order_.push_back(job->id);
    jobs_[job->id] = job;
  }
}

std::string Service::submit(std::string_view xml) {
  gssa::SimulationDefinition defn;
  try {
    defn = gssa::from_xml(xml);
    gssa::validate(defn);
  } catch (const Error& e) {
    throw Rejected(std::string("invalid definition: ") + e.what());
  }
  if (!family::is_registered(defn.family)) throw Rejected("unknown numerical model family '" + defn.family + "'");

  auto job = std::make_shared<Job>();
  static thread_local boost::uuids::random_generator uuid_gen;
  job->id = boost::uuids::to_string(uuid_gen());
  job->family = defn.family;
  job->created = now_iso();
  char sum[17];
  std::snprintf(sum, sizeof sum, "%016llx", static_cast<unsigned long long>(fnv1a(xml)));
  job->checksum = sum;
  job->dir = config_.data_dir / "jobs" / job->id;
  fs::create_directories(job->dir / "out");
  std::ofstream(job->dir / "definition.gssa.xml", std::ios::binary) << xml;
  json meta{{"id", job->id}, {"family", job->family}, {"created", job->created}, {"checksum", job->checksum}};
  std::ofstream(job->dir / "meta.json", std::ios::binary) << meta.dump(2) << "\n";

  std::lock_guard lock(mutex_);
  append(*job, JobState::Queued, 0, "queued");
  jobs_[job->id] = job;
  order_.push_back(job->id);
  queue_.push_back(job->id);
  changed_.notify_all();
  return job->id;
}

std::shared_ptr<Service::Job> Service::find(const std::string& id) const {
  auto it = jobs_.find(id);
  if (it == jobs_.end()) throw UnknownJob(id);
  return it->second;
}

JobSnapshot Service::snapshot(const Job& job) const {
  return {job.id, job.family, job.state, job.percent, job.message, job.artifacts,
          job.created, job.events.empty() ? job.created : job.events.back().timestamp, job.checksum};
}

JobSnapshot Service::status(const std::string& id) const {
  std::lock_guard lock(mutex_);
  return snapshot(*find(id));
}

std::vector<JobSnapshot> Service::list() const {
  std::lock_guard lock(mutex_);
  std::vector<JobSnapshot> out;
  for (const auto& id : order_) out.push_back(snapshot(*jobs_.at(id)));
  return out;
}

JobSnapshot Service::cancel(const std::string& id) {
  std::lock_guard lock(mutex_);
  auto job = find(id);
  if (job->state == JobState::Queued) {
    append(*job, JobState::Cancelled, job->percent, "cancelled");
  } else if (job->state == JobState::Running && !job->cancel_requested) {
    job->cancel_requested = true;
    job->cancel_time = std::chrono::steady_clock::now();
    if (job->pid > 0) ::kill(job->pid, SIGTERM);
  }
  return snapshot(*job);
}

std::string Service::fetch_artifact(const std::string& id, const std::string& name) const {
  fs::path path;
  {
    std::lock_guard lock(mutex_);
    auto job = find(id);
    if (!is_final(job->state)) throw NotReady(id);
    if (!safe_name(name) || std::find(job->artifacts.begin(), job->artifacts.end(), name) == job->artifacts.end())
      throw ArtifactNotFound("job '" + id + "' has no artifact '" + name + "'");
    path = job->dir / "out" / name;
  }
  return read_file(path);
}

std::vector<JobEvent> Service::events(const std::string& id, std::size_t from, std::chrono::milliseconds timeout) const {
  std::unique_lock lock(mutex_);
  auto job = find(id);
  changed_.wait_for(lock, timeout, [&] { return job->events.size() > from || is_final(job->state) || stopping_; });
  if (from >= job->events.size()) return {};
  return {job->events.begin() + static_cast<std::ptrdiff_t>(from), job->events.end()};
}

void Service::scheduler_loop() {
  for (;;) {
    std::shared_ptr<Job> job;
    {
      std::unique_lock lock(mutex_);
      changed_.wait(lock, [&] { return stopping_ || !queue_.empty(); });
      if (stopping_) return;
      auto id = queue_.front();
      queue_.pop_front();
      job = jobs_.at(id);
      if (job->state != JobState::Queued) continue;
      append(*job, JobState::Running, 0, "started");
    }
    execute(job);
  }
}

void Service::execute(const std::shared_ptr<Job>& job) {
  fs::path out = job->dir / "out";
  std::vector<std::string> args = config_.worker_command;
  args.push_back((job->dir / "definition.gssa.xml").string());
  args.push_back("--out");
  args.push_back(out.string());
  args.push_back("--progress-json");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  argv.push_back(nullptr);

  int fds[2];
  if (::pipe2(fds, O_CLOEXEC) != 0) {
    std::lock_guard lock(mutex_);
    append(*job, JobState::Failed, job->percent, std::string("cannot create pipe: ") + std::strerror(errno));
    return;
  }
  std::string stderr_path = (job->dir / "stderr.log").string();
  posix_spawn_file_actions_t actions;
  posix_spawn_file_actions_init(&actions);
  posix_spawn_file_actions_adddup2(&actions, fds[1], 1);
  posix_spawn_file_actions_addopen(&actions, 2, stderr_path.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
  posix_spawn_file_actions_addchdir_np(&actions, out.c_str());
  pid_t pid = -1;
  int rc = posix_spawn(&pid, argv[0], &actions, nullptr, argv.data(), environ);
  posix_spawn_file_actions_destroy(&actions);
  ::close(fds[1]);
  if (rc != 0) {
    ::close(fds[0]);
    std::lock_guard lock(mutex_);
    append(*job, JobState::Failed, job->percent, "cannot start worker: " + std::string(std::strerror(rc)));
    return;
  }
  {
    std::lock_guard lock(mutex_);
    job->pid = pid;
    if (stopping_) ::kill(pid, SIGKILL);
    else if (job->cancel_requested) ::kill(pid, SIGTERM);
  }

  std::string buffer;
  bool killed = false;
  for (;;) {
    pollfd p{fds[0], POLLIN, 0};
    int ready = ::poll(&p, 1, 100);
    if (ready > 0) {
      char chunk[4096];
      ssize_t n = ::read(fds[0], chunk, sizeof chunk);
      if (n <= 0) break;
      buffer.append(chunk, static_cast<std::size_t>(n));
      std::size_t nl;
      while ((nl = buffer.find('\n')) != std::string::npos) {
        std::string line = buffer.substr(0, nl);
        buffer.erase(0, nl + 1);
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object() || !j.contains("percent")) continue;
        double pct = j["percent"].is_number() ? j["percent"].get<double>() : 0.0;
        std::string msg = j.contains("message") && j["message"].is_string() ? j["message"].get<std::string>() : "";
        std::lock_guard lock(mutex_);
        if (job->cancel_requested || stopping_) continue;
        append(*job, JobState::Running, std::clamp(std::max(pct, job->percent), 0.0, 100.0), msg);
      }
    }
    std::lock_guard lock(mutex_);
    if (!killed && job->cancel_requested &&
        std::chrono::steady_clock::now() - job->cancel_time >= config_.kill_grace) {
      ::kill(pid, SIGKILL);
      killed = true;
    }
  }
  ::close(fds[0]);
  int status = 0;
  while (::waitpid(pid, &status, 0) < 0 && errno == EINTR) {
  }

  std::lock_guard lock(mutex_);
  job->pid = -1;
  if (job->cancel_requested) {
    append(*job, JobState::Cancelled, job->percent, "cancelled");
  } else if (stopping_) {
    append(*job, JobState::Failed, job->percent, "interrupted");
  } else if (WIFEXITED(status) && WEXITSTATUS(status) == 0) {
    std::vector<std::string> names;
    for (const auto& f : fs::directory_iterator(out)) names.push_back(f.path().filename().string());
    std::sort(names.begin(), names.end());
    job->artifacts = names;
    append(*job, JobState::Succeeded, 100, "finished");
  } else {
    std::string why = WIFSIGNALED(status) ? "worker killed by signal " + std::to_string(WTERMSIG(status))
                                          : "worker exited with code " + std::to_string(WEXITSTATUS(status));
    std::string diag = tail(read_file(stderr_path), 2000);
    append(*job, JobState::Failed, job->percent, diag.empty() ? why : why + ": " + diag);
  }
}

}  // namespace ablasim::orchestrator

#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "ablasim/error.hpp"
#include "json.hpp"

namespace ablasim::orchestrator {

enum class JobState { Queued, Running, Succeeded, Failed, Cancelled };

std::string_view to_string(JobState s);
std::optional<JobState> parse_job_state(std::string_view s);
bool is_final(JobState s);
/// QUEUED→RUNNING→{SUCCEEDED,FAILED,CANCELLED}, QUEUED→CANCELLED, and
/// RUNNING→RUNNING for progress updates.
bool legal_transition(JobState from, JobState to);

struct JobEvent {
  std::uint64_t seq{0};
  JobState state{JobState::Queued};
  double percent{0};
  std::string message;
  std::string timestamp;  ///< ISO 8601 UTC

  nlohmann::json to_json() const;
  static JobEvent from_json(const nlohmann::json& j);
};

struct JobSnapshot {
  std::string id;
  std::string family;
  JobState state{JobState::Queued};
  double percent{0};
  std::string message;
  std::vector<std::string> artifacts;
  std::string created, updated;
  std::string checksum;  ///< FNV-1a 64 of the submitted definition bytes

  nlohmann::json to_json() const;
};

class UnknownJob : public Error {
 public:
  explicit UnknownJob(const std::string& id) : Error("unknown job '" + id + "'") {}
};

class NotReady : public Error {
 public:
  explicit NotReady(const std::string& id) : Error("job '" + id + "' is not final; artifacts not ready") {}
};

class ArtifactNotFound : public Error {
 public:
  using Error::Error;
};

/// Submission rejected: malformed XML, invalid definition or unknown family.
class Rejected : public Error {
 public:
  using Error::Error;
};

struct ServiceConfig {
  std::filesystem::path data_dir;
  /// Worker command prefix; the service appends
  /// `<definition> --out <dir> --progress-json`.
  std::vector<std::string> worker_command;
  int workers{2};
  std::chrono::milliseconds kill_grace{2000};
};

/// Job table plus FIFO scheduler. Each job lives in
/// `<data_dir>/jobs/<id>/` with the submitted definition, an append-only
/// events.jsonl log, the worker's stderr and an `out/` scratch directory.
class Service {
 public:
  explicit Service(ServiceConfig config);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  std::string submit(std::string_view definition_xml);
  JobSnapshot status(const std::string& id) const;
  std::vector<JobSnapshot> list() const;
  /// Idempotent. Queued jobs are cancelled at once; running workers get
  /// SIGTERM and, after the grace period, SIGKILL.
  JobSnapshot cancel(const std::string& id);
  std::string fetch_artifact(const std::string& id, const std::string& name) const;

  /// All events from index `from` on, waiting up to `timeout` for at least
  /// one when none are available yet. Empty result with a final job means
  /// the stream is complete.
  std::vector<JobEvent> events(const std::string& id, std::size_t from = 0,
                               std::chrono::milliseconds timeout = std::chrono::milliseconds(0)) const;

  const ServiceConfig& config() const { return config_; }

 private:
  struct Job;

  void recover();
  void scheduler_loop();
  void execute(const std::shared_ptr<Job>& job);
  void append(Job& job, JobState state, double percent, const std::string& message);
  std::shared_ptr<Job> find(const std::string& id) const;
  JobSnapshot snapshot(const Job& job) const;

  ServiceConfig config_;
  mutable std::mutex mutex_;
  mutable std::condition_variable changed_;
  std::map<std::string, std::shared_ptr<Job>> jobs_;
  std::vector<std::string> order_;
  std::deque<std::string> queue_;
  bool stopping_{false};
  std::vector<std::thread> threads_;
};

std::uint64_t fnv1a(std::string_view bytes);

}  // namespace ablasim::orchestrator

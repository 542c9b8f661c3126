#pragma once

#include <atomic>
#include <filesystem>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "ablasim/domain/model.hpp"
#include "ablasim/orchestrator/service.hpp"

namespace ablasim::orchestrator {

/// JSON/HTTP front end over a Service and a domain entity store:
///   POST /jobs                      GSSA-XML body → {"id", "state"}
///   GET  /jobs, GET /jobs/{id}
///   POST /jobs/{id}/cancel
///   GET  /jobs/{id}/artifacts/{name}
///   WS   /jobs/{id}/events          {state, percent, message, timestamp} per event
///   GET  /entities/{kind}[?public=true], GET|PUT /entities/{kind}/{id}
///   POST /combinations/validate     combination document → validation report
///   POST /combinations/{id}/concretize  needles, inputs, phantom → GSSA-XML
/// One thread per connection; watch streams never hold the job table lock
/// while writing.
class HttpServer {
 public:
  HttpServer(Service& service, std::filesystem::path entity_store, const std::string& address, unsigned short port);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  /// Bound port (useful with port 0).
  unsigned short port() const { return port_; }
  void stop();

  struct Impl;

 private:
  std::unique_ptr<Impl> impl_;
  unsigned short port_{0};
};

}  // namespace ablasim::orchestrator

#include "ablasim/orchestrator/http.hpp"

#include <sys/socket.h>

#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>
#include <fstream>
#include <regex>

#include "ablasim/family/phantom.hpp"
#include "ablasim/gssa/definition.hpp"

namespace ablasim::orchestrator {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;
using nlohmann::json;

namespace {

using Request = http::request<http::string_body>;
using Response = http::response<http::string_body>;

Response reply(const Request& req, http::status status, const std::string& body,
               const std::string& type = "application/json") {
  Response res{status, req.version()};
  res.set(http::field::content_type, type);
  res.set(http::field::access_control_allow_origin, "*");
  res.keep_alive(req.keep_alive());
  res.body() = body;
  res.prepare_payload();
  return res;
}

Response error(const Request& req, http::status status, const std::string& message, json extra = json::object()) {
  extra["error"] = message;
  return reply(req, status, extra.dump());
}

std::vector<std::string> split_path(std::string_view target) {
  auto q = target.find('?');
  if (q != std::string_view::npos) target = target.substr(0, q);
  std::vector<std::string> parts;
  std::string cur;
  for (char c : target) {
    if (c == '/') {
      if (!cur.empty()) parts.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) parts.push_back(cur);
  return parts;
}

}  // namespace

struct HttpServer::Impl {
  Service& service;
  std::filesystem::path store_path;
  std::mutex store_mutex;
  domain::Registry registry;

  asio::io_context io;
  tcp::acceptor acceptor{io};
  std::atomic<bool> stopping{false};
  std::thread accept_thread;
  std::mutex conn_mutex;
  std::set<int> open_sockets;
  std::vector<std::thread> connections;

  Impl(Service& s, std::filesystem::path store) : service(s), store_path(std::move(store)) {
    if (!store_path.empty() && std::filesystem::is_directory(store_path)) registry = domain::Registry::load(store_path);
  }

  void accept_loop() {
    while (!stopping) {
      beast::error_code ec;
      tcp::socket socket(io);
      acceptor.accept(socket, ec);
      if (ec == asio::error::would_block || ec == asio::error::try_again) {
        std::this_thread::sleep_for(std::chrono::milliseconds(10));
        continue;
      }
      if (ec) continue;
      socket.non_blocking(false);
      std::lock_guard lock(conn_mutex);
      if (stopping) return;
      int fd = socket.native_handle();
      open_sockets.insert(fd);
      connections.emplace_back([this, s = std::move(socket), fd]() mutable {
        session(std::move(s));
        std::lock_guard lock(conn_mutex);
        open_sockets.erase(fd);
      });
    }
  }

  void session(tcp::socket socket) {
    beast::flat_buffer buffer;
    beast::error_code ec;
    for (;;) {
      Request req;
      http::read(socket, buffer, req, ec);
      if (ec) return;
      if (websocket::is_upgrade(req)) {
        watch(std::move(socket), std::move(req));
        return;
      }
      Response res;
      try {
        res = handle(req);
      } catch (const std::exception& e) {
        res = error(req, http::status::internal_server_error, e.what());
      }
      http::write(socket, res, ec);
      if (ec || !res.keep_alive()) break;
    }
    socket.shutdown(tcp::socket::shutdown_send, ec);
  }

  void watch(tcp::socket socket, Request req) {
    auto parts = split_path(std::string(req.target()));
    beast::error_code ec;
    if (parts.size() != 3 || parts[0] != "jobs" || parts[2] != "events") {
      http::write(socket, error(req, http::status::not_found, "no such stream"), ec);
      return;
    }
    const std::string id = parts[1];
    try {
      service.status(id);
    } catch (const UnknownJob& e) {
      http::write(socket, error(req, http::status::not_found, e.what()), ec);
      return;
    }
    websocket::stream<tcp::socket> ws(std::move(socket));
    ws.accept(req, ec);
    if (ec) return;
    ws.text(true);
    std::size_t next = 0;
    while (!stopping) {
      auto batch = service.events(id, next, std::chrono::milliseconds(250));
      for (const auto& e : batch) {
        json j{{"state", to_string(e.state)}, {"percent", e.percent}, {"message", e.message}, {"timestamp", e.timestamp}, {"seq", e.seq}};
        ws.write(asio::buffer(j.dump()), ec);
        if (ec) return;
      }
      next += batch.size();
      if (batch.empty() && is_final(service.status(id).state)) break;
    }
    ws.close(websocket::close_code::normal, ec);
  }

  Response handle(const Request& req) {
    auto parts = split_path(std::string(req.target()));
    auto method = req.method();
    if (method == http::verb::options) return reply(req, http::status::no_content, "");
    if (!parts.empty() && parts[0] == "jobs") return jobs(req, parts);
    if (!parts.empty() && parts[0] == "entities") return entities(req, parts);
    if (parts.size() == 2 && parts[0] == "combinations" && parts[1] == "validate" && method == http::verb::post)
      return validate(req);
    if (parts.size() == 3 && parts[0] == "combinations" && parts[2] == "concretize" && method == http::verb::post)
      return concretize(req, parts[1]);
    return error(req, http::status::not_found, "no route for " + std::string(req.target()));
  }

  Response jobs(const Request& req, const std::vector<std::string>& parts) {
    auto method = req.method();
    try {
      if (parts.size() == 1 && method == http::verb::post) {
        auto id = service.submit(req.body());
        return reply(req, http::status::created, json{{"id", id}, {"state", "QUEUED"}}.dump());
      }
      if (parts.size() == 1 && method == http::verb::get) {
        json list = json::array();
        for (const auto& s : service.list()) list.push_back(s.to_json());
        return reply(req, http::status::ok, list.dump());
      }
      if (parts.size() == 2 && method == http::verb::get)
        return reply(req, http::status::ok, service.status(parts[1]).to_json().dump());
      if (parts.size() == 3 && parts[2] == "cancel" && method == http::verb::post) {
        service.cancel(parts[1]);
        return reply(req, http::status::ok, json{{"id", parts[1]}, {"acknowledged", true}}.dump());
      }
      if (parts.size() == 4 && parts[2] == "artifacts" && method == http::verb::get)
        return reply(req, http::status::ok, service.fetch_artifact(parts[1], parts[3]), "application/octet-stream");
    } catch (const Rejected& e) {
      return error(req, http::status::bad_request, e.what());
    } catch (const UnknownJob& e) {
      return error(req, http::status::not_found, e.what());
    } catch (const NotReady& e) {
      return error(req, http::status::conflict, e.what(), {{"reason", "not ready"}});
    } catch (const ArtifactNotFound& e) {
      return error(req, http::status::not_found, e.what());
    }
    return error(req, http::status::method_not_allowed, "unsupported method");
  }

  Response entities(const Request& req, const std::vector<std::string>& parts) {
    std::lock_guard lock(store_mutex);
    try {
      if (parts.size() == 2 && req.method() == http::verb::get) {
        auto ids = registry.ids(parts[1]);
        if (parts[1] == "combination" && std::string(req.target()).find("public=true") != std::string::npos)
          std::erase_if(ids, [&](const std::string& id) { return !registry.combination(id).is_public; });
        return reply(req, http::status::ok, json(ids).dump());
      }
      if (parts.size() == 3 && req.method() == http::verb::get)
        return reply(req, http::status::ok, registry.get(parts[1], parts[2]).dump());
      if (parts.size() == 3 && req.method() == http::verb::put) {
        json doc = json::parse(req.body());
        registry.put(parts[1], parts[2], doc);
        auto canonical = registry.get(parts[1], parts[2]);
        if (!store_path.empty()) {
          std::filesystem::create_directories(store_path / parts[1]);
          std::ofstream(store_path / parts[1] / (parts[2] + ".json")) << canonical.dump(2) << "\n";
        }
        return reply(req, http::status::ok, canonical.dump());
      }
    } catch (const domain::MissingEntity& e) {
      return error(req, http::status::not_found, e.what(), {{"kind", e.kind()}, {"id", e.id()}});
    } catch (const json::exception& e) {
      return error(req, http::status::bad_request, e.what());
    } catch (const Error& e) {
      return error(req, http::status::bad_request, e.what());
    }
    return error(req, http::status::method_not_allowed, "unsupported method");
  }

  Response validate(const Request& req) {
    std::lock_guard lock(store_mutex);
    try {
      json doc = json::parse(req.body());
      domain::Combination c;
      if (doc.is_object() && doc.size() == 1 && doc.contains("id")) {
        c = registry.combination(doc["id"].get<std::string>());
      } else {
        domain::Registry scratch = registry;
        scratch.put("combination", doc.value("id", std::string("candidate")), doc);
        c = scratch.combination(doc.value("id", std::string("candidate")));
      }
      auto report = domain::validate_combination(c, registry);
      return reply(req, http::status::ok,
                   json{{"ok", report.ok()}, {"unfillable", report.unfillable}, {"compat_errors", report.compat_errors}}.dump());
    } catch (const domain::MissingEntity& e) {
      return error(req, http::status::not_found, e.what(), {{"kind", e.kind()}, {"id", e.id()}});
    } catch (const json::exception& e) {
      return error(req, http::status::bad_request, e.what());
    } catch (const Error& e) {
      return error(req, http::status::bad_request, e.what());
    }
  }

  static Vec3 point(const json& j) {
    if (!j.is_array() || j.size() != 3) throw Error("points are [x, y, z] arrays");
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
  }

  std::map<std::string, Value> values(const json& j) const {
    std::map<std::string, Value> out;
    if (j.is_null()) return out;
    for (const auto& [name, v] : j.items()) out[name] = domain::value_from_json(v, registry.parameter(name).value_type);
    return out;
  }

  /// {"needles": [{"spec"?, "tip", "entry", "parameters"?}], "parameters"?, "phantom"?, "duration"?}
  /// → GSSA-XML definition.
  Response concretize(const Request& req, const std::string& id) {
    std::lock_guard lock(store_mutex);
    auto rejected = [&](const std::string& kind, const std::string& what) {
      return error(req, http::status::unprocessable_entity, what, {{"kind", kind}});
    };
    try {
      json doc = json::parse(req.body());
      const auto& combo = registry.combination(id);
      domain::ConcretizeInputs in;
      for (const auto& n : doc.value("needles", json::array())) {
        domain::ConcreteNeedle cn;
        cn.spec = n.value("spec", combo.allowed_needles.front());
        cn.tip = point(n.at("tip"));
        cn.entry = point(n.at("entry"));
        cn.parameters = values(n.value("parameters", json(nullptr)));
        in.needles.push_back(std::move(cn));
      }
      in.user_inputs = values(doc.value("parameters", json(nullptr)));
      if (doc.contains("duration")) in.duration = doc["duration"].get<double>();
      std::optional<family::PhantomSpec> ph;
      if (doc.contains("phantom")) {
        ph = family::parse_phantom(doc["phantom"]);
        in.regions = ph->regions;
      }
      auto d = domain::concretize(combo, registry, in);
      if (ph) {
        d.regions.clear();
        family::apply_phantom(d, *ph);
      }
      return reply(req, http::status::ok, gssa::to_xml(d), "application/xml");
    } catch (const domain::MissingEntity& e) {
      return error(req, http::status::not_found, e.what(), {{"kind", e.kind()}, {"id", e.id()}});
    } catch (const domain::MissingRequired& e) {
      return rejected("missing_required", e.what());
    } catch (const domain::ParameterTypeError& e) {
      return rejected("type_error", e.what());
    } catch (const domain::CompatViolation& e) {
      return rejected("compat_violation", e.what());
    } catch (const json::exception& e) {
      return error(req, http::status::bad_request, e.what());
    } catch (const Error& e) {
      return rejected("invalid", e.what());
    }
  }
};

HttpServer::HttpServer(Service& service, std::filesystem::path entity_store, const std::string& address,
                       unsigned short port)
    : impl_(std::make_unique<Impl>(service, std::move(entity_store))) {
  tcp::endpoint ep(asio::ip::make_address(address), port);
  impl_->acceptor.open(ep.protocol());
  impl_->acceptor.set_option(asio::socket_base::reuse_address(true));
  impl_->acceptor.bind(ep);
  impl_->acceptor.listen();
  impl_->acceptor.non_blocking(true);
  port_ = impl_->acceptor.local_endpoint().port();
  impl_->accept_thread = std::thread([this] { impl_->accept_loop(); });
}

HttpServer::~HttpServer() { stop(); }

void HttpServer::stop() {
  if (!impl_ || impl_->stopping.exchange(true)) return;
  impl_->accept_thread.join();
  std::vector<std::thread> conns;
  {
    std::lock_guard lock(impl_->conn_mutex);
    for (int fd : impl_->open_sockets) ::shutdown(fd, SHUT_RDWR);
    conns.swap(impl_->connections);
  }
  for (auto& t : conns) t.join();
  beast::error_code ec;
  impl_->acceptor.close(ec);
}

}  // namespace ablasim::orchestrator

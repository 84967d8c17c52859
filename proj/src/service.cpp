#include "revdict/service.hpp"

#include <chrono>
#include <cstdlib>
#include <iostream>

#include "httplib.h"
#include "json.hpp"
#include "revdict/error.hpp"

namespace revdict {

using nlohmann::json;

LookupService::LookupService(EnsembleRuntime runtime, VocabIndex index)
    : runtime_(std::move(runtime)), index_(std::move(index)) {
  if (index_.size() == 0) throw DataError("lookup index is empty");
  if (runtime_.ensemble.d_out() != index_.dim()) {
    throw DimensionError("ensemble predicts " + std::to_string(runtime_.ensemble.d_out()) +
                         "-d vectors but the index holds " + std::to_string(index_.dim()) + "-d rows");
  }
  if (runtime_.ensemble.target() != index_.kind()) {
    throw DataError("ensemble and index use different target embeddings");
  }
}

std::vector<Hit> LookupService::lookup(std::string_view definition, std::size_t k) const {
  if (definition.find_first_not_of(" \t\r\n") == std::string_view::npos) {
    throw ConfigError("definition must not be empty");
  }
  if (k < 1 || k > kMaxK) throw ConfigError("k must be between 1 and " + std::to_string(kMaxK));
  const std::string ids[] = {std::string()};
  const std::string glosses[] = {std::string(definition)};
  const Matrix pred = runtime_.encode_and_predict(ids, glosses, false);
  return index_.lookup(pred.row(0), k);
}

namespace {

bool cache_is_fresh(const fs::path& cache, const RunConfig& cfg) {
  if (!fs::exists(cache)) return false;
  const auto stamp = fs::last_write_time(cache);
  std::vector<fs::path> sources = cfg.index;
  if (sources.empty()) {
    for (const auto& [split, path] : cfg.dictionary) sources.push_back(path);
  }
  for (const auto& p : sources) {
    if (fs::last_write_time(p) > stamp) return false;
  }
  return true;
}

}  // namespace

std::unique_ptr<LookupService> make_lookup_service(const RunConfig& cfg, const Manifest& manifest) {
  EnsembleRuntime runtime = load_runtime(cfg, manifest);
  VocabIndex index;
  const auto& cache = cfg.serve.index_cache;
  if (cache && cache_is_fresh(*cache, cfg)) {
    index = VocabIndex::load(*cache);
    if (index.kind() != manifest.target) index = VocabIndex();
  }
  if (index.size() == 0) {
    index = build_lookup_index(cfg, manifest.target);
    if (cache) index.save(*cache);
  }
  return std::make_unique<LookupService>(std::move(runtime), std::move(index));
}

LookupServer::LookupServer(Loader loader, std::optional<std::string> static_dir)
    : loader_(std::move(loader)), http_(std::make_unique<httplib::Server>()) {
  install_routes();
  if (static_dir && !http_->set_mount_point("/", *static_dir)) {
    throw ConfigError("static directory not found: " + *static_dir);
  }
}

LookupServer::~LookupServer() {
  stop();
  if (loader_thread_.joinable()) loader_thread_.join();
}

void LookupServer::install_routes() {
  http_->Get("/health", [this](const httplib::Request&, httplib::Response& res) {
    const char* status = ready_ ? "ok" : failed_ ? "error" : "loading";
    json body = {{"status", status}, {"requests", served_.load()}};
    if (failed_) body["error"] = load_error_;
    res.set_content(body.dump(), "application/json");
  });

  http_->Post("/lookup", [this](const httplib::Request& req, httplib::Response& res) {
    const auto started = std::chrono::steady_clock::now();
    auto fail = [&res](int code, const std::string& msg) {
      res.status = code;
      res.set_content(json{{"error", msg}}.dump(), "application/json");
    };
    if (!ready_) {
      fail(503, failed_ ? "index failed to load: " + load_error_ : "index is loading");
      return;
    }
    json body = json::parse(req.body, nullptr, false);
    if (body.is_discarded() || !body.is_object()) return fail(400, "request body must be a JSON object");
    if (!body.contains("definition") || !body["definition"].is_string()) {
      return fail(400, "'definition' must be a string");
    }
    long long k = 10;
    if (body.contains("k")) {
      if (!body["k"].is_number_integer()) return fail(400, "'k' must be an integer");
      k = body["k"].get<long long>();
    }
    if (k < 1 || k > static_cast<long long>(LookupService::kMaxK)) {
      return fail(400, "k must be between 1 and " + std::to_string(LookupService::kMaxK));
    }
    std::vector<Hit> hits;
    try {
      hits = service_->lookup(body["definition"].get<std::string>(), static_cast<std::size_t>(k));
    } catch (const ConfigError& e) {
      return fail(400, e.what());
    } catch (const std::exception& e) {
      return fail(500, e.what());
    }
    json results = json::array();
    for (const auto& h : hits) results.push_back({{"id", h.id}, {"word", h.word}, {"score", h.score}});
    const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
    ++served_;
    res.set_content(json{{"results", results}, {"latency_ms", ms}}.dump(), "application/json");
  });
}

void LookupServer::begin_loading() {
  if (loader_thread_.joinable()) return;
  loader_thread_ = std::thread([this] {
    try {
      service_ = loader_();
      if (!service_) throw StateError("loader produced no service");
      ready_ = true;
    } catch (const std::exception& e) {
      load_error_ = e.what();
      failed_ = true;
      std::cerr << "error: " << e.what() << "\n";
    }
  });
}

int LookupServer::start(const std::string& host, int port) {
  const int bound = port == 0 ? http_->bind_to_any_port(host) : (http_->bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw ConfigError("cannot bind " + host + ":" + std::to_string(port));
  begin_loading();
  server_thread_ = std::thread([this] { http_->listen_after_bind(); });
  http_->wait_until_ready();
  return bound;
}

void LookupServer::listen(const std::string& host, int port) {
  if (!http_->bind_to_port(host, port)) throw ConfigError("cannot bind " + host + ":" + std::to_string(port));
  begin_loading();
  http_->listen_after_bind();
}

void LookupServer::stop() {
  if (http_->is_running()) http_->stop();
  if (server_thread_.joinable()) server_thread_.join();
}

bool LookupServer::wait_ready() const {
  while (!ready_ && !failed_) std::this_thread::sleep_for(std::chrono::milliseconds(5));
  return ready_;
}

int port_from_env(int fallback) {
  const char* v = std::getenv("REVDICT_PORT");
  if (v == nullptr || *v == '\0') return fallback;
  char* end = nullptr;
  const long port = std::strtol(v, &end, 10);
  if (*end != '\0' || port < 0 || port > 65535) throw ConfigError(std::string("REVDICT_PORT is not a port: ") + v);
  return static_cast<int>(port);
}

}  // namespace revdict

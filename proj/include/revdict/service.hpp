#pragma once

#include <atomic>
#include <cstddef>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "revdict/pipeline.hpp"
#include "revdict/retrieval.hpp"

namespace httplib {
class Server;
}

namespace revdict {

// Definition text -> encoders -> ensemble -> exact top-k lookup. Immutable,
// so any number of threads may call lookup() concurrently.
class LookupService {
 public:
  LookupService(EnsembleRuntime runtime, VocabIndex index);

  static constexpr std::size_t kMaxK = 100;

  // Throws ConfigError on an empty definition or k outside [1, kMaxK].
  std::vector<Hit> lookup(std::string_view definition, std::size_t k) const;

  const VocabIndex& index() const noexcept { return index_; }

 private:
  EnsembleRuntime runtime_;
  VocabIndex index_;
};

// Builds the service for a run config and manifest; uses and refreshes the
// persisted index cache when one is configured.
std::unique_ptr<LookupService> make_lookup_service(const RunConfig& cfg, const Manifest& manifest);

// HTTP front end: GET /health, POST /lookup and an optional static mount.
// The service is produced on a background thread; /lookup answers 503 until
// it is ready.
class LookupServer {
 public:
  using Loader = std::function<std::unique_ptr<LookupService>()>;

  explicit LookupServer(Loader loader, std::optional<std::string> static_dir = std::nullopt);
  ~LookupServer();

  LookupServer(const LookupServer&) = delete;
  LookupServer& operator=(const LookupServer&) = delete;

  // Binds and serves on a background thread; port 0 picks a free port.
  // Returns the bound port.
  int start(const std::string& host, int port);
  // Blocks in the calling thread.
  void listen(const std::string& host, int port);
  void stop();

  bool ready() const noexcept { return ready_.load(); }
  // Blocks until loading finished; false if the loader threw.
  bool wait_ready() const;
  std::size_t requests_served() const noexcept { return served_.load(); }

 private:
  void install_routes();
  void begin_loading();

  Loader loader_;
  std::unique_ptr<httplib::Server> http_;
  std::unique_ptr<LookupService> service_;
  std::atomic<bool> ready_{false};
  std::atomic<bool> failed_{false};
  std::atomic<std::size_t> served_{0};
  std::string load_error_;
  std::thread loader_thread_;
  std::thread server_thread_;
};

// Port from REVDICT_PORT when set, else the fallback.
int port_from_env(int fallback);

}  // namespace revdict

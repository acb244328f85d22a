#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "lens/core.hpp"
#include "lens/store.hpp"

namespace lens {

// Client for the text embedding sidecar: POST {endpoint}/embed {"texts": [...]}
// answered by {"dim": d, "vectors": [[...], ...]}.
struct EmbedderClient {
  std::string endpoint;  // scheme://host:port
  double timeout_seconds = 30.0;
  std::size_t expected_dim = 0;
};

std::vector<Vector> embed_texts(const EmbedderClient& client, const std::vector<std::string>& texts);

// Reads LENS_EMBEDDER_URL; nullopt when unset or empty.
std::optional<EmbedderClient> embedder_from_env(std::size_t expected_dim);

struct ApiRequest {
  std::string method;
  std::string path;
  std::map<std::string, std::string> query;
  std::string body;
};

struct ApiResponse {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
};

// Transport-free request handling. Safe to call from many threads at once.
class Api {
 public:
  Api(std::shared_ptr<const LensDB> db, std::optional<EmbedderClient> embedder = std::nullopt,
      std::map<std::string, std::shared_ptr<const LensDB>> others = {});

  ApiResponse handle(const ApiRequest& request) const;

  const LensDB& db() const noexcept { return *db_; }

 private:
  ApiResponse route(const ApiRequest& request) const;
  std::string cached(const std::string& key, const std::function<std::string()>& compute) const;

  std::shared_ptr<const LensDB> db_;
  std::optional<EmbedderClient> embedder_;
  std::map<std::string, std::shared_ptr<const LensDB>> others_;
  mutable std::shared_mutex cache_mutex_;
  mutable std::map<std::string, std::string> cache_;
};

// Error body: {"error": {"code": ..., "message": ...}}.
ApiResponse error_response(const Error& e);

class Server {
 public:
  explicit Server(std::shared_ptr<const Api> api);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  // Port 0 picks a free port. Returns the bound port.
  int bind(const std::string& host, int port);
  void run();  // blocks until stop()
  void stop();
  void wait_until_ready() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Loads the databases, failing with LoadFailure.
std::shared_ptr<const Api> open_api(const std::filesystem::path& db_path, std::optional<EmbedderClient> embedder,
                                    const std::map<std::string, std::filesystem::path>& others = {});

// "host:port" or ":port".
std::pair<std::string, int> parse_bind_address(const std::string& address);

}  // namespace lens

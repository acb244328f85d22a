#include <cstdlib>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "lens/service.hpp"

namespace lens {

std::vector<Vector> embed_texts(const EmbedderClient& client, const std::vector<std::string>& texts) {
  if (texts.empty()) throw Error(ErrorCode::InvalidArgument, "no texts to embed");
  if (client.expected_dim == 0) throw Error(ErrorCode::InvalidArgument, "embedder expected_dim must be positive");

  httplib::Client http(client.endpoint);
  if (!http.is_valid()) throw Error(ErrorCode::UpstreamUnavailable, "invalid embedder endpoint '" + client.endpoint + "'");
  const auto whole = std::chrono::duration<double>(client.timeout_seconds);
  const auto usec = std::chrono::duration_cast<std::chrono::microseconds>(whole).count();
  http.set_connection_timeout(usec / 1000000, usec % 1000000);
  http.set_read_timeout(usec / 1000000, usec % 1000000);
  http.set_write_timeout(usec / 1000000, usec % 1000000);

  const nlohmann::json request{{"texts", texts}};
  const auto res = http.Post("/embed", request.dump(), "application/json");
  if (!res) {
    throw Error(ErrorCode::UpstreamUnavailable,
                "embedder at " + client.endpoint + " unreachable: " + httplib::to_string(res.error()));
  }
  if (res->status != 200) {
    throw Error(ErrorCode::UpstreamUnavailable, "embedder answered HTTP " + std::to_string(res->status));
  }

  std::vector<Vector> vectors;
  std::size_t dim = 0;
  try {
    const auto body = nlohmann::json::parse(res->body);
    dim = body.at("dim").get<std::size_t>();
    vectors = body.at("vectors").get<std::vector<Vector>>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::UpstreamUnavailable, std::string("malformed embedder response: ") + e.what());
  }
  if (dim != client.expected_dim) {
    throw Error(ErrorCode::DimMismatchFromUpstream,
                "embedder returned dim " + std::to_string(dim) + ", expected " + std::to_string(client.expected_dim));
  }
  if (vectors.size() != texts.size()) {
    throw Error(ErrorCode::UpstreamUnavailable, "embedder returned " + std::to_string(vectors.size()) +
                                                    " vectors for " + std::to_string(texts.size()) + " texts");
  }
  for (const auto& v : vectors) {
    if (v.size() != client.expected_dim) {
      throw Error(ErrorCode::DimMismatchFromUpstream, "embedder vector of length " + std::to_string(v.size()) +
                                                          ", expected " + std::to_string(client.expected_dim));
    }
  }
  return vectors;
}

std::optional<EmbedderClient> embedder_from_env(std::size_t expected_dim) {
  const char* url = std::getenv("LENS_EMBEDDER_URL");
  if (!url || !*url) return std::nullopt;
  EmbedderClient client;
  client.endpoint = url;
  while (!client.endpoint.empty() && client.endpoint.back() == '/') client.endpoint.pop_back();
  client.expected_dim = expected_dim;
  return client;
}

}  // namespace lens

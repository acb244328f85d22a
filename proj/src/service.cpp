#include "lens/service.hpp"

#include <charconv>
#include <condition_variable>
#include <cstring>
#include <mutex>

#include <httplib.h>
#include <nlohmann/json.hpp>
#include <sodium.h>

#include "lens/audit.hpp"
#include "lens/query.hpp"
#include "lens/report.hpp"

namespace lens {

namespace {

using json = nlohmann::ordered_json;

constexpr std::size_t kDefaultTopK = 10;

int status_of(ErrorCode code) {
  switch (code) {
    case ErrorCode::UnknownComponent:
    case ErrorCode::UnknownLayer:
    case ErrorCode::UnknownTarget:
    case ErrorCode::UnknownProbeSet:
    case ErrorCode::UnknownDatabase:
    case ErrorCode::MissingRelevance:
    case ErrorCode::MissingEdges:
    case ErrorCode::NotFound:
      return 404;
    case ErrorCode::UpstreamUnavailable:
      return 503;
    case ErrorCode::DimMismatchFromUpstream:
      return 502;
    case ErrorCode::MissingBlob:
    case ErrorCode::SizeMismatch:
    case ErrorCode::CorruptManifest:
    case ErrorCode::IoFailure:
    case ErrorCode::BindFailure:
    case ErrorCode::LoadFailure:
      return 500;
    default:
      return 400;
  }
}

std::string_view api_code(int status) {
  switch (status) {
    case 400: return "bad_request";
    case 404: return "not_found";
    case 502:
    case 503: return "upstream_unavailable";
    default: return "internal";
  }
}

ApiResponse json_response(const std::string& body) { return {200, "application/json", body}; }

std::string dump(const json& j) { return j.dump(); }

std::vector<std::string> split_path(const std::string& path) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (start <= path.size()) {
    const auto end = path.find('/', start);
    const auto piece = path.substr(start, end == std::string::npos ? std::string::npos : end - start);
    if (!piece.empty()) parts.push_back(piece);
    if (end == std::string::npos) break;
    start = end + 1;
  }
  return parts;
}

std::size_t parse_index(std::string_view s, std::string_view what) {
  std::size_t v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size() || s.empty()) {
    throw Error(ErrorCode::InvalidArgument, std::string(what) + " must be a non-negative integer, got '" +
                                                std::string(s) + "'");
  }
  return v;
}

json parse_body(const std::string& body) {
  if (body.empty()) return json::object();
  try {
    auto j = json::parse(body);
    if (!j.is_object()) throw Error(ErrorCode::InvalidArgument, "request body must be an object");
    return j;
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("request body is not valid JSON: ") + e.what());
  }
}

template <typename T>
std::optional<T> field(const json& body, const char* key) {
  const auto it = body.find(key);
  if (it == body.end() || it->is_null()) return std::nullopt;
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw Error(ErrorCode::InvalidArgument, std::string("field '") + key + "' has the wrong type");
  }
}

// Float array or base64 of little-endian float32.
Vector parse_vector(const json& v, const char* key) {
  if (v.is_array()) {
    Vector out;
    out.reserve(v.size());
    for (const auto& x : v) {
      if (!x.is_number()) throw Error(ErrorCode::InvalidArgument, std::string("field '") + key + "' must hold numbers");
      out.push_back(x.get<float>());
    }
    return out;
  }
  if (v.is_string()) {
    const auto& text = v.get_ref<const std::string&>();
    std::vector<unsigned char> bytes(text.size());
    std::size_t len = 0;
    if (sodium_base642bin(bytes.data(), bytes.size(), text.data(), text.size(), nullptr, &len, nullptr,
                          sodium_base64_VARIANT_ORIGINAL) != 0 ||
        len % sizeof(float) != 0) {
      throw Error(ErrorCode::InvalidArgument, std::string("field '") + key + "' is not base64 float32 data");
    }
    Vector out(len / sizeof(float));
    std::memcpy(out.data(), bytes.data(), len);
    return out;
  }
  throw Error(ErrorCode::InvalidArgument, std::string("field '") + key + "' must be a float array or base64 string");
}

LayerFilter parse_layers(const json& body) {
  const auto layers = field<std::vector<std::string>>(body, "layers");
  if (!layers) return std::nullopt;
  return *layers;
}

json component_json(const LensDB& db, std::size_t pos, std::size_t row) {
  const auto id = db.component_at(pos, row);
  const auto rec = db.component(id);
  json j = report::to_json(id);
  j["row"] = row;
  j["theta"] = std::vector<float>(rec.theta.begin(), rec.theta.end());
  j["theta_norm"] = db.theta_norm(pos, row);
  j["activations"] = rec.activations ? json(std::vector<float>(rec.activations->begin(), rec.activations->end()))
                                     : json(nullptr);
  json relevance = json::object();
  if (rec.relevance) {
    for (std::size_t t = 0; t < db.manifest().targets.size(); ++t) {
      relevance[db.manifest().targets[t]] = (*rec.relevance)[t];
    }
  }
  j["relevance"] = std::move(relevance);
  json examples = json::array();
  for (const auto& meta : rec.example_meta) {
    json e;
    e["rank"] = meta.rank;
    e["sample_id"] = meta.sample_id;
    e["crop_box"] = meta.crop_box;
    e["activation"] = meta.activation;
    const bool has_thumb = db.thumbnail(id.layer, row, meta.rank).has_value();
    e["thumbnail_url"] = has_thumb ? json("/examples/" + id.layer + "/" + std::to_string(row) + "/" +
                                          std::to_string(meta.rank) + ".png")
                                   : json(nullptr);
    examples.push_back(std::move(e));
  }
  j["examples"] = std::move(examples);
  return j;
}

}  // namespace

ApiResponse error_response(const Error& e) {
  const int status = status_of(e.code());
  json body;
  body["error"]["code"] = api_code(status);
  body["error"]["message"] = e.what();
  return {status, "application/json", body.dump()};
}

Api::Api(std::shared_ptr<const LensDB> db, std::optional<EmbedderClient> embedder,
         std::map<std::string, std::shared_ptr<const LensDB>> others)
    : db_(std::move(db)), embedder_(std::move(embedder)), others_(std::move(others)) {
  if (!db_) throw Error(ErrorCode::LoadFailure, "no database");
  if (embedder_) embedder_->expected_dim = db_->dim();
  if (sodium_init() < 0) throw Error(ErrorCode::LoadFailure, "libsodium failed to initialise");
}

ApiResponse Api::handle(const ApiRequest& request) const {
  try {
    return route(request);
  } catch (const Error& e) {
    return error_response(e);
  } catch (const std::exception& e) {
    return error_response(Error(ErrorCode::IoFailure, e.what()));
  }
}

std::string Api::cached(const std::string& key, const std::function<std::string()>& compute) const {
  {
    std::shared_lock lock(cache_mutex_);
    const auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
  }
  auto value = compute();
  std::unique_lock lock(cache_mutex_);
  return cache_.try_emplace(key, std::move(value)).first->second;
}

ApiResponse Api::route(const ApiRequest& request) const {
  const auto parts = split_path(request.path);
  const bool get = request.method == "GET";
  const bool post = request.method == "POST";
  auto not_found = [&] { return Error(ErrorCode::NotFound, "no route for " + request.method + " " + request.path); };
  auto query = [&](const std::string& key) -> std::optional<std::string> {
    const auto it = request.query.find(key);
    if (it == request.query.end()) return std::nullopt;
    return it->second;
  };
  const LensDB& db = *db_;

  if (get && parts.size() == 4 && parts[0] == "examples") {
    const auto& name = parts[3];
    if (name.size() <= 4 || name.compare(name.size() - 4, 4, ".png") != 0) throw not_found();
    db.layer_position(parts[1]);
    const auto bytes = db.thumbnail(parts[1], parse_index(parts[2], "index"),
                                    parse_index(std::string_view(name).substr(0, name.size() - 4), "rank"));
    if (!bytes) throw Error(ErrorCode::NotFound, "no thumbnail " + request.path);
    return {200, "image/png", std::string(bytes->begin(), bytes->end())};
  }

  if (parts.size() < 3 || parts[0] != "api" || parts[1] != "v1") throw not_found();
  const std::string& endpoint = parts[2];

  if (get && parts.size() == 3 && endpoint == "layers") {
    json arr = json::array();
    for (const auto& decl : db.manifest().layers) arr.push_back(report::layer_descriptor(decl));
    return json_response(dump(arr));
  }

  if (get && parts.size() == 3 && endpoint == "info") {
    const auto& m = db.manifest();
    json j;
    j["model_id"] = m.model_id;
    j["foundation_model_id"] = m.foundation_model_id;
    j["dim"] = m.dim;
    j["targets"] = m.targets;
    j["probe_sets"] = m.probe_sets;
    j["embedder"] = embedder_.has_value();
    json others = json::array();
    for (const auto& [id, _] : others_) others.push_back(id);
    j["others"] = std::move(others);
    return json_response(dump(j));
  }

  if (get && parts.size() == 5 && endpoint == "components") {
    const std::size_t pos = db.layer_position(parts[3]);
    const auto& decl = db.manifest().layers[pos];
    const std::size_t index = parse_index(parts[4], "index");
    const auto sign = query("sign").value_or("positive");
    if (sign != "positive" && sign != "negative") throw Error(ErrorCode::InvalidArgument, "sign must be positive or negative");
    if (index >= decl.n_components || (sign == "negative" && !decl.is_signed)) {
      throw Error(ErrorCode::UnknownComponent, "no component " + parts[3] + "/" + parts[4] + " (" + sign + ")");
    }
    const std::size_t row = sign == "negative" ? decl.n_components + index : index;
    return json_response(dump(component_json(db, pos, row)));
  }

  if (post && parts.size() == 3 && endpoint == "search") {
    const auto body = parse_body(request.body);
    const bool has_text = body.contains("query_text") && !body["query_text"].is_null();
    const bool has_vector = body.contains("vector") && !body["vector"].is_null();
    if (has_text == has_vector) throw Error(ErrorCode::InvalidArgument, "give exactly one of query_text and vector");
    const bool has_null_text = body.contains("null_text") && !body["null_text"].is_null();
    const bool has_null_vector = body.contains("null_vector") && !body["null_vector"].is_null();
    if (has_null_text && has_null_vector) throw Error(ErrorCode::InvalidArgument, "give at most one of null_text and null_vector");

    std::vector<std::string> texts;
    if (has_text) texts.push_back(*field<std::string>(body, "query_text"));
    if (has_null_text) texts.push_back(*field<std::string>(body, "null_text"));
    std::vector<Vector> embedded;
    if (!texts.empty()) {
      if (!embedder_) throw Error(ErrorCode::UpstreamUnavailable, "text queries need an embedder; none is configured");
      embedded = embed_texts(*embedder_, texts);
    }
    std::size_t next = 0;
    const Vector probe = has_text ? embedded[next++] : parse_vector(body["vector"], "vector");
    std::optional<Vector> null;
    if (has_null_text) null = embedded[next++];
    if (has_null_vector) null = parse_vector(body["null_vector"], "null_vector");

    const auto top_k = field<std::size_t>(body, "top_k").value_or(kDefaultTopK);
    const auto hits = search(db, probe, null ? std::optional<VectorView>(*null) : std::nullopt, parse_layers(body), top_k);
    json j;
    j["hits"] = report::to_json(hits);
    return json_response(dump(j));
  }

  if (post && parts.size() == 3 && endpoint == "label") {
    const auto body = parse_body(request.body);
    const auto name = field<std::string>(body, "probe_set");
    if (!name) throw Error(ErrorCode::InvalidArgument, "probe_set is required");
    const double tau = field<double>(body, "tau").value_or(kDefaultLabelThreshold);
    const auto layers = parse_layers(body);
    const auto group = field<std::string>(body, "group_by").value_or("label");
    if (group != "label" && group != "category") throw Error(ErrorCode::InvalidArgument, "group_by must be label or category");
    json key{{"probe_set", *name}, {"tau", tau}, {"layers", layers ? json(*layers) : json(nullptr)}, {"group_by", group}};
    return json_response(cached("label:" + key.dump(), [&] {
      const auto assignments = label_components(db, db.probe_set(*name), layers, tau);
      json j;
      j["probe_set"] = *name;
      j["tau"] = tau;
      j["assignments"] = report::to_json(assignments);
      j["dissection"] = report::to_json(dissect(assignments, group == "category" ? GroupBy::category : GroupBy::label));
      return dump(j);
    }));
  }

  if (post && parts.size() == 3 && endpoint == "audit") {
    const auto body = parse_body(request.body);
    const auto name = field<std::string>(body, "probe_set");
    const auto target = field<std::string>(body, "target");
    const auto layer = field<std::string>(body, "layer");
    if (!name || !target || !layer) throw Error(ErrorCode::InvalidArgument, "probe_set, target and layer are required");
    AuditOptions options;
    options.threshold = field<double>(body, "threshold");
    options.allow_missing_null = field<bool>(body, "allow_missing_null").value_or(false);
    const auto overrides = field<std::map<std::string, std::string>>(body, "validity_overrides");
    const bool has_extra = body.contains("extra_concepts") && !body["extra_concepts"].is_null();

    auto run = [&] {
      ProbeSet probes = db.probe_set(*name);
      if (overrides) {
        for (const auto& [label, validity] : *overrides) {
          auto it = std::find_if(probes.concepts.begin(), probes.concepts.end(),
                                 [&](const Concept& c) { return c.label == label; });
          if (it == probes.concepts.end()) throw Error(ErrorCode::InvalidArgument, "override for unknown concept '" + label + "'");
          it->validity = parse_validity(validity);
        }
      }
      if (has_extra) {
        if (!body["extra_concepts"].is_array()) throw Error(ErrorCode::InvalidArgument, "extra_concepts must be an array");
        for (const auto& e : body["extra_concepts"]) {
          if (!e.is_object()) throw Error(ErrorCode::InvalidArgument, "extra_concepts entries must be objects");
          Concept c;
          c.label = field<std::string>(e, "label").value_or("");
          if (c.label.empty()) throw Error(ErrorCode::InvalidArgument, "extra concept needs a label");
          c.category = field<std::string>(e, "category");
          c.validity = parse_validity(field<std::string>(e, "validity").value_or("spurious"));
          if (e.contains("vector") && !e["vector"].is_null()) {
            c.embedding = parse_vector(e["vector"], "vector");
          } else if (const auto text = field<std::string>(e, "text")) {
            if (!embedder_) throw Error(ErrorCode::UpstreamUnavailable, "text concepts need an embedder; none is configured");
            c.embedding = embed_texts(*embedder_, {*text}).front();
            c.prompts.push_back(*text);
          } else {
            throw Error(ErrorCode::InvalidArgument, "extra concept '" + c.label + "' needs a vector or text");
          }
          probes.concepts.push_back(std::move(c));
        }
      }
      json j = report::to_json(audit(db, probes, *target, *layer, options));
      return dump(j);
    };
    if (overrides || has_extra) return json_response(run());
    json key{{"probe_set", *name},
             {"target", *target},
             {"layer", *layer},
             {"threshold", options.threshold ? json(*options.threshold) : json(nullptr)},
             {"allow_missing_null", options.allow_missing_null}};
    return json_response(cached("audit:" + key.dump(), run));
  }

  if (get && parts.size() == 4 && endpoint == "metrics") {
    const std::string& layer = parts[3];
    db.layer_position(layer);
    const auto seed = parse_index(query("seed").value_or("7"), "seed");
    const auto h = parse_index(query("h").value_or("2"), "h");
    return json_response(cached("metrics:" + layer + ":" + std::to_string(h) + ":" + std::to_string(seed), [&] {
      return dump(report::to_json(report::layer_metrics(db, layer, h, seed)));
    }));
  }

  if (get && parts.size() == 4 && endpoint == "projection") {
    const std::size_t pos = db.layer_position(parts[3]);
    return json_response(cached("projection:" + parts[3], [&] {
      return dump(report::to_json(db, pos, project_2d(db.mean_embeddings(pos))));
    }));
  }

  if (get && parts.size() == 3 && endpoint == "compare") {
    const auto other_id = query("other");
    const auto layer = query("layer");
    if (!other_id || !layer) throw Error(ErrorCode::InvalidArgument, "compare needs other and layer");
    const auto other_layer = query("other_layer").value_or(*layer);
    const auto it = others_.find(*other_id);
    if (it == others_.end()) throw Error(ErrorCode::UnknownDatabase, "no database registered as '" + *other_id + "'");
    const LensDB& other = *it->second;
    const auto a = db.mean_embeddings(db.layer_position(*layer));
    const auto b = other.mean_embeddings(other.layer_position(other_layer));
    json j;
    j["layer"] = *layer;
    j["other"] = *other_id;
    j["other_layer"] = other_layer;
    j["a_to_b"] = compare_sets(a, b);
    j["b_to_a"] = compare_sets(b, a);
    return json_response(dump(j));
  }

  throw not_found();
}

struct Server::Impl {
  std::shared_ptr<const Api> api;
  httplib::Server http;
};

Server::Server(std::shared_ptr<const Api> api) : impl_(std::make_unique<Impl>()) {
  impl_->api = std::move(api);
  auto forward = [api = impl_->api](const httplib::Request& req, httplib::Response& res) {
    ApiRequest request;
    request.method = req.method;
    request.path = req.path;
    for (const auto& [k, v] : req.params) request.query.emplace(k, v);
    request.body = req.body;
    const auto response = api->handle(request);
    res.status = response.status;
    res.set_content(response.body, response.content_type);
  };
  impl_->http.Get(".*", forward);
  impl_->http.Post(".*", forward);
}

Server::~Server() { stop(); }

int Server::bind(const std::string& host, int port) {
  const int bound = port == 0 ? impl_->http.bind_to_any_port(host) : (impl_->http.bind_to_port(host, port) ? port : -1);
  if (bound <= 0) throw Error(ErrorCode::BindFailure, "cannot bind " + host + ":" + std::to_string(port));
  return bound;
}

void Server::run() { impl_->http.listen_after_bind(); }

void Server::stop() { impl_->http.stop(); }

void Server::wait_until_ready() const { impl_->http.wait_until_ready(); }

std::shared_ptr<const Api> open_api(const std::filesystem::path& db_path, std::optional<EmbedderClient> embedder,
                                    const std::map<std::string, std::filesystem::path>& others) {
  auto load = [](const std::filesystem::path& p) {
    try {
      return std::make_shared<const LensDB>(LensDB::load(p));
    } catch (const Error& e) {
      throw Error(ErrorCode::LoadFailure, p.string() + ": " + e.detail());
    }
  };
  std::map<std::string, std::shared_ptr<const LensDB>> loaded;
  for (const auto& [id, path] : others) loaded.emplace(id, load(path));
  return std::make_shared<const Api>(load(db_path), std::move(embedder), std::move(loaded));
}

std::pair<std::string, int> parse_bind_address(const std::string& address) {
  const auto colon = address.rfind(':');
  if (colon == std::string::npos) throw Error(ErrorCode::InvalidArgument, "bind address must be host:port");
  std::string host = address.substr(0, colon);
  if (host.empty()) host = "127.0.0.1";
  const auto port = parse_index(std::string_view(address).substr(colon + 1), "port");
  if (port > 65535) throw Error(ErrorCode::InvalidArgument, "port out of range");
  return {host, int(port)};
}

}  // namespace lens

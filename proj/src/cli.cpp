#include "lens/cli.hpp"

#include <algorithm>
#include <charconv>
#include <cstring>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "lens/audit.hpp"
#include "lens/probes.hpp"
#include "lens/query.hpp"
#include "lens/report.hpp"
#include "lens/service.hpp"
#include "lens/store.hpp"

namespace lens::cli {

namespace {

struct Config {
  std::string db;
  std::vector<std::string> layers;
  std::string target;
  std::string probes;
  double tau = kDefaultLabelThreshold;
  double threshold = 0.0;
  std::size_t top_k = 10;
  std::uint64_t seed = 7;
  std::size_t h = 2;
  std::string out_path;
  std::string format = "csv";
  std::string vector;
  std::string text;
  std::string null_vector;
  std::string null_text;
  std::string other;
  std::string other_layer;
  std::string group_by = "label";
  double node_threshold = kDefaultNodeThreshold;
  std::size_t clusters = 0;
  std::size_t cluster_top = 2;
  std::string bind = "127.0.0.1:8080";
  std::vector<std::string> other_dbs;
  bool allow_missing_null = false;
  std::string prune_out;
  bool threshold_given = false;
};

// Thrown for database problems that `validate` would report.
struct LoadError {
  std::string message;
};

LensDB load_db(const Config& c) {
  try {
    return LensDB::load(c.db);
  } catch (const Error& e) {
    throw LoadError{c.db + ": " + e.what()};
  }
}

std::string single_layer(const Config& c) {
  if (c.layers.size() != 1) throw Error(ErrorCode::InvalidArgument, "exactly one --layer is required");
  return c.layers.front();
}

LayerFilter layer_filter(const Config& c) {
  if (c.layers.empty()) return std::nullopt;
  return c.layers;
}

ProbeSet resolve_probes(const LensDB& db, const Config& c) {
  if (c.probes.empty()) {
    if (db.probe_sets().size() == 1) return db.probe_sets().front();
    throw Error(ErrorCode::InvalidArgument, "--probes is required (a probe-set file or a probe-set name in the db)");
  }
  if (std::filesystem::is_regular_file(c.probes)) return read_probe_set(c.probes);
  return db.probe_set(c.probes);
}

// A raw float32 file, or comma separated numbers.
Vector parse_vector(const std::string& spec) {
  if (std::filesystem::is_regular_file(spec)) {
    std::ifstream in(spec, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (bytes.size() % sizeof(float) != 0) {
      throw Error(ErrorCode::SizeMismatch, spec + " is not a whole number of float32 values");
    }
    Vector v(bytes.size() / sizeof(float));
    std::memcpy(v.data(), bytes.data(), bytes.size());
    return v;
  }
  Vector v;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto first = item.find_first_not_of(" \t");
    const auto last = item.find_last_not_of(" \t");
    if (first == std::string::npos) throw Error(ErrorCode::InvalidArgument, "empty entry in --vector");
    item = item.substr(first, last - first + 1);
    float x = 0.0f;
    const auto res = std::from_chars(item.data(), item.data() + item.size(), x);
    if (res.ec != std::errc() || res.ptr != item.data() + item.size()) {
      throw Error(ErrorCode::InvalidArgument, "not a number in --vector: '" + item + "'");
    }
    v.push_back(x);
  }
  if (v.empty()) throw Error(ErrorCode::InvalidArgument, "--vector is empty");
  return v;
}

void emit(const Config& c, const std::string& body, std::ostream& out) {
  if (c.out_path.empty()) {
    out << body;
    return;
  }
  std::ofstream f(c.out_path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(ErrorCode::IoFailure, "cannot write " + c.out_path);
  f << body;
  if (!f) throw Error(ErrorCode::IoFailure, "failed writing " + c.out_path);
}

std::string text(const report::json& j) { return j.dump(2) + "\n"; }

bool csv(const Config& c) { return c.format == "csv"; }

int cmd_validate(const Config& c, std::ostream& out) {
  const auto db = load_db(c);
  std::size_t components = 0;
  for (const auto& l : db.manifest().layers) components += l.rows();
  out << fmt::format("ok: model '{}', {} layers, {} components, dim {}, {} probe sets\n", db.manifest().model_id,
                     db.manifest().layers.size(), components, db.dim(), db.probe_sets().size());
  return kExitOk;
}

int cmd_search(const Config& c, std::ostream& out) {
  const auto db = load_db(c);
  if (c.vector.empty() == c.text.empty()) throw Error(ErrorCode::InvalidArgument, "give exactly one of --vector and --text");
  if (!c.null_vector.empty() && !c.null_text.empty()) {
    throw Error(ErrorCode::InvalidArgument, "give at most one of --null-vector and --null-text");
  }
  std::vector<std::string> texts;
  if (!c.text.empty()) texts.push_back(c.text);
  if (!c.null_text.empty()) texts.push_back(c.null_text);
  std::vector<Vector> embedded;
  if (!texts.empty()) {
    const auto embedder = embedder_from_env(db.dim());
    if (!embedder) {
      throw Error(ErrorCode::UpstreamUnavailable, "text queries need the embedding sidecar; set LENS_EMBEDDER_URL or pass --vector");
    }
    embedded = embed_texts(*embedder, texts);
  }
  std::size_t next = 0;
  const Vector probe = c.text.empty() ? parse_vector(c.vector) : embedded[next++];
  std::optional<Vector> null;
  if (!c.null_text.empty()) null = embedded[next++];
  if (!c.null_vector.empty()) null = parse_vector(c.null_vector);
  const auto hits = search(db, probe, null ? std::optional<VectorView>(*null) : std::nullopt, layer_filter(c), c.top_k);
  emit(c, csv(c) ? report::search_csv(hits) : text(report::to_json(hits)), out);
  return kExitOk;
}

int cmd_label(const Config& c, std::ostream& out) {
  const auto db = load_db(c);
  const auto probes = resolve_probes(db, c);
  if (c.clusters > 0) {
    const auto pos = db.layer_position(single_layer(c));
    const auto clusters = cluster_labels(db.mean_embeddings(pos), c.clusters, probes, c.cluster_top, c.seed);
    emit(c, csv(c) ? report::cluster_labels_csv(clusters) : text(report::to_json(clusters)), out);
    return kExitOk;
  }
  const auto labels = label_components(db, probes, layer_filter(c), c.tau);
  emit(c, csv(c) ? report::labels_csv(labels) : text(report::to_json(labels)), out);
  return kExitOk;
}

int cmd_dissect(const Config& c, std::ostream& out) {
  const auto db = load_db(c);
  const auto probes = resolve_probes(db, c);
  const auto labels = label_components(db, probes, layer_filter(c), c.tau);
  const auto rows = dissect(labels, c.group_by == "category" ? GroupBy::category : GroupBy::label);
  emit(c, csv(c) ? report::dissection_csv(rows) : text(report::to_json(rows)), out);
  return kExitOk;
}

int cmd_compare(const Config& c, std::ostream& out) {
  const auto db = load_db(c);
  if (c.other.empty()) throw Error(ErrorCode::InvalidArgument, "--other <db> is required");
  Config oc = c;
  oc.db = c.other;
  const auto other = load_db(oc);
  const auto layer = single_layer(c);
  const auto other_layer = c.other_layer.empty() ? layer : c.other_layer;
  const auto a = db.mean_embeddings(db.layer_position(layer));
  const auto b = other.mean_embeddings(other.layer_position(other_layer));
  const double ab = compare_sets(a, b);
  const double ba = compare_sets(b, a);
  if (csv(c)) {
    emit(c, "layer,other_layer,a_to_b,b_to_a\n" + layer + "," + other_layer + "," + report::number(ab) + "," +
                report::number(ba) + "\n",
         out);
  } else {
    report::json j;
    j["layer"] = layer;
    j["other_layer"] = other_layer;
    j["a_to_b"] = ab;
    j["b_to_a"] = ba;
    emit(c, text(j), out);
  }
  return kExitOk;
}

int cmd_audit(const Config& c, std::ostream& out) {
  const auto db = load_db(c);
  const auto probes = resolve_probes(db, c);
  if (c.target.empty()) throw Error(ErrorCode::InvalidArgument, "--target is required");
  AuditOptions options;
  if (c.threshold_given) options.threshold = c.threshold;
  options.allow_missing_null = c.allow_missing_null;
  const auto rep = audit(db, probes, c.target, single_layer(c), options);
  emit(c, csv(c) ? report::audit_csv(rep) : text(report::to_json(rep)), out);
  if (!c.prune_out.empty()) {
    std::string lines;
    for (const auto& id : prune_candidates(rep)) lines += id.str() + "\n";
    Config pc = c;
    pc.out_path = c.prune_out;
    emit(pc, lines, out);
  }
  return kExitOk;
}

int cmd_metrics(const Config& c, std::ostream& out) {
  const auto db = load_db(c);
  const auto rep = report::layer_metrics(db, single_layer(c), c.h, c.seed);
  emit(c, csv(c) ? report::metrics_csv(rep) : text(report::to_json(rep)), out);
  return kExitOk;
}

int cmd_project(const Config& c, std::ostream& out) {
  const auto db = load_db(c);
  const auto pos = db.layer_position(single_layer(c));
  const auto p = project_2d(db.mean_embeddings(pos));
  emit(c, csv(c) ? report::projection_csv(db, pos, p) : text(report::to_json(db, pos, p)), out);
  return kExitOk;
}

int cmd_graph(const Config& c, std::ostream& out) {
  const auto db = load_db(c);
  const auto probes = resolve_probes(db, c);
  if (c.target.empty()) throw Error(ErrorCode::InvalidArgument, "--target is required");
  const auto labels = label_components(db, probes, std::nullopt, c.tau);
  const auto g = build_attribution_graph(db, labels, c.target, c.node_threshold);
  if (c.format == "dot") {
    emit(c, graph_dot(g), out);
  } else if (csv(c)) {
    emit(c, graph_nodes_tsv(g) + "\n" + graph_edges_tsv(g), out);
  } else {
    emit(c, text(report::to_json(g)), out);
  }
  return kExitOk;
}

int cmd_serve(const Config& c, std::ostream& out) {
  std::map<std::string, std::filesystem::path> others;
  for (const auto& spec : c.other_dbs) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos || eq == 0) throw Error(ErrorCode::InvalidArgument, "--other-db expects id=path");
    others.emplace(spec.substr(0, eq), spec.substr(eq + 1));
  }
  const auto api = open_api(c.db, embedder_from_env(0), others);
  const auto [host, port] = parse_bind_address(c.bind);
  Server server(api);
  const int bound = server.bind(host, port);
  out << fmt::format("serving {} on http://{}:{}\n", c.db, host, bound) << std::flush;
  server.run();
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Config c;
  CLI::App app{"Inspect, label and audit neural network components through their embeddings.", "lens"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  auto db_args = [&](CLI::App* sub) {
    sub->add_option("db,--db", c.db, "LensDB directory")->required();
  };
  auto output_args = [&](CLI::App* sub, std::vector<std::string> formats = {"csv", "text"}) {
    sub->add_option("--format", c.format, "Report format")->check(CLI::IsMember(formats))->capture_default_str();
    sub->add_option("--out", c.out_path, "Write the report to this file instead of stdout");
  };
  auto probe_args = [&](CLI::App* sub) {
    sub->add_option("--probes", c.probes, "Probe-set file, or the name of a probe set stored in the db");
    sub->add_option("--tau", c.tau, "Labelling threshold on alignment")->capture_default_str();
  };

  auto* validate = app.add_subcommand("validate", "Load a LensDB and check every invariant");
  db_args(validate);

  auto* search_cmd = app.add_subcommand("search", "Rank components by alignment to a probe");
  db_args(search_cmd);
  output_args(search_cmd);
  search_cmd->add_option("--vector", c.vector, "Probe embedding: a float32 file or comma separated values");
  search_cmd->add_option("--text", c.text, "Probe text, embedded by the sidecar at LENS_EMBEDDER_URL");
  search_cmd->add_option("--null-vector", c.null_vector, "Null embedding to subtract");
  search_cmd->add_option("--null-text", c.null_text, "Null text to subtract");
  search_cmd->add_option("--layer", c.layers, "Restrict to these layers (repeatable)");
  search_cmd->add_option("--top-k", c.top_k, "Number of hits")->capture_default_str();

  auto* label = app.add_subcommand("label", "Assign each component its best concept");
  db_args(label);
  output_args(label);
  probe_args(label);
  label->add_option("--layer", c.layers, "Restrict to these layers (repeatable)");
  label->add_option("--clusters", c.clusters, "Label k spherical k-means clusters of one layer instead");
  label->add_option("--cluster-top", c.cluster_top, "Labels reported per cluster")->capture_default_str();
  label->add_option("--seed", c.seed, "k-means seed")->capture_default_str();

  auto* dissect_cmd = app.add_subcommand("dissect", "Count labelled components per concept and layer");
  db_args(dissect_cmd);
  output_args(dissect_cmd);
  probe_args(dissect_cmd);
  dissect_cmd->add_option("--layer", c.layers, "Restrict to these layers (repeatable)");
  dissect_cmd->add_option("--group-by", c.group_by, "Group by label or category")
      ->check(CLI::IsMember({"label", "category"}))
      ->capture_default_str();

  auto* compare = app.add_subcommand("compare", "Set similarity between the layers of two databases");
  db_args(compare);
  output_args(compare);
  compare->add_option("--other", c.other, "Second LensDB directory")->required();
  compare->add_option("--layer", c.layers, "Layer of the first database")->required();
  compare->add_option("--other-layer", c.other_layer, "Layer of the second database (defaults to --layer)");

  auto* audit_cmd = app.add_subcommand("audit", "Bucket relevant components by valid and spurious alignment");
  db_args(audit_cmd);
  output_args(audit_cmd);
  probe_args(audit_cmd);
  audit_cmd->add_option("--target", c.target, "Output target")->required();
  audit_cmd->add_option("--layer", c.layers, "Audited layer")->required();
  auto* threshold = audit_cmd->add_option("--threshold", c.threshold,
                                          "Relevance cut (default max(0.01, 0.05 / n_components))");
  audit_cmd->add_flag("--allow-missing-null", c.allow_missing_null, "Audit without a null embedding");
  audit_cmd->add_option("--prune-out", c.prune_out, "Write spurious-only component ids to this file");

  auto* metrics = app.add_subcommand("metrics", "Clarity, polysemanticity and redundancy of one layer");
  db_args(metrics);
  output_args(metrics);
  metrics->add_option("--layer", c.layers, "Layer")->required();
  metrics->add_option("--seed", c.seed, "k-means seed")->capture_default_str();
  metrics->add_option("--clusters", c.h, "Clusters used by polysemanticity")->capture_default_str();

  auto* project = app.add_subcommand("project", "Two-dimensional PCA of a layer's mean embeddings");
  db_args(project);
  output_args(project);
  project->add_option("--layer", c.layers, "Layer")->required();

  auto* graph = app.add_subcommand("graph", "Concept-level attribution graph");
  db_args(graph);
  output_args(graph, {"csv", "text", "dot"});
  probe_args(graph);
  graph->add_option("--target", c.target, "Output target")->required();
  graph->add_option("--node-threshold", c.node_threshold, "Minimum component relevance")->capture_default_str();

  auto* serve = app.add_subcommand("serve", "Run the HTTP API");
  db_args(serve);
  serve->add_option("--bind", c.bind, "host:port")->capture_default_str();
  serve->add_option("--other-db", c.other_dbs, "Extra database for compare, as id=path (repeatable)");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }
  c.threshold_given = threshold->count() > 0;

  try {
    if (validate->parsed()) return cmd_validate(c, out);
    if (search_cmd->parsed()) return cmd_search(c, out);
    if (label->parsed()) return cmd_label(c, out);
    if (dissect_cmd->parsed()) return cmd_dissect(c, out);
    if (compare->parsed()) return cmd_compare(c, out);
    if (audit_cmd->parsed()) return cmd_audit(c, out);
    if (metrics->parsed()) return cmd_metrics(c, out);
    if (project->parsed()) return cmd_project(c, out);
    if (graph->parsed()) return cmd_graph(c, out);
    if (serve->parsed()) return cmd_serve(c, out);
  } catch (const LoadError& e) {
    err << "invalid database: " << e.message << "\n";
    return kExitValidation;
  } catch (const Error& e) {
    if (e.code() == ErrorCode::LoadFailure) {
      err << "invalid database: " << e.detail() << "\n";
      return kExitValidation;
    }
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  err << app.help();
  return kExitUsage;
}

}  // namespace lens::cli

// forage: command-line front end for ingestion, splitting, scent evaluation,
// k-NN self-checks, transcript replay and the HTTP service.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <httplib.h>
#include <json.hpp>

#include "forage/catalog.hpp"
#include "forage/features.hpp"
#include "forage/index.hpp"
#include "forage/scent.hpp"
#include "forage/service.hpp"
#include "forage/session.hpp"
#include "knn_oracle.hpp"

namespace fs = std::filesystem;
using namespace forage;

namespace {

Board read_board(const std::string& path, const std::string& sidecar, bool validate) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open board file '" + path + "'");
  BoardLoadOptions opts;
  opts.image_root = fs::path(path).parent_path();
  std::ifstream side;
  if (!sidecar.empty()) {
    side.open(sidecar, std::ios::binary);
    if (!side) throw Error("cannot open embedding sidecar '" + sidecar + "'");
    opts.embedding_sidecar = &side;
  }
  return validate ? load_board(in, opts) : parse_board(in, opts);
}

int cmd_ingest(const std::string& path, const std::string& sidecar, bool as_json) {
  const Board board = read_board(path, sidecar, false);
  const auto report = validate_catalog(board);
  std::size_t indexable = 0;
  for (const auto& it : board.items) indexable += it.indexable();
  if (as_json) {
    std::cout << nlohmann::json{{"board", board.name},
                                {"items", board.items.size()},
                                {"indexable", indexable},
                                {"ok", report.empty()},
                                {"violations", report_json(report)}}
                     .dump(2)
              << '\n';
  } else {
    std::cout << "board '" << board.name << "': " << board.items.size() << " items, " << indexable << " indexable\n";
    for (const auto& v : report) std::cout << "  violation: " << describe(v) << '\n';
    std::cout << (report.empty() ? "OK" : "INVALID: " + std::to_string(report.size()) + " violation(s)") << '\n';
  }
  return report.empty() ? 0 : 1;
}

int cmd_split(const std::string& path, const std::string& sidecar, double fraction, std::uint64_t seed,
              bool per_category, const std::string& out_dir) {
  const Board board = read_board(path, sidecar, true);
  const auto split = split_dataset(board, fraction, seed, per_category);
  fs::create_directories(out_dir);
  auto write = [&](const std::string& name, const std::vector<std::string>& ids) {
    std::ofstream out(fs::path(out_dir) / name);
    for (const auto& id : ids) out << id << '\n';
    if (!out) throw Error("cannot write " + (fs::path(out_dir) / name).string());
  };
  write("train.txt", split.train);
  write("test.txt", split.test);
  std::cout << "train: " << split.train.size() << " test: " << split.test.size() << " (fraction " << fraction
            << ", seed " << seed << (per_category ? ", per category" : "") << ")\n";
  return 0;
}

int cmd_eval_scent(const std::string& log_path, const std::string& scope, std::size_t top,
                   const std::vector<std::string>& categories, bool as_json) {
  std::ifstream in(log_path);
  if (!in) throw Error("cannot open preference log '" + log_path + "'");
  const auto log = read_log_jsonl(in);
  const auto report = scent_report(log, categories, top, scent_scope_from(scope));
  if (as_json) std::cout << report_to_json(report).dump(2) << '\n';
  else std::cout << render_report_table(report);
  return 0;
}

int cmd_knn_check(std::size_t n, std::size_t dim, std::uint64_t seed, const std::vector<std::size_t>& ks) {
  if (n == 0 || dim == 0) throw Error("knn-check needs n >= 1 and dim >= 1");
  const auto data = oracle::random_unit_vectors(n, dim, seed);
  std::vector<ImageItem> items;
  for (const auto& d : data) {
    ImageItem it;
    it.id = d.id;
    it.embedding = EmbeddingVector{d.v};
    items.push_back(std::move(it));
  }
  const auto index = build_index(items);
  std::size_t matched = 0;
  for (const auto& q : data) {
    bool ok = true;
    for (auto k : ks) {
      const auto got = index.knn(q.v, k);
      const auto want = oracle::brute_force_knn(data, q.v, k);
      ok = ok && got.size() == want.size();
      for (std::size_t i = 0; ok && i < got.size(); ++i) ok = got[i].id == want[i].first;
    }
    matched += ok;
  }
  std::cout << (matched == n ? "OK: " : "MISMATCH: ") << matched << '/' << n << " rankings match oracle\n";
  return matched == n ? 0 : 1;
}

int cmd_replay(const std::string& board_path, const std::string& transcript, const std::string& log_path) {
  Board board = read_board(board_path, "", true);
  for (auto& item : board.items) item.cues = assemble_cues(item, 3, 5);
  const auto index = build_index(board);
  PreferenceLog log;
  if (!log_path.empty()) {
    std::ifstream lin(log_path);
    if (!lin) throw Error("cannot open preference log '" + log_path + "'");
    log = read_log_jsonl(lin);
  }
  std::ifstream in(transcript);
  if (!in) throw Error("cannot open transcript '" + transcript + "'");
  const auto result = replay_transcript(in, board, index, log);
  for (const auto& p : result.patches) std::cout << patch_to_json(p).dump() << '\n';
  return 0;
}

int cmd_serve(ServiceConfig config) {
  try {
    Service service(std::move(config));
    httplib::Server server;
    std::cerr << "forage: listening on " << service.config().host << ':' << service.config().port << '\n';
    return service.serve(server) ? 0 : 1;
  } catch (const StartupError& e) {
    std::cerr << "forage: " << e.what() << '\n';
    for (const auto& v : e.report()) std::cerr << "  " << describe(v) << '\n';
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Content-based image recommendation with information-scent re-ranking"};
  app.require_subcommand(1);

  std::string board, sidecar;
  bool as_json = false;

  auto* ingest = app.add_subcommand("ingest", "Load a board file and print its validation report");
  ingest->add_option("board", board, "Board JSON file")->required();
  ingest->add_option("--embeddings", sidecar, "EMB1 embedding sidecar");
  ingest->add_flag("--json", as_json, "Emit the report as JSON");

  double fraction = 0.67;
  std::uint64_t seed = 42;
  bool per_category = false;
  std::string out_dir = ".";
  auto* split = app.add_subcommand("split", "Deterministic train/test split of a board");
  split->add_option("board", board, "Board JSON file")->required();
  split->add_option("--embeddings", sidecar, "EMB1 embedding sidecar");
  split->add_option("--fraction", fraction, "Train fraction")->check(CLI::Range(0.0, 1.0));
  split->add_option("--seed", seed, "Shuffle seed");
  split->add_flag("--per-category", per_category, "Split each category separately");
  split->add_option("--out", out_dir, "Output directory for train.txt and test.txt");

  std::string log_path, scope = "global";
  std::size_t top = 5;
  std::vector<std::string> categories;
  auto* eval = app.add_subcommand("eval-scent", "Scent report from a preference log");
  eval->add_option("--log", log_path, "Preference log (JSON lines)")->required();
  eval->add_option("--scope", scope, "global or per_category")->check(CLI::IsMember({"global", "per_category", "per-category"}));
  eval->add_option("--top", top, "Rows per category")->check(CLI::PositiveNumber);
  eval->add_option("--category", categories, "Category to report (repeatable; default: all in the log)");
  eval->add_flag("--json", as_json, "Emit JSON instead of a table");

  std::size_t n = 200, dim = 64;
  std::uint64_t knn_seed = 7;
  std::vector<std::size_t> ks{1, 5, 20};
  auto* knn = app.add_subcommand("knn-check", "Compare k-NN rankings against a brute-force oracle");
  knn->add_option("--n", n, "Number of random vectors")->check(CLI::PositiveNumber);
  knn->add_option("--dim", dim, "Vector dimension")->check(CLI::PositiveNumber);
  knn->add_option("--seed", knn_seed, "Generator seed");
  knn->add_option("--k", ks, "Neighbor counts to check")->delimiter(',');

  std::string transcript;
  auto* replay = app.add_subcommand("replay", "Replay a session transcript and print each patch");
  replay->add_option("board", board, "Board JSON file")->required();
  replay->add_option("--transcript", transcript, "Session transcript (JSON lines)")->required();
  replay->add_option("--log", log_path, "Preference log the session started from");

  ServiceConfig config;
  std::string config_path;
  std::vector<std::string> serve_boards;
  std::string stopwords, serve_log;
  auto* serve = app.add_subcommand("serve", "Run the HTTP service");
  serve->add_option("--config", config_path, "JSON config file (default: $FORAGE_CONFIG)");
  serve->add_option("--board", serve_boards, "Board JSON file (repeatable)");
  serve->add_option("--host", config.host, "Listen address");
  serve->add_option("--port", config.port, "Listen port");
  serve->add_option("--alpha", config.alpha, "Similarity weight in [0,1]");
  serve->add_option("--k", config.k, "Result page size");
  serve->add_option("--scope", scope, "Default scent scope");
  serve->add_option("--seed", config.seed, "Seed for k-means initialization");
  serve->add_option("--stopwords", stopwords, "Stopword file, one token per line");
  serve->add_option("--log", serve_log, "Preference log file (JSON lines, appended)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (ingest->parsed()) return cmd_ingest(board, sidecar, as_json);
    if (split->parsed()) return cmd_split(board, sidecar, fraction, seed, per_category, out_dir);
    if (eval->parsed()) return cmd_eval_scent(log_path, scope, top, categories, as_json);
    if (knn->parsed()) return cmd_knn_check(n, dim, knn_seed, ks);
    if (replay->parsed()) return cmd_replay(board, transcript, log_path);
    if (serve->parsed()) {
      if (config_path.empty())
        if (const char* env = std::getenv("FORAGE_CONFIG")) config_path = env;
      if (!config_path.empty()) {
        // File values are the base; flags given on the command line win.
        ServiceConfig file = load_config_file(config_path);
        if (serve->count("--host")) file.host = config.host;
        if (serve->count("--port")) file.port = config.port;
        if (serve->count("--alpha")) file.alpha = config.alpha;
        if (serve->count("--k")) file.k = config.k;
        if (serve->count("--seed")) file.seed = config.seed;
        config = file;
      }
      if (!serve_boards.empty()) config.boards = serve_boards;
      if (serve->count("--scope")) config.scope = scent_scope_from(scope);
      if (!stopwords.empty()) config.stopwords = stopwords;
      if (!serve_log.empty()) config.log_path = serve_log;
      config.validate();
      return cmd_serve(std::move(config));
    }
  } catch (const ParseError& e) {
    std::cerr << "forage: parse error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "forage: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

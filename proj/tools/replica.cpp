// replica: command-line driver for descriptor extraction, replication
// retrieval, corpus deduplication and the review service.

#include <CLI11.hpp>

#include <pthread.h>

#include <csignal>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "replica/config.hpp"
#include "replica/corpus.hpp"
#include "replica/dedup.hpp"
#include "replica/error.hpp"
#include "replica/retrieval.hpp"
#include "replica/triage.hpp"

namespace {

using nlohmann::json;
using namespace replica;

constexpr int kExitInput = 1;
constexpr int kExitContract = 2;

struct GlobalOptions {
  std::string config_path;
  std::optional<std::size_t> workers;
  std::optional<std::size_t> block_size;
  std::optional<std::string> cache_dir;
};

PipelineConfig resolve_config(const GlobalOptions& g) {
  PipelineConfig cfg = g.config_path.empty() ? PipelineConfig{} : load_config(g.config_path);
  if (g.workers) cfg.workers = *g.workers;
  if (g.block_size) cfg.block_size = *g.block_size;
  if (g.cache_dir) cfg.cache_dir = *g.cache_dir;
  cfg.validate();
  return cfg;
}

json set_summary(const DescriptorSet& s) {
  return {{"corpus_id", s.corpus_id()},
          {"kind", to_string(s.kind())},
          {"dim", s.dim()},
          {"rows", s.size()}};
}

json echo(const std::string& command, const PipelineConfig& cfg, json inputs) {
  return {{"command", command}, {"config", provenance(cfg)}, {"inputs", std::move(inputs)}};
}

void print_json(const json& j) { std::cout << j.dump(2) << '\n'; }

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw InputError("cannot write " + path, {path});
  f << text;
  if (!f) throw InputError("write failed: " + path, {path});
}

// --- extract / import -----------------------------------------------------

struct ExtractArgs {
  std::string manifest;
  std::string out;
};

int cmd_extract(const GlobalOptions& g, const ExtractArgs& a) {
  const PipelineConfig cfg = resolve_config(g);
  const CorpusManifest manifest = read_manifest(a.manifest);
  IngestOptions opts;
  opts.mel = cfg.mel;
  opts.stft = cfg.stft;
  opts.cache_dir = cfg.cache_dir;
  opts.workers = cfg.effective_workers();
  IngestResult r = ingest_corpus(manifest, opts);
  r.descriptors.set_provenance(
      echo("extract", cfg, {{"corpus_id", manifest.corpus_id}, {"entries", manifest.entries.size()}})
          .dump());
  write_descriptor_file(a.out, r.descriptors);
  for (const auto& w : r.warnings) std::cerr << "warning: " << w << '\n';
  std::size_t degenerate = 0;
  for (std::size_t i = 0; i < r.descriptors.size(); ++i) degenerate += r.descriptors.degenerate(i);
  print_json({{"out", a.out},
              {"descriptors", set_summary(r.descriptors)},
              {"degenerate", degenerate},
              {"warnings", r.warnings},
              {"cache_hits", r.cache_hits},
              {"cache_misses", r.cache_misses}});
  return 0;
}

struct ImportArgs {
  std::string manifest;
  std::string embeddings;
  std::string out;
};

int cmd_import(const GlobalOptions& g, const ImportArgs& a) {
  const PipelineConfig cfg = resolve_config(g);
  const CorpusManifest manifest = read_manifest(a.manifest);
  DescriptorSet set = import_embeddings(manifest, a.embeddings);
  set.set_provenance(echo("import", cfg, {{"corpus_id", manifest.corpus_id}}).dump());
  write_descriptor_file(a.out, set);
  print_json({{"out", a.out}, {"descriptors", set_summary(set)}});
  return 0;
}

// --- retrieve ---------------------------------------------------------------

struct SearchArgs {
  std::string queries;
  std::string refs;
  std::string background;
  std::string out;
  std::optional<double> tau;
  std::optional<std::size_t> k;
  std::optional<double> beta;
};

int cmd_retrieve(const GlobalOptions& g, const SearchArgs& a) {
  PipelineConfig cfg = resolve_config(g);
  if (a.tau) cfg.tau_retrieve = *a.tau;
  if (a.k) cfg.k_background = *a.k;
  if (a.beta) cfg.beta = *a.beta;
  cfg.validate();

  const DescriptorSet queries = read_descriptor_file(a.queries);
  const DescriptorSet refs = read_descriptor_file(a.refs);
  const BackgroundSet bg(read_descriptor_file(a.background), cfg.k_background, cfg.beta);
  const RetrievalResult result =
      retrieve(queries, refs, bg, cfg.retrieval(refs.kind()), cfg.search());
  write_retrieval(std::filesystem::path(a.out), result,
                  echo("retrieve", cfg,
                       {{"queries", set_summary(queries)},
                        {"refs", set_summary(refs)},
                        {"background", set_summary(bg.descriptors())}}));
  print_json({{"out", a.out},
              {"query_count", result.query_count},
              {"retrieved", result.retrieved.size()},
              {"tau", cfg.tau_retrieve}});
  return 0;
}

// --- dedup ------------------------------------------------------------------

struct DedupArgs {
  std::string refs;
  std::string background;
  std::string out;
  std::optional<double> tau;
  std::vector<double> sweep;
};

int cmd_dedup(const GlobalOptions& g, const DedupArgs& a) {
  PipelineConfig cfg = resolve_config(g);
  if (a.tau) cfg.tau_dedup = *a.tau;
  cfg.validate();

  const DescriptorSet refs = read_descriptor_file(a.refs);
  const BackgroundSet bg(read_descriptor_file(a.background), cfg.k_background, cfg.beta);
  const DedupReport report = dedup_corpus(refs, bg, cfg.tau_dedup, cfg.dedup());
  std::vector<SweepPoint> sweep;
  if (!a.sweep.empty()) sweep = sweep_tau(refs, bg, a.sweep, cfg.dedup());
  write_dedup_report(std::filesystem::path(a.out), report,
                     echo("dedup", cfg,
                          {{"refs", set_summary(refs)}, {"background", set_summary(bg.descriptors())}}),
                     sweep);
  json summary = json::object();
  for (const auto& [size, n] : report.size_summary()) summary[std::to_string(size)] = n;
  json sweep_json = json::array();
  for (const auto& p : sweep) {
    sweep_json.push_back({{"tau", p.tau}, {"edges", p.edges}, {"clusters", p.clusters}});
  }
  print_json({{"out", a.out},
              {"tau", cfg.tau_dedup},
              {"corpus_size", report.corpus_size},
              {"edges", report.edge_count},
              {"clusters", report.clusters.size()},
              {"cluster_sizes", summary},
              {"sweep", sweep_json}});
  return 0;
}

// --- hist -------------------------------------------------------------------

struct HistArgs {
  std::string a;
  std::string b;
  std::string background;
  std::string out;
  bool calibrate = false;
  std::optional<std::size_t> bins;
};

int cmd_hist(const GlobalOptions& g, const HistArgs& h) {
  PipelineConfig cfg = resolve_config(g);
  if (h.bins) cfg.hist_bins = *h.bins;
  cfg.validate();

  const DescriptorSet a = read_descriptor_file(h.a);
  const DescriptorSet b = read_descriptor_file(h.b);
  const BackgroundSet bg(read_descriptor_file(h.background), cfg.k_background, cfg.beta);
  const SearchOptions search = cfg.search();

  const std::string label = a.corpus_id() + "->" + b.corpus_id();
  const std::vector<double> scores = top1_scores(a, b, bg, search);
  std::vector<ScoreHistogram> hists;
  std::optional<CalibrationReport> calibration;
  if (h.calibrate) {
    const std::vector<double> self = top1_scores(b, b, bg, search);
    auto [hq, hs] = histogram_pair(scores, self, cfg.hist_bins, label,
                                   b.corpus_id() + "->" + b.corpus_id());
    calibration = calibrate_threshold(hq, hs);
    hists = {std::move(hq), std::move(hs)};
  } else if (scores.empty()) {
    hists.push_back(make_histogram(scores, histogram_edges(0.0, 0.0, cfg.hist_bins), label));
  } else {
    const auto [lo, hi] = std::minmax_element(scores.begin(), scores.end());
    hists.push_back(make_histogram(scores, histogram_edges(*lo, *hi, cfg.hist_bins), label));
  }

  std::string text = json{{"record", "config"},
                          {"provenance", echo("hist", cfg,
                                              {{"a", set_summary(a)},
                                               {"b", set_summary(b)},
                                               {"background", set_summary(bg.descriptors())}})}}
                         .dump() +
                     '\n';
  for (const auto& hist : hists) text += to_json(hist).dump() + '\n';
  if (calibration) text += to_json(*calibration).dump() + '\n';
  write_text(h.out, text);

  json out{{"out", h.out}, {"histograms", hists.size()}, {"scores", scores.size()}};
  if (calibration) {
    out["suggested_tau"] =
        calibration->suggested_tau ? json(*calibration->suggested_tau) : json(nullptr);
    out["fully_separated"] = calibration->fully_separated;
  }
  print_json(out);
  return 0;
}

// --- match-count ------------------------------------------------------------

struct MatchCountArgs {
  std::string result;
  std::optional<std::size_t> n;
  std::string like;
};

int cmd_match_count(const MatchCountArgs& a) {
  const RetrievalResult result = read_retrieval(a.result);
  std::size_t n = 0;
  if (a.n) {
    n = *a.n;
  } else {
    n = read_retrieval(a.like).retrieved.size();
  }
  const MatchCountThreshold t = match_count_threshold(result, n);
  print_json({{"result", a.result}, {"requested", n}, {"tau", t.tau}, {"count", t.count}});
  return 0;
}

// --- serve ------------------------------------------------------------------

struct ServeArgs {
  std::string session;
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string static_dir;
};

int cmd_serve(const ServeArgs& a) {
  // Block the stop signals before any server thread exists so they are
  // only ever delivered to the sigwait below.
  sigset_t stop_signals;
  sigemptyset(&stop_signals);
  sigaddset(&stop_signals, SIGINT);
  sigaddset(&stop_signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &stop_signals, nullptr);

  triage::TriageService service(triage::load_session(a.session));
  triage::TriageServer server(service, a.static_dir);
  const int port = server.start(a.host, a.port);
  std::cerr << "serving " << a.session << " on http://" << a.host << ":" << port << '\n';
  std::cout << json{{"host", a.host}, {"port", port}}.dump() << std::endl;
  int sig = 0;
  sigwait(&stop_signals, &sig);
  server.stop();
  return 0;
}

// --- error reporting --------------------------------------------------------

int report(int code, const std::string& kind, const std::string& message,
           const std::vector<std::string>& items = {}) {
  std::cerr << json{{"error", {{"kind", kind}, {"message", message}, {"items", items}}}}.dump()
            << '\n';
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Training-data replication and duplicate detection for audio corpora"};
  app.require_subcommand(1);

  GlobalOptions g;
  app.add_option("--config", g.config_path, "Pipeline config file (JSON)")->check(CLI::ExistingFile);
  app.add_option("--workers", g.workers, "Worker threads (0 = hardware parallelism)");
  app.add_option("--block-size", g.block_size, "Queries per scoring block");
  app.add_option("--cache-dir", g.cache_dir, "Per-clip descriptor cache directory");

  ExtractArgs extract;
  auto* ex = app.add_subcommand("extract", "Compute mel descriptors for a manifest");
  ex->add_option("--manifest", extract.manifest, "Corpus manifest (JSON lines)")->required();
  ex->add_option("-o,--out", extract.out, "Output descriptor file")->required();

  ImportArgs import;
  auto* im = app.add_subcommand("import", "Import precomputed embeddings for a manifest");
  im->add_option("--manifest", import.manifest, "Corpus manifest (JSON lines)")->required();
  im->add_option("--embeddings", import.embeddings, "Descriptor file or embedding JSON lines")
      ->required();
  im->add_option("-o,--out", import.out, "Output descriptor file")->required();

  SearchArgs search;
  auto* re = app.add_subcommand("retrieve", "Find queries replicating a reference corpus");
  re->add_option("--queries", search.queries, "Query descriptors")->required();
  re->add_option("--refs", search.refs, "Reference (training) descriptors")->required();
  re->add_option("--background", search.background, "Background descriptors")->required();
  re->add_option("-o,--out", search.out, "Output result file (JSON lines)")->required();
  re->add_option("--tau", search.tau, "Retrieval threshold");
  re->add_option("--k", search.k, "Background neighbours averaged into the bias");
  re->add_option("--beta", search.beta, "Bias weight");

  DedupArgs dedup;
  auto* de = app.add_subcommand("dedup", "Find duplicate clusters within a corpus");
  de->add_option("--refs", dedup.refs, "Corpus descriptors")->required();
  de->add_option("--background", dedup.background, "Background descriptors")->required();
  de->add_option("-o,--out", dedup.out, "Output report (JSON lines)")->required();
  de->add_option("--tau", dedup.tau, "Duplicate threshold");
  de->add_option("--sweep", dedup.sweep, "Comma-separated thresholds to sweep")->delimiter(',');

  HistArgs hist;
  auto* hi = app.add_subcommand("hist", "Histogram of top-1 normalized scores of A against B");
  hi->add_option("--a", hist.a, "Descriptors scored against B")->required();
  hi->add_option("--b", hist.b, "Descriptors searched")->required();
  hi->add_option("--background", hist.background, "Background descriptors")->required();
  hi->add_option("-o,--out", hist.out, "Output file (JSON lines)")->required();
  hi->add_flag("--calibrate", hist.calibrate,
               "Also histogram B against itself and suggest a threshold");
  hi->add_option("--bins", hist.bins, "Number of bins");

  MatchCountArgs mc;
  auto* ma = app.add_subcommand("match-count", "Threshold that retrieves a given number of pairs");
  ma->add_option("--result", mc.result, "Retrieval result to re-threshold")->required();
  auto* n_opt = ma->add_option("--n", mc.n, "Target number of retrieved pairs");
  auto* like_opt =
      ma->add_option("--like", mc.like, "Match the retrieved count of this other result");
  n_opt->excludes(like_opt);
  ma->callback([&] {
    if (!mc.n && mc.like.empty()) throw CLI::ValidationError("one of --n or --like is required");
  });

  ServeArgs serve;
  auto* se = app.add_subcommand("serve", "Run the review service for a session directory");
  se->add_option("--session", serve.session, "Session directory")->required();
  se->add_option("--host", serve.host, "Bind address")->capture_default_str();
  se->add_option("--port", serve.port, "Port (0 picks a free one)")->capture_default_str();
  se->add_option("--static", serve.static_dir, "Frontend asset directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report(kExitInput, "usage", e.what());
  }

  try {
    if (*ex) return cmd_extract(g, extract);
    if (*im) return cmd_import(g, import);
    if (*re) return cmd_retrieve(g, search);
    if (*de) return cmd_dedup(g, dedup);
    if (*hi) return cmd_hist(g, hist);
    if (*ma) return cmd_match_count(mc);
    if (*se) return cmd_serve(serve);
  } catch (const IngestError& e) {
    return report(kExitInput, "ingest", e.what(), e.items());
  } catch (const FormatError& e) {
    return report(kExitInput, "format", e.what(), e.items());
  } catch (const ConfigError& e) {
    return report(kExitInput, "config", e.what(), e.items());
  } catch (const InputError& e) {
    return report(kExitInput, "input", e.what(), e.items());
  } catch (const ContractError& e) {
    return report(kExitContract, "contract", e.what());
  } catch (const std::exception& e) {
    return report(kExitInput, "runtime", e.what());
  }
  return 0;
}

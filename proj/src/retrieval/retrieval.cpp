#include "replica/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <ostream>

#include "replica/error.hpp"

namespace replica {

using nlohmann::json;

void RetrievalConfig::validate() const {
  if (k_background < 1) throw ConfigError("K must be at least 1");
  if (!(beta >= 0.0) || !std::isfinite(beta)) throw ConfigError("beta must be finite and >= 0");
  if (std::isnan(tau)) throw ConfigError("tau is NaN");
}

namespace {

bool better_normalized(const ScoredMatch& a, const ScoredMatch& b) {
  if (a.normalized != b.normalized) return a.normalized > b.normalized;
  return a.query < b.query;
}

}  // namespace

RetrievalResult retrieve(const DescriptorSet& queries, const DescriptorSet& refs,
                         const BackgroundSet& bg, const RetrievalConfig& cfg,
                         const SearchOptions& opts) {
  cfg.validate();
  if (queries.kind() != cfg.kind || refs.kind() != cfg.kind) {
    throw ContractError(std::string("retrieval configured for ") + to_string(cfg.kind) +
                        " descriptors, got " + to_string(queries.kind()) + "/" +
                        to_string(refs.kind()));
  }
  if (bg.k() != cfg.k_background || bg.beta() != cfg.beta) {
    throw ContractError("background K/beta disagree with the retrieval config");
  }
  RetrievalResult result;
  result.config = cfg;
  result.query_count = queries.size();
  auto lists = topk(queries, refs, bg, 1, opts);
  for (auto& list : lists) {
    if (!list.empty()) result.all_top1.push_back(std::move(list.front()));
  }
  return rethreshold(result, cfg.tau);
}

RetrievalResult rethreshold(const RetrievalResult& result, double tau) {
  RetrievalResult out;
  out.config = result.config;
  out.config.tau = tau;
  out.query_count = result.query_count;
  out.all_top1 = result.all_top1;
  for (const auto& m : out.all_top1) {
    if (m.normalized >= tau) out.retrieved.push_back(m);
  }
  std::sort(out.retrieved.begin(), out.retrieved.end(), better_normalized);
  return out;
}

std::size_t ScoreHistogram::total() const {
  return std::accumulate(counts.begin(), counts.end(), std::size_t{0});
}

std::size_t ScoreHistogram::count_at_or_above(std::size_t edge) const {
  std::size_t sum = 0;
  for (std::size_t b = edge; b < counts.size(); ++b) sum += counts[b];
  return sum;
}

std::vector<double> histogram_edges(double lo, double hi, std::size_t bins) {
  if (bins == 0) throw ContractError("histogram needs at least one bin");
  if (!std::isfinite(lo) || !std::isfinite(hi) || hi < lo) {
    throw ContractError("invalid histogram range");
  }
  if (hi == lo) {
    lo -= 0.5;
    hi += 0.5;
  }
  std::vector<double> edges(bins + 1);
  for (std::size_t i = 0; i <= bins; ++i) {
    edges[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(bins);
  }
  edges.back() = std::nextafter(hi, std::numeric_limits<double>::infinity());
  return edges;
}

ScoreHistogram make_histogram(const std::vector<double>& scores, std::vector<double> edges,
                              std::string label) {
  if (edges.size() < 2) throw ContractError("histogram needs at least one bin");
  if (!std::is_sorted(edges.begin(), edges.end())) {
    throw ContractError("histogram edges must be sorted");
  }
  ScoreHistogram h;
  h.bin_edges = std::move(edges);
  h.counts.assign(h.bin_edges.size() - 1, 0);
  h.label = std::move(label);
  for (double s : scores) {
    auto it = std::upper_bound(h.bin_edges.begin(), h.bin_edges.end(), s);
    std::ptrdiff_t bin = (it - h.bin_edges.begin()) - 1;
    bin = std::clamp<std::ptrdiff_t>(bin, 0, static_cast<std::ptrdiff_t>(h.counts.size()) - 1);
    ++h.counts[static_cast<std::size_t>(bin)];
  }
  return h;
}

std::vector<double> top1_scores(const DescriptorSet& a, const DescriptorSet& b,
                                const BackgroundSet& bg, const SearchOptions& opts) {
  if (a.empty() || b.empty()) throw ContractError("histogram sets must be nonempty");
  SearchOptions o = opts;
  o.exclude_self = a.corpus_id() == b.corpus_id();
  if (o.exclude_self && a.ids() != b.ids()) {
    throw ContractError("sets share corpus id '" + a.corpus_id() + "' but differ in content");
  }
  std::vector<double> scores;
  scores.reserve(a.size());
  for (const auto& list : topk(a, b, bg, 1, o)) {
    if (!list.empty()) scores.push_back(list.front().normalized);
  }
  return scores;
}

namespace {

std::pair<double, double> range_of(const std::vector<double>& a, const std::vector<double>& b) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto* v : {&a, &b}) {
    for (double s : *v) {
      lo = std::min(lo, s);
      hi = std::max(hi, s);
    }
  }
  if (lo > hi) return {0.0, 0.0};
  return {lo, hi};
}

}  // namespace

ScoreHistogram histogram_top1(const DescriptorSet& a, const DescriptorSet& b,
                              const BackgroundSet& bg, std::size_t bins,
                              const SearchOptions& opts, std::string label) {
  if (bins == 0) throw ContractError("histogram needs at least one bin");
  const std::vector<double> scores = top1_scores(a, b, bg, opts);
  const auto [lo, hi] = range_of(scores, {});
  if (label.empty()) label = a.corpus_id() + "->" + b.corpus_id();
  return make_histogram(scores, histogram_edges(lo, hi, bins), std::move(label));
}

std::pair<ScoreHistogram, ScoreHistogram> histogram_pair(const std::vector<double>& query_scores,
                                                         const std::vector<double>& self_scores,
                                                         std::size_t bins,
                                                         std::string query_label,
                                                         std::string self_label) {
  const auto [lo, hi] = range_of(query_scores, self_scores);
  const auto edges = histogram_edges(lo, hi, bins);
  return {make_histogram(query_scores, edges, std::move(query_label)),
          make_histogram(self_scores, edges, std::move(self_label))};
}

CalibrationReport calibrate_threshold(const ScoreHistogram& hist_query,
                                      const ScoreHistogram& hist_self) {
  if (hist_query.bin_edges != hist_self.bin_edges) {
    throw ContractError("calibration needs histograms on identical bin edges");
  }
  if (hist_query.counts.size() + 1 != hist_query.bin_edges.size() ||
      hist_self.counts.size() + 1 != hist_self.bin_edges.size()) {
    throw ContractError("histogram counts do not match its edges");
  }
  CalibrationReport report;
  report.query_total = hist_query.total();
  report.self_total = hist_self.total();
  for (std::size_t e = 0; e < hist_query.bin_edges.size(); ++e) {
    EdgeCounts c{hist_query.bin_edges[e], hist_query.count_at_or_above(e),
                 hist_self.count_at_or_above(e)};
    if (!report.suggested_tau && c.self_above == 0 && c.queries_above > 0) {
      report.suggested_tau = c.edge;
      report.suggested_queries_above = c.queries_above;
    }
    report.grid.push_back(c);
  }
  report.separable = report.suggested_tau.has_value();
  report.fully_separated =
      report.separable && report.suggested_queries_above == report.query_total;
  if (report.query_total > 0 && report.self_total > 0) {
    for (std::size_t b = 0; b < hist_query.counts.size(); ++b) {
      report.overlap += std::min(
          static_cast<double>(hist_query.counts[b]) / static_cast<double>(report.query_total),
          static_cast<double>(hist_self.counts[b]) / static_cast<double>(report.self_total));
    }
  }
  return report;
}

MatchCountThreshold match_count_threshold(std::vector<double> scores, std::size_t n) {
  std::sort(scores.begin(), scores.end(), std::greater<>());
  constexpr double kInf = std::numeric_limits<double>::infinity();
  if (scores.empty()) return {kInf, 0};
  if (n == 0) return {std::nextafter(scores.front(), kInf), 0};
  if (n >= scores.size()) return {scores.back(), scores.size()};

  const double at = scores[n - 1];
  const auto count_ge = [&](double tau) {
    return static_cast<std::size_t>(
        std::count_if(scores.begin(), scores.end(), [&](double s) { return s >= tau; }));
  };
  const std::size_t hi_count = count_ge(at);
  if (hi_count == n) return {at, n};
  const double above = std::nextafter(at, kInf);
  const std::size_t lo_count = count_ge(above);
  if (hi_count - n < n - lo_count) return {at, hi_count};
  return {above, lo_count};
}

MatchCountThreshold match_count_threshold(const RetrievalResult& result, std::size_t n) {
  std::vector<double> scores;
  scores.reserve(result.all_top1.size());
  for (const auto& m : result.all_top1) scores.push_back(m.normalized);
  return match_count_threshold(std::move(scores), n);
}

json to_json(const ScoredMatch& m) {
  return {{"query", m.query.str()},   {"reference", m.reference.str()},
          {"raw", m.raw},             {"bias", m.bias},
          {"normalized", m.normalized}, {"rank", m.rank}};
}

ScoredMatch scored_match_from_json(const json& j) {
  ScoredMatch m;
  m.query = ClipId(j.at("query").get<std::string>());
  m.reference = ClipId(j.at("reference").get<std::string>());
  m.raw = j.at("raw").get<double>();
  m.bias = j.at("bias").get<double>();
  m.normalized = j.at("normalized").get<double>();
  m.rank = j.at("rank").get<std::size_t>();
  return m;
}

json to_json(const RetrievalConfig& cfg) {
  // JSON has no infinities; null stands for an unbounded threshold.
  json tau = std::isfinite(cfg.tau) ? json(cfg.tau) : json(nullptr);
  return {{"tau", tau},
          {"tau_unbounded", std::isinf(cfg.tau) ? (cfg.tau > 0 ? "+inf" : "-inf") : ""},
          {"K", cfg.k_background},
          {"beta", cfg.beta},
          {"descriptor_kind", to_string(cfg.kind)}};
}

namespace {

RetrievalConfig retrieval_config_from_json(const json& j) {
  RetrievalConfig cfg;
  const std::string unbounded = j.value("tau_unbounded", "");
  if (unbounded == "+inf") {
    cfg.tau = std::numeric_limits<double>::infinity();
  } else if (unbounded == "-inf") {
    cfg.tau = -std::numeric_limits<double>::infinity();
  } else {
    cfg.tau = j.at("tau").get<double>();
  }
  cfg.k_background = j.at("K").get<std::size_t>();
  cfg.beta = j.at("beta").get<double>();
  cfg.kind = descriptor_kind_from_string(j.at("descriptor_kind").get<std::string>());
  return cfg;
}

}  // namespace

json to_json(const ScoreHistogram& h) {
  return {{"record", "histogram"}, {"label", h.label}, {"edges", h.bin_edges},
          {"counts", h.counts}};
}

json to_json(const CalibrationReport& r) {
  json grid = json::array();
  for (const auto& g : r.grid) {
    grid.push_back({{"edge", g.edge}, {"queries_above", g.queries_above},
                    {"self_above", g.self_above}});
  }
  return {{"record", "calibration"},
          {"suggested_tau", r.suggested_tau ? json(*r.suggested_tau) : json(nullptr)},
          {"suggested_queries_above", r.suggested_queries_above},
          {"separable", r.separable},
          {"fully_separated", r.fully_separated},
          {"overlap", r.overlap},
          {"query_total", r.query_total},
          {"self_total", r.self_total},
          {"grid", grid}};
}

void write_retrieval(std::ostream& out, const RetrievalResult& result,
                     const json& provenance) {
  out << json{{"record", "config"},
              {"provenance", provenance},
              {"retrieval", to_json(result.config)},
              {"query_count", result.query_count},
              {"retrieved_count", result.retrieved.size()}}
             .dump()
      << '\n';
  for (const auto& m : result.retrieved) {
    json j = to_json(m);
    j["record"] = "retrieved";
    out << j.dump() << '\n';
  }
  for (const auto& m : result.all_top1) {
    json j = to_json(m);
    j["record"] = "top1";
    out << j.dump() << '\n';
  }
}

void write_retrieval(const std::filesystem::path& path, const RetrievalResult& result,
                     const json& provenance) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw InputError("cannot write retrieval result: " + path.string(), {path.string()});
  write_retrieval(f, result, provenance);
}

RetrievalResult read_retrieval(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw InputError("cannot open retrieval result: " + path.string(), {path.string()});
  RetrievalResult result;
  bool have_config = false;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      const std::string record = j.at("record").get<std::string>();
      if (record == "config") {
        result.config = retrieval_config_from_json(j.at("retrieval"));
        result.query_count = j.at("query_count").get<std::size_t>();
        have_config = true;
      } else if (record == "retrieved") {
        result.retrieved.push_back(scored_match_from_json(j));
      } else if (record == "top1") {
        result.all_top1.push_back(scored_match_from_json(j));
      } else {
        throw FormatError("unknown record type '" + record + "'");
      }
    } catch (const json::exception& e) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": " + e.what(),
                        {path.string()});
    }
  }
  if (!have_config) throw FormatError(path.string() + ": missing config record", {path.string()});
  return result;
}

}  // namespace replica

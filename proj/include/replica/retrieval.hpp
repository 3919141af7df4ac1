#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "replica/descriptor_set.hpp"
#include "replica/simcore.hpp"

namespace replica {

struct RetrievalConfig {
  double tau = 0.5005;
  std::size_t k_background = 5;
  double beta = 0.5;
  DescriptorKind kind = DescriptorKind::Mel;

  void validate() const;
};

struct RetrievalResult {
  std::vector<ScoredMatch> retrieved;  // normalized >= tau, best first
  std::vector<ScoredMatch> all_top1;   // one per query with any reference, query order
  RetrievalConfig config;
  std::size_t query_count = 0;
};

// Queries whose top-1 normalized score reaches tau. The background's K and
// beta must agree with `cfg`.
RetrievalResult retrieve(const DescriptorSet& queries, const DescriptorSet& refs,
                         const BackgroundSet& bg, const RetrievalConfig& cfg,
                         const SearchOptions& opts = {});

// Re-thresholds an existing result.
RetrievalResult rethreshold(const RetrievalResult& result, double tau);

struct ScoreHistogram {
  std::vector<double> bin_edges;
  std::vector<std::size_t> counts;
  std::string label;

  std::size_t total() const;
  // Scores at or above bin_edges[edge], by bin counts.
  std::size_t count_at_or_above(std::size_t edge) const;
};

// Fixed-width edges over [lo, hi]. The top edge is nudged just above hi so
// every bin is half-open; a zero-width range is widened to +-0.5.
std::vector<double> histogram_edges(double lo, double hi, std::size_t bins);

// Bins are [e_i, e_{i+1}); values outside the edges land in the end bins.
ScoreHistogram make_histogram(const std::vector<double>& scores, std::vector<double> edges,
                              std::string label);

// Top-1 normalized score per query of `a` against `b`. When both sets are the
// same corpus (same corpus_id), each sample's self-match is excluded.
std::vector<double> top1_scores(const DescriptorSet& a, const DescriptorSet& b,
                                const BackgroundSet& bg, const SearchOptions& opts = {});

ScoreHistogram histogram_top1(const DescriptorSet& a, const DescriptorSet& b,
                              const BackgroundSet& bg, std::size_t bins,
                              const SearchOptions& opts = {}, std::string label = "");

// Query and self series binned on shared edges over the union of both.
std::pair<ScoreHistogram, ScoreHistogram> histogram_pair(const std::vector<double>& query_scores,
                                                         const std::vector<double>& self_scores,
                                                         std::size_t bins,
                                                         std::string query_label,
                                                         std::string self_label);

struct EdgeCounts {
  double edge = 0.0;
  std::size_t queries_above = 0;
  std::size_t self_above = 0;
};

struct CalibrationReport {
  std::vector<EdgeCounts> grid;
  // Lowest edge with no self mass above it and some query mass above it.
  std::optional<double> suggested_tau;
  std::size_t suggested_queries_above = 0;
  bool fully_separated = false;  // all query mass above the suggested edge
  bool separable = false;
  double overlap = 0.0;          // sum of min of the two normalized histograms
  std::size_t query_total = 0;
  std::size_t self_total = 0;
};

CalibrationReport calibrate_threshold(const ScoreHistogram& hist_query,
                                      const ScoreHistogram& hist_self);

struct MatchCountThreshold {
  double tau = 0.0;
  std::size_t count = 0;  // number retrieved at tau
};

// The threshold on `scores` retrieving exactly n, or the closest achievable
// count (ties toward fewer).
MatchCountThreshold match_count_threshold(std::vector<double> scores, std::size_t n);
MatchCountThreshold match_count_threshold(const RetrievalResult& result, std::size_t n);

// Line-delimited JSON. The first record echoes `provenance` and the config.
nlohmann::json to_json(const ScoredMatch& m);
ScoredMatch scored_match_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RetrievalConfig& cfg);
nlohmann::json to_json(const ScoreHistogram& h);
nlohmann::json to_json(const CalibrationReport& r);

void write_retrieval(std::ostream& out, const RetrievalResult& result,
                     const nlohmann::json& provenance);
void write_retrieval(const std::filesystem::path& path, const RetrievalResult& result,
                     const nlohmann::json& provenance);
RetrievalResult read_retrieval(const std::filesystem::path& path);

}  // namespace replica

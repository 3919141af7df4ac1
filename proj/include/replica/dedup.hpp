#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "replica/descriptor_set.hpp"
#include "replica/simcore.hpp"

namespace replica {

inline constexpr double kDefaultDedupTau = 0.5025;

struct MutualEdge {
  std::size_t a = 0;  // a < b
  std::size_t b = 0;
  double s_ab = 0.0;  // S[a][b]
  double s_ba = 0.0;  // S[b][a]

  friend bool operator==(const MutualEdge&, const MutualEdge&) = default;
};

// Undirected, self-loop free. Edges sorted by (a, b).
struct AdjacencyGraph {
  std::vector<ClipId> ids;
  std::vector<MutualEdge> edges;

  std::size_t n() const noexcept { return ids.size(); }
};

// Edge (i, j) iff S[i][j] > tau and S[j][i] > tau. S must be square with a
// zero diagonal; `ids` names its rows.
AdjacencyGraph build_adjacency(const ScoreMatrix& s, const std::vector<ClipId>& ids,
                               double tau = kDefaultDedupTau);

enum class ClusterStatus { Candidate, Confirmed, Rejected };
const char* to_string(ClusterStatus s);
ClusterStatus cluster_status_from_string(const std::string& s);

struct DuplicateCluster {
  std::size_t component_id = 0;
  std::vector<ClipId> members;  // sorted
  std::vector<MutualEdge> edges;
  ClusterStatus status = ClusterStatus::Candidate;
};

// Components with at least two members, numbered in order of their smallest
// member ClipId.
std::vector<DuplicateCluster> connected_components(const AdjacencyGraph& g);

struct DedupOptions {
  SearchOptions search;
  // Above this corpus size the score matrix is streamed in row blocks.
  std::size_t dense_cap = 20000;
};

// Mutual edges of the thresholded self-similarity graph, computed by row
// streaming (memory O(block x n) plus the surviving edges).
AdjacencyGraph mutual_graph(const DescriptorSet& refs, const BackgroundSet& bg, double tau,
                            const DedupOptions& opts = {});

// Keeps edges whose both directions exceed tau.
AdjacencyGraph filter_graph(const AdjacencyGraph& g, double tau);

struct DedupReport {
  double tau = kDefaultDedupTau;
  std::size_t corpus_size = 0;
  std::vector<ClipId> ids;  // row order; MutualEdge indices refer to it
  std::size_t edge_count = 0;
  std::vector<DuplicateCluster> clusters;  // size descending, then component_id

  // cluster size -> number of clusters
  std::map<std::size_t, std::size_t> size_summary() const;
};

DedupReport dedup_corpus(const DescriptorSet& refs, const BackgroundSet& bg,
                         double tau = kDefaultDedupTau, const DedupOptions& opts = {});

DedupReport make_report(const AdjacencyGraph& g, double tau);

struct SweepPoint {
  double tau = 0.0;
  std::size_t edges = 0;
  std::size_t clusters = 0;
};

std::vector<SweepPoint> sweep_tau(const DescriptorSet& refs, const BackgroundSet& bg,
                                  std::vector<double> taus, const DedupOptions& opts = {});

nlohmann::json to_json(const DuplicateCluster& c);
void write_dedup_report(std::ostream& out, const DedupReport& report,
                        const nlohmann::json& provenance,
                        const std::vector<SweepPoint>& sweep = {});
void write_dedup_report(const std::filesystem::path& path, const DedupReport& report,
                        const nlohmann::json& provenance,
                        const std::vector<SweepPoint>& sweep = {});

// Clusters only; member scores are read back by ClipId.
struct ClusterRecord {
  std::size_t component_id = 0;
  std::vector<ClipId> members;
  nlohmann::json pairwise_scores;
  ClusterStatus status = ClusterStatus::Candidate;
};
std::vector<ClusterRecord> read_dedup_report(const std::filesystem::path& path);

}  // namespace replica

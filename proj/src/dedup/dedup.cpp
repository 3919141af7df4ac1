#include "replica/dedup.hpp"

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <ostream>
#include <tuple>
#include <unordered_map>

#include "replica/error.hpp"
#include "replica/union_find.hpp"

namespace replica {

using nlohmann::json;

const char* to_string(ClusterStatus s) {
  switch (s) {
    case ClusterStatus::Candidate: return "candidate";
    case ClusterStatus::Confirmed: return "confirmed";
    case ClusterStatus::Rejected: return "rejected";
  }
  return "candidate";
}

ClusterStatus cluster_status_from_string(const std::string& s) {
  if (s == "candidate") return ClusterStatus::Candidate;
  if (s == "confirmed") return ClusterStatus::Confirmed;
  if (s == "rejected") return ClusterStatus::Rejected;
  throw FormatError("unknown cluster status: " + s);
}

AdjacencyGraph build_adjacency(const ScoreMatrix& s, const std::vector<ClipId>& ids, double tau) {
  if (s.values.size() != s.n * s.n) throw ContractError("score matrix is not square");
  if (ids.size() != s.n) throw ContractError("id count does not match the score matrix");
  for (std::size_t i = 0; i < s.n; ++i) {
    if (s.at(i, i) != 0.0) throw ContractError("score matrix diagonal must be zeroed");
  }
  AdjacencyGraph g;
  g.ids = ids;
  for (std::size_t i = 0; i < s.n; ++i) {
    for (std::size_t j = i + 1; j < s.n; ++j) {
      if (s.at(i, j) > tau && s.at(j, i) > tau) g.edges.push_back({i, j, s.at(i, j), s.at(j, i)});
    }
  }
  return g;
}

std::vector<DuplicateCluster> connected_components(const AdjacencyGraph& g) {
  UnionFind uf(g.n());
  for (const auto& e : g.edges) {
    if (e.a == e.b || e.a >= g.n() || e.b >= g.n()) {
      throw ContractError("invalid edge in adjacency graph");
    }
    uf.unite(e.a, e.b);
  }

  std::unordered_map<std::size_t, std::size_t> root_to_cluster;
  std::vector<DuplicateCluster> clusters;
  for (std::size_t i = 0; i < g.n(); ++i) {
    if (uf.component_size(i) < 2) continue;
    const std::size_t root = uf.find(i);
    auto [it, inserted] = root_to_cluster.emplace(root, clusters.size());
    if (inserted) clusters.emplace_back();
    clusters[it->second].members.push_back(g.ids[i]);
  }
  for (const auto& e : g.edges) {
    clusters[root_to_cluster.at(uf.find(e.a))].edges.push_back(e);
  }
  for (auto& c : clusters) std::sort(c.members.begin(), c.members.end());
  std::sort(clusters.begin(), clusters.end(),
            [](const auto& x, const auto& y) { return x.members.front() < y.members.front(); });
  for (std::size_t i = 0; i < clusters.size(); ++i) clusters[i].component_id = i;
  return clusters;
}

AdjacencyGraph mutual_graph(const DescriptorSet& refs, const BackgroundSet& bg, double tau,
                            const DedupOptions& opts) {
  AdjacencyGraph g;
  g.ids = refs.ids();
  // S[i][j] for i < j above tau, waiting for row j to confirm S[j][i].
  std::unordered_map<std::uint64_t, double> pending;
  const auto key = [](std::size_t i, std::size_t j) {
    return (static_cast<std::uint64_t>(i) << 32) | static_cast<std::uint64_t>(j);
  };
  scan_self_similarity(refs, bg, opts.search, [&](std::size_t i, std::span<const double> row) {
    for (std::size_t j = 0; j < row.size(); ++j) {
      if (j == i || !(row[j] > tau)) continue;
      if (j > i) {
        pending.emplace(key(i, j), row[j]);
      } else if (auto it = pending.find(key(j, i)); it != pending.end()) {
        g.edges.push_back({j, i, it->second, row[j]});
        pending.erase(it);
      }
    }
  });
  std::sort(g.edges.begin(), g.edges.end(),
            [](const auto& x, const auto& y) { return std::tie(x.a, x.b) < std::tie(y.a, y.b); });
  return g;
}

AdjacencyGraph filter_graph(const AdjacencyGraph& g, double tau) {
  AdjacencyGraph out;
  out.ids = g.ids;
  for (const auto& e : g.edges) {
    if (e.s_ab > tau && e.s_ba > tau) out.edges.push_back(e);
  }
  return out;
}

std::map<std::size_t, std::size_t> DedupReport::size_summary() const {
  std::map<std::size_t, std::size_t> out;
  for (const auto& c : clusters) ++out[c.members.size()];
  return out;
}

DedupReport make_report(const AdjacencyGraph& g, double tau) {
  DedupReport report;
  report.tau = tau;
  report.corpus_size = g.n();
  report.ids = g.ids;
  report.edge_count = g.edges.size();
  report.clusters = connected_components(g);
  std::stable_sort(report.clusters.begin(), report.clusters.end(),
                   [](const auto& x, const auto& y) { return x.members.size() > y.members.size(); });
  return report;
}

DedupReport dedup_corpus(const DescriptorSet& refs, const BackgroundSet& bg, double tau,
                         const DedupOptions& opts) {
  if (refs.empty()) throw ContractError("dedup needs a nonempty corpus");
  if (refs.size() <= opts.dense_cap) {
    const ScoreMatrix s = self_similarity(refs, bg, opts.search);
    return make_report(build_adjacency(s, refs.ids(), tau), tau);
  }
  return make_report(mutual_graph(refs, bg, tau, opts), tau);
}

std::vector<SweepPoint> sweep_tau(const DescriptorSet& refs, const BackgroundSet& bg,
                                  std::vector<double> taus, const DedupOptions& opts) {
  if (taus.empty()) return {};
  std::sort(taus.begin(), taus.end());
  const AdjacencyGraph base = mutual_graph(refs, bg, taus.front(), opts);
  std::vector<SweepPoint> out;
  for (double tau : taus) {
    const AdjacencyGraph g = filter_graph(base, tau);
    out.push_back({tau, g.edges.size(), connected_components(g).size()});
  }
  return out;
}

json to_json(const DuplicateCluster& c) {
  json members = json::array();
  for (const auto& m : c.members) members.push_back(m.str());
  return {{"record", "cluster"},
          {"component_id", c.component_id},
          {"members", members},
          {"status", to_string(c.status)}};
}

void write_dedup_report(std::ostream& out, const DedupReport& report, const json& provenance,
                        const std::vector<SweepPoint>& sweep) {
  out << json{{"record", "config"},
              {"provenance", provenance},
              {"tau", report.tau},
              {"corpus_size", report.corpus_size},
              {"edge_count", report.edge_count},
              {"cluster_count", report.clusters.size()}}
             .dump()
      << '\n';
  for (const auto& c : report.clusters) {
    json j = to_json(c);
    json scores = json::array();
    for (const auto& e : c.edges) {
      scores.push_back({{"a", report.ids.at(e.a).str()},
                        {"b", report.ids.at(e.b).str()},
                        {"s_ab", e.s_ab},
                        {"s_ba", e.s_ba}});
    }
    j["pairwise_scores"] = scores;
    out << j.dump() << '\n';
  }
  json sizes = json::object();
  for (const auto& [size, count] : report.size_summary()) sizes[std::to_string(size)] = count;
  out << json{{"record", "size_summary"}, {"sizes", sizes}}.dump() << '\n';
  for (const auto& p : sweep) {
    out << json{{"record", "sweep"}, {"tau", p.tau}, {"edges", p.edges}, {"clusters", p.clusters}}
               .dump()
        << '\n';
  }
}

void write_dedup_report(const std::filesystem::path& path, const DedupReport& report,
                        const json& provenance, const std::vector<SweepPoint>& sweep) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw InputError("cannot write dedup report: " + path.string(), {path.string()});
  write_dedup_report(f, report, provenance, sweep);
}

std::vector<ClusterRecord> read_dedup_report(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw InputError("cannot open dedup report: " + path.string(), {path.string()});
  std::vector<ClusterRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      if (j.at("record") != "cluster") continue;
      ClusterRecord c;
      c.component_id = j.at("component_id").get<std::size_t>();
      for (const auto& m : j.at("members")) c.members.emplace_back(m.get<std::string>());
      c.pairwise_scores = j.value("pairwise_scores", json::array());
      c.status = cluster_status_from_string(j.value("status", "candidate"));
      out.push_back(std::move(c));
    } catch (const json::exception& e) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": " + e.what(),
                        {path.string()});
    }
  }
  return out;
}

}  // namespace replica

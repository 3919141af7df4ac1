#include <fstream>
#include <iterator>
#include <set>

#include "replica/error.hpp"
#include "replica/triage.hpp"

namespace replica::triage {

using nlohmann::json;

const char* const kDefaultRubric =
    "Mark a pair 'replicated' when you would be confident the query was copied from the "
    "reference: the same sequence of events, with matching timing and pitch movement, even if "
    "noise or a level change was added. Background textures on their own (rain, wind, engine "
    "drone, a held note) do not qualify. Choose 'unsure' if two listens to each clip do not "
    "settle it.";

const PairEntry* Session::find_pair(const ClipId& q, const ClipId& r) const {
  for (const auto& p : queue) {
    if (p.match.query == q && p.match.reference == r) return &p;
  }
  return nullptr;
}

const ClusterRecord* Session::find_cluster(std::size_t component_id) const {
  for (const auto& c : clusters) {
    if (c.component_id == component_id) return &c;
  }
  return nullptr;
}

const ManifestEntry* Session::find_clip(const ClipId& id) const {
  for (const auto& m : manifests) {
    if (const auto* e = m.find(id)) return e;
  }
  return nullptr;
}

Session load_session(const std::filesystem::path& dir) {
  const auto spec_path = dir / "session.json";
  std::ifstream f(spec_path);
  if (!f) throw InputError("missing session file: " + spec_path.string(), {spec_path.string()});
  json spec;
  try {
    spec = json::parse(f);
  } catch (const json::parse_error& e) {
    throw FormatError(spec_path.string() + ": " + e.what(), {spec_path.string()});
  }
  if (!spec.is_object()) throw FormatError(spec_path.string() + ": expected an object");
  for (const auto& [key, value] : spec.items()) {
    static const std::set<std::string> kKnown{"retrievals", "dedup", "manifests", "verdict_log",
                                              "rubric"};
    if (!kKnown.contains(key)) throw FormatError(spec_path.string() + ": unknown key '" + key + "'");
  }

  Session s;
  s.dir = dir;
  s.rubric = spec.value("rubric", kDefaultRubric);
  s.verdict_log = dir / spec.value("verdict_log", "verdicts.jsonl");

  std::vector<std::pair<std::string, std::filesystem::path>> retrievals;
  std::optional<std::filesystem::path> dedup;
  std::vector<std::filesystem::path> manifests;
  try {
    for (const auto& r : spec.value("retrievals", json::array())) {
      const auto path = dir / r.at("path").get<std::string>();
      retrievals.emplace_back(r.value("label", path.stem().string()), path);
    }
    if (spec.contains("dedup") && !spec["dedup"].is_null()) {
      dedup = dir / spec["dedup"].get<std::string>();
    }
    for (const auto& m : spec.value("manifests", json::array())) {
      manifests.push_back(dir / m.get<std::string>());
    }
  } catch (const json::exception& e) {
    throw FormatError(spec_path.string() + ": " + e.what(), {spec_path.string()});
  }
  if (retrievals.empty() && !dedup) {
    throw InputError(spec_path.string() + ": session lists neither retrievals nor a dedup report",
                     {spec_path.string()});
  }

  std::vector<std::string> missing;
  for (const auto& [label, p] : retrievals) {
    if (!std::filesystem::exists(p)) missing.push_back(p.string());
  }
  if (dedup && !std::filesystem::exists(*dedup)) missing.push_back(dedup->string());
  for (const auto& p : manifests) {
    if (!std::filesystem::exists(p)) missing.push_back(p.string());
  }
  if (!missing.empty()) {
    std::string msg = "session is missing " + std::to_string(missing.size()) + " input file(s):";
    for (const auto& m : missing) msg += "\n  " + m;
    throw InputError(msg, missing);
  }

  for (const auto& [label, p] : retrievals) {
    RetrievalSource src{label, p, read_retrieval(p)};
    for (const auto& m : src.result.retrieved) {
      s.queue.push_back({s.queue.size(), label, m});
    }
    s.retrievals.push_back(std::move(src));
  }
  if (dedup) s.clusters = read_dedup_report(*dedup);
  for (const auto& p : manifests) s.manifests.push_back(read_manifest(p));
  return s;
}

namespace {

std::optional<Label> effective_label(const VerdictStore& store, const VerdictKey& key,
                                     const SummaryOptions& opts) {
  const auto by_annotator = store.current(key);
  if (opts.annotator) {
    auto it = by_annotator.find(*opts.annotator);
    if (it == by_annotator.end()) return std::nullopt;
    return it->second.label;
  }
  return consensus(by_annotator, opts.policy);
}

struct Tally {
  std::size_t retrieved = 0;
  std::size_t reviewed = 0;
  std::size_t replicated = 0;
  std::size_t not_replicated = 0;
  std::size_t unsure = 0;
  std::set<ClipId> replicated_queries;

  void add(const ScoredMatch& m, std::optional<Label> label) {
    ++retrieved;
    if (!label) return;
    ++reviewed;
    if (*label == Label::Replicated) {
      ++replicated;
      replicated_queries.insert(m.query);
    } else if (*label == Label::NotReplicated) {
      ++not_replicated;
    } else {
      ++unsure;
    }
  }

  json to_json(std::optional<std::size_t> queries) const {
    const bool defined = retrieved > 0 && reviewed > 0;
    json j{{"retrieved", retrieved},       {"reviewed", reviewed},
           {"replicated", replicated},     {"not_replicated", not_replicated},
           {"unsure", unsure},             {"rate_defined", defined},
           {"replication_rate", nullptr},  {"per_10k_queries", nullptr}};
    if (defined) {
      j["replication_rate"] = static_cast<double>(replicated) / static_cast<double>(retrieved);
    }
    if (queries) {
      j["queries"] = *queries;
      if (defined && *queries > 0) {
        j["per_10k_queries"] =
            10000.0 * static_cast<double>(replicated) / static_cast<double>(*queries);
      }
    }
    return j;
  }
};

}  // namespace

json replication_stats(const Session& session, const VerdictStore& store,
                       const SummaryOptions& opts) {
  json out;
  out["policy"] = to_string(opts.policy);
  out["annotator"] = opts.annotator ? json(*opts.annotator) : json(nullptr);

  std::vector<std::pair<std::string, Tally>> per_source;
  json by_descriptor = json::object();
  for (const auto& src : session.retrievals) {
    Tally t;
    for (const auto& m : src.result.retrieved) {
      t.add(m, effective_label(store, VerdictKey::pair(m.query, m.reference), opts));
    }
    by_descriptor[src.label] = t.to_json(src.result.query_count);
    per_source.emplace_back(src.label, std::move(t));
  }
  out["by_descriptor"] = by_descriptor;

  Tally overall;
  std::set<std::string> seen;
  for (const auto& p : session.queue) {
    const auto key = VerdictKey::pair(p.match.query, p.match.reference);
    if (!seen.insert(key.str()).second) continue;
    overall.add(p.match, effective_label(store, key, opts));
  }
  out["overall"] = overall.to_json(std::nullopt);

  json overlap = json::array();
  for (std::size_t a = 0; a < per_source.size(); ++a) {
    for (std::size_t b = a + 1; b < per_source.size(); ++b) {
      json both = json::array();
      for (const auto& q : per_source[a].second.replicated_queries) {
        if (per_source[b].second.replicated_queries.contains(q)) both.push_back(q.str());
      }
      overlap.push_back({{"a", per_source[a].first},
                         {"b", per_source[b].first},
                         {"replicated_in_both", both.size()},
                         {"queries", both}});
    }
  }
  out["overlap"] = overlap;

  json annotators = json::object();
  for (const auto& v : store.all_current()) {
    if (v.key.kind != VerdictKey::Kind::Pair) continue;
    if (!session.find_pair(v.key.query, v.key.reference)) continue;
    auto& a = annotators[v.annotator];
    if (a.is_null()) a = {{"replicated", 0}, {"not_replicated", 0}, {"unsure", 0}};
    a[to_string(v.label)] = a[to_string(v.label)].get<std::size_t>() + 1;
  }
  out["annotators"] = annotators;

  std::size_t confirmed = 0;
  std::size_t rejected = 0;
  std::size_t confirmed_samples = 0;
  for (const auto& c : session.clusters) {
    const auto label = effective_label(store, VerdictKey::cluster(c.component_id), opts);
    if (label == Label::Confirmed) {
      ++confirmed;
      confirmed_samples += c.members.size();
    } else if (label == Label::Rejected) {
      ++rejected;
    }
  }
  out["clusters"] = {{"total", session.clusters.size()},
                     {"confirmed", confirmed},
                     {"rejected", rejected},
                     {"unresolved", session.clusters.size() - confirmed - rejected},
                     {"confirmed_samples", confirmed_samples}};
  return out;
}

}  // namespace replica::triage

#include <fstream>
#include <cctype>
#include <iterator>
#include <set>

#include "replica/error.hpp"
#include "replica/triage.hpp"

namespace replica::triage {

using nlohmann::json;

namespace {

std::string url_encode(const std::string& s) {
  static constexpr char kHex[] = "0123456789ABCDEF";
  std::string out;
  for (unsigned char c : s) {
    if (std::isalnum(c) || c == '-' || c == '_' || c == '.' || c == '~') {
      out.push_back(static_cast<char>(c));
    } else {
      out.push_back('%');
      out.push_back(kHex[c >> 4]);
      out.push_back(kHex[c & 0xF]);
    }
  }
  return out;
}

json verdicts_json(const std::map<std::string, Verdict>& by_annotator) {
  json out = json::object();
  for (const auto& [annotator, v] : by_annotator) {
    out[annotator] = {{"label", to_string(v.label)},
                      {"timestamp", v.timestamp},
                      {"note", v.note ? json(*v.note) : json(nullptr)}};
  }
  return out;
}

json label_json(std::optional<Label> l) { return l ? json(to_string(*l)) : json(nullptr); }

}  // namespace

TriageService::TriageService(Session session, std::function<std::string()> clock)
    : session_(std::move(session)), store_(session_.verdict_log), clock_(std::move(clock)) {}

json TriageService::session_info() const {
  json retrievals = json::array();
  for (const auto& r : session_.retrievals) {
    retrievals.push_back({{"label", r.label},
                          {"path", r.path.filename().string()},
                          {"query_count", r.result.query_count},
                          {"retrieved_count", r.result.retrieved.size()},
                          {"config", to_json(r.result.config)}});
  }
  std::size_t pairs_reviewed = 0;
  for (const auto& p : session_.queue) {
    if (!store_.current(VerdictKey::pair(p.match.query, p.match.reference)).empty()) {
      ++pairs_reviewed;
    }
  }
  std::size_t clusters_reviewed = 0;
  for (const auto& c : session_.clusters) {
    if (!store_.current(VerdictKey::cluster(c.component_id)).empty()) ++clusters_reviewed;
  }
  return {{"retrievals", retrievals},
          {"clusters", session_.clusters.size()},
          {"manifests", session_.manifests.size()},
          {"rubric", session_.rubric},
          {"labels", {{"pair", {"replicated", "not_replicated", "unsure"}},
                      {"cluster", {"confirmed", "rejected"}}}},
          {"progress", {{"pairs_total", session_.queue.size()},
                        {"pairs_reviewed", pairs_reviewed},
                        {"clusters_total", session_.clusters.size()},
                        {"clusters_reviewed", clusters_reviewed},
                        {"verdict_log_entries", store_.log_size()}}}};
}

json TriageService::pair_json(const PairEntry& p) const {
  const auto by_annotator = store_.current(VerdictKey::pair(p.match.query, p.match.reference));
  json j = to_json(p.match);
  j["index"] = p.queue_index;
  j["descriptor"] = p.descriptor;
  for (const auto& [field, id] : {std::pair{"query", &p.match.query},
                                  std::pair{"reference", &p.match.reference}}) {
    const ManifestEntry* e = session_.find_clip(*id);
    j[std::string(field) + "_caption"] = e && e->caption ? json(*e->caption) : json(nullptr);
    const std::string base = "/api/clips/" + url_encode(id->str());
    j[std::string(field) + "_audio"] = base + "/audio";
    j[std::string(field) + "_spectrogram"] = base + "/spectrogram";
  }
  j["verdicts"] = verdicts_json(by_annotator);
  j["consensus"] = label_json(consensus(by_annotator, ConsensusPolicy::Majority));
  return j;
}

json TriageService::pairs(std::size_t offset, std::size_t limit, const std::string& filter,
                          const std::optional<std::string>& annotator) const {
  static const std::set<std::string> kFilters{"all",        "unreviewed",     "reviewed",
                                              "replicated", "not_replicated", "unsure"};
  if (!kFilters.contains(filter)) throw ContractError("unknown filter '" + filter + "'");
  std::vector<const PairEntry*> selected;
  for (const auto& p : session_.queue) {
    if (filter == "all") {
      selected.push_back(&p);
      continue;
    }
    const auto by_annotator = store_.current(VerdictKey::pair(p.match.query, p.match.reference));
    std::optional<Label> label;
    if (annotator) {
      if (auto it = by_annotator.find(*annotator); it != by_annotator.end()) {
        label = it->second.label;
      }
    } else {
      label = consensus(by_annotator, ConsensusPolicy::Majority);
    }
    const bool keep = filter == "unreviewed" ? !label
                      : filter == "reviewed" ? label.has_value()
                                             : label && filter == to_string(*label);
    if (keep) selected.push_back(&p);
  }
  json page = json::array();
  for (std::size_t i = offset; i < selected.size() && i - offset < limit; ++i) {
    page.push_back(pair_json(*selected[i]));
  }
  return {{"total", selected.size()},
          {"offset", offset},
          {"limit", limit},
          {"filter", filter},
          {"pairs", page}};
}

json TriageService::clusters() const {
  json out = json::array();
  for (const auto& c : session_.clusters) {
    json members = json::array();
    for (const auto& m : c.members) {
      const ManifestEntry* e = session_.find_clip(m);
      const std::string base = "/api/clips/" + url_encode(m.str());
      members.push_back({{"id", m.str()},
                         {"caption", e && e->caption ? json(*e->caption) : json(nullptr)},
                         {"audio", base + "/audio"},
                         {"spectrogram", base + "/spectrogram"}});
    }
    const auto by_annotator = store_.current(VerdictKey::cluster(c.component_id));
    const auto label = consensus(by_annotator, ConsensusPolicy::Majority);
    out.push_back({{"component_id", c.component_id},
                   {"size", c.members.size()},
                   {"members", members},
                   {"pairwise_scores", c.pairwise_scores},
                   {"status", label ? to_string(*label) : to_string(c.status)},
                   {"verdicts", verdicts_json(by_annotator)}});
  }
  return {{"clusters", out}};
}

json TriageService::post_verdict(const json& body) {
  Verdict v;
  try {
    v = verdict_from_json(body);
  } catch (const FormatError& e) {
    throw ContractError(e.what());
  }
  if (v.key.kind == VerdictKey::Kind::Pair) {
    if (!session_.find_pair(v.key.query, v.key.reference)) {
      throw ContractError("unknown pair (" + v.key.query.str() + ", " + v.key.reference.str() +
                          ")");
    }
  } else if (!session_.find_cluster(v.key.component_id)) {
    throw ContractError("unknown cluster " + std::to_string(v.key.component_id));
  }
  if (v.timestamp.empty()) v.timestamp = clock_();
  const auto outcome = store_.record(v);
  return {{"status", outcome == VerdictStore::Outcome::Appended ? "recorded" : "unchanged"},
          {"verdict", to_json(v)}};
}

json TriageService::summary(const SummaryOptions& opts) const {
  return replication_stats(session_, store_, opts);
}

std::string TriageService::audio_bytes(const ClipId& id) const {
  const ManifestEntry* e = session_.find_clip(id);
  if (!e) throw NotFoundError("unknown clip '" + id.str() + "'");
  std::ifstream f(e->path, std::ios::binary);
  if (!f) throw NotFoundError("audio file unavailable for '" + id.str() + "'");
  return {(std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>()};
}

std::string TriageService::spectrogram_png(const ClipId& id) const {
  {
    std::lock_guard lock(png_mutex_);
    if (auto it = png_cache_.find(id.str()); it != png_cache_.end()) return it->second;
  }
  const ManifestEntry* e = session_.find_clip(id);
  if (!e) throw NotFoundError("unknown clip '" + id.str() + "'");
  AudioClip clip;
  try {
    clip = load_clip(e->path);
  } catch (const InputError& err) {
    throw NotFoundError(err.what());
  }
  std::string png = encode_png(render_spectrogram(clip));
  std::lock_guard lock(png_mutex_);
  return png_cache_.emplace(id.str(), std::move(png)).first->second;
}

}  // namespace replica::triage

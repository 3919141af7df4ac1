#include <chrono>
#include <ctime>
#include <fstream>

#include "replica/error.hpp"
#include "replica/triage.hpp"

namespace replica::triage {

using nlohmann::json;

const char* to_string(Label label) {
  switch (label) {
    case Label::Replicated: return "replicated";
    case Label::NotReplicated: return "not_replicated";
    case Label::Unsure: return "unsure";
    case Label::Confirmed: return "confirmed";
    case Label::Rejected: return "rejected";
  }
  return "unsure";
}

std::optional<Label> label_from_string(const std::string& s) {
  for (Label l : {Label::Replicated, Label::NotReplicated, Label::Unsure, Label::Confirmed,
                  Label::Rejected}) {
    if (s == to_string(l)) return l;
  }
  return std::nullopt;
}

bool is_pair_label(Label label) {
  return label == Label::Replicated || label == Label::NotReplicated || label == Label::Unsure;
}

VerdictKey VerdictKey::pair(ClipId q, ClipId r) {
  VerdictKey k;
  k.kind = Kind::Pair;
  k.query = std::move(q);
  k.reference = std::move(r);
  return k;
}

VerdictKey VerdictKey::cluster(std::size_t component_id) {
  VerdictKey k;
  k.kind = Kind::Cluster;
  k.component_id = component_id;
  return k;
}

std::string VerdictKey::str() const {
  if (kind == Kind::Cluster) return "cluster\t" + std::to_string(component_id);
  return "pair\t" + query.str() + "\t" + reference.str();
}

json to_json(const Verdict& v) {
  json j;
  if (v.key.kind == VerdictKey::Kind::Pair) {
    j["kind"] = "pair";
    j["query"] = v.key.query.str();
    j["reference"] = v.key.reference.str();
  } else {
    j["kind"] = "cluster";
    j["component_id"] = v.key.component_id;
  }
  j["label"] = to_string(v.label);
  j["annotator"] = v.annotator;
  j["timestamp"] = v.timestamp;
  j["note"] = v.note ? json(*v.note) : json(nullptr);
  return j;
}

Verdict verdict_from_json(const json& j) {
  if (!j.is_object()) throw FormatError("verdict must be an object");
  Verdict v;
  const std::string kind = j.value("kind", "pair");
  try {
    if (kind == "pair") {
      v.key = VerdictKey::pair(ClipId(j.at("query").get<std::string>()),
                               ClipId(j.at("reference").get<std::string>()));
    } else if (kind == "cluster") {
      v.key = VerdictKey::cluster(j.at("component_id").get<std::size_t>());
    } else {
      throw FormatError("unknown verdict kind '" + kind + "'");
    }
    const std::string label = j.at("label").get<std::string>();
    const auto parsed = label_from_string(label);
    if (!parsed) throw FormatError("unknown label '" + label + "'");
    v.label = *parsed;
    const bool pair_key = v.key.kind == VerdictKey::Kind::Pair;
    if (is_pair_label(v.label) != pair_key) {
      throw FormatError("label '" + label + "' does not apply to a " + kind + " verdict");
    }
    v.annotator = j.at("annotator").get<std::string>();
    if (v.annotator.empty()) throw FormatError("annotator must be non-empty");
    if (j.contains("timestamp") && !j["timestamp"].is_null()) {
      v.timestamp = j["timestamp"].get<std::string>();
    }
    if (j.contains("note") && !j["note"].is_null()) v.note = j["note"].get<std::string>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed verdict: ") + e.what());
  }
  return v;
}

std::string utc_now_iso8601() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

VerdictStore::VerdictStore(std::filesystem::path log_path) : path_(std::move(log_path)) {
  std::ifstream in(path_);
  if (!in) return;
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) lines.push_back(std::move(line));
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    try {
      apply(verdict_from_json(json::parse(lines[i])));
      ++log_size_;
    } catch (const std::exception& e) {
      // A torn final line from an interrupted append is dropped.
      if (i + 1 == lines.size()) break;
      throw FormatError(path_.string() + ":" + std::to_string(i + 1) + ": " + e.what(),
                        {path_.string()});
    }
  }
}

void VerdictStore::apply(const Verdict& v) { current_[v.key.str()][v.annotator] = v; }

VerdictStore::Outcome VerdictStore::record(const Verdict& v) {
  std::unique_lock lock(mutex_);
  const auto key = v.key.str();
  if (auto it = current_.find(key); it != current_.end()) {
    if (auto jt = it->second.find(v.annotator); jt != it->second.end()) {
      if (jt->second.label == v.label && jt->second.note == v.note) return Outcome::Unchanged;
    }
  }
  std::ofstream out(path_, std::ios::app);
  if (!out) throw InputError("cannot append to verdict log: " + path_.string(), {path_.string()});
  out << to_json(v).dump() << '\n';
  out.flush();
  if (!out) throw InputError("verdict log write failed: " + path_.string(), {path_.string()});
  apply(v);
  ++log_size_;
  return Outcome::Appended;
}

std::map<std::string, Verdict> VerdictStore::current(const VerdictKey& key) const {
  std::shared_lock lock(mutex_);
  auto it = current_.find(key.str());
  if (it == current_.end()) return {};
  return it->second;
}

std::vector<Verdict> VerdictStore::all_current() const {
  std::shared_lock lock(mutex_);
  std::vector<Verdict> out;
  for (const auto& [key, by_annotator] : current_) {
    for (const auto& [annotator, v] : by_annotator) out.push_back(v);
  }
  return out;
}

std::size_t VerdictStore::log_size() const {
  std::shared_lock lock(mutex_);
  return log_size_;
}

ConsensusPolicy consensus_policy_from_string(const std::string& s) {
  if (s == "majority") return ConsensusPolicy::Majority;
  if (s == "any_positive") return ConsensusPolicy::AnyPositive;
  throw ContractError("unknown consensus policy '" + s + "'");
}

const char* to_string(ConsensusPolicy p) {
  return p == ConsensusPolicy::Majority ? "majority" : "any_positive";
}

std::optional<Label> consensus(const std::map<std::string, Verdict>& by_annotator,
                               ConsensusPolicy policy) {
  if (by_annotator.empty()) return std::nullopt;
  std::map<Label, std::size_t> votes;
  for (const auto& [annotator, v] : by_annotator) ++votes[v.label];
  const bool cluster = !is_pair_label(by_annotator.begin()->second.label);
  const Label positive = cluster ? Label::Confirmed : Label::Replicated;
  const Label negative = cluster ? Label::Rejected : Label::NotReplicated;

  if (policy == ConsensusPolicy::AnyPositive) {
    if (votes[positive] > 0) return positive;
    if (votes[negative] > 0) return negative;
    return cluster ? negative : Label::Unsure;
  }
  const std::size_t n = by_annotator.size();
  for (const auto& [label, count] : votes) {
    if (2 * count > n) return label;
  }
  // No strict majority: pairs count as unsure, clusters stay unresolved.
  if (cluster) return std::nullopt;
  return Label::Unsure;
}

}  // namespace replica::triage

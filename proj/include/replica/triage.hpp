#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "replica/corpus.hpp"
#include "replica/dedup.hpp"
#include "replica/retrieval.hpp"

namespace replica::triage {

enum class Label { Replicated, NotReplicated, Unsure, Confirmed, Rejected };

const char* to_string(Label label);
std::optional<Label> label_from_string(const std::string& s);
bool is_pair_label(Label label);

// Either a (query, reference) pair or a duplicate-cluster component.
struct VerdictKey {
  enum class Kind { Pair, Cluster } kind = Kind::Pair;
  ClipId query;
  ClipId reference;
  std::size_t component_id = 0;

  static VerdictKey pair(ClipId q, ClipId r);
  static VerdictKey cluster(std::size_t component_id);
  std::string str() const;

  friend bool operator==(const VerdictKey&, const VerdictKey&) = default;
};

struct Verdict {
  VerdictKey key;
  Label label = Label::Unsure;
  std::string annotator;
  std::string timestamp;  // UTC, ISO 8601
  std::optional<std::string> note;
};

nlohmann::json to_json(const Verdict& v);
// Throws FormatError on malformed records or unknown labels.
Verdict verdict_from_json(const nlohmann::json& j);

std::string utc_now_iso8601();

// Append-only line-delimited verdict log; latest verdict per
// (key, annotator) wins. Reopening replays the log.
class VerdictStore {
 public:
  explicit VerdictStore(std::filesystem::path log_path);

  enum class Outcome { Appended, Unchanged };
  // Identical label and note to the current verdict is a no-op.
  Outcome record(const Verdict& v);

  // Current verdicts for one key, by annotator.
  std::map<std::string, Verdict> current(const VerdictKey& key) const;
  std::vector<Verdict> all_current() const;
  std::size_t log_size() const;
  const std::filesystem::path& path() const noexcept { return path_; }

 private:
  void apply(const Verdict& v);

  std::filesystem::path path_;
  mutable std::shared_mutex mutex_;
  // key string -> annotator -> verdict
  std::map<std::string, std::map<std::string, Verdict>> current_;
  std::size_t log_size_ = 0;
};

enum class ConsensusPolicy { Majority, AnyPositive };
ConsensusPolicy consensus_policy_from_string(const std::string& s);
const char* to_string(ConsensusPolicy p);

// Combined label for one key under the policy; nullopt when unreviewed (or,
// for clusters, when annotators are split).
std::optional<Label> consensus(const std::map<std::string, Verdict>& by_annotator,
                               ConsensusPolicy policy);

struct PairEntry {
  std::size_t queue_index = 0;
  std::string descriptor;  // retrieval label, e.g. "mel"
  ScoredMatch match;
};

struct RetrievalSource {
  std::string label;
  std::filesystem::path path;
  RetrievalResult result;
};

// Immutable inputs of a review session, loaded from <dir>/session.json:
//
//   {
//     "retrievals": [{"label": "mel", "path": "mel.jsonl"}, ...],
//     "dedup": "clusters.jsonl",                  optional
//     "manifests": ["queries.jsonl", "train.jsonl"],
//     "verdict_log": "verdicts.jsonl",            optional, this default
//     "rubric": "..."                             optional
//   }
//
// Paths are relative to the session directory.
struct Session {
  std::filesystem::path dir;
  std::vector<RetrievalSource> retrievals;
  std::vector<PairEntry> queue;  // per retrieval, normalized score descending
  std::vector<ClusterRecord> clusters;
  std::vector<CorpusManifest> manifests;
  std::filesystem::path verdict_log;
  std::string rubric;

  const PairEntry* find_pair(const ClipId& q, const ClipId& r) const;
  const ClusterRecord* find_cluster(std::size_t component_id) const;
  const ManifestEntry* find_clip(const ClipId& id) const;
};

// Throws InputError listing every missing file.
Session load_session(const std::filesystem::path& dir);

extern const char* const kDefaultRubric;

struct SummaryOptions {
  ConsensusPolicy policy = ConsensusPolicy::Majority;
  std::optional<std::string> annotator;  // restrict to one annotator's view
};

// Pure function of the session inputs and the current verdicts.
nlohmann::json replication_stats(const Session& session, const VerdictStore& store,
                                 const SummaryOptions& opts = {});

// Rendered spectrogram: log magnitude in dB relative to the clip maximum,
// clipped to [-80, 0]; row 0 is the highest frequency.
struct SpectrogramImage {
  std::size_t width = 0;   // frames
  std::size_t height = 0;  // frequency bins
  std::vector<std::uint8_t> rgb;
  std::vector<float> db;   // height x width, row-major

  std::uint8_t level(std::size_t row, std::size_t col) const;
};

inline constexpr std::size_t kSpectrogramFft = 512;
inline constexpr std::size_t kSpectrogramHop = 256;
inline constexpr double kSpectrogramFloorDb = -80.0;

SpectrogramImage render_spectrogram(const AudioClip& clip);
std::string encode_png(const SpectrogramImage& image);

// Frequency (Hz) shown at image row `row`.
double spectrogram_row_hz(std::size_t row, std::size_t height);

// Request handling, independent of the transport.
class TriageService {
 public:
  TriageService(Session session, std::function<std::string()> clock = utc_now_iso8601);

  nlohmann::json session_info() const;
  nlohmann::json pairs(std::size_t offset, std::size_t limit, const std::string& filter,
                       const std::optional<std::string>& annotator) const;
  nlohmann::json clusters() const;
  // Throws ContractError (bad request) for unknown keys or labels.
  nlohmann::json post_verdict(const nlohmann::json& body);
  nlohmann::json summary(const SummaryOptions& opts) const;

  // Throws NotFoundError for clips outside the session manifests.
  std::string audio_bytes(const ClipId& id) const;
  std::string spectrogram_png(const ClipId& id) const;

  const Session& session() const noexcept { return session_; }
  const VerdictStore& store() const noexcept { return store_; }

 private:
  nlohmann::json pair_json(const PairEntry& p) const;

  Session session_;
  VerdictStore store_;
  std::function<std::string()> clock_;
  mutable std::mutex png_mutex_;
  mutable std::map<std::string, std::string> png_cache_;
};

// HTTP transport over TriageService. Static assets come from `static_dir`
// when given, otherwise a minimal index page is served at /.
class TriageServer {
 public:
  explicit TriageServer(TriageService& service, std::filesystem::path static_dir = {});
  ~TriageServer();

  // Binds and serves on a background thread; port 0 picks a free port.
  // Returns the bound port.
  int start(const std::string& host, int port);
  // Blocks until stop() is called from elsewhere.
  void run(const std::string& host, int port);
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace replica::triage

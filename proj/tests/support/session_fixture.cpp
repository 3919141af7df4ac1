#include "session_fixture.hpp"

#include <cmath>
#include <fstream>
#include <numbers>

#include "replica/dedup.hpp"
#include "replica/retrieval.hpp"
#include "synth.hpp"

namespace replica::test {

namespace {

ScoredMatch match(const char* q, const char* r, double normalized) {
  ScoredMatch m;
  m.query = ClipId(q);
  m.reference = ClipId(r);
  m.raw = 0.98;
  m.bias = 2 * (m.raw - normalized);
  m.normalized = normalized;
  m.rank = 1;
  return m;
}

}  // namespace

void write_session(const std::filesystem::path& dir) {
  std::vector<float> sine(kClipSamples);
  for (std::size_t i = 0; i < sine.size(); ++i) {
    sine[i] = static_cast<float>(0.5 * std::sin(2 * std::numbers::pi * 1000.0 * i / kSampleRate));
  }
  write_corpus(dir, "queries",
               {{"q0", sine}, {"q1", tone_burst_clip(1)}, {"q2", std::vector<float>(kClipSamples)}});
  write_corpus(dir, "train",
               {{"r0", tone_burst_clip(10)},
                {"r1", tone_burst_clip(11)},
                {"r2", tone_burst_clip(12)},
                {"r3", tone_burst_clip(13)}});

  RetrievalResult mel;
  mel.query_count = 3;
  mel.retrieved = {match("q0", "r0", 0.52), match("q1", "r1", 0.51), match("q2", "r2", 0.505)};
  mel.all_top1 = mel.retrieved;
  write_retrieval(dir / "mel.jsonl", mel, {{"command", "retrieve"}});

  RetrievalResult clap;
  clap.config.kind = DescriptorKind::Imported;
  clap.query_count = 3;
  clap.retrieved = {match("q1", "r1", 0.53), match("q2", "r3", 0.506)};
  clap.all_top1 = clap.retrieved;
  write_retrieval(dir / "clap.jsonl", clap, {{"command", "retrieve"}});

  AdjacencyGraph g;
  g.ids = {ClipId("r0"), ClipId("r1"), ClipId("r2"), ClipId("r3")};
  g.edges = {{0, 1, 0.51, 0.52}, {2, 3, 0.508, 0.509}};
  write_dedup_report(dir / "clusters.jsonl", make_report(g, 0.5025), {{"command", "dedup"}});

  std::ofstream(dir / "session.json") << R"({
  "retrievals": [{"label": "mel", "path": "mel.jsonl"}, {"label": "clap", "path": "clap.jsonl"}],
  "dedup": "clusters.jsonl",
  "manifests": ["queries.jsonl", "train.jsonl"]
})";
}

}  // namespace replica::test

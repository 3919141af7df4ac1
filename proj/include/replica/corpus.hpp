#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "replica/clip.hpp"
#include "replica/descriptor_set.hpp"
#include "replica/melspec.hpp"

namespace replica {

struct ManifestEntry {
  ClipId id;
  std::filesystem::path path;  // absolute, or relative to the manifest file
  std::optional<std::string> caption;
};

struct CorpusManifest {
  std::string corpus_id;
  std::vector<ManifestEntry> entries;

  std::vector<ClipId> ids() const;
  const ManifestEntry* find(const ClipId& id) const;
};

// Line-delimited JSON, one record per line:
//   {"corpus_id": "train"}                            optional header
//   {"id": "clip-1", "path": "a.wav", "caption": "…"}  id optional (file stem)
// Relative paths resolve against the manifest's directory. The corpus id
// defaults to the manifest file stem.
CorpusManifest read_manifest(const std::filesystem::path& path);
CorpusManifest parse_manifest(const std::string& text, const std::string& default_corpus_id,
                              const std::filesystem::path& base_dir = {});
void write_manifest(const std::filesystem::path& path, const CorpusManifest& manifest);

struct IngestOptions {
  MelConfig mel;
  StftConfig stft;
  // Content-addressed per-clip cache; disabled when empty.
  std::filesystem::path cache_dir;
  std::size_t workers = 1;
};

struct IngestResult {
  DescriptorSet descriptors;
  std::vector<std::string> warnings;
  std::size_t cache_hits = 0;
  std::size_t cache_misses = 0;
};

// One mel descriptor per manifest entry, in manifest order. Any entry that
// fails to load aborts the run with an IngestError listing every failure.
IngestResult ingest_corpus(const CorpusManifest& manifest, const IngestOptions& options = {});

// Imports externally computed embeddings (ADSC file, or JSON lines of
// {"id": ..., "embedding": [...]}) and reorders them to manifest order.
DescriptorSet import_embeddings(const CorpusManifest& manifest,
                                const std::filesystem::path& embedding_file);

DescriptorSet read_embeddings_jsonl(const std::filesystem::path& path);

// Hex SHA-256 of the clip bytes plus the descriptor configuration.
std::string descriptor_cache_key(const std::string& file_bytes, const MelConfig& mel,
                                 const StftConfig& stft);

}  // namespace replica

#include "replica/corpus.hpp"

#include <openssl/evp.h>

#include <atomic>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <mutex>
#include <sstream>
#include <thread>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "replica/error.hpp"

namespace replica {

using nlohmann::json;

std::vector<ClipId> CorpusManifest::ids() const {
  std::vector<ClipId> out;
  out.reserve(entries.size());
  for (const auto& e : entries) out.push_back(e.id);
  return out;
}

const ManifestEntry* CorpusManifest::find(const ClipId& id) const {
  for (const auto& e : entries) {
    if (e.id == id) return &e;
  }
  return nullptr;
}

CorpusManifest parse_manifest(const std::string& text, const std::string& default_corpus_id,
                              const std::filesystem::path& base_dir) {
  CorpusManifest manifest;
  manifest.corpus_id = default_corpus_id;
  std::unordered_set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto where = "manifest line " + std::to_string(line_no);
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::parse_error& e) {
      throw FormatError(where + ": " + e.what());
    }
    if (!rec.is_object()) throw FormatError(where + ": expected an object");
    if (!rec.contains("path")) {
      if (rec.size() == 1 && rec.contains("corpus_id") && rec["corpus_id"].is_string()) {
        manifest.corpus_id = rec["corpus_id"].get<std::string>();
        continue;
      }
      throw FormatError(where + ": missing \"path\"");
    }
    for (const auto& [key, value] : rec.items()) {
      if (key != "id" && key != "path" && key != "caption") {
        throw FormatError(where + ": unknown field \"" + key + "\"");
      }
      if (!value.is_string()) throw FormatError(where + ": \"" + key + "\" must be a string");
    }
    ManifestEntry entry;
    std::filesystem::path p = rec["path"].get<std::string>();
    entry.path = p.is_absolute() || base_dir.empty() ? p : base_dir / p;
    entry.id = ClipId(rec.contains("id") ? rec["id"].get<std::string>() : p.stem().string());
    if (entry.id.empty()) throw FormatError(where + ": empty clip id");
    if (rec.contains("caption")) entry.caption = rec["caption"].get<std::string>();
    if (!seen.insert(entry.id.str()).second) {
      throw FormatError(where + ": duplicate clip id \"" + entry.id.str() + "\"",
                        {entry.id.str()});
    }
    manifest.entries.push_back(std::move(entry));
  }
  return manifest;
}

CorpusManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw InputError("cannot open manifest: " + path.string(), {path.string()});
  std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return parse_manifest(text, path.stem().string(), path.parent_path());
}

void write_manifest(const std::filesystem::path& path, const CorpusManifest& manifest) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw InputError("cannot write manifest: " + path.string(), {path.string()});
  f << json{{"corpus_id", manifest.corpus_id}}.dump() << '\n';
  for (const auto& e : manifest.entries) {
    json rec{{"id", e.id.str()}, {"path", e.path.string()}};
    if (e.caption) rec["caption"] = *e.caption;
    f << rec.dump() << '\n';
  }
}

namespace {

std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IngestError("cannot open audio file: " + path.string(), {path.string()});
  return {(std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>()};
}

std::string hexfloat(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

}  // namespace

std::string descriptor_cache_key(const std::string& file_bytes, const MelConfig& mel,
                                 const StftConfig& stft) {
  std::string cfg = "adsc-mel-v1";
  for (auto v : {stft.window_len, stft.hop, stft.fft_len, mel.n_mels}) {
    cfg += ";" + std::to_string(v);
  }
  cfg += stft.centered ? ";c" : ";n";
  for (double v : {mel.f_min, mel.f_max, mel.floor_db, mel.spectrogram_power, mel.db_multiplier}) {
    cfg += ";" + hexfloat(v);
  }
  cfg += std::string(";") + to_string(mel.scale) + ";" + to_string(mel.norm) + ";" +
         std::to_string(mel.sample_rate);

  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  EVP_DigestUpdate(ctx, cfg.data(), cfg.size());
  EVP_DigestUpdate(ctx, file_bytes.data(), file_bytes.size());
  EVP_DigestFinal_ex(ctx, digest, &len);
  EVP_MD_CTX_free(ctx);

  static constexpr char kHex[] = "0123456789abcdef";
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) {
    hex.push_back(kHex[digest[i] >> 4]);
    hex.push_back(kHex[digest[i] & 0xF]);
  }
  return hex;
}

IngestResult ingest_corpus(const CorpusManifest& manifest, const IngestOptions& options) {
  const MelDescriptorExtractor extract(options.mel, options.stft);
  const std::size_t n = manifest.entries.size();
  const bool use_cache = !options.cache_dir.empty();
  if (use_cache) std::filesystem::create_directories(options.cache_dir);

  struct Slot {
    MelDescriptor descriptor;
    std::string error;
    std::string warning;
    bool hit = false;
  };
  std::vector<Slot> slots(n);
  std::mutex cache_mutex;
  std::atomic<std::size_t> next{0};

  const auto work = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      const ManifestEntry& entry = manifest.entries[i];
      Slot& slot = slots[i];
      try {
        std::string key;
        std::filesystem::path cached;
        if (use_cache) {
          key = descriptor_cache_key(read_file_bytes(entry.path), options.mel, options.stft);
          cached = options.cache_dir / (key + ".adsc");
          std::lock_guard lock(cache_mutex);
          if (std::filesystem::exists(cached)) {
            const DescriptorSet one = read_descriptor_file(cached);
            if (one.size() == 1 && one.kind() == DescriptorKind::Mel) {
              slot.descriptor.clip_id = entry.id;
              slot.descriptor.values.assign(one.row(0).begin(), one.row(0).end());
              slot.descriptor.degenerate = one.degenerate(0);
              slot.hit = true;
              continue;
            }
          }
        }
        std::vector<std::string> warnings;
        AudioClip clip = load_clip(entry.path, kClipSamples, &warnings);
        clip.id = entry.id;
        if (!warnings.empty()) slot.warning = entry.id.str() + ": " + warnings.front();
        slot.descriptor = extract(clip);
        if (use_cache) {
          DescriptorSet one("cache", DescriptorKind::Mel, kMelDescriptorDim);
          one.add(ClipId(key), slot.descriptor.values, slot.descriptor.degenerate);
          std::lock_guard lock(cache_mutex);
          write_descriptor_file(cached, one);
        }
      } catch (const std::exception& e) {
        slot.error = entry.id.str() + " (" + entry.path.string() + "): " + e.what();
      }
    }
  };

  const std::size_t workers = std::max<std::size_t>(1, std::min(options.workers, n));
  if (workers == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
  }

  std::vector<std::string> failures;
  for (const auto& s : slots) {
    if (!s.error.empty()) failures.push_back(s.error);
  }
  if (!failures.empty()) {
    std::string msg = std::to_string(failures.size()) + " of " + std::to_string(n) +
                      " clips failed to ingest:";
    for (const auto& f : failures) msg += "\n  " + f;
    throw IngestError(msg, failures);
  }

  IngestResult result;
  result.descriptors = DescriptorSet(manifest.corpus_id, DescriptorKind::Mel, kMelDescriptorDim);
  for (std::size_t i = 0; i < n; ++i) {
    Slot& s = slots[i];
    result.descriptors.add(manifest.entries[i].id, s.descriptor.values, s.descriptor.degenerate);
    if (!s.warning.empty()) result.warnings.push_back(s.warning);
    (s.hit ? result.cache_hits : result.cache_misses)++;
  }
  return result;
}

DescriptorSet read_embeddings_jsonl(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw InputError("cannot open embedding file: " + path.string(), {path.string()});
  std::optional<DescriptorSet> set;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto where = path.string() + ":" + std::to_string(line_no);
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::parse_error& e) {
      throw FormatError(where + ": " + e.what(), {path.string()});
    }
    if (!rec.is_object() || !rec.contains("id") || !rec["id"].is_string() ||
        !rec.contains("embedding") || !rec["embedding"].is_array()) {
      throw FormatError(where + ": expected {\"id\": string, \"embedding\": [numbers]}",
                        {path.string()});
    }
    std::vector<float> values;
    for (const auto& v : rec["embedding"]) {
      if (!v.is_number()) throw FormatError(where + ": non-numeric embedding value");
      values.push_back(v.get<float>());
    }
    if (!set) {
      if (values.empty()) throw FormatError(where + ": empty embedding");
      set.emplace(path.stem().string(), DescriptorKind::Imported, values.size());
    }
    if (values.size() != set->dim()) {
      throw FormatError(where + ": embedding has dim " + std::to_string(values.size()) +
                            ", earlier rows have dim " + std::to_string(set->dim()),
                        {path.string()});
    }
    try {
      set->add(ClipId(rec["id"].get<std::string>()), values);
    } catch (const ContractError& e) {
      throw FormatError(where + ": " + e.what(), {path.string()});
    }
  }
  if (!set) throw FormatError(path.string() + ": no embeddings", {path.string()});
  return std::move(*set);
}

DescriptorSet import_embeddings(const CorpusManifest& manifest,
                                const std::filesystem::path& embedding_file) {
  DescriptorSet file = embedding_file.extension() == ".jsonl"
                           ? read_embeddings_jsonl(embedding_file)
                           : read_descriptor_file(embedding_file);
  if (file.kind() != DescriptorKind::Imported) {
    throw FormatError(embedding_file.string() + ": expected an imported-kind descriptor file",
                      {embedding_file.string()});
  }
  DescriptorSet out = file.select(manifest.ids());
  out.set_corpus_id(manifest.corpus_id);
  return out;
}

}  // namespace replica

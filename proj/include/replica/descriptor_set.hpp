#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "replica/clip.hpp"

namespace replica {

enum class DescriptorKind : std::uint8_t { Mel = 0, Imported = 1 };

inline constexpr std::size_t kMelDescriptorDim = 1712;

const char* to_string(DescriptorKind kind);
DescriptorKind descriptor_kind_from_string(const std::string& s);

// Row-major matrix of descriptors, one row per clip, in manifest order.
class DescriptorSet {
 public:
  DescriptorSet() = default;
  DescriptorSet(std::string corpus_id, DescriptorKind kind, std::size_t dim);

  const std::string& corpus_id() const noexcept { return corpus_id_; }
  DescriptorKind kind() const noexcept { return kind_; }
  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return ids_.size(); }
  bool empty() const noexcept { return ids_.empty(); }

  const ClipId& id(std::size_t row) const { return ids_.at(row); }
  const std::vector<ClipId>& ids() const noexcept { return ids_; }
  std::span<const float> row(std::size_t i) const {
    return {values_.data() + i * dim_, dim_};
  }
  // Flagged rows (e.g. silent clips) score 0 against everything.
  bool degenerate(std::size_t row) const { return degenerate_.at(row) != 0; }
  const std::vector<float>& values() const noexcept { return values_; }

  // Throws ContractError on dim mismatch, duplicate id or non-finite values.
  void add(ClipId id, std::span<const float> values, bool degenerate = false);

  std::optional<std::size_t> find(const ClipId& id) const;

  // True when every row is flagged or has (near-)zero norm.
  bool all_degenerate() const;

  // Same rows, selected and reordered; throws InputError listing every
  // missing id.
  DescriptorSet select(const std::vector<ClipId>& order) const;

  void set_corpus_id(std::string id) { corpus_id_ = std::move(id); }

  // Free-form single-line text (the producing configuration) carried in
  // the file index. Throws ContractError if it contains a newline.
  const std::string& provenance() const noexcept { return provenance_; }
  void set_provenance(std::string text);

 private:
  std::string corpus_id_;
  std::string provenance_;
  DescriptorKind kind_ = DescriptorKind::Mel;
  std::size_t dim_ = 0;
  std::vector<ClipId> ids_;
  std::vector<float> values_;
  std::vector<std::uint8_t> degenerate_;
  std::unordered_map<ClipId, std::size_t> index_;
};

// Binary descriptor file ("ADSC"), shared by the descriptor cache and
// imported embedding files. All integers and floats little-endian:
//
//   offset  size  field
//   0       4     magic "ADSC"
//   4       4     u32 format version (1)
//   8       1     u8 kind (0 = mel, 1 = imported)
//   9       4     u32 dim
//   13      8     u64 count
//   21      4*dim*count  f32 rows, row-major
//   ...     8     u64 index length L in bytes
//   ...     L     UTF-8 text index, '\n'-terminated lines:
//                   "#corpus\t<corpus id>"            (first line)
//                   "#provenance\t<text>"             (optional)
//                   "<row>\t<clip id>"                 (one per row, in order)
//                   "<row>\t<clip id>\tdegenerate"     (flagged rows)
inline constexpr std::uint32_t kDescriptorFormatVersion = 1;

std::string encode_descriptor_file(const DescriptorSet& set);
DescriptorSet decode_descriptor_file(const std::string& bytes, const std::string& origin = "");

void write_descriptor_file(const std::filesystem::path& path, const DescriptorSet& set);
DescriptorSet read_descriptor_file(const std::filesystem::path& path);

}  // namespace replica

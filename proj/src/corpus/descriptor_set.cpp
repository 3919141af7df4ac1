#include "replica/descriptor_set.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>
#include <utility>

#include "replica/error.hpp"

namespace replica {

const char* to_string(DescriptorKind kind) {
  return kind == DescriptorKind::Mel ? "mel" : "imported";
}

DescriptorKind descriptor_kind_from_string(const std::string& s) {
  if (s == "mel") return DescriptorKind::Mel;
  if (s == "imported") return DescriptorKind::Imported;
  throw ConfigError("unknown descriptor kind: " + s);
}

DescriptorSet::DescriptorSet(std::string corpus_id, DescriptorKind kind, std::size_t dim)
    : corpus_id_(std::move(corpus_id)), kind_(kind), dim_(dim) {
  if (dim == 0) throw ContractError("descriptor dim must be positive");
  if (kind == DescriptorKind::Mel && dim != kMelDescriptorDim) {
    throw ContractError("mel descriptors must have dim 1712, got " + std::to_string(dim));
  }
}

void DescriptorSet::add(ClipId id, std::span<const float> values, bool degenerate) {
  if (values.size() != dim_) {
    throw ContractError("descriptor for '" + id.str() + "' has dim " +
                        std::to_string(values.size()) + ", expected " + std::to_string(dim_));
  }
  if (id.empty()) throw ContractError("empty clip id");
  for (char c : id.str()) {
    if (c == '\t' || c == '\n' || c == '\r') {
      throw ContractError("clip id contains a tab or newline: '" + id.str() + "'");
    }
  }
  for (float v : values) {
    if (!std::isfinite(v)) throw ContractError("non-finite descriptor value for '" + id.str() + "'");
  }
  if (index_.contains(id)) throw ContractError("duplicate clip id '" + id.str() + "'");
  index_.emplace(id, ids_.size());
  ids_.push_back(std::move(id));
  values_.insert(values_.end(), values.begin(), values.end());
  degenerate_.push_back(degenerate ? 1 : 0);
}

std::optional<std::size_t> DescriptorSet::find(const ClipId& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

bool DescriptorSet::all_degenerate() const {
  for (std::size_t i = 0; i < size(); ++i) {
    if (degenerate_[i] != 0) continue;
    double sq = 0.0;
    for (float v : row(i)) sq += static_cast<double>(v) * v;
    if (std::sqrt(sq) >= 1e-12) return false;
  }
  return true;
}

void DescriptorSet::set_provenance(std::string text) {
  if (text.find_first_of("\r\n") != std::string::npos) {
    throw ContractError("descriptor provenance must be a single line");
  }
  provenance_ = std::move(text);
}

DescriptorSet DescriptorSet::select(const std::vector<ClipId>& order) const {
  std::vector<std::string> missing;
  for (const auto& id : order) {
    if (!index_.contains(id)) missing.push_back(id.str());
  }
  if (!missing.empty()) {
    std::string msg = "descriptor set '" + corpus_id_ + "' is missing " +
                      std::to_string(missing.size()) + " clip id(s):";
    for (const auto& m : missing) msg += " " + m;
    throw InputError(msg, missing);
  }
  DescriptorSet out(corpus_id_, kind_, dim_);
  out.provenance_ = provenance_;
  for (const auto& id : order) {
    const std::size_t i = index_.at(id);
    out.add(id, row(i), degenerate_[i] != 0);
  }
  return out;
}

namespace {

constexpr char kMagic[4] = {'A', 'D', 'S', 'C'};
constexpr std::size_t kHeaderSize = 21;

template <typename T>
void put_le(std::string& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xFF));
  }
}

template <typename T>
T get_le(const std::string& in, std::size_t pos) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  }
  return static_cast<T>(v);
}

}  // namespace

std::string encode_descriptor_file(const DescriptorSet& set) {
  std::string out;
  out.reserve(kHeaderSize + set.values().size() * 4 + set.size() * 16 + 64);
  out.append(kMagic, 4);
  put_le<std::uint32_t>(out, kDescriptorFormatVersion);
  put_le<std::uint8_t>(out, static_cast<std::uint8_t>(set.kind()));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(set.dim()));
  put_le<std::uint64_t>(out, set.size());
  for (float v : set.values()) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));

  std::string index = "#corpus\t" + set.corpus_id() + "\n";
  if (!set.provenance().empty()) index += "#provenance\t" + set.provenance() + "\n";
  for (std::size_t i = 0; i < set.size(); ++i) {
    index += std::to_string(i) + "\t" + set.id(i).str();
    if (set.degenerate(i)) index += "\tdegenerate";
    index += "\n";
  }
  put_le<std::uint64_t>(out, index.size());
  out += index;
  return out;
}

DescriptorSet decode_descriptor_file(const std::string& bytes, const std::string& origin) {
  const auto fail = [&](const std::string& why) {
    return FormatError((origin.empty() ? std::string("descriptor file") : origin) + ": " + why,
                       origin.empty() ? std::vector<std::string>{} : std::vector{origin});
  };
  if (bytes.size() < kHeaderSize || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw fail("bad magic, not an ADSC descriptor file");
  }
  const auto version = get_le<std::uint32_t>(bytes, 4);
  if (version != kDescriptorFormatVersion) {
    throw fail("unsupported format version " + std::to_string(version));
  }
  const auto kind_byte = get_le<std::uint8_t>(bytes, 8);
  if (kind_byte > 1) throw fail("unknown descriptor kind " + std::to_string(kind_byte));
  const auto kind = static_cast<DescriptorKind>(kind_byte);
  const auto dim = get_le<std::uint32_t>(bytes, 9);
  const auto count = get_le<std::uint64_t>(bytes, 13);
  if (dim == 0) throw fail("dim is zero");
  if (kind == DescriptorKind::Mel && dim != kMelDescriptorDim) {
    throw fail("mel descriptor file with dim " + std::to_string(dim));
  }
  const std::uint64_t payload = static_cast<std::uint64_t>(dim) * count * 4;
  if (count > bytes.size() || payload > bytes.size() - kHeaderSize ||
      bytes.size() - kHeaderSize - payload < 8) {
    throw fail("truncated row data");
  }
  const std::size_t index_pos = kHeaderSize + payload;
  const auto index_len = get_le<std::uint64_t>(bytes, index_pos);
  if (index_len != bytes.size() - index_pos - 8) throw fail("index block length mismatch");

  std::istringstream index(bytes.substr(index_pos + 8));
  std::string line;
  if (!std::getline(index, line) || line.rfind("#corpus\t", 0) != 0) {
    throw fail("index block missing corpus header");
  }
  DescriptorSet set(line.substr(8), kind, dim);
  bool have_line = static_cast<bool>(std::getline(index, line));
  if (have_line && line.rfind("#provenance\t", 0) == 0) {
    set.set_provenance(line.substr(12));
    have_line = static_cast<bool>(std::getline(index, line));
  }
  std::vector<float> row(dim);
  for (std::uint64_t r = 0; r < count; ++r) {
    if (r > 0) have_line = static_cast<bool>(std::getline(index, line));
    if (!have_line) throw fail("index block has fewer entries than rows");
    const auto tab = line.find('\t');
    if (tab == std::string::npos || line.substr(0, tab) != std::to_string(r)) {
      throw fail("malformed index entry for row " + std::to_string(r));
    }
    std::string id = line.substr(tab + 1);
    bool degenerate = false;
    if (const auto tab2 = id.find('\t'); tab2 != std::string::npos) {
      if (id.substr(tab2 + 1) != "degenerate") throw fail("unknown row flag in: " + line);
      degenerate = true;
      id.resize(tab2);
    }
    const std::size_t base = kHeaderSize + static_cast<std::size_t>(r) * dim * 4;
    for (std::uint32_t k = 0; k < dim; ++k) {
      row[k] = std::bit_cast<float>(get_le<std::uint32_t>(bytes, base + 4 * k));
    }
    try {
      set.add(ClipId(std::move(id)), row, degenerate);
    } catch (const ContractError& e) {
      throw fail(e.what());
    }
  }
  if ((count == 0 && have_line) || (count > 0 && std::getline(index, line))) {
    throw fail("index block has more entries than rows");
  }
  return set;
}

void write_descriptor_file(const std::filesystem::path& path, const DescriptorSet& set) {
  const std::string bytes = encode_descriptor_file(set);
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw InputError("cannot write descriptor file: " + path.string(), {path.string()});
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw InputError("write failed: " + path.string(), {path.string()});
  }
  std::filesystem::rename(tmp, path);
}

DescriptorSet read_descriptor_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot open descriptor file: " + path.string(), {path.string()});
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_descriptor_file(bytes, path.string());
}

}  // namespace replica

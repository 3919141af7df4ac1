#pragma once

#include <compare>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace replica {

inline constexpr int kSampleRate = 16000;
// 10.242 s at 16 kHz.
inline constexpr std::size_t kClipSamples = 163872;

// Opaque clip identifier. Byte-equal ids refer to the same clip.
class ClipId {
 public:
  ClipId() = default;
  explicit ClipId(std::string value);

  const std::string& str() const noexcept { return value_; }
  bool empty() const noexcept { return value_.empty(); }

  friend auto operator<=>(const ClipId&, const ClipId&) = default;
  friend bool operator==(const ClipId&, const ClipId&) = default;

 private:
  std::string value_;
};

struct AudioClip {
  ClipId id;
  std::vector<float> samples;  // mono, in [-1, 1]
  int sample_rate = kSampleRate;
  std::string source_path;
  bool truncated = false;  // input was longer than the target length
};

// Raw decoded PCM as stored in a file, before length normalization.
struct PcmData {
  int sample_rate = 0;
  int channels = 0;
  std::vector<float> interleaved;
};

// Reads a RIFF/WAVE file with 16-bit integer or 32-bit float samples.
PcmData read_wav(const std::filesystem::path& path);

// Writes mono 16-bit PCM (encoding = Int16) or 32-bit float.
enum class WavEncoding { Int16, Float32 };
void write_wav(const std::filesystem::path& path, const std::vector<float>& mono,
               int sample_rate = kSampleRate, WavEncoding encoding = WavEncoding::Int16);

// Loads a clip: mean-downmix to mono, then zero-pad or truncate to
// `target_samples`. Rejects any sample rate other than 16 kHz.
// Truncation is reported through `warnings` when given, otherwise on stderr.
AudioClip load_clip(const std::filesystem::path& path, std::size_t target_samples = kClipSamples,
                    std::vector<std::string>* warnings = nullptr);

// Pads with zeros or truncates in place. Returns true if samples were cut.
bool fit_length(std::vector<float>& samples, std::size_t target_samples);

std::vector<float> downmix(const PcmData& pcm);

}  // namespace replica

template <>
struct std::hash<replica::ClipId> {
  std::size_t operator()(const replica::ClipId& id) const noexcept {
    return std::hash<std::string>{}(id.str());
  }
};

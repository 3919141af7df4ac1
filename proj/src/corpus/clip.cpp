#include "replica/clip.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iostream>
#include <iterator>
#include <utility>

#include "replica/error.hpp"

namespace replica {

ClipId::ClipId(std::string value) : value_(std::move(value)) {}

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

std::uint16_t read_u16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

std::uint32_t read_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>(v >> 8));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

}  // namespace

PcmData read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestError("cannot open audio file: " + path.string(), {path.string()});
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  const auto fail = [&](const std::string& why) -> IngestError {
    return IngestError(path.string() + ": " + why, {path.string()});
  };
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw fail("not a RIFF/WAVE file");
  }

  std::uint16_t format = 0;
  std::uint16_t channels = 0;
  std::uint32_t rate = 0;
  std::uint16_t bits = 0;
  const std::uint8_t* data = nullptr;
  std::size_t data_len = 0;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::uint8_t* chunk = bytes.data() + pos;
    const std::uint32_t len = read_u32(chunk + 4);
    const std::size_t body = pos + 8;
    const std::size_t avail = bytes.size() - body;
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (len < 16 || avail < 16) throw fail("truncated fmt chunk");
      format = read_u16(chunk + 8);
      channels = read_u16(chunk + 10);
      rate = read_u32(chunk + 12);
      bits = read_u16(chunk + 22);
      if (format == kFormatExtensible) {
        if (len < 40 || avail < 40) throw fail("truncated extensible fmt chunk");
        format = read_u16(chunk + 8 + 24);
      }
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = chunk + 8;
      // Streams written without a final size sometimes carry 0 or 0xFFFFFFFF.
      data_len = std::min<std::size_t>(len, avail);
      break;
    }
    pos = body + len + (len & 1U);
  }
  if (channels == 0) throw fail("missing fmt chunk");
  if (data == nullptr) throw fail("missing data chunk");

  PcmData pcm;
  pcm.sample_rate = static_cast<int>(rate);
  pcm.channels = channels;
  if (format == kFormatPcm && bits == 16) {
    const std::size_t n = data_len / 2;
    pcm.interleaved.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const auto raw = static_cast<std::int16_t>(read_u16(data + 2 * i));
      pcm.interleaved[i] = static_cast<float>(raw) / 32768.0f;
    }
  } else if (format == kFormatFloat && bits == 32) {
    const std::size_t n = data_len / 4;
    pcm.interleaved.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      pcm.interleaved[i] = std::bit_cast<float>(read_u32(data + 4 * i));
    }
  } else {
    throw fail("unsupported sample encoding (format " + std::to_string(format) + ", " +
               std::to_string(bits) + " bits); expected 16-bit PCM or 32-bit float");
  }
  pcm.interleaved.resize(pcm.interleaved.size() - pcm.interleaved.size() % channels);
  return pcm;
}

void write_wav(const std::filesystem::path& path, const std::vector<float>& mono,
               int sample_rate, WavEncoding encoding) {
  const bool is_float = encoding == WavEncoding::Float32;
  const std::uint16_t bytes_per_sample = is_float ? 4 : 2;
  const auto data_len = static_cast<std::uint32_t>(mono.size() * bytes_per_sample);

  std::string out;
  out.reserve(44 + data_len);
  out += "RIFF";
  put_u32(out, 36 + data_len);
  out += "WAVEfmt ";
  put_u32(out, 16);
  put_u16(out, is_float ? kFormatFloat : kFormatPcm);
  put_u16(out, 1);
  put_u32(out, static_cast<std::uint32_t>(sample_rate));
  put_u32(out, static_cast<std::uint32_t>(sample_rate) * bytes_per_sample);
  put_u16(out, bytes_per_sample);
  put_u16(out, static_cast<std::uint16_t>(bytes_per_sample * 8));
  out += "data";
  put_u32(out, data_len);
  for (float s : mono) {
    if (is_float) {
      put_u32(out, std::bit_cast<std::uint32_t>(s));
    } else {
      // Same scale as the reader, so k / 32768 round-trips exactly.
      const long q = std::clamp(std::lround(static_cast<double>(s) * 32768.0), -32768L, 32767L);
      put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
    }
  }

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw InputError("cannot write audio file: " + path.string(), {path.string()});
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
}

std::vector<float> downmix(const PcmData& pcm) {
  if (pcm.channels == 1) return pcm.interleaved;
  const std::size_t ch = static_cast<std::size_t>(pcm.channels);
  const std::size_t frames = pcm.interleaved.size() / ch;
  std::vector<float> mono(frames);
  for (std::size_t i = 0; i < frames; ++i) {
    double sum = 0.0;
    for (std::size_t c = 0; c < ch; ++c) sum += pcm.interleaved[i * ch + c];
    mono[i] = static_cast<float>(sum / static_cast<double>(ch));
  }
  return mono;
}

bool fit_length(std::vector<float>& samples, std::size_t target_samples) {
  const bool cut = samples.size() > target_samples;
  samples.resize(target_samples, 0.0f);
  return cut;
}

AudioClip load_clip(const std::filesystem::path& path, std::size_t target_samples,
                    std::vector<std::string>* warnings) {
  PcmData pcm = read_wav(path);
  if (pcm.sample_rate != kSampleRate) {
    throw IngestError(path.string() + ": sample rate " + std::to_string(pcm.sample_rate) +
                          " Hz, expected 16000 Hz (no resampling is performed)",
                      {path.string()});
  }
  AudioClip clip;
  clip.id = ClipId(path.stem().string());
  clip.source_path = path.string();
  clip.samples = downmix(pcm);
  const std::size_t original = clip.samples.size();
  clip.truncated = fit_length(clip.samples, target_samples);
  if (clip.truncated) {
    std::string msg = path.string() + ": truncated from " + std::to_string(original) + " to " +
                      std::to_string(target_samples) + " samples";
    if (warnings != nullptr) {
      warnings->push_back(std::move(msg));
    } else {
      std::cerr << "warning: " << msg << '\n';
    }
  }
  return clip;
}

}  // namespace replica

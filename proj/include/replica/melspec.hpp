#pragma once

#include <complex>
#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "replica/clip.hpp"

namespace replica {

struct StftConfig {
  std::size_t window_len = 2048;  // 128 ms at 16 kHz
  std::size_t hop = 1536;         // 25% overlap
  std::size_t fft_len = 2048;
  bool centered = true;           // reflect-pad by window_len / 2 on both ends

  // Checks the descriptor invariants (2048-sample window, 3/4 hop).
  void validate() const;
};

enum class MelScale { Slaney, Htk };
enum class MelNorm { Slaney, None };

struct MelConfig {
  std::size_t n_mels = 16;
  double f_min = 0.0;
  double f_max = 8000.0;
  MelScale scale = MelScale::Slaney;
  MelNorm norm = MelNorm::Slaney;
  double floor_db = -40.0;
  double spectrogram_power = 2.0;  // 2 = power, 1 = magnitude
  double db_multiplier = 10.0;     // 10 * log10 for power
  int sample_rate = kSampleRate;

  void validate() const;
};

const char* to_string(MelScale scale);
const char* to_string(MelNorm norm);
MelScale mel_scale_from_string(const std::string& s);
MelNorm mel_norm_from_string(const std::string& s);

double hz_to_mel(double hz, MelScale scale);
double mel_to_hz(double mel, MelScale scale);

// frames x bins, row-major.
struct ComplexSpectrogram {
  std::size_t frames = 0;
  std::size_t bins = 0;
  std::vector<std::complex<double>> data;

  std::complex<double> at(std::size_t frame, std::size_t bin) const {
    return data[frame * bins + bin];
  }
};

// Number of frames produced for a signal of `n` samples.
std::size_t stft_frame_count(std::size_t n, const StftConfig& cfg);

// Periodic Hann window.
std::vector<double> hann_window(std::size_t n);

// Short-time Fourier transform with a reusable FFT plan. Safe to share
// across threads once constructed.
class Stft {
 public:
  explicit Stft(StftConfig cfg);
  ~Stft();
  Stft(const Stft&) = delete;
  Stft& operator=(const Stft&) = delete;

  const StftConfig& config() const noexcept { return cfg_; }
  std::size_t bins() const noexcept { return cfg_.fft_len / 2 + 1; }

  ComplexSpectrogram operator()(std::span<const float> signal) const;

 private:
  StftConfig cfg_;
  std::vector<double> window_;
  struct Plan;
  std::unique_ptr<Plan> plan_;
};

// Descriptor-contract STFT: the clip must hold exactly 163,872 samples.
ComplexSpectrogram stft(const AudioClip& clip, const StftConfig& cfg = {});

// n_mels x (fft_len / 2 + 1) triangular filters, row-major.
struct MelFilterbank {
  std::size_t n_mels = 0;
  std::size_t bins = 0;
  std::vector<double> weights;
  std::vector<double> center_hz;

  double at(std::size_t mel, std::size_t bin) const { return weights[mel * bins + bin]; }
};

// Throws ConfigError if any filter ends up empty.
MelFilterbank mel_filterbank(const MelConfig& cfg = {}, const StftConfig& stft_cfg = {});

struct MelDescriptor {
  ClipId clip_id;
  std::vector<float> values;  // frames x n_mels, frame-major
  bool degenerate = false;    // silent input; every element is floor_db
};

// power spectrogram -> mel projection -> divide by global max -> dB ->
// lower clip at floor_db -> flatten frame-major.
class MelDescriptorExtractor {
 public:
  explicit MelDescriptorExtractor(const MelConfig& cfg = {}, const StftConfig& stft_cfg = {});

  MelDescriptor operator()(const AudioClip& clip) const;

  const MelFilterbank& filterbank() const noexcept { return filterbank_; }
  const MelConfig& mel_config() const noexcept { return mel_cfg_; }
  const StftConfig& stft_config() const noexcept { return stft_.config(); }

 private:
  MelConfig mel_cfg_;
  Stft stft_;
  MelFilterbank filterbank_;
};

MelDescriptor mel_descriptor(const AudioClip& clip, const MelConfig& cfg = {},
                             const StftConfig& stft_cfg = {});

}  // namespace replica

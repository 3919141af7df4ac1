#include "replica/melspec.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numbers>

#include "replica/descriptor_set.hpp"
#include "replica/error.hpp"

namespace replica {

void StftConfig::validate() const {
  if (window_len != 2048 || fft_len != 2048) {
    throw ConfigError("descriptor STFT requires a 2048-sample (128 ms) window and FFT");
  }
  if (hop * 4 != window_len * 3) {
    throw ConfigError("descriptor STFT requires hop == 3/4 of the window (25% overlap)");
  }
  if (!centered) throw ConfigError("descriptor STFT requires centered framing");
}

void MelConfig::validate() const {
  if (n_mels == 0) throw ConfigError("n_mels must be positive");
  if (sample_rate <= 0) throw ConfigError("sample_rate must be positive");
  if (!(f_min >= 0.0) || !(f_max > f_min)) throw ConfigError("need 0 <= f_min < f_max");
  if (f_max > sample_rate / 2.0) throw ConfigError("f_max exceeds the Nyquist frequency");
  if (!(floor_db < 0.0)) throw ConfigError("floor_db must be negative");
  if (!(spectrogram_power > 0.0)) throw ConfigError("spectrogram_power must be positive");
  if (!(db_multiplier > 0.0)) throw ConfigError("db_multiplier must be positive");
}

const char* to_string(MelScale scale) { return scale == MelScale::Slaney ? "slaney" : "htk"; }
const char* to_string(MelNorm norm) { return norm == MelNorm::Slaney ? "slaney" : "none"; }

MelScale mel_scale_from_string(const std::string& s) {
  if (s == "slaney") return MelScale::Slaney;
  if (s == "htk") return MelScale::Htk;
  throw ConfigError("unknown mel scale: " + s);
}

MelNorm mel_norm_from_string(const std::string& s) {
  if (s == "slaney") return MelNorm::Slaney;
  if (s == "none") return MelNorm::None;
  throw ConfigError("unknown mel norm: " + s);
}

namespace {

// Slaney: linear below 1 kHz, logarithmic above.
constexpr double kSlaneyLinearStep = 200.0 / 3.0;
constexpr double kSlaneyBreakHz = 1000.0;
constexpr double kSlaneyBreakMel = kSlaneyBreakHz / kSlaneyLinearStep;
const double kSlaneyLogStep = std::log(6.4) / 27.0;

}  // namespace

double hz_to_mel(double hz, MelScale scale) {
  if (scale == MelScale::Htk) return 2595.0 * std::log10(1.0 + hz / 700.0);
  if (hz < kSlaneyBreakHz) return hz / kSlaneyLinearStep;
  return kSlaneyBreakMel + std::log(hz / kSlaneyBreakHz) / kSlaneyLogStep;
}

double mel_to_hz(double mel, MelScale scale) {
  if (scale == MelScale::Htk) return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
  if (mel < kSlaneyBreakMel) return mel * kSlaneyLinearStep;
  return kSlaneyBreakHz * std::exp(kSlaneyLogStep * (mel - kSlaneyBreakMel));
}

std::size_t stft_frame_count(std::size_t n, const StftConfig& cfg) {
  const std::size_t padded = cfg.centered ? n + 2 * (cfg.window_len / 2) : n;
  if (padded < cfg.window_len) return 0;
  return 1 + (padded - cfg.window_len) / cfg.hop;
}

std::vector<double> hann_window(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                static_cast<double>(n));
  }
  return w;
}

namespace {

// FFTW's planner is not thread-safe; execution on distinct buffers is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

struct FftwDeleter {
  void operator()(void* p) const { fftw_free(p); }
};

}  // namespace

struct Stft::Plan {
  fftw_plan plan = nullptr;
  ~Plan() {
    if (plan != nullptr) {
      std::lock_guard lock(planner_mutex());
      fftw_destroy_plan(plan);
    }
  }
};

Stft::Stft(StftConfig cfg) : cfg_(cfg), window_(hann_window(cfg.window_len)) {
  if (cfg_.window_len == 0 || cfg_.hop == 0 || cfg_.fft_len < cfg_.window_len) {
    throw ConfigError("invalid STFT geometry");
  }
  const int n = static_cast<int>(cfg_.fft_len);
  std::unique_ptr<double, FftwDeleter> in(fftw_alloc_real(cfg_.fft_len));
  std::unique_ptr<fftw_complex, FftwDeleter> out(fftw_alloc_complex(bins()));
  plan_ = std::make_unique<Plan>();
  std::lock_guard lock(planner_mutex());
  plan_->plan = fftw_plan_dft_r2c_1d(n, in.get(), out.get(), FFTW_ESTIMATE);
  if (plan_->plan == nullptr) throw ConfigError("FFT planning failed");
}

Stft::~Stft() = default;

ComplexSpectrogram Stft::operator()(std::span<const float> signal) const {
  const std::size_t win = cfg_.window_len;
  const std::size_t pad = cfg_.centered ? win / 2 : 0;
  if (cfg_.centered && signal.size() <= pad) {
    throw ContractError("signal too short for reflect padding");
  }

  std::vector<double> padded(signal.size() + 2 * pad);
  for (std::size_t i = 0; i < signal.size(); ++i) padded[pad + i] = signal[i];
  // Reflect without repeating the edge sample.
  for (std::size_t i = 0; i < pad; ++i) {
    padded[pad - 1 - i] = signal[i + 1];
    padded[pad + signal.size() + i] = signal[signal.size() - 2 - i];
  }

  ComplexSpectrogram spec;
  spec.frames = stft_frame_count(signal.size(), cfg_);
  spec.bins = bins();
  spec.data.resize(spec.frames * spec.bins);

  std::unique_ptr<double, FftwDeleter> in(fftw_alloc_real(cfg_.fft_len));
  std::unique_ptr<fftw_complex, FftwDeleter> out(fftw_alloc_complex(spec.bins));
  // A window shorter than the FFT is zero-padded, centered.
  const std::size_t offset = (cfg_.fft_len - win) / 2;
  for (std::size_t f = 0; f < spec.frames; ++f) {
    std::fill_n(in.get(), cfg_.fft_len, 0.0);
    const double* frame = padded.data() + f * cfg_.hop;
    for (std::size_t i = 0; i < win; ++i) in.get()[offset + i] = frame[i] * window_[i];
    fftw_execute_dft_r2c(plan_->plan, in.get(), out.get());
    for (std::size_t k = 0; k < spec.bins; ++k) {
      spec.data[f * spec.bins + k] = {out.get()[k][0], out.get()[k][1]};
    }
  }
  return spec;
}

ComplexSpectrogram stft(const AudioClip& clip, const StftConfig& cfg) {
  if (clip.samples.size() != kClipSamples) {
    throw ContractError("stft expects " + std::to_string(kClipSamples) + " samples, got " +
                        std::to_string(clip.samples.size()));
  }
  cfg.validate();
  return Stft(cfg)(clip.samples);
}

MelFilterbank mel_filterbank(const MelConfig& cfg, const StftConfig& stft_cfg) {
  cfg.validate();
  MelFilterbank fb;
  fb.n_mels = cfg.n_mels;
  fb.bins = stft_cfg.fft_len / 2 + 1;
  fb.weights.assign(fb.n_mels * fb.bins, 0.0);

  const double mel_lo = hz_to_mel(cfg.f_min, cfg.scale);
  const double mel_hi = hz_to_mel(cfg.f_max, cfg.scale);
  std::vector<double> edges(cfg.n_mels + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    const double mel =
        mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) / static_cast<double>(cfg.n_mels + 1);
    edges[i] = mel_to_hz(mel, cfg.scale);
  }

  std::vector<std::size_t> empty;
  for (std::size_t m = 0; m < cfg.n_mels; ++m) {
    const double lo = edges[m];
    const double center = edges[m + 1];
    const double hi = edges[m + 2];
    const double enorm = cfg.norm == MelNorm::Slaney ? 2.0 / (hi - lo) : 1.0;
    bool any = false;
    for (std::size_t k = 0; k < fb.bins; ++k) {
      const double hz = static_cast<double>(k) * cfg.sample_rate /
                        static_cast<double>(stft_cfg.fft_len);
      const double rising = (hz - lo) / (center - lo);
      const double falling = (hi - hz) / (hi - center);
      const double w = std::max(0.0, std::min(rising, falling));
      fb.weights[m * fb.bins + k] = w * enorm;
      any = any || w > 0.0;
    }
    if (!any) empty.push_back(m);
    fb.center_hz.push_back(center);
  }
  if (!empty.empty()) {
    std::vector<std::string> items;
    for (auto m : empty) items.push_back(std::to_string(m));
    throw ConfigError(std::to_string(empty.size()) + " of " + std::to_string(cfg.n_mels) +
                          " mel filters cover no FFT bin; reduce n_mels or increase fft_len",
                      items);
  }
  return fb;
}

MelDescriptorExtractor::MelDescriptorExtractor(const MelConfig& cfg, const StftConfig& stft_cfg)
    : mel_cfg_(cfg), stft_(stft_cfg), filterbank_(mel_filterbank(cfg, stft_cfg)) {
  stft_cfg.validate();
  const std::size_t dim = stft_frame_count(kClipSamples, stft_cfg) * cfg.n_mels;
  if (dim != kMelDescriptorDim) {
    throw ConfigError("mel configuration yields " + std::to_string(dim) +
                      "-dimensional descriptors, expected 1712");
  }
}

MelDescriptor MelDescriptorExtractor::operator()(const AudioClip& clip) const {
  if (clip.samples.size() != kClipSamples) {
    throw ContractError("mel descriptor expects " + std::to_string(kClipSamples) +
                        " samples, got " + std::to_string(clip.samples.size()));
  }
  const ComplexSpectrogram spec = stft_(clip.samples);
  const std::size_t n_mels = filterbank_.n_mels;

  std::vector<double> power(spec.bins);
  std::vector<double> mel(spec.frames * n_mels, 0.0);
  for (std::size_t f = 0; f < spec.frames; ++f) {
    for (std::size_t k = 0; k < spec.bins; ++k) {
      const double mag = std::abs(spec.at(f, k));
      power[k] = mel_cfg_.spectrogram_power == 2.0 ? mag * mag
                                                   : std::pow(mag, mel_cfg_.spectrogram_power);
    }
    for (std::size_t m = 0; m < n_mels; ++m) {
      double acc = 0.0;
      for (std::size_t k = 0; k < spec.bins; ++k) acc += filterbank_.at(m, k) * power[k];
      mel[f * n_mels + m] = acc;
    }
  }

  MelDescriptor out;
  out.clip_id = clip.id;
  out.values.resize(mel.size());
  const double peak = *std::max_element(mel.begin(), mel.end());
  if (!(peak > 0.0)) {
    out.degenerate = true;
    std::fill(out.values.begin(), out.values.end(), static_cast<float>(mel_cfg_.floor_db));
    return out;
  }
  for (std::size_t i = 0; i < mel.size(); ++i) {
    const double ratio = mel[i] / peak;
    const double db = ratio > 0.0 ? mel_cfg_.db_multiplier * std::log10(ratio) : mel_cfg_.floor_db;
    out.values[i] = static_cast<float>(std::max(db, mel_cfg_.floor_db));
  }
  return out;
}

MelDescriptor mel_descriptor(const AudioClip& clip, const MelConfig& cfg,
                             const StftConfig& stft_cfg) {
  return MelDescriptorExtractor(cfg, stft_cfg)(clip);
}

}  // namespace replica

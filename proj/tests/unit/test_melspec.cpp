#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include <nlohmann/json.hpp>

#include "oracle.hpp"
#include "replica/error.hpp"
#include "replica/melspec.hpp"
#include "synth.hpp"

namespace replica {
namespace {

// Frozen librosa output; regenerate with tests/data/make_mel_reference.py.
const nlohmann::json& reference() {
  static const nlohmann::json j = [] {
    std::ifstream f(std::string(REPLICA_TEST_DATA_DIR) + "/mel_reference.json");
    return nlohmann::json::parse(f);
  }();
  return j;
}

AudioClip clip_of(std::vector<float> x, const std::string& id = "c") {
  AudioClip c;
  c.id = ClipId(id);
  c.samples = std::move(x);
  return c;
}

TEST(Hann, IsPeriodic) {
  const auto w = hann_window(8);
  EXPECT_DOUBLE_EQ(w[0], 0.0);
  EXPECT_DOUBLE_EQ(w[4], 1.0);
  EXPECT_NEAR(w[2], 0.5, 1e-15);
  EXPECT_NEAR(w[6], 0.5, 1e-15);
  EXPECT_GT(w[7], 0.0);  // a symmetric window would end at 0
}

TEST(Stft, DescriptorGeometryGives107Frames) {
  EXPECT_EQ(stft_frame_count(kClipSamples, StftConfig{}), 107u);
  const auto spec = stft(clip_of(test::tone_burst_clip(1)));
  EXPECT_EQ(spec.frames, 107u);
  EXPECT_EQ(spec.bins, 1025u);
}

TEST(Stft, MatchesDirectDft) {
  for (std::uint64_t seed : {3u, 4u}) {
    const auto x = test::tone_burst_clip(seed);
    const auto spec = stft(clip_of(x));
    std::size_t frames = 0;
    const auto ref = oracle::naive_stft(x, 2048, 1536, &frames);
    ASSERT_EQ(frames, spec.frames);
    for (std::size_t f = 0; f < frames; ++f) {
      double peak = 0.0;
      double err = 0.0;
      for (std::size_t k = 0; k < spec.bins; ++k) {
        peak = std::max(peak, std::abs(ref[f * spec.bins + k]));
        err = std::max(err, std::abs(ref[f * spec.bins + k] - spec.at(f, k)));
      }
      ASSERT_LE(err, 1e-4 * peak) << "seed " << seed << " frame " << f;
    }
  }
}

TEST(Stft, SingleBinForAlignedSinusoid) {
  // 1000 Hz falls exactly on bin 128 of a 2048-point FFT at 16 kHz.
  std::vector<float> x(kClipSamples);
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] = static_cast<float>(std::sin(2 * std::numbers::pi * 1000.0 * i / 16000.0));
  }
  const auto spec = stft(clip_of(x));
  const std::size_t f = 50;
  std::size_t argmax = 0;
  for (std::size_t k = 1; k < spec.bins; ++k) {
    if (std::abs(spec.at(f, k)) > std::abs(spec.at(f, argmax))) argmax = k;
  }
  EXPECT_EQ(argmax, 128u);
  // Hann main lobe: amplitude N/4 at the bin.
  EXPECT_NEAR(std::abs(spec.at(f, 128)), 2048.0 / 4.0, 0.5);
}

std::vector<float> full_scale_sine(double hz) {
  std::vector<float> x(kClipSamples);
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] = static_cast<float>(std::sin(2 * std::numbers::pi * hz * i / 16000.0));
  }
  return x;
}

TEST(Stft, FullScaleSinePeaksAtItsBinInEveryFrame) {
  const auto x = full_scale_sine(1000.0);
  const auto spec = stft(clip_of(x));
  std::size_t frames = 0;
  const auto ref = oracle::naive_stft(x, 2048, 1536, &frames);
  ASSERT_EQ(frames, spec.frames);
  for (std::size_t f = 0; f < frames; ++f) {
    std::size_t argmax = 0;
    double peak = 0.0;
    double err = 0.0;
    double total = 0.0;
    double near = 0.0;
    for (std::size_t k = 0; k < spec.bins; ++k) {
      const double m = std::abs(ref[f * spec.bins + k]);
      if (m > peak) {
        peak = m;
        argmax = k;
      }
      total += m * m;
      if (k + 2 >= 128 && k <= 130) near += m * m;
      err = std::max(err, std::abs(ref[f * spec.bins + k] - spec.at(f, k)));
    }
    if (f == 0) {
      // Reaches into the mirrored padding, whose phase flip smears the peak.
      EXPECT_LE(argmax > 128 ? argmax - 128 : 128 - argmax, 1u);
    } else {
      EXPECT_EQ(argmax, 128u) << "frame " << f;
      EXPECT_GT(near / total, 0.95) << "frame " << f;
    }
    EXPECT_LE(err, 1e-4 * peak) << "frame " << f;
  }
}

TEST(Stft, RejectsWrongClipLength) {
  EXPECT_THROW(stft(clip_of(std::vector<float>(1000))), ContractError);
}

TEST(MelScale, SlaneyAndHtkRoundTrip) {
  for (double hz : {0.0, 200.0, 999.0, 1000.0, 1001.0, 4321.0, 8000.0}) {
    EXPECT_NEAR(mel_to_hz(hz_to_mel(hz, MelScale::Slaney), MelScale::Slaney), hz, 1e-9);
    EXPECT_NEAR(mel_to_hz(hz_to_mel(hz, MelScale::Htk), MelScale::Htk), hz, 1e-9);
  }
  EXPECT_NEAR(hz_to_mel(1000.0, MelScale::Slaney), 15.0, 1e-12);
  EXPECT_NEAR(hz_to_mel(1000.0, MelScale::Htk), 1000.0, 0.1);
}

TEST(MelFilterbank, MatchesLibrosaSlaney) {
  const auto fb = mel_filterbank();
  const auto& ref = reference()["filterbank"];
  ASSERT_EQ(ref.size(), 16u);
  ASSERT_EQ(fb.n_mels, 16u);
  ASSERT_EQ(fb.bins, 1025u);
  for (std::size_t m = 0; m < 16; ++m) {
    ASSERT_EQ(ref[m].size(), 1025u);
    for (std::size_t k = 0; k < 1025; ++k) {
      const double want = ref[m][k].get<double>();
      ASSERT_NEAR(fb.at(m, k), want, 1e-6 * std::abs(want) + 1e-12) << m << "," << k;
    }
  }
}

TEST(MelFilterbank, FlatSpectrumReachesEveryBand) {
  const auto fb = mel_filterbank();
  for (std::size_t m = 0; m < fb.n_mels; ++m) {
    double sum = 0.0;
    for (std::size_t k = 0; k < fb.bins; ++k) sum += fb.at(m, k);
    EXPECT_GT(sum, 0.0) << "band " << m;
  }
}

TEST(MelFilterbank, TooManyBandsIsAConfigError) {
  MelConfig cfg;
  cfg.n_mels = 2000;
  try {
    mel_filterbank(cfg);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_FALSE(e.items().empty());
  }
}

TEST(MelConfig, ValidatesRanges) {
  MelConfig cfg;
  cfg.f_max = 9000.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = MelConfig{};
  cfg.floor_db = 0.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  StftConfig s;
  s.hop = 1024;
  EXPECT_THROW(s.validate(), ConfigError);
  EXPECT_THROW(mel_scale_from_string("bark"), ConfigError);
  EXPECT_EQ(mel_scale_from_string(to_string(MelScale::Htk)), MelScale::Htk);
  EXPECT_EQ(mel_norm_from_string(to_string(MelNorm::None)), MelNorm::None);
}

TEST(MelDescriptor, MatchesLibrosaOnReferenceSignals) {
  const std::pair<const char*, std::vector<float>> cases[] = {
      {"tones", test::reference_tones()}, {"lcg_noise", test::reference_lcg_noise()}};
  for (const auto& [name, x] : cases) {
    const auto d = mel_descriptor(clip_of(x));
    const auto& want = reference()[name];
    ASSERT_EQ(want.size(), d.values.size()) << name;
    for (std::size_t i = 0; i < d.values.size(); ++i) {
      ASSERT_NEAR(d.values[i], want[i].get<double>(), 1e-4) << name << " element " << i;
    }
  }
}

TEST(MelDescriptor, FullScaleSineMatchesHandAppliedPipeline) {
  const auto x = full_scale_sine(1000.0);
  const auto d = mel_descriptor(clip_of(x));
  std::size_t frames = 0;
  const auto spec = oracle::naive_stft(x, 2048, 1536, &frames);
  const auto& fb = reference()["filterbank"];
  std::vector<double> mel(frames * 16, 0.0);
  for (std::size_t f = 0; f < frames; ++f) {
    for (std::size_t m = 0; m < 16; ++m) {
      for (std::size_t k = 0; k < 1025; ++k) {
        mel[f * 16 + m] += fb[m][k].get<double>() * std::norm(spec[f * 1025 + k]);
      }
    }
  }
  const double top = *std::max_element(mel.begin(), mel.end());
  ASSERT_EQ(d.values.size(), mel.size());
  for (std::size_t i = 0; i < mel.size(); ++i) {
    const double want = std::max(-40.0, 10.0 * std::log10(std::max(mel[i], 1e-300) / top));
    ASSERT_NEAR(d.values[i], want, 1e-4) << "element " << i;
  }

  // Band holding 1 kHz: largest filter weight at bin 128.
  std::size_t band = 0;
  for (std::size_t m = 1; m < 16; ++m) {
    if (fb[m][128].get<double>() > fb[band][128].get<double>()) band = m;
  }
  for (std::size_t f = 1; f + 1 < frames; ++f) {
    EXPECT_NEAR(d.values[f * 16 + band], 0.0, 1e-3) << "frame " << f;
  }
  // Bands whose filters start above 2 kHz (bin 256) see only leakage.
  for (std::size_t m = 0; m < 16; ++m) {
    bool above = true;
    for (std::size_t k = 0; k <= 256; ++k) above = above && fb[m][k].get<double>() == 0.0;
    if (!above) continue;
    for (std::size_t f = 0; f < frames; ++f) EXPECT_EQ(d.values[f * 16 + m], -40.0f);
  }
}

TEST(MelDescriptor, ShiftByAHopChangesTheDescriptor) {
  std::vector<float> a(kClipSamples, 0.0f);
  std::mt19937_64 rng(21);
  std::normal_distribution<float> n(0.0f, 0.3f);
  for (std::size_t i = 40000; i < 42000; ++i) a[i] = n(rng);
  std::vector<float> b(kClipSamples, 0.0f);
  std::copy(a.begin(), a.end() - 1536, b.begin() + 1536);
  const auto da = mel_descriptor(clip_of(a));
  const auto db = mel_descriptor(clip_of(b));
  double diff = 0.0;
  for (std::size_t i = 0; i < da.values.size(); ++i) {
    diff = std::max(diff, static_cast<double>(std::abs(da.values[i] - db.values[i])));
  }
  EXPECT_GT(diff, 10.0);
}

TEST(MelDescriptor, RangeAndPeak) {
  const auto d = mel_descriptor(clip_of(test::tone_burst_clip(9)));
  ASSERT_EQ(d.values.size(), kMelDescriptorDim);
  EXPECT_FALSE(d.degenerate);
  EXPECT_EQ(*std::max_element(d.values.begin(), d.values.end()), 0.0f);
  EXPECT_GE(*std::min_element(d.values.begin(), d.values.end()), -40.0f);
}

TEST(MelDescriptor, AmplitudeScaleInvariant) {
  const auto x = test::tone_burst_clip(11);
  std::vector<float> quiet(x.size());
  std::transform(x.begin(), x.end(), quiet.begin(), [](float v) { return v * 0.01f; });
  const auto a = mel_descriptor(clip_of(x));
  const auto b = mel_descriptor(clip_of(quiet));
  for (std::size_t i = 0; i < a.values.size(); ++i) ASSERT_NEAR(a.values[i], b.values[i], 1e-5);
}

TEST(MelDescriptor, SilenceIsDegenerateFloor) {
  const auto d = mel_descriptor(clip_of(std::vector<float>(kClipSamples, 0.0f)));
  EXPECT_TRUE(d.degenerate);
  EXPECT_TRUE(std::all_of(d.values.begin(), d.values.end(), [](float v) { return v == -40.0f; }));
}

TEST(MelDescriptor, FrameMajorLayout) {
  // A tone that starts halfway through: early frames are at the floor in
  // every band, late frames are not.
  std::vector<float> x(kClipSamples, 0.0f);
  for (std::size_t i = kClipSamples / 2; i < x.size(); ++i) {
    x[i] = static_cast<float>(0.5 * std::sin(2 * std::numbers::pi * 300.0 * i / 16000.0));
  }
  const auto d = mel_descriptor(clip_of(x));
  for (std::size_t m = 0; m < 16; ++m) EXPECT_EQ(d.values[10 * 16 + m], -40.0f);
  EXPECT_GT(*std::max_element(d.values.begin() + 100 * 16, d.values.begin() + 101 * 16), -10.0f);
}

TEST(MelDescriptorExtractor, RejectsConfigsThatChangeTheDimension) {
  MelConfig cfg;
  cfg.n_mels = 32;
  EXPECT_THROW(MelDescriptorExtractor(cfg, StftConfig{}), ConfigError);
}

TEST(MelDescriptorExtractor, KnobsChangeTheOutput) {
  const auto x = test::tone_burst_clip(12);
  MelConfig htk;
  htk.scale = MelScale::Htk;
  htk.norm = MelNorm::None;
  MelConfig magnitude;
  magnitude.spectrogram_power = 1.0;
  magnitude.db_multiplier = 20.0;
  const auto base = mel_descriptor(clip_of(x));
  EXPECT_NE(mel_descriptor(clip_of(x), htk).values, base.values);
  // |X|^1 in 20 log10 equals |X|^2 in 10 log10 only up to the mel sum, so
  // the descriptors differ but stay in range.
  const auto mag = mel_descriptor(clip_of(x), magnitude);
  EXPECT_NE(mag.values, base.values);
  EXPECT_EQ(*std::max_element(mag.values.begin(), mag.values.end()), 0.0f);
}

}  // namespace
}  // namespace replica

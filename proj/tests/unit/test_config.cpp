#include <gtest/gtest.h>

#include <fstream>

#include "replica/config.hpp"
#include "replica/error.hpp"
#include "synth.hpp"

namespace replica {
namespace {

using nlohmann::json;

TEST(PipelineConfig, DefaultsAreTheBaselineProtocol) {
  const PipelineConfig c;
  EXPECT_EQ(c.stft.window_len, 2048u);
  EXPECT_EQ(c.stft.hop, 1536u);
  EXPECT_EQ(c.mel.n_mels, 16u);
  EXPECT_EQ(c.mel.scale, MelScale::Slaney);
  EXPECT_EQ(c.k_background, 5u);
  EXPECT_DOUBLE_EQ(c.beta, 0.5);
  EXPECT_DOUBLE_EQ(c.tau_retrieve, 0.5005);
  EXPECT_DOUBLE_EQ(c.tau_dedup, 0.5025);
  EXPECT_NO_THROW(c.validate());
  EXPECT_GE(c.effective_workers(), 1u);
  EXPECT_EQ(c.retrieval(DescriptorKind::Mel).tau, 0.5005);
}

TEST(MergeConfig, OverridesOnlyGivenKeys) {
  const auto c = merge_config(PipelineConfig{}, json::parse(R"({
      "background": {"beta": 1.0},
      "retrieval": {"tau": 0.51},
      "mel": {"scale": "htk", "norm": "none"},
      "search": {"workers": 3, "block_size": 8},
      "cache_dir": "/tmp/c"})"));
  EXPECT_DOUBLE_EQ(c.beta, 1.0);
  EXPECT_EQ(c.k_background, 5u);
  EXPECT_DOUBLE_EQ(c.tau_retrieve, 0.51);
  EXPECT_EQ(c.mel.scale, MelScale::Htk);
  EXPECT_EQ(c.mel.norm, MelNorm::None);
  EXPECT_EQ(c.search().workers, 3u);
  EXPECT_EQ(c.dedup().search.block_size, 8u);
  EXPECT_EQ(c.cache_dir, std::filesystem::path("/tmp/c"));
}

TEST(MergeConfig, RejectsUnknownKeysAndBadTypes) {
  auto expect_config_error = [](const char* text, const std::string& item) {
    try {
      merge_config(PipelineConfig{}, json::parse(text));
      FAIL() << text;
    } catch (const ConfigError& e) {
      ASSERT_FALSE(e.items().empty()) << text;
      EXPECT_EQ(e.items()[0], item);
    }
  };
  expect_config_error(R"({"bogus": 1})", "bogus");
  expect_config_error(R"({"mel": {"n_bands": 16}})", "mel.n_bands");
  expect_config_error(R"({"background": {"k": -1}})", "background.k");
  expect_config_error(R"({"background": {"k": 2.5}})", "background.k");
  expect_config_error(R"({"retrieval": {"tau": "high"}})", "retrieval.tau");
  expect_config_error(R"({"stft": {"centered": 1}})", "stft.centered");
  expect_config_error(R"({"dedup": 3})", "dedup");
  EXPECT_THROW(merge_config(PipelineConfig{}, json::parse(R"({"background": {"k": 0}})")),
               ConfigError);
  EXPECT_THROW(merge_config(PipelineConfig{}, json::parse(R"({"mel": {"scale": "bark"}})")),
               ConfigError);
}

TEST(Provenance, LeavesOutSearchAndCacheSettings) {
  PipelineConfig a;
  PipelineConfig b;
  b.workers = 7;
  b.block_size = 3;
  b.cache_dir = "/somewhere";
  EXPECT_EQ(provenance(a), provenance(b));
  EXPECT_NE(to_json(a), to_json(b));
  EXPECT_FALSE(provenance(a).contains("search"));
  EXPECT_FALSE(provenance(a).contains("cache_dir"));
  b.beta = 0.25;
  EXPECT_NE(provenance(a), provenance(b));
}

TEST(LoadConfig, RoundTripsAndReportsErrors) {
  test::TempDir dir("config");
  PipelineConfig c;
  c.tau_dedup = 0.6;
  c.workers = 2;
  std::ofstream(dir / "c.json") << to_json(c).dump(2);
  const auto back = load_config(dir / "c.json");
  EXPECT_EQ(to_json(back), to_json(c));

  std::ofstream(dir / "bad.json") << "{not json";
  EXPECT_THROW(load_config(dir / "bad.json"), ConfigError);
  EXPECT_THROW(load_config(dir / "absent.json"), ConfigError);
}

}  // namespace
}  // namespace replica

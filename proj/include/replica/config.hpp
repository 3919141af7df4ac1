#pragma once

#include <cstddef>
#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "replica/dedup.hpp"
#include "replica/melspec.hpp"
#include "replica/retrieval.hpp"

namespace replica {

// Every tunable of the pipeline. The defaults reproduce the reference
// protocol, so running with no config file and no flags is the baseline.
//
//   {
//     "stft":       {"window_len": 2048, "hop": 1536, "fft_len": 2048, "centered": true},
//     "mel":        {"n_mels": 16, "f_min": 0, "f_max": 8000, "scale": "slaney",
//                    "norm": "slaney", "floor_db": -40, "spectrogram_power": 2,
//                    "db_multiplier": 10},
//     "background": {"k": 5, "beta": 0.5},
//     "retrieval":  {"tau": 0.5005},
//     "dedup":      {"tau": 0.5025, "dense_cap": 20000},
//     "search":     {"block_size": 64, "workers": 0},
//     "histogram":  {"bins": 100},
//     "cache_dir":  ""
//   }
//
// Any subset may be given; unknown keys are rejected. workers = 0 means
// the available hardware parallelism.
struct PipelineConfig {
  StftConfig stft;
  MelConfig mel;
  std::size_t k_background = 5;
  double beta = 0.5;
  double tau_retrieve = 0.5005;
  double tau_dedup = kDefaultDedupTau;
  std::size_t dense_cap = 20000;
  std::size_t block_size = 64;
  std::size_t workers = 0;
  std::size_t hist_bins = 100;
  std::filesystem::path cache_dir;

  // Throws ConfigError.
  void validate() const;

  std::size_t effective_workers() const;
  RetrievalConfig retrieval(DescriptorKind kind) const;
  SearchOptions search() const;
  DedupOptions dedup() const;
};

// Overlays `j` onto `base`. Throws ConfigError on unknown keys or bad types.
PipelineConfig merge_config(PipelineConfig base, const nlohmann::json& j);
PipelineConfig load_config(const std::filesystem::path& path);

nlohmann::json to_json(const PipelineConfig& cfg);

// The config echo written into result files. Search blocking, worker count
// and cache location do not affect results and are left out, so outputs
// stay byte-identical across machines and worker counts.
nlohmann::json provenance(const PipelineConfig& cfg);

}  // namespace replica

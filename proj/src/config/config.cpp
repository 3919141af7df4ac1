#include "replica/config.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <map>

#include "replica/error.hpp"
#include "replica/parallel.hpp"

namespace replica {

using nlohmann::json;

namespace {

template <typename T>
T get_as(const json& j, const std::string& where) {
  try {
    return j.get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config: '" + where + "' has the wrong type (" + j.dump() + ")", {where});
  }
}

std::size_t get_count(const json& j, const std::string& where) {
  if (!j.is_number_integer() || j.get<long long>() < 0) {
    throw ConfigError("config: '" + where + "' must be a non-negative integer", {where});
  }
  return j.get<std::size_t>();
}

double get_number(const json& j, const std::string& where) {
  if (!j.is_number()) throw ConfigError("config: '" + where + "' must be a number", {where});
  return j.get<double>();
}

// Applies each member of `section` through the matching setter, rejecting
// anything not listed.
void apply_section(const json& section, const std::string& name,
                   const std::map<std::string, std::function<void(const json&, const std::string&)>>&
                       setters) {
  if (!section.is_object()) {
    throw ConfigError("config: '" + name + "' must be an object", {name});
  }
  for (const auto& [key, value] : section.items()) {
    const std::string where = name.empty() ? key : name + "." + key;
    auto it = setters.find(key);
    if (it == setters.end()) throw ConfigError("config: unknown key '" + where + "'", {where});
    it->second(value, where);
  }
}

}  // namespace

void PipelineConfig::validate() const {
  stft.validate();
  mel.validate();
  if (k_background == 0) throw ConfigError("config: background.k must be at least 1");
  if (!std::isfinite(beta)) throw ConfigError("config: background.beta must be finite");
  if (!std::isfinite(tau_retrieve)) throw ConfigError("config: retrieval.tau must be finite");
  if (!std::isfinite(tau_dedup)) throw ConfigError("config: dedup.tau must be finite");
  if (block_size == 0) throw ConfigError("config: search.block_size must be at least 1");
  if (hist_bins == 0) throw ConfigError("config: histogram.bins must be at least 1");
}

std::size_t PipelineConfig::effective_workers() const {
  return workers == 0 ? default_workers() : workers;
}

RetrievalConfig PipelineConfig::retrieval(DescriptorKind kind) const {
  RetrievalConfig r;
  r.tau = tau_retrieve;
  r.k_background = k_background;
  r.beta = beta;
  r.kind = kind;
  return r;
}

SearchOptions PipelineConfig::search() const {
  SearchOptions s;
  s.block_size = block_size;
  s.workers = effective_workers();
  return s;
}

DedupOptions PipelineConfig::dedup() const {
  DedupOptions d;
  d.search = search();
  d.dense_cap = dense_cap;
  return d;
}

PipelineConfig merge_config(PipelineConfig c, const json& j) {
  apply_section(
      j, "",
      {{"stft",
        [&c](const json& s, const std::string& where) {
          apply_section(s, where,
                        {{"window_len", [&c](const json& v, const std::string& w) {
                            c.stft.window_len = get_count(v, w);
                          }},
                         {"hop", [&c](const json& v, const std::string& w) {
                            c.stft.hop = get_count(v, w);
                          }},
                         {"fft_len", [&c](const json& v, const std::string& w) {
                            c.stft.fft_len = get_count(v, w);
                          }},
                         {"centered", [&c](const json& v, const std::string& w) {
                            c.stft.centered = get_as<bool>(v, w);
                          }}});
        }},
       {"mel",
        [&c](const json& s, const std::string& where) {
          apply_section(
              s, where,
              {{"n_mels", [&c](const json& v, const std::string& w) { c.mel.n_mels = get_count(v, w); }},
               {"f_min", [&c](const json& v, const std::string& w) { c.mel.f_min = get_number(v, w); }},
               {"f_max", [&c](const json& v, const std::string& w) { c.mel.f_max = get_number(v, w); }},
               {"scale",
                [&c](const json& v, const std::string& w) {
                  c.mel.scale = mel_scale_from_string(get_as<std::string>(v, w));
                }},
               {"norm",
                [&c](const json& v, const std::string& w) {
                  c.mel.norm = mel_norm_from_string(get_as<std::string>(v, w));
                }},
               {"floor_db",
                [&c](const json& v, const std::string& w) { c.mel.floor_db = get_number(v, w); }},
               {"spectrogram_power",
                [&c](const json& v, const std::string& w) {
                  c.mel.spectrogram_power = get_number(v, w);
                }},
               {"db_multiplier", [&c](const json& v, const std::string& w) {
                  c.mel.db_multiplier = get_number(v, w);
                }}});
        }},
       {"background",
        [&c](const json& s, const std::string& where) {
          apply_section(
              s, where,
              {{"k", [&c](const json& v, const std::string& w) { c.k_background = get_count(v, w); }},
               {"beta", [&c](const json& v, const std::string& w) { c.beta = get_number(v, w); }}});
        }},
       {"retrieval",
        [&c](const json& s, const std::string& where) {
          apply_section(s, where,
                        {{"tau", [&c](const json& v, const std::string& w) {
                            c.tau_retrieve = get_number(v, w);
                          }}});
        }},
       {"dedup",
        [&c](const json& s, const std::string& where) {
          apply_section(
              s, where,
              {{"tau", [&c](const json& v, const std::string& w) { c.tau_dedup = get_number(v, w); }},
               {"dense_cap",
                [&c](const json& v, const std::string& w) { c.dense_cap = get_count(v, w); }}});
        }},
       {"search",
        [&c](const json& s, const std::string& where) {
          apply_section(
              s, where,
              {{"block_size",
                [&c](const json& v, const std::string& w) { c.block_size = get_count(v, w); }},
               {"workers", [&c](const json& v, const std::string& w) { c.workers = get_count(v, w); }}});
        }},
       {"histogram",
        [&c](const json& s, const std::string& where) {
          apply_section(s, where,
                        {{"bins", [&c](const json& v, const std::string& w) {
                            c.hist_bins = get_count(v, w);
                          }}});
        }},
       {"cache_dir", [&c](const json& v, const std::string& w) {
          c.cache_dir = get_as<std::string>(v, w);
        }}});
  c.validate();
  return c;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file " + path.string(), {path.string()});
  json j;
  try {
    j = json::parse(f);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what(), {path.string()});
  }
  return merge_config(PipelineConfig{}, j);
}

json to_json(const PipelineConfig& c) {
  json j = provenance(c);
  j["search"] = {{"block_size", c.block_size}, {"workers", c.workers}};
  j["cache_dir"] = c.cache_dir.string();
  return j;
}

json provenance(const PipelineConfig& c) {
  return {{"stft",
           {{"window_len", c.stft.window_len},
            {"hop", c.stft.hop},
            {"fft_len", c.stft.fft_len},
            {"centered", c.stft.centered}}},
          {"mel",
           {{"n_mels", c.mel.n_mels},
            {"f_min", c.mel.f_min},
            {"f_max", c.mel.f_max},
            {"scale", to_string(c.mel.scale)},
            {"norm", to_string(c.mel.norm)},
            {"floor_db", c.mel.floor_db},
            {"spectrogram_power", c.mel.spectrogram_power},
            {"db_multiplier", c.mel.db_multiplier}}},
          {"background", {{"k", c.k_background}, {"beta", c.beta}}},
          {"retrieval", {{"tau", c.tau_retrieve}}},
          {"dedup", {{"tau", c.tau_dedup}, {"dense_cap", c.dense_cap}}},
          {"histogram", {{"bins", c.hist_bins}}}};
}

}  // namespace replica

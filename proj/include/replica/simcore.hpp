#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "replica/descriptor_set.hpp"

namespace replica {

// Norms below this make a descriptor degenerate: it scores 0 against
// everything.
inline constexpr double kDegenerateNorm = 1e-12;

// Background corpus used to estimate the per-query similarity bias.
class BackgroundSet {
 public:
  BackgroundSet(DescriptorSet descriptors, std::size_t k = 5, double beta = 0.5);

  const DescriptorSet& descriptors() const noexcept { return descriptors_; }
  std::size_t k() const noexcept { return k_; }
  double beta() const noexcept { return beta_; }
  const std::vector<double>& norms() const noexcept { return norms_; }

 private:
  DescriptorSet descriptors_;
  std::size_t k_;
  double beta_;
  std::vector<double> norms_;
};

struct ScoredMatch {
  ClipId query;
  ClipId reference;
  double raw = 0.0;
  double bias = 0.0;
  double normalized = 0.0;
  std::size_t rank = 0;  // 1-based within the query
};

struct SearchOptions {
  std::size_t block_size = 64;
  std::size_t workers = 1;
  // Skip the reference at the query's own row (self-comparison of one set).
  bool exclude_self = false;
};

double cosine(std::span<const float> q, std::span<const float> r);

// Row norms with flagged rows forced to 0 so they fall under the
// degenerate rule.
std::vector<double> row_norms(const DescriptorSet& set);

// Mean of the K largest cosines between q and the background.
double bias(std::span<const float> q, const BackgroundSet& bg);

double normalized_score(std::span<const float> q, std::span<const float> r,
                        const BackgroundSet& bg);

// Bias for every row of `set`.
std::vector<double> biases(const DescriptorSet& set, const BackgroundSet& bg,
                           std::size_t workers = 1);

// Exact top-k by normalized score, one ranked list per query in query order.
// Within a query, matches are ordered by raw cosine descending (the bias is
// constant per query, so this is also normalized order), ties by reference
// ClipId.
std::vector<std::vector<ScoredMatch>> topk(const DescriptorSet& queries,
                                           const DescriptorSet& refs, const BackgroundSet& bg,
                                           std::size_t k, const SearchOptions& opts = {});

// Dense n x n normalized self-similarity with zero diagonal.
struct ScoreMatrix {
  std::size_t n = 0;
  std::vector<double> values;  // row-major
  std::vector<double> row_bias;

  double at(std::size_t i, std::size_t j) const { return values[i * n + j]; }
  double& at(std::size_t i, std::size_t j) { return values[i * n + j]; }
};

ScoreMatrix self_similarity(const DescriptorSet& refs, const BackgroundSet& bg,
                            const SearchOptions& opts = {});

// Streams the same matrix one row at a time (rows computed in parallel
// blocks of opts.block_size), invoking `on_row` in row order.
void scan_self_similarity(const DescriptorSet& refs, const BackgroundSet& bg,
                          const SearchOptions& opts,
                          const std::function<void(std::size_t row, std::span<const double>)>& on_row);

// Throws ContractError unless the kinds and dims agree and the background
// shares no ClipId with `set`.
void check_compatible(const DescriptorSet& set, const BackgroundSet& bg);

}  // namespace replica

#pragma once

// Brute-force reference implementations. They share no code with the
// library beyond the DescriptorSet container.

#include <complex>
#include <cstddef>
#include <string>
#include <vector>

#include "replica/descriptor_set.hpp"

namespace replica::oracle {

// Centered STFT by direct DFT: reflect padding by index mirroring,
// periodic Hann, frame-major (frames x (n_fft/2+1)).
std::vector<std::complex<double>> naive_stft(const std::vector<float>& x, std::size_t n_fft,
                                             std::size_t hop, std::size_t* frames);

// Cosine in long double; 0 when either norm is below 1e-12 or the row is
// flagged degenerate.
double cosine(const DescriptorSet& a, std::size_t i, const DescriptorSet& b, std::size_t j);

// Mean of the K largest cosines against every background row.
double bias(const DescriptorSet& q, std::size_t i, const DescriptorSet& bg, std::size_t k);

struct Match {
  std::string query;
  std::string reference;
  double raw;
  double bias;
  double normalized;
};

// All pairs scored, sorted by normalized descending then reference id;
// first k per query.
std::vector<std::vector<Match>> topk(const DescriptorSet& q, const DescriptorSet& r,
                                     const DescriptorSet& bg, std::size_t k_bg, double beta,
                                     std::size_t k, bool exclude_self = false);

// Full normalized matrix S[i][j] = cos(i, j) - beta * bias(i), diagonal 0.
std::vector<std::vector<double>> self_matrix(const DescriptorSet& r, const DescriptorSet& bg,
                                             std::size_t k_bg, double beta);

// Components of size >= 2 by breadth-first search over an adjacency matrix,
// each sorted, listed by smallest member.
std::vector<std::vector<std::size_t>> bfs_components(const std::vector<std::vector<bool>>& adj);

}  // namespace replica::oracle

#include "replica/simcore.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

#include "replica/error.hpp"
#include "replica/parallel.hpp"

namespace replica {

namespace {

// Four fixed accumulators: vectorizes, and the summation order does not
// depend on blocking or threading.
double dot(const float* a, const float* b, std::size_t n) {
  double acc[4] = {0.0, 0.0, 0.0, 0.0};
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    for (std::size_t j = 0; j < 4; ++j) {
      acc[j] += static_cast<double>(a[i + j]) * static_cast<double>(b[i + j]);
    }
  }
  for (; i < n; ++i) acc[0] += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return (acc[0] + acc[1]) + (acc[2] + acc[3]);
}

double norm(std::span<const float> v) { return std::sqrt(dot(v.data(), v.data(), v.size())); }

double cosine_with_norms(const float* q, double q_norm, const float* r, double r_norm,
                         std::size_t dim) {
  if (q_norm < kDegenerateNorm || r_norm < kDegenerateNorm) return 0.0;
  return dot(q, r, dim) / (q_norm * r_norm);
}

// Mean of the top-K background cosines. Ties among equal scores are ordered
// by background ClipId.
double bias_with_norm(const float* q, double q_norm, const BackgroundSet& bg) {
  const DescriptorSet& set = bg.descriptors();
  std::vector<std::pair<double, std::size_t>> scored(set.size());
  for (std::size_t i = 0; i < set.size(); ++i) {
    scored[i] = {cosine_with_norms(q, q_norm, set.row(i).data(), bg.norms()[i], set.dim()), i};
  }
  const auto better = [&](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return set.id(a.second) < set.id(b.second);
  };
  const auto k = static_cast<std::ptrdiff_t>(bg.k());
  std::partial_sort(scored.begin(), scored.begin() + k, scored.end(), better);
  double sum = 0.0;
  for (std::ptrdiff_t i = 0; i < k; ++i) sum += scored[static_cast<std::size_t>(i)].first;
  return sum / static_cast<double>(bg.k());
}

void check_dims(std::span<const float> q, std::span<const float> r) {
  if (q.size() != r.size()) {
    throw ContractError("dimension mismatch: " + std::to_string(q.size()) + " vs " +
                        std::to_string(r.size()));
  }
}

}  // namespace

BackgroundSet::BackgroundSet(DescriptorSet descriptors, std::size_t k, double beta)
    : descriptors_(std::move(descriptors)), k_(k), beta_(beta) {
  if (k_ == 0) throw ContractError("background K must be at least 1");
  if (descriptors_.size() < k_) {
    throw ContractError("background set has " + std::to_string(descriptors_.size()) +
                        " descriptors, fewer than K = " + std::to_string(k_));
  }
  if (!std::isfinite(beta_)) throw ContractError("beta must be finite");
  norms_ = row_norms(descriptors_);
}

double cosine(std::span<const float> q, std::span<const float> r) {
  check_dims(q, r);
  return cosine_with_norms(q.data(), norm(q), r.data(), norm(r), q.size());
}

std::vector<double> row_norms(const DescriptorSet& set) {
  std::vector<double> out(set.size());
  for (std::size_t i = 0; i < set.size(); ++i) {
    out[i] = set.degenerate(i) ? 0.0 : norm(set.row(i));
  }
  return out;
}

double bias(std::span<const float> q, const BackgroundSet& bg) {
  if (q.size() != bg.descriptors().dim()) {
    throw ContractError("query dim " + std::to_string(q.size()) + " != background dim " +
                        std::to_string(bg.descriptors().dim()));
  }
  return bias_with_norm(q.data(), norm(q), bg);
}

double normalized_score(std::span<const float> q, std::span<const float> r,
                        const BackgroundSet& bg) {
  return cosine(q, r) - bg.beta() * bias(q, bg);
}

std::vector<double> biases(const DescriptorSet& set, const BackgroundSet& bg,
                           std::size_t workers) {
  const std::vector<double> norms = row_norms(set);
  std::vector<double> out(set.size());
  parallel_for(set.size(), workers, [&](std::size_t i) {
    out[i] = bias_with_norm(set.row(i).data(), norms[i], bg);
  });
  return out;
}

void check_compatible(const DescriptorSet& set, const BackgroundSet& bg) {
  const DescriptorSet& b = bg.descriptors();
  if (set.kind() != b.kind() || set.dim() != b.dim()) {
    throw ContractError(std::string("descriptor mismatch: '") + set.corpus_id() + "' is " +
                        to_string(set.kind()) + "/" + std::to_string(set.dim()) +
                        ", background '" + b.corpus_id() + "' is " + to_string(b.kind()) + "/" +
                        std::to_string(b.dim()));
  }
  for (const auto& id : b.ids()) {
    if (set.find(id)) {
      throw ContractError("background shares clip id '" + id.str() + "' with corpus '" +
                          set.corpus_id() + "'");
    }
  }
}

std::vector<std::vector<ScoredMatch>> topk(const DescriptorSet& queries,
                                           const DescriptorSet& refs, const BackgroundSet& bg,
                                           std::size_t k, const SearchOptions& opts) {
  check_compatible(queries, bg);
  check_compatible(refs, bg);
  if (queries.kind() != refs.kind() || queries.dim() != refs.dim()) {
    throw ContractError("query and reference descriptors differ in kind or dim");
  }
  if (opts.exclude_self && queries.ids() != refs.ids()) {
    throw ContractError("exclude_self requires identical query and reference sets");
  }
  if (opts.block_size == 0) throw ContractError("block size must be positive");

  const std::size_t nq = queries.size();
  const std::size_t nr = refs.size();
  const std::size_t dim = queries.dim();
  const std::size_t block = opts.block_size;
  const std::vector<double> q_norms = row_norms(queries);
  const std::vector<double> r_norms = row_norms(refs);

  std::vector<std::vector<ScoredMatch>> results(nq);
  const std::size_t n_blocks = (nq + block - 1) / block;

  parallel_for(n_blocks, opts.workers, [&](std::size_t b) {
    const std::size_t q_begin = b * block;
    const std::size_t q_end = std::min(nq, q_begin + block);
    const std::size_t rows = q_end - q_begin;

    // Per query: (raw, ref index) candidates, kept as a heap whose front is
    // the worst retained candidate.
    using Candidate = std::pair<double, std::size_t>;
    const auto better = [&](const Candidate& x, const Candidate& y) {
      if (x.first != y.first) return x.first > y.first;
      return refs.id(x.second) < refs.id(y.second);
    };
    std::vector<std::vector<Candidate>> heaps(rows);
    for (auto& h : heaps) h.reserve(k + 1);

    std::vector<double> tile(rows * block);
    for (std::size_t r_begin = 0; r_begin < nr; r_begin += block) {
      const std::size_t r_end = std::min(nr, r_begin + block);
      const std::size_t cols = r_end - r_begin;
      for (std::size_t qi = 0; qi < rows; ++qi) {
        const float* q = queries.row(q_begin + qi).data();
        for (std::size_t rj = 0; rj < cols; ++rj) {
          tile[qi * cols + rj] = cosine_with_norms(q, q_norms[q_begin + qi],
                                                   refs.row(r_begin + rj).data(),
                                                   r_norms[r_begin + rj], dim);
        }
      }
      for (std::size_t qi = 0; qi < rows; ++qi) {
        auto& heap = heaps[qi];
        for (std::size_t rj = 0; rj < cols; ++rj) {
          const std::size_t r = r_begin + rj;
          if (opts.exclude_self && r == q_begin + qi) continue;
          const Candidate c{tile[qi * cols + rj], r};
          if (heap.size() < k) {
            heap.push_back(c);
            std::push_heap(heap.begin(), heap.end(), better);
          } else if (k > 0 && better(c, heap.front())) {
            std::pop_heap(heap.begin(), heap.end(), better);
            heap.back() = c;
            std::push_heap(heap.begin(), heap.end(), better);
          }
        }
      }
    }

    for (std::size_t qi = 0; qi < rows; ++qi) {
      const std::size_t q = q_begin + qi;
      const double b_q = bias_with_norm(queries.row(q).data(), q_norms[q], bg);
      auto& heap = heaps[qi];
      std::sort_heap(heap.begin(), heap.end(), better);
      auto& out = results[q];
      out.reserve(heap.size());
      for (std::size_t i = 0; i < heap.size(); ++i) {
        ScoredMatch m;
        m.query = queries.id(q);
        m.reference = refs.id(heap[i].second);
        m.raw = heap[i].first;
        m.bias = b_q;
        m.normalized = m.raw - bg.beta() * b_q;
        m.rank = i + 1;
        out.push_back(std::move(m));
      }
    }
  });
  return results;
}

namespace {

void compute_self_rows(const DescriptorSet& refs, const std::vector<double>& norms,
                       const std::vector<double>& row_bias, double beta, std::size_t row_begin,
                       std::size_t row_end, std::size_t workers, std::vector<double>& out) {
  const std::size_t n = refs.size();
  parallel_for(row_end - row_begin, workers, [&](std::size_t offset) {
    const std::size_t i = row_begin + offset;
    double* row = out.data() + offset * n;
    const float* q = refs.row(i).data();
    for (std::size_t j = 0; j < n; ++j) {
      row[j] = j == i ? 0.0
                      : cosine_with_norms(q, norms[i], refs.row(j).data(), norms[j], refs.dim()) -
                            beta * row_bias[i];
    }
  });
}

}  // namespace

ScoreMatrix self_similarity(const DescriptorSet& refs, const BackgroundSet& bg,
                            const SearchOptions& opts) {
  check_compatible(refs, bg);
  if (refs.empty()) throw ContractError("self-similarity needs a nonempty corpus");
  ScoreMatrix s;
  s.n = refs.size();
  s.row_bias = biases(refs, bg, opts.workers);
  s.values.resize(s.n * s.n);
  compute_self_rows(refs, row_norms(refs), s.row_bias, bg.beta(), 0, s.n, opts.workers,
                    s.values);
  return s;
}

void scan_self_similarity(
    const DescriptorSet& refs, const BackgroundSet& bg, const SearchOptions& opts,
    const std::function<void(std::size_t row, std::span<const double>)>& on_row) {
  check_compatible(refs, bg);
  if (refs.empty()) throw ContractError("self-similarity needs a nonempty corpus");
  if (opts.block_size == 0) throw ContractError("block size must be positive");
  const std::size_t n = refs.size();
  const std::vector<double> norms = row_norms(refs);
  const std::vector<double> row_bias = biases(refs, bg, opts.workers);
  std::vector<double> buffer;
  for (std::size_t begin = 0; begin < n; begin += opts.block_size) {
    const std::size_t end = std::min(n, begin + opts.block_size);
    buffer.assign((end - begin) * n, 0.0);
    compute_self_rows(refs, norms, row_bias, bg.beta(), begin, end, opts.workers, buffer);
    for (std::size_t i = begin; i < end; ++i) {
      on_row(i, std::span<const double>(buffer.data() + (i - begin) * n, n));
    }
  }
}

}  // namespace replica

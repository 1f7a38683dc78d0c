#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace tandem::bench {

// Ranks 0..n-1 with P(rank r) proportional to (r+1)^-alpha, sampled by
// inverse CDF. Rank 0 is the hottest.
class ZipfGenerator {
 public:
  ZipfGenerator(uint64_t n, double alpha);

  template <typename Rng>
  uint64_t operator()(Rng& rng) const {
    double u = std::uniform_real_distribution<double>(0, 1)(rng);
    return Sample(u);
  }

  uint64_t Sample(double u) const;
  uint64_t n() const { return cdf_.size(); }
  double alpha() const { return alpha_; }

 private:
  double alpha_;
  std::vector<double> cdf_;
};

// sum_{i=1..n} i^-alpha by direct summation.
double ZetaNormalizer(uint64_t n, double alpha);

}  // namespace tandem::bench

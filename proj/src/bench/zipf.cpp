#include "tandem/bench/zipf.hpp"

#include <algorithm>
#include <cmath>

namespace tandem::bench {

double ZetaNormalizer(uint64_t n, double alpha) {
  double sum = 0;
  // Smallest terms first keeps the float sum accurate.
  for (uint64_t i = n; i >= 1; --i) sum += std::pow(static_cast<double>(i), -alpha);
  return sum;
}

ZipfGenerator::ZipfGenerator(uint64_t n, double alpha) : alpha_(alpha), cdf_(n) {
  double acc = 0;
  for (uint64_t i = 0; i < n; ++i) {
    acc += std::pow(static_cast<double>(i + 1), -alpha);
    cdf_[i] = acc;
  }
  for (double& c : cdf_) c /= acc;
  if (n > 0) cdf_.back() = 1.0;
}

uint64_t ZipfGenerator::Sample(double u) const {
  auto it = std::lower_bound(cdf_.begin(), cdf_.end(), u);
  if (it == cdf_.end()) return cdf_.size() - 1;
  return static_cast<uint64_t>(it - cdf_.begin());
}

}  // namespace tandem::bench

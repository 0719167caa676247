#pragma once

#include <cmath>
#include <span>

namespace dagb {

// Neumaier-compensated accumulator. Results depend only on the order in
// which values are added, so callers that fix the order get bit-identical
// sums regardless of how work was scheduled.
class CompensatedSum {
public:
  void add(double x) noexcept {
    const double t = sum_ + x;
    if (std::fabs(sum_) >= std::fabs(x)) {
      comp_ += (sum_ - t) + x;
    } else {
      comp_ += (x - t) + sum_;
    }
    sum_ = t;
  }

  // Merges another partial sum; order of merges matters for bit-exactness.
  void merge(const CompensatedSum& other) noexcept {
    add(other.sum_);
    add(other.comp_);
  }

  double value() const noexcept { return sum_ + comp_; }

private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

inline double compensated_sum(std::span<const double> xs) noexcept {
  CompensatedSum acc;
  for (double x : xs) acc.add(x);
  return acc.value();
}

// Sum of squared deviations from the (compensated) mean.
inline double sum_sq_dev(std::span<const double> xs) noexcept {
  if (xs.empty()) return 0.0;
  const double mean = compensated_sum(xs) / static_cast<double>(xs.size());
  CompensatedSum acc;
  for (double x : xs) {
    const double d = x - mean;
    acc.add(d * d);
  }
  return acc.value();
}

}  // namespace dagb

#pragma once

// Small seeded generators for property tests.

#include <random>
#include <vector>

#include "pseiki/ds_core.hpp"
#include "pseiki/geometry.hpp"

namespace testgen {

class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}

  double uniform(double lo = 0.0, double hi = 1.0) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
  bool coin(double p = 0.5) { return uniform() < p; }

  // Random simple evidence function; a third of the time one of the two
  // committed masses is zero.
  pseiki::SimpleEvidenceFunction sef(pseiki::Label focus, double max_committed = 0.95) {
    double a = uniform(), b = uniform();
    const int shape = integer(0, 2);
    if (shape == 1) a = 0.0;
    if (shape == 2) b = 0.0;
    const double total = uniform(0.0, max_committed);
    const double sum = a + b;
    if (sum == 0.0) return pseiki::SimpleEvidenceFunction::vacuous(focus);
    return pseiki::SimpleEvidenceFunction::make(focus, total * a / sum, total * b / sum);
  }

  pseiki::Vec2 point(double lo, double hi) { return {uniform(lo, hi), uniform(lo, hi)}; }

  pseiki::Segment2 segment(double lo = 0.0, double hi = 400.0, double min_len = 5.0) {
    while (true) {
      const pseiki::Vec2 a = point(lo, hi);
      const pseiki::Vec2 b = point(lo, hi);
      if ((a - b).norm() >= min_len) return {a, b};
    }
  }

  std::mt19937_64& engine() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

inline pseiki::FrameOfDiscernment frame_of(int n) {
  std::vector<pseiki::Label> labels;
  for (int i = 0; i < n; ++i) labels.push_back(pseiki::Label{static_cast<std::uint32_t>(i + 1)});
  return pseiki::FrameOfDiscernment(labels);
}

}  // namespace testgen

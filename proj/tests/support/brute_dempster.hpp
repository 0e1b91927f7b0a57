#pragma once

// Test-side Dempster's rule over a dense power-set vector. Kept independent of
// the library so the two routes can be compared.

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "pseiki/ds_core.hpp"

namespace brute {

// masses[s] is the mass of the subset with bitmask s.
struct Dense {
  int n = 0;
  std::vector<double> masses;
};

inline Dense vacuous(int n) {
  Dense d{n, std::vector<double>(std::size_t{1} << n, 0.0)};
  d.masses.back() = 1.0;
  return d;
}

inline Dense lift(const pseiki::SimpleEvidenceFunction& fn, int index, int n) {
  Dense d{n, std::vector<double>(std::size_t{1} << n, 0.0)};
  const std::uint32_t full = (1u << n) - 1;
  const std::uint32_t single = 1u << index;
  d.masses[single] += fn.mass_for;
  d.masses[full & ~single] += fn.mass_against;
  d.masses[full] += fn.mass_theta;
  return d;
}

struct ConflictError : std::runtime_error {
  ConflictError() : std::runtime_error("total conflict") {}
};

inline Dense combine(const Dense& a, const Dense& b) {
  Dense out{a.n, std::vector<double>(a.masses.size(), 0.0)};
  double k = 0.0;
  for (std::size_t i = 0; i < a.masses.size(); ++i) {
    if (a.masses[i] == 0.0) continue;
    for (std::size_t j = 0; j < b.masses.size(); ++j) {
      const double m = a.masses[i] * b.masses[j];
      if ((i & j) == 0) {
        k += m;
      } else {
        out.masses[i & j] += m;
      }
    }
  }
  if (k >= 1.0 - 1e-12) throw ConflictError();
  for (double& m : out.masses) m /= 1.0 - k;
  return out;
}

// Singleton masses after folding the whole pool, in frame order.
inline std::vector<double> pool_singletons(const std::vector<pseiki::SimpleEvidenceFunction>& pool,
                                           const pseiki::FrameOfDiscernment& frame) {
  const int n = static_cast<int>(frame.size());
  Dense acc = vacuous(n);
  for (const auto& fn : pool) acc = combine(acc, lift(fn, static_cast<int>(*frame.index_of(fn.focus)), n));
  std::vector<double> out;
  for (int i = 0; i < n; ++i) out.push_back(pool.empty() ? 0.0 : acc.masses[std::size_t{1} << i]);
  return out;
}

}  // namespace brute

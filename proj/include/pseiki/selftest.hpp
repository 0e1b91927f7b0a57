#pragma once

// Built-in checks shared by the selftest command and the acceptance binary.
// Output contains no timings so repeated runs print identical summaries.

#include <cstdint>
#include <string>
#include <vector>

#include "pseiki/scheduler.hpp"

namespace pseiki {

struct CheckResult {
  std::string name;
  bool pass = false;
  std::size_t cases = 0;
  std::size_t failures = 0;
  std::string detail;

  std::string line() const;
};

// combine_pool and combine_same_focus against the focal-pair oracle on
// random pools over frames of 2, 3 and 4 labels.
CheckResult check_ds_oracle(std::uint64_t seed, int cases_per_size = 1000, double tolerance = 1e-9);

// Every bpa reported during a cube-fixture run sums to one, has no negative
// mass and no empty-set mass.
CheckResult check_mass_sanity(const SchedulerConfig& config, double tolerance = 1e-9);

// On the cube fixture the run terminates within budget, a scene is believed
// and every alive data edge with a generator carries that generator's label.
CheckResult check_cube(const SchedulerConfig& config);

// Seven-member face whose third and fourth members share a label splits into
// exactly the two groups that keep one of them each.
CheckResult check_splitter();

std::vector<CheckResult> run_selftest(const SchedulerConfig& config, std::uint64_t seed = 1);

}  // namespace pseiki

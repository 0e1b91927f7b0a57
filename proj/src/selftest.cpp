#include "pseiki/selftest.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "pseiki/ds_core.hpp"
#include "pseiki/fixtures.hpp"
#include "pseiki/knowledge_sources.hpp"
#include "pseiki/self_location.hpp"

namespace pseiki {

std::string CheckResult::line() const {
  return fmt::format("{} {}: {} cases, {} failures{}{}", pass ? "PASS" : "FAIL", name, cases, failures,
                     detail.empty() ? "" : "; ", detail);
}

namespace {

class Draw {
 public:
  explicit Draw(std::uint64_t seed) : rng_(seed) {}

  double uniform(double lo = 0.0, double hi = 1.0) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }

  // Committed mass below `max_committed` so no pair is in total conflict;
  // a third of the draws put no mass on one side.
  SimpleEvidenceFunction sef(Label focus, double max_committed) {
    double a = uniform(), b = uniform();
    const int shape = integer(0, 2);
    if (shape == 1) a = 0.0;
    if (shape == 2) b = 0.0;
    if (a + b == 0.0) return SimpleEvidenceFunction::vacuous(focus);
    const double total = uniform(0.0, max_committed);
    return SimpleEvidenceFunction::make(focus, total * a / (a + b), total * b / (a + b));
  }

 private:
  std::mt19937_64 rng_;
};

FrameOfDiscernment numbered_frame(int n) {
  std::vector<Label> labels;
  for (int i = 0; i < n; ++i) labels.push_back(Label{static_cast<std::uint32_t>(i + 1)});
  return FrameOfDiscernment(labels);
}

std::optional<ElementId> generator_of(const CubeFixture& fx, ElementId id) {
  if (fx.truth.count(id)) return fx.generator(id);
  // Merger output: inherit from a dead recorded piece lying on it.
  const auto& e = fx.bb.element(id);
  for (const auto& [d, g] : fx.truth) {
    const auto& piece = fx.bb.element(d);
    if (!piece.alive && g && distance_to_line(piece.segment()->midpoint(), *e.segment()) < 1.0) return g;
  }
  return std::nullopt;
}

}  // namespace

CheckResult check_ds_oracle(std::uint64_t seed, int cases_per_size, double tolerance) {
  CheckResult r;
  r.name = "ds oracle equivalence";
  Draw g(seed);
  double worst = 0.0;
  for (int n = 2; n <= 4; ++n) {
    const auto frame = numbered_frame(n);
    const GeneralBpa::Subset full = (GeneralBpa::Subset{1} << n) - 1;
    for (int trial = 0; trial < cases_per_size; ++trial) {
      double err = 0.0;
      std::vector<SimpleEvidenceFunction> pool;
      const int size = g.integer(1, 6);
      for (int k = 0; k < size; ++k) {
        pool.push_back(g.sef(frame.labels()[static_cast<std::size_t>(g.integer(0, n - 1))], 0.9));
      }
      const auto fast = combine_pool_detailed(pool, frame);
      GeneralBpa acc = GeneralBpa::vacuous(frame);
      for (const auto& fn : pool) acc = oracle_combine(acc, GeneralBpa::lift(fn, frame));
      double singles = 0.0;
      for (int i = 0; i < n; ++i) {
        const double m = acc.mass(GeneralBpa::Subset{1} << i);
        singles += m;
        err = std::max(err, std::abs(fast.singleton[static_cast<std::size_t>(i)] - m));
      }
      err = std::max(err, std::abs(fast.non_singleton - (1.0 - singles)));

      const Label focus = frame.labels()[static_cast<std::size_t>(g.integer(0, n - 1))];
      const auto a = g.sef(focus, 0.95), b = g.sef(focus, 0.95);
      const auto same = combine_same_focus(a, b);
      const auto slow = oracle_combine(GeneralBpa::lift(a, frame), GeneralBpa::lift(b, frame));
      const GeneralBpa::Subset single = GeneralBpa::Subset{1} << *frame.index_of(focus);
      err = std::max(err, std::abs(same.mass_for - slow.mass(single)));
      err = std::max(err, std::abs(same.mass_against - slow.mass(full & ~single)));
      err = std::max(err, std::abs(same.mass_theta - slow.mass(full)));

      ++r.cases;
      if (err > tolerance) ++r.failures;
      worst = std::max(worst, err);
    }
  }
  r.pass = r.failures == 0;
  r.detail = fmt::format("max abs error {:.3e}", worst);
  return r;
}

CheckResult check_mass_sanity(const SchedulerConfig& config, double tolerance) {
  CheckResult r;
  r.name = "mass sanity";
  double worst_sum = 0.0, worst_negative = 0.0, worst_empty = 0.0;
  {
    ScopedMassObserver watch([&](const BpaRecord& rec) {
      double total = 0.0;
      bool bad = false;
      for (double m : rec.masses) {
        total += m;
        if (m < 0.0) {
          worst_negative = std::min(worst_negative, m);
          bad = true;
        }
      }
      worst_sum = std::max(worst_sum, std::abs(total - 1.0));
      worst_empty = std::max(worst_empty, std::abs(rec.empty_set_mass));
      if (std::abs(total - 1.0) > tolerance || rec.empty_set_mass != 0.0) bad = true;
      ++r.cases;
      if (bad) ++r.failures;
    });
    try {
      auto fx = make_cube_fixture();
      run(fx.bb, config);
    } catch (const std::exception& e) {
      r.detail = fmt::format("run aborted: {}", e.what());
      r.pass = false;
      return r;
    }
  }
  r.pass = r.failures == 0 && r.cases > 0;
  r.detail = fmt::format("max |sum - 1| {:.3e}, most negative {:.3e}, max empty-set {:.3e}", worst_sum, worst_negative,
                         worst_empty);
  return r;
}

CheckResult check_cube(const SchedulerConfig& config) {
  CheckResult r;
  r.name = fmt::format("cube fixture (n_g = {})", config.n_g);
  auto fx = make_cube_fixture();
  RunReport report;
  try {
    report = run(fx.bb, config);
  } catch (const std::exception& e) {
    r.detail = fmt::format("run aborted: {}", e.what());
    return r;
  }
  const auto scene = best_scene(fx.bb);
  if (report.budget_exceeded || !scene) {
    r.detail = report.budget_exceeded ? "firing budget exceeded" : "no believed scene";
    return r;
  }
  const auto in_scene = descendant_edges(fx.bb, *scene);
  const std::set<ElementId> members(in_scene.begin(), in_scene.end());
  std::size_t outside = 0;
  for (ElementId id : fx.bb.at(Panel::Data, Level::Edge)) {
    const auto& e = fx.bb.element(id);
    if (!e.alive) continue;
    const auto gen = generator_of(fx, id);
    if (!gen) continue;
    ++r.cases;
    if (e.label != gen) ++r.failures;
    if (!members.count(id)) ++outside;
  }
  r.pass = r.failures == 0 && r.cases > 0;
  r.detail = fmt::format("{} data edges inserted, {} firings, {} labelled edges outside the best scene",
                         fx.data_edges.size(), report.firings, outside);
  return r;
}

CheckResult check_splitter() {
  CheckResult r;
  r.name = "splitter";
  Blackboard bb;
  std::vector<ElementId> labels, edges;
  for (int i = 0; i < 7; ++i) labels.push_back(add_edge(bb, Panel::Model, Segment2({0.0, 40.0 * i}, {100.0, 40.0 * i})));
  // The third and fourth members share a label.
  const std::vector<int> label_index{0, 1, 2, 2, 4, 5, 6};
  for (int i = 0; i < 7; ++i) {
    const ElementId e = add_edge(bb, Panel::Data, Segment2({0.0, 40.0 * i + 2}, {100.0, 40.0 * i + 2}));
    const Label l = labels[static_cast<std::size_t>(label_index[static_cast<std::size_t>(i)])];
    BeliefState b(FrameOfDiscernment({l, kUnmatched}));
    b.add(SimpleEvidenceFunction::make(l, 0.8, 0.0), {EvidenceKind::Initial, e, l});
    apply_belief(bb, e, b);
    edges.push_back(e);
  }
  const ElementId group = add_aggregate(bb, Panel::Data, Level::Face, edges);
  const auto alts = splitter(bb, group, {});
  const std::vector<ElementId> keep_third{edges[0], edges[1], edges[2], edges[4], edges[5], edges[6]};
  const std::vector<ElementId> keep_fifth{edges[0], edges[1], edges[3], edges[4], edges[5], edges[6]};
  r.cases = 1;
  const bool ok = alts.size() == 2 && alts[0].members == keep_third && alts[1].members == keep_fifth &&
                  !bb.element(group).alive;
  r.failures = ok ? 0 : 1;
  r.pass = ok;
  r.detail = fmt::format("{} alternative groups", alts.size());
  return r;
}

std::vector<CheckResult> run_selftest(const SchedulerConfig& config, std::uint64_t seed) {
  return {check_ds_oracle(seed), check_mass_sanity(config), check_cube(config), check_splitter()};
}

}  // namespace pseiki

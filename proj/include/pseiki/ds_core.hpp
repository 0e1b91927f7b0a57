#pragma once

// Dempster-Shafer primitives: frames of discernment, Barnett-style simple
// evidence functions, pooled combination over singletons and a power-set
// oracle used to check it.

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "pseiki/ids.hpp"

namespace pseiki {

inline constexpr double kConflictLimit = 1.0 - 1e-12;
inline constexpr double kMassTolerance = 1e-12;

// Ordered, duplicate-free set of singleton hypotheses. Iteration order is
// insertion order.
class FrameOfDiscernment {
 public:
  FrameOfDiscernment() = default;
  explicit FrameOfDiscernment(std::vector<Label> labels);

  // Appends `label` when absent. Returns true if the frame grew.
  bool add(Label label);
  bool contains(Label label) const { return index_of(label).has_value(); }
  std::optional<std::size_t> index_of(Label label) const;

  std::size_t size() const { return labels_.size(); }
  bool empty() const { return labels_.empty(); }
  const std::vector<Label>& labels() const { return labels_; }

  bool operator==(const FrameOfDiscernment&) const = default;

 private:
  std::vector<Label> labels_;
};

// Mass function whose only focal elements are {A}, its complement and the
// whole frame. The complement is always taken relative to whatever frame the
// function is combined in.
struct SimpleEvidenceFunction {
  Label focus{};
  double mass_for = 0.0;
  double mass_against = 0.0;
  double mass_theta = 1.0;

  // Theta receives the remainder. Throws std::invalid_argument if the masses
  // are negative or exceed 1 in total.
  static SimpleEvidenceFunction make(Label focus, double mass_for, double mass_against);
  static SimpleEvidenceFunction vacuous(Label focus) { return {focus, 0.0, 0.0, 1.0}; }

  bool is_valid(double tolerance = kMassTolerance) const;
  bool is_vacuous() const { return mass_for == 0.0 && mass_against == 0.0; }
};

// Dempster's rule for two functions sharing a focus. No set enumeration.
SimpleEvidenceFunction combine_same_focus(const SimpleEvidenceFunction& a,
                                          const SimpleEvidenceFunction& b);

struct PoolCombination {
  std::vector<double> singleton;  // aligned with frame.labels()
  double non_singleton = 0.0;     // mass left on subsets of size >= 2
  double conflict = 0.0;          // K of the whole pool
};

// Combined singleton masses of an arbitrary pool of simple evidence functions
// over `frame`. Linear in pool size plus frame size.
PoolCombination combine_pool_detailed(std::span<const SimpleEvidenceFunction> pool,
                                      const FrameOfDiscernment& frame);
std::vector<double> combine_pool(std::span<const SimpleEvidenceFunction> pool,
                                 const FrameOfDiscernment& frame);

// General mass function over a frame of at most 16 labels; subsets are
// bitmasks over frame positions.
class GeneralBpa {
 public:
  using Subset = std::uint32_t;
  static constexpr std::size_t kMaxFrame = 16;

  GeneralBpa(FrameOfDiscernment frame, std::map<Subset, double> masses);

  static GeneralBpa vacuous(const FrameOfDiscernment& frame);
  // Requires mass_against == 0 when the frame has a single label, since the
  // complement would be empty.
  static GeneralBpa lift(const SimpleEvidenceFunction& fn, const FrameOfDiscernment& frame);

  const FrameOfDiscernment& frame() const { return frame_; }
  const std::map<Subset, double>& masses() const { return masses_; }
  Subset full() const { return full_; }
  double mass(Subset subset) const;
  double singleton(Label label) const;

 private:
  FrameOfDiscernment frame_;
  std::map<Subset, double> masses_;
  Subset full_ = 0;
};

// Reference Dempster combination by enumerating focal-element pairs.
GeneralBpa oracle_combine(const GeneralBpa& a, const GeneralBpa& b);

enum class EvidenceKind { Initial, Update, Propagated, External };

// Where a pooled function came from. Non-external entries with an equal
// origin replace each other, so re-firing a knowledge source refreshes its
// opinion instead of counting it twice.
struct EvidenceOrigin {
  EvidenceKind kind = EvidenceKind::External;
  ElementId parent{};
  ElementId sibling{};

  bool operator==(const EvidenceOrigin&) const = default;
};

struct Evidence {
  SimpleEvidenceFunction fn;
  EvidenceOrigin origin;
};

class BeliefState {
 public:
  BeliefState() = default;
  explicit BeliefState(FrameOfDiscernment frame);

  const FrameOfDiscernment& frame() const { return frame_; }
  const std::vector<Evidence>& evidence_pool() const { return pool_; }
  std::vector<SimpleEvidenceFunction> functions() const;
  const std::vector<double>& singleton_masses() const { return singleton_; }
  double mass(Label label) const;

  // Adds a batch and recombines. Leaves the state untouched on TotalConflict.
  void add(std::span<const Evidence> batch);
  void add(const SimpleEvidenceFunction& fn, EvidenceOrigin origin);

  // Grows the frame; existing evidence is kept and its complements widen.
  bool enlarge(std::span<const Label> labels);

  // Highest singleton masses, ties in frame order.
  std::vector<std::pair<Label, double>> top(std::size_t k) const;

 private:
  void recombine();

  FrameOfDiscernment frame_;
  std::vector<Evidence> pool_;
  std::vector<double> singleton_;
};

// Label of maximum singleton mass; first in frame order wins ties. Empty
// when the pool is empty or every singleton has zero mass.
std::optional<Label> current_label(const BeliefState& state);

// Instrumentation: every bpa produced by this module is reported to the
// observer installed on the current thread.
struct BpaRecord {
  std::string_view site;
  std::span<const double> masses;  // every focal mass, including the empty set's
  double empty_set_mass = 0.0;
};
using MassObserver = std::function<void(const BpaRecord&)>;

class ScopedMassObserver {
 public:
  explicit ScopedMassObserver(MassObserver observer);
  ~ScopedMassObserver();
  ScopedMassObserver(const ScopedMassObserver&) = delete;
  ScopedMassObserver& operator=(const ScopedMassObserver&) = delete;

 private:
  MassObserver previous_;
};

void report_bpa(std::string_view site, std::span<const double> masses, double empty_set_mass = 0.0);

}  // namespace pseiki

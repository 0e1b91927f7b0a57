#include "pseiki/ds_core.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <string>

#include "pseiki/errors.hpp"

namespace pseiki {

namespace {

thread_local MassObserver* g_observer = nullptr;

// Per-label aggregate of every pool function focused on that label, kept
// normalized to sum 1 so long pools do not underflow.
struct FocusTriple {
  double f = 0.0;
  double a = 0.0;
  double t = 1.0;
};

}  // namespace

FrameOfDiscernment::FrameOfDiscernment(std::vector<Label> labels) {
  labels_.reserve(labels.size());
  for (Label l : labels) {
    if (!add(l)) throw std::invalid_argument("duplicate label in frame: " + to_string(l));
  }
}

bool FrameOfDiscernment::add(Label label) {
  if (contains(label)) return false;
  labels_.push_back(label);
  return true;
}

std::optional<std::size_t> FrameOfDiscernment::index_of(Label label) const {
  auto it = std::find(labels_.begin(), labels_.end(), label);
  if (it == labels_.end()) return std::nullopt;
  return static_cast<std::size_t>(it - labels_.begin());
}

SimpleEvidenceFunction SimpleEvidenceFunction::make(Label focus, double mass_for, double mass_against) {
  if (!(mass_for >= 0.0) || !(mass_against >= 0.0) || mass_for + mass_against > 1.0 + kMassTolerance) {
    throw std::invalid_argument("simple evidence masses out of range");
  }
  SimpleEvidenceFunction fn{focus, mass_for, mass_against, std::max(0.0, 1.0 - mass_for - mass_against)};
  const std::array<double, 3> m{fn.mass_for, fn.mass_against, fn.mass_theta};
  report_bpa("simple", m);
  return fn;
}

bool SimpleEvidenceFunction::is_valid(double tolerance) const {
  return mass_for >= 0.0 && mass_against >= 0.0 && mass_theta >= 0.0 &&
         std::abs(mass_for + mass_against + mass_theta - 1.0) <= tolerance;
}

SimpleEvidenceFunction combine_same_focus(const SimpleEvidenceFunction& a, const SimpleEvidenceFunction& b) {
  if (a.focus != b.focus) throw std::invalid_argument("combine_same_focus: foci differ");
  const double conflict = a.mass_for * b.mass_against + a.mass_against * b.mass_for;
  if (conflict >= kConflictLimit) throw TotalConflict(conflict);
  const double norm = 1.0 - conflict;
  SimpleEvidenceFunction out;
  out.focus = a.focus;
  out.mass_for = (a.mass_for * b.mass_for + a.mass_for * b.mass_theta + a.mass_theta * b.mass_for) / norm;
  out.mass_against =
      (a.mass_against * b.mass_against + a.mass_against * b.mass_theta + a.mass_theta * b.mass_against) / norm;
  out.mass_theta = a.mass_theta * b.mass_theta / norm;
  const std::array<double, 3> m{out.mass_for, out.mass_against, out.mass_theta};
  report_bpa("combine_same_focus", m);
  return out;
}

PoolCombination combine_pool_detailed(std::span<const SimpleEvidenceFunction> pool,
                                      const FrameOfDiscernment& frame) {
  const std::size_t n = frame.size();
  PoolCombination out;
  out.singleton.assign(n, 0.0);
  if (n == 0) {
    if (!pool.empty()) throw FrameMismatch("combine_pool: evidence over an empty frame");
    return out;
  }
  if (pool.empty()) {
    out.non_singleton = 1.0;
    return out;
  }

  std::vector<FocusTriple> agg(n);
  // Running product of the per-step normalizers, for reporting K.
  double log_scale = 0.0;
  for (const auto& fn : pool) {
    auto idx = frame.index_of(fn.focus);
    if (!idx) throw FrameMismatch("combine_pool: focus " + to_string(fn.focus) + " not in frame");
    FocusTriple& x = agg[*idx];
    const double f = x.f * fn.mass_for + x.f * fn.mass_theta + x.t * fn.mass_for;
    const double a = x.a * fn.mass_against + x.a * fn.mass_theta + x.t * fn.mass_against;
    const double t = x.t * fn.mass_theta;
    const double s = f + a + t;
    if (s <= 1.0 - kConflictLimit) throw TotalConflict(1.0 - s);
    x = {f / s, a / s, t / s};
    log_scale += std::log(s);
  }

  // Intersections landing on {j}: {j} from label j with every other label
  // contributing its complement or the frame; or the frame from j with every
  // other label contributing its complement.
  std::vector<double> prefix_at(n + 1, 1.0), suffix_at(n + 1, 1.0);
  std::vector<double> prefix_a(n + 1, 1.0), suffix_a(n + 1, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    prefix_at[i + 1] = prefix_at[i] * (agg[i].a + agg[i].t);
    prefix_a[i + 1] = prefix_a[i] * agg[i].a;
  }
  for (std::size_t i = n; i-- > 0;) {
    suffix_at[i] = suffix_at[i + 1] * (agg[i].a + agg[i].t);
    suffix_a[i] = suffix_a[i + 1] * agg[i].a;
  }

  double singleton_from_focus = 0.0;
  double singleton_from_theta = 0.0;
  std::vector<double> raw(n);
  for (std::size_t j = 0; j < n; ++j) {
    const double others_at = prefix_at[j] * suffix_at[j + 1];
    const double others_a = prefix_a[j] * suffix_a[j + 1];
    const double from_focus = agg[j].f * others_at;
    const double from_theta = agg[j].t * others_a;
    raw[j] = from_focus + from_theta;
    singleton_from_focus += from_focus;
    singleton_from_theta += from_theta;
  }
  const double all_at = prefix_at[n];
  const double all_a = prefix_a[n];
  const double norm = singleton_from_focus + all_at - all_a;
  if (norm <= 1.0 - kConflictLimit) throw TotalConflict(1.0 - norm);

  for (std::size_t j = 0; j < n; ++j) out.singleton[j] = raw[j] / norm;
  out.non_singleton = std::max(0.0, (all_at - all_a - singleton_from_theta) / norm);
  out.conflict = 1.0 - norm * std::exp(log_scale);

  if (g_observer) {
    std::vector<double> masses = out.singleton;
    masses.push_back(out.non_singleton);
    report_bpa("combine_pool", masses);
  }
  return out;
}

std::vector<double> combine_pool(std::span<const SimpleEvidenceFunction> pool, const FrameOfDiscernment& frame) {
  return combine_pool_detailed(pool, frame).singleton;
}

GeneralBpa::GeneralBpa(FrameOfDiscernment frame, std::map<Subset, double> masses)
    : frame_(std::move(frame)), masses_(std::move(masses)) {
  if (frame_.empty() || frame_.size() > kMaxFrame) throw std::invalid_argument("GeneralBpa: frame size out of range");
  full_ = static_cast<Subset>((std::uint64_t{1} << frame_.size()) - 1);
  double total = 0.0;
  for (auto it = masses_.begin(); it != masses_.end();) {
    if (it->first == 0 && it->second != 0.0) throw std::invalid_argument("GeneralBpa: mass on the empty set");
    if ((it->first & ~full_) != 0) throw std::invalid_argument("GeneralBpa: subset outside frame");
    if (it->second < 0.0) throw std::invalid_argument("GeneralBpa: negative mass");
    total += it->second;
    if (it->second == 0.0) {
      it = masses_.erase(it);
    } else {
      ++it;
    }
  }
  if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("GeneralBpa: masses do not sum to 1");
}

GeneralBpa GeneralBpa::vacuous(const FrameOfDiscernment& frame) {
  const auto full = static_cast<Subset>((std::uint64_t{1} << frame.size()) - 1);
  return GeneralBpa(frame, {{full, 1.0}});
}

GeneralBpa GeneralBpa::lift(const SimpleEvidenceFunction& fn, const FrameOfDiscernment& frame) {
  auto idx = frame.index_of(fn.focus);
  if (!idx) throw FrameMismatch("lift: focus not in frame");
  const auto full = static_cast<Subset>((std::uint64_t{1} << frame.size()) - 1);
  const Subset single = Subset{1} << *idx;
  const Subset complement = full & ~single;
  if (complement == 0 && fn.mass_against > 0.0) {
    throw std::invalid_argument("lift: complement is empty in a one-label frame");
  }
  std::map<Subset, double> m;
  m[single] += fn.mass_for;
  if (fn.mass_against > 0.0) m[complement] += fn.mass_against;
  m[full] += fn.mass_theta;
  return GeneralBpa(frame, std::move(m));
}

double GeneralBpa::mass(Subset subset) const {
  auto it = masses_.find(subset);
  return it == masses_.end() ? 0.0 : it->second;
}

double GeneralBpa::singleton(Label label) const {
  auto idx = frame_.index_of(label);
  if (!idx) throw FrameMismatch("singleton: label not in frame");
  return mass(Subset{1} << *idx);
}

GeneralBpa oracle_combine(const GeneralBpa& a, const GeneralBpa& b) {
  if (a.frame() != b.frame()) throw FrameMismatch("oracle_combine: frames differ");
  std::map<GeneralBpa::Subset, double> joint;
  double conflict = 0.0;
  for (const auto& [sa, ma] : a.masses()) {
    for (const auto& [sb, mb] : b.masses()) {
      const auto x = sa & sb;
      if (x == 0) {
        conflict += ma * mb;
      } else {
        joint[x] += ma * mb;
      }
    }
  }
  if (conflict >= kConflictLimit) throw TotalConflict(conflict);
  for (auto& [s, m] : joint) m /= (1.0 - conflict);
  if (g_observer) {
    std::vector<double> masses;
    for (const auto& [s, m] : joint) masses.push_back(m);
    report_bpa("oracle_combine", masses);
  }
  return GeneralBpa(a.frame(), std::move(joint));
}

BeliefState::BeliefState(FrameOfDiscernment frame) : frame_(std::move(frame)), singleton_(frame_.size(), 0.0) {}

std::vector<SimpleEvidenceFunction> BeliefState::functions() const {
  std::vector<SimpleEvidenceFunction> out;
  out.reserve(pool_.size());
  for (const auto& e : pool_) out.push_back(e.fn);
  return out;
}

double BeliefState::mass(Label label) const {
  auto idx = frame_.index_of(label);
  return idx ? singleton_[*idx] : 0.0;
}

void BeliefState::add(std::span<const Evidence> batch) {
  BeliefState next = *this;
  for (const auto& ev : batch) {
    if (!next.frame_.contains(ev.fn.focus)) throw FrameMismatch("evidence focus not in frame");
    auto same = std::find_if(next.pool_.begin(), next.pool_.end(), [&](const Evidence& e) {
      return ev.origin.kind != EvidenceKind::External && e.origin == ev.origin;
    });
    if (same != next.pool_.end()) {
      same->fn = ev.fn;
    } else {
      next.pool_.push_back(ev);
    }
  }
  next.recombine();
  *this = std::move(next);
}

void BeliefState::add(const SimpleEvidenceFunction& fn, EvidenceOrigin origin) {
  const Evidence ev{fn, origin};
  add(std::span<const Evidence>(&ev, 1));
}

bool BeliefState::enlarge(std::span<const Label> labels) {
  BeliefState next = *this;
  bool grew = false;
  for (Label l : labels) grew = next.frame_.add(l) || grew;
  if (!grew) return false;
  next.recombine();
  *this = std::move(next);
  return true;
}

std::vector<std::pair<Label, double>> BeliefState::top(std::size_t k) const {
  std::vector<std::size_t> order(frame_.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return singleton_[x] > singleton_[y]; });
  std::vector<std::pair<Label, double>> out;
  for (std::size_t i = 0; i < std::min(k, order.size()); ++i) {
    out.emplace_back(frame_.labels()[order[i]], singleton_[order[i]]);
  }
  return out;
}

void BeliefState::recombine() {
  const auto fns = functions();
  singleton_ = combine_pool(fns, frame_);
}

std::optional<Label> current_label(const BeliefState& state) {
  if (state.evidence_pool().empty()) return std::nullopt;
  const auto& m = state.singleton_masses();
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (m[i] > 0.0 && (!best || m[i] > m[*best])) best = i;
  }
  if (!best) return std::nullopt;
  return state.frame().labels()[*best];
}

ScopedMassObserver::ScopedMassObserver(MassObserver observer) {
  if (g_observer) previous_ = *g_observer;
  static thread_local MassObserver slot;
  slot = std::move(observer);
  g_observer = &slot;
}

ScopedMassObserver::~ScopedMassObserver() {
  if (previous_) {
    *g_observer = std::move(previous_);
  } else {
    g_observer = nullptr;
  }
}

void report_bpa(std::string_view site, std::span<const double> masses, double empty_set_mass) {
  if (!g_observer || !*g_observer) return;
  (*g_observer)(BpaRecord{site, masses, empty_set_mass});
}

}  // namespace pseiki

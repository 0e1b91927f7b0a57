#include "pseiki/scheduler.hpp"

#include <algorithm>
#include <fmt/format.h>
#include <set>
#include <stdexcept>

#include "pseiki/errors.hpp"
#include "pseiki/kernels.hpp"

namespace pseiki {

const char* to_string(Phase phase) {
  switch (phase) {
    case Phase::Init: return "Init";
    case Phase::Update: return "Update";
    case Phase::Propagate: return "Propagate";
  }
  return "?";
}

void SchedulerConfig::validate() const {
  if (n_g < 1) throw std::invalid_argument("n_g must be >= 1");
  if (jobs < 1) throw std::invalid_argument("jobs must be >= 1");
  ks.validate();
}

std::string RunReport::log() const {
  std::string out;
  for (const auto& e : events) {
    out += fmt::format("{} {} {} {} {}\n", e.seq, to_string(e.ks), to_string(e.target), to_string(e.phase),
                       e.relabels);
  }
  return out;
}

namespace {

int class_rank(KsKind ks) {
  switch (ks) {
    case KsKind::Splitter:
    case KsKind::Merger: return 0;
    case KsKind::Grouper: return 2;
    default: return 1;
  }
}

int labeler_rank(KsKind ks, Phase phase) {
  switch (ks) {
    case KsKind::LabelerRelabel: return 0;
    case KsKind::LabelerInit: return 1;
    case KsKind::LabelerUpdate: return phase == Phase::Propagate ? 3 : 2;
    case KsKind::LabelerPropagate: return phase == Phase::Propagate ? 2 : 3;
    default: return 0;
  }
}

double attachment(const Blackboard& bb, ElementId seed) {
  if (!bb.contains(seed)) return 0.0;
  const auto& e = bb.element(seed);
  if (!e.alive || !e.label || !e.belief) return 0.0;
  return e.belief->mass(*e.label);
}

// Secondary order inside the labeler class: updates run top-down, propagation
// bottom-up.
int level_key(const Ksar& k, Phase phase, const Blackboard& bb) {
  if (!bb.contains(k.target)) return 0;
  const int lvl = static_cast<int>(bb.element(k.target).level);
  if (k.ks == KsKind::LabelerUpdate && phase == Phase::Update) return -lvl;
  if (k.ks == KsKind::LabelerPropagate && phase == Phase::Propagate) return lvl;
  return 0;
}

}  // namespace

std::optional<Ksar> select_ksar(std::span<const Ksar> pending, Phase phase, const Blackboard& bb) {
  const Ksar* best = nullptr;
  auto better = [&](const Ksar& a, const Ksar& b) {
    if (class_rank(a.ks) != class_rank(b.ks)) return class_rank(a.ks) < class_rank(b.ks);
    if (class_rank(a.ks) == 1) {
      if (labeler_rank(a.ks, phase) != labeler_rank(b.ks, phase)) {
        return labeler_rank(a.ks, phase) < labeler_rank(b.ks, phase);
      }
      const int la = level_key(a, phase, bb);
      const int lb = level_key(b, phase, bb);
      if (la != lb) return la < lb;
    }
    if (class_rank(a.ks) == 2) {
      const double sa = attachment(bb, a.target);
      const double sb = attachment(bb, b.target);
      if (sa != sb) return sa > sb;
    }
    return a.created_seq < b.created_seq;
  };
  for (const auto& k : pending) {
    if (k.status != KsarStatus::Pending) continue;
    if (!best || better(k, *best)) best = &k;
  }
  if (!best) return std::nullopt;
  return *best;
}

Scheduler::Scheduler(Blackboard& bb, SchedulerConfig config) : bb_(bb), config_(std::move(config)) {
  config_.validate();
  if (config_.max_firings == 0) config_.max_firings = std::max<std::size_t>(1, 50 * bb_.elements().size());
}

RunReport run(Blackboard& bb, const SchedulerConfig& config) { return Scheduler(bb, config).run(); }

RunReport Scheduler::run() {
  if (!bb_.has_data()) return report_;
  init_phase();
  update_phase();
  propagate_phase();
  return report_;
}

bool Scheduler::budget_left() {
  if (report_.firings < config_.max_firings) return true;
  report_.budget_exceeded = true;
  return false;
}

namespace {

enum KindMask : unsigned {
  kInitKinds = (1u << static_cast<int>(KsKind::LabelerInit)) | (1u << static_cast<int>(KsKind::LabelerRelabel)) |
               (1u << static_cast<int>(KsKind::Splitter)) | (1u << static_cast<int>(KsKind::Merger)),
  kRepairKinds = (1u << static_cast<int>(KsKind::Splitter)) | (1u << static_cast<int>(KsKind::Merger)),
  kAllKinds = ~0u,
};

bool in_mask(unsigned mask, KsKind ks) { return (mask >> static_cast<int>(ks)) & 1u; }

}  // namespace

void Scheduler::drain(unsigned mask) {
  while (true) {
    std::vector<Ksar> pending;
    for (const auto& k : bb_.pending()) {
      if (in_mask(mask, k.ks)) pending.push_back(k);
    }
    const auto next = select_ksar(pending, phase_, bb_);
    if (!next) return;
    if (!fire(next->id)) return;
  }
}

bool Scheduler::fire(std::uint32_t ksar_id, std::optional<ElementId> model_target) {
  if (!budget_left()) return false;
  const Ksar k = bb_.ksar(ksar_id);
  bb_.set_status(ksar_id, KsarStatus::Active);
  int relabels = 0;
  const auto& params = config_.ks;
  const bool alive = bb_.contains(k.target) && bb_.element(k.target).alive;

  if (alive) {
    switch (k.ks) {
      case KsKind::LabelerInit:
        fire_labeler_init(k, relabels);
        break;
      case KsKind::LabelerUpdate: {
        const auto changes = labeler_update(bb_, k.target, params);
        for (const auto& c : changes) on_label_change(c, relabels);
        break;
      }
      case KsKind::LabelerPropagate: {
        const auto res = labeler_propagate(bb_, k.target);
        if (res.conflict) report_.conflicts.push_back(k.target);
        if (res.change) on_label_change(*res.change, relabels);
        break;
      }
      case KsKind::LabelerRelabel: {
        const auto& e = bb_.element(k.target);
        if (k.new_label && e.label == k.new_label) {
          labeler_relabel(bb_, k.target, *k.new_label, k.old_label);
        }
        break;
      }
      case KsKind::Grouper: {
        const auto target = model_target ? model_target : grouper_target(k.target);
        if (target && bb_.element(k.target).parents.empty()) {
          const Grouping g = grouper(bb_, k.target, *target, params);
          if (g.parent_level_node) post_splitter_if_needed(*g.parent_level_node);
          const auto& seed = bb_.element(k.target);
          if (seed.alive && seed.parents.empty()) bb_.post_ksar(KsKind::Grouper, k.target);
        }
        break;
      }
      case KsKind::Splitter:
        splitter(bb_, k.target, params);
        break;
      case KsKind::Merger:
        merger(bb_, bb_.element(k.target).level, params);
        break;
    }
  }

  bb_.set_status(ksar_id, KsarStatus::Done);
  report_.events.push_back({seq_++, ksar_id, k.ks, k.target, phase_, relabels});
  ++report_.firings;
  report_.relabels += static_cast<std::size_t>(relabels);
  return true;
}

void Scheduler::fire_labeler_init(const Ksar& k, int& relabels) {
  std::optional<BeliefState> belief;
  try {
    belief = labeler_init(bb_, k.target, config_.ks);
  } catch (const EmptyFod&) {
  }
  commit_init(k.target, std::move(belief), relabels);
  post_merger_if_needed(bb_.element(k.target).level);
}

void Scheduler::commit_init(ElementId target, std::optional<BeliefState> belief, int& relabels) {
  auto& el = bb_.element(target);
  el.fod_preset = false;
  std::optional<LabelChange> change;
  if (belief) {
    change = apply_belief(bb_, target, std::move(*belief));
  } else {
    el.empty_fod = true;
    el.belief.reset();
    if (el.label) change = LabelChange{target, el.label, std::nullopt};
    el.label.reset();
  }
  if (change) on_label_change(*change, relabels);
}

void Scheduler::on_label_change(const LabelChange& change, int& relabels) {
  const auto& el = bb_.element(change.node);
  const bool aggregate = el.level >= Level::Face && !el.children.empty();
  if (change.before && change.after) {
    ++relabels;
    if (aggregate) bb_.post_ksar(KsKind::LabelerRelabel, change.node, change.after, change.before);
  }
  if (change.after && aggregate) {
    if (!change.before) {
      const auto children = el.children;
      for (ElementId c : children) {
        if (auto cc = labeler_enlarge_fod(bb_, c, *change.after)) on_label_change(*cc, relabels);
      }
    }
    if (!bb_.has_pending(KsKind::LabelerUpdate, change.node)) bb_.post_ksar(KsKind::LabelerUpdate, change.node);
  }
  for (ElementId p : std::vector<ElementId>(bb_.element(change.node).parents)) post_splitter_if_needed(p);
}

void Scheduler::post_merger_if_needed(Level level) {
  if (level == Level::Vertex || level == Level::Scene) return;
  for (ElementId id : bb_.at(Panel::Data, level)) {
    if (bb_.has_pending(KsKind::Merger, id)) return;
  }
  for (ElementId id : bb_.at(Panel::Data, level)) {
    if (has_merge_partner(bb_, id, config_.ks)) {
      bb_.post_ksar(KsKind::Merger, id);
      return;
    }
  }
}

void Scheduler::post_splitter_if_needed(ElementId group) {
  const auto& g = bb_.element(group);
  if (!g.alive || bb_.has_pending(KsKind::Splitter, group)) return;
  if (!competitor_sets(bb_, group).empty()) bb_.post_ksar(KsKind::Splitter, group);
}

bool Scheduler::seed_eligible(ElementId seed, ElementId model_target) const {
  const auto& s = bb_.element(seed);
  if (!s.alive || !s.label || !s.retained || !s.parents.empty()) return false;
  const auto& kids = bb_.element(model_target).children;
  return std::find(kids.begin(), kids.end(), *s.label) != kids.end();
}

std::optional<ElementId> Scheduler::grouper_target(ElementId seed) const {
  const auto& s = bb_.element(seed);
  if (!s.alive || !s.label || !s.retained) return std::nullopt;
  for (ElementId p : bb_.element(*s.label).parents) {
    if (static_cast<int>(bb_.correspondents(p).size()) < config_.n_g) return p;
  }
  return std::nullopt;
}

void Scheduler::label_level(Level level) {
  std::vector<std::uint32_t> ksar_ids;
  std::vector<ElementId> targets;
  for (const auto& k : bb_.pending()) {
    if (k.ks != KsKind::LabelerInit) continue;
    const auto& e = bb_.element(k.target);
    if (e.alive && e.panel == Panel::Data && e.level == level) {
      ksar_ids.push_back(k.id);
      targets.push_back(k.target);
    }
  }
  // Beliefs at one level depend only on geometry and lower-level labels, so
  // the batch may be computed before any of it is committed.
  const InitBatch beliefs = config_.jobs > 1
                                ? batch_labeler_init_parallel(bb_, targets, config_.ks, config_.jobs)
                                : batch_labeler_init_serial(bb_, targets, config_.ks);
  for (std::size_t i = 0; i < ksar_ids.size(); ++i) {
    if (!budget_left()) return;
    bb_.set_status(ksar_ids[i], KsarStatus::Active);
    int relabels = 0;
    commit_init(targets[i], beliefs[i], relabels);
    bb_.set_status(ksar_ids[i], KsarStatus::Done);
    report_.events.push_back({seq_++, ksar_ids[i], KsKind::LabelerInit, targets[i], phase_, relabels});
    ++report_.firings;
    report_.relabels += static_cast<std::size_t>(relabels);
  }
  post_merger_if_needed(level);
  drain(kInitKinds);
}

void Scheduler::retain(Level level) {
  for (ElementId m : bb_.at(Panel::Model, level)) {
    auto corr = bb_.correspondents(m);
    std::stable_sort(corr.begin(), corr.end(), [&](ElementId a, ElementId b) {
      return bb_.element(a).belief->mass(m) > bb_.element(b).belief->mass(m);
    });
    std::size_t kept = 0;
    for (ElementId id : corr) {
      auto& e = bb_.element(id);
      e.retained = kept < static_cast<std::size_t>(config_.n_g);
      if (e.retained) {
        ++kept;
      } else {
        bb_.cancel_pending(id, KsKind::Grouper);
      }
    }
    report_.max_retained = std::max(report_.max_retained, kept);
  }
}

void Scheduler::grow_level(Level level) {
  const Level up = level_above(level);
  for (ElementId p : bb_.at(Panel::Model, up)) {
    const int deficit = config_.n_g - static_cast<int>(bb_.correspondents(p).size());
    int formed = 0;
    std::set<ElementId> tried;
    while (formed < deficit) {
      std::vector<Ksar> seeds;
      for (const auto& k : bb_.pending()) {
        if (k.ks == KsKind::Grouper && !tried.count(k.target) && seed_eligible(k.target, p)) seeds.push_back(k);
      }
      const auto pick = select_ksar(seeds, phase_, bb_);
      if (!pick) break;
      tried.insert(pick->target);
      const std::size_t before = bb_.at(Panel::Data, up).size();
      if (!fire(pick->id, p)) return;
      if (bb_.at(Panel::Data, up).size() > before) ++formed;
      drain(kRepairKinds);
    }
  }
}

void Scheduler::init_phase() {
  phase_ = Phase::Init;
  // Model-driven walk from the top; data levels are labeled on the way down.
  for (auto it = std::rbegin(kLevels); it != std::rend(kLevels); ++it) {
    const Level level = *it;
    if (level == Level::Vertex) continue;
    if (!bb_.at(Panel::Data, level).empty()) {
      label_level(level);
      retain(level);
    }
    for (ElementId m : bb_.at(Panel::Model, level)) {
      const int deficit = config_.n_g - static_cast<int>(bb_.correspondents(m).size());
      if (deficit >= 1) bb_.post_goal({m, deficit});
    }
  }
  // Bottom-up satisfaction of the goals by grouping.
  for (Level level : {Level::Edge, Level::Face, Level::Object}) {
    grow_level(level);
    label_level(level_above(level));
    retain(level_above(level));
  }
  for (const auto& k : bb_.pending()) {
    if (k.ks == KsKind::Grouper) bb_.set_status(k.id, KsarStatus::Cancelled);
  }
}

void Scheduler::update_phase() {
  phase_ = Phase::Update;
  for (auto it = std::rbegin(kLevels); it != std::rend(kLevels); ++it) {
    if (*it <= Level::Edge) continue;
    for (ElementId id : bb_.at(Panel::Data, *it)) {
      const auto& e = bb_.element(id);
      if (e.label && !e.children.empty() && !bb_.has_pending(KsKind::LabelerUpdate, id)) {
        bb_.post_ksar(KsKind::LabelerUpdate, id);
      }
    }
  }
  drain(kAllKinds);
}

void Scheduler::propagate_phase() {
  phase_ = Phase::Propagate;
  for (Level level : {Level::Face, Level::Object, Level::Scene}) {
    for (ElementId id : bb_.at(Panel::Data, level)) {
      const auto& e = bb_.element(id);
      if (e.label && !e.children.empty() && !bb_.has_pending(KsKind::LabelerPropagate, id)) {
        bb_.post_ksar(KsKind::LabelerPropagate, id);
      }
    }
    drain(kAllKinds);
  }
}

}  // namespace pseiki

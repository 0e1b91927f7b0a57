#include "pseiki/knowledge_sources.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <stdexcept>

#include "pseiki/errors.hpp"

namespace pseiki {

namespace {

const Segment2& segment_of(const Blackboard& bb, ElementId id) {
  const auto* s = bb.element(id).segment();
  if (!s) throw std::invalid_argument("element " + to_string(id) + " has no segment geometry");
  return *s;
}

std::vector<ElementId> alive_children(const Blackboard& bb, ElementId id) {
  std::vector<ElementId> out;
  for (ElementId c : bb.element(id).children) {
    if (bb.element(c).alive) out.push_back(c);
  }
  return out;
}

void collect_model_edges(const Blackboard& bb, ElementId id, std::set<ElementId>& out) {
  const auto& e = bb.element(id);
  if (e.level == Level::Edge) {
    out.insert(id);
    return;
  }
  for (ElementId c : e.children) collect_model_edges(bb, c, out);
}

void collect_data_edges(const Blackboard& bb, ElementId id, std::vector<ElementId>& out) {
  const auto& e = bb.element(id);
  if (!e.alive) return;
  if (e.level == Level::Edge) {
    if (std::find(out.begin(), out.end(), id) == out.end()) out.push_back(id);
    return;
  }
  for (ElementId c : e.children) collect_data_edges(bb, c, out);
}

// (data edge, its model label) for descendants of `data` labeled under `model`.
std::vector<std::pair<ElementId, ElementId>> labeled_leaves(const Blackboard& bb, ElementId data, ElementId model) {
  std::set<ElementId> model_edges;
  collect_model_edges(bb, model, model_edges);
  std::vector<ElementId> edges;
  collect_data_edges(bb, data, edges);
  std::vector<std::pair<ElementId, ElementId>> out;
  for (ElementId e : edges) {
    const auto& el = bb.element(e);
    if (el.label && model_edges.count(*el.label)) out.emplace_back(e, *el.label);
  }
  return out;
}

// Labels of the alive data edges below `data`.
std::set<Label> leaf_labels(const Blackboard& bb, ElementId data) {
  std::vector<ElementId> edges;
  collect_data_edges(bb, data, edges);
  std::set<Label> out;
  for (ElementId e : edges) {
    const auto& el = bb.element(e);
    if (el.label) out.insert(*el.label);
  }
  return out;
}

// Jaccard overlap of data leaf labels with the model node's edges.
double leaf_overlap(const Blackboard& bb, const std::set<Label>& data_leaves, ElementId model) {
  std::set<ElementId> m;
  collect_model_edges(bb, model, m);
  std::size_t inter = 0;
  for (Label l : data_leaves) inter += m.count(l);
  const std::size_t uni = data_leaves.size() + m.size() - inter;
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

bool same_members(std::vector<ElementId> a, std::vector<ElementId> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  return a == b;
}

}  // namespace

std::optional<Label> model_label(const BeliefState& b) {
  std::optional<Label> best;
  double best_mass = 0.0;
  const auto& labels = b.frame().labels();
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == kUnmatched) continue;
    if (b.singleton_masses()[i] > best_mass) {
      best_mass = b.singleton_masses()[i];
      best = labels[i];
    }
  }
  return best;
}

void KsParams::validate() const {
  metric.validate();
  if (!(tau_grow >= 0.0 && tau_grow < metric.alpha)) throw std::invalid_argument("tau_grow must lie in [0, alpha)");
  if (!(merge_angle > 0.0 && merge_gap_px >= 0.0 && merge_offset_px >= 0.0)) {
    throw std::invalid_argument("merge gates must be positive");
  }
  if (max_split_alternatives < 1) throw std::invalid_argument("max_split_alternatives must be >= 1");
}

BeliefState labeler_init(const Blackboard& bb, ElementId target, const KsParams& params) {
  const auto& el = bb.element(target);
  if (el.panel != Panel::Data) throw std::invalid_argument("labeler_init on a model element");
  if (el.level == Level::Vertex) throw EmptyFod("vertex level is not scored");

  std::vector<Label> candidates;
  if (el.fod_preset && el.belief) {
    for (Label l : el.belief->frame().labels()) {
      if (l != kUnmatched) candidates.push_back(l);
    }
  } else if (el.level == Level::Edge) {
    const Segment2& seg = segment_of(bb, target);
    for (ElementId m : bb.at(Panel::Model, Level::Edge)) {
      if ((segment_of(bb, m).midpoint() - seg.midpoint()).norm() <= params.metric.r_max) candidates.push_back(m);
    }
  } else {
    const auto leaves = leaf_labels(bb, target);
    for (ElementId m : bb.at(Panel::Model, el.level)) {
      if (leaf_overlap(bb, leaves, m) > 0.0) candidates.push_back(m);
    }
  }
  if (candidates.empty()) throw EmptyFod("no model element in range of " + to_string(target));

  FrameOfDiscernment frame(candidates);
  frame.add(kUnmatched);
  std::vector<Evidence> experts;
  experts.reserve(candidates.size());
  const double alpha = params.metric.alpha;
  if (el.level == Level::Edge) {
    const Segment2& seg = segment_of(bb, target);
    for (Label m : candidates) {
      const SimDissim sd = similarity(seg, segment_of(bb, m), params.metric);
      experts.push_back({SimpleEvidenceFunction::make(m, sd.sim, sd.dissim), {EvidenceKind::Initial, target, m}});
    }
  } else {
    const auto leaves = leaf_labels(bb, target);
    for (Label m : candidates) {
      const double s = leaf_overlap(bb, leaves, m);
      experts.push_back(
          {SimpleEvidenceFunction::make(m, alpha * s, alpha * (1.0 - s)), {EvidenceKind::Initial, target, m}});
    }
  }
  BeliefState belief(std::move(frame));
  belief.add(experts);
  return belief;
}

std::optional<LabelChange> apply_belief(Blackboard& bb, ElementId target, BeliefState belief) {
  auto& el = bb.element(target);
  el.belief = std::move(belief);
  el.empty_fod = false;
  return refresh_label(bb, target);
}

std::optional<LabelChange> refresh_label(Blackboard& bb, ElementId target) {
  auto& el = bb.element(target);
  const auto before = el.label;
  el.label = el.belief ? model_label(*el.belief) : std::nullopt;
  if (el.label == before) return std::nullopt;
  return LabelChange{target, before, el.label};
}

std::optional<LabelChange> labeler_enlarge_fod(Blackboard& bb, ElementId element, Label parent_label) {
  auto& el = bb.element(element);
  if (!el.belief) return std::nullopt;
  const auto kids = alive_children(bb, parent_label);
  if (!bb.element(element).belief->enlarge(kids)) return std::nullopt;
  return refresh_label(bb, element);
}

std::optional<double> relation_agreement(const Blackboard& bb, ElementId d1, ElementId d2, ElementId m1,
                                         ElementId m2, const MetricParams& params) {
  if (bb.element(d1).level == Level::Edge) {
    return relation_agreement(segment_of(bb, d1), segment_of(bb, d2), segment_of(bb, m1), segment_of(bb, m2),
                              params);
  }
  const auto l1 = labeled_leaves(bb, d1, m1);
  const auto l2 = labeled_leaves(bb, d2, m2);
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& [x, mx] : l1) {
    for (const auto& [y, my] : l2) {
      if (x == y || mx == my) continue;
      sum += relation_agreement(segment_of(bb, x), segment_of(bb, y), segment_of(bb, mx), segment_of(bb, my),
                                params);
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

std::vector<LabelChange> labeler_update(Blackboard& bb, ElementId parent, const KsParams& params) {
  const auto& p = bb.element(parent);
  if (!p.alive || !p.label) return {};
  const auto kids = alive_children(bb, parent);
  const double alpha = params.metric.alpha;

  std::vector<std::pair<ElementId, std::vector<Evidence>>> batches;
  for (ElementId e : kids) {
    const auto& child = bb.element(e);
    if (!child.label || !child.belief) continue;
    std::vector<Evidence> batch;
    for (ElementId s : kids) {
      if (s == e) continue;
      const auto& sib = bb.element(s);
      if (!sib.label || !sib.belief) continue;
      const auto r = relation_agreement(bb, s, e, *sib.label, *child.label, params.metric);
      if (!r) continue;
      const double weight = sib.belief->mass(*sib.label);
      batch.push_back({SimpleEvidenceFunction::make(*child.label, weight * alpha * *r, weight * alpha * (1.0 - *r)),
                       {EvidenceKind::Update, parent, s}});
    }
    if (!batch.empty()) batches.emplace_back(e, std::move(batch));
  }

  std::vector<LabelChange> changes;
  for (auto& [e, batch] : batches) {
    try {
      bb.element(e).belief->add(batch);
    } catch (const TotalConflict&) {
      continue;
    }
    if (auto c = refresh_label(bb, e)) changes.push_back(*c);
  }
  return changes;
}

PropagateResult labeler_propagate(Blackboard& bb, ElementId parent) {
  PropagateResult result;
  const auto& p = bb.element(parent);
  if (!p.alive || !p.label || !p.belief) return result;
  const Label face_label = *p.label;
  const auto& face_kids = bb.element(face_label).children;

  // Support goes to the parent hypothesis that contains the child's label:
  // normally the current one, otherwise the first model parent of the child's
  // label that is in the parent's frame.
  auto focus_for = [&](Label child_label) -> std::optional<Label> {
    if (std::find(face_kids.begin(), face_kids.end(), child_label) != face_kids.end()) return face_label;
    for (ElementId m : bb.element(child_label).parents) {
      if (p.belief->frame().contains(m)) return m;
    }
    return std::nullopt;
  };

  std::map<Label, SimpleEvidenceFunction> totals;
  try {
    for (ElementId e : alive_children(bb, parent)) {
      const auto& child = bb.element(e);
      if (!child.belief || !child.label) continue;
      std::optional<SimpleEvidenceFunction> folded;
      for (const auto& ev : child.belief->evidence_pool()) {
        if (ev.origin.kind != EvidenceKind::Update || ev.origin.parent != parent) continue;
        if (ev.fn.focus != *child.label) continue;
        folded = folded ? combine_same_focus(*folded, ev.fn) : ev.fn;
      }
      if (!folded) continue;
      const auto focus = focus_for(*child.label);
      if (!focus) continue;
      const SimpleEvidenceFunction lifted{*focus, folded->mass_for, folded->mass_against, folded->mass_theta};
      auto it = totals.find(*focus);
      if (it == totals.end()) {
        totals.emplace(*focus, lifted);
      } else {
        it->second = combine_same_focus(it->second, lifted);
      }
    }
    if (totals.empty()) return result;
    std::vector<Evidence> batch;
    for (const auto& [focus, fn] : totals) batch.push_back({fn, {EvidenceKind::Propagated, parent, focus}});
    result.contributed = true;
    bb.element(parent).belief->add(batch);
  } catch (const TotalConflict&) {
    result.conflict = true;
    return result;
  }
  result.change = refresh_label(bb, parent);
  return result;
}

std::vector<ElementId> labeler_relabel(Blackboard& bb, ElementId node, Label new_label,
                                       std::optional<Label> old_label) {
  if (old_label && *old_label == new_label) return {};
  bb.element(node).label = new_label;
  std::vector<Label> frame_labels = alive_children(bb, new_label);
  std::vector<ElementId> reset;
  for (ElementId c : alive_children(bb, node)) {
    auto& child = bb.element(c);
    FrameOfDiscernment frame(frame_labels);
    frame.add(kUnmatched);
    child.belief = BeliefState(std::move(frame));
    child.label.reset();
    child.fod_preset = true;
    bb.cancel_pending(c, KsKind::LabelerInit);
    bb.post_ksar(KsKind::LabelerInit, c);
    reset.push_back(c);
  }
  if (!reset.empty()) bb.post_ksar(KsKind::LabelerUpdate, node);
  return reset;
}

Grouping propose_grouping(const Blackboard& bb, ElementId seed, ElementId model_target, const KsParams& params) {
  const auto& s = bb.element(seed);
  const auto model_kids = alive_children(bb, model_target);
  const std::set<Label> allowed(model_kids.begin(), model_kids.end());
  if (!s.label || !allowed.count(*s.label)) {
    throw std::invalid_argument("grouper seed is not labeled with a child of the model target");
  }

  Grouping g;
  g.model_hypothesis = model_target;
  g.members.push_back(seed);
  std::set<Label> claimed{*s.label};

  auto eligible = [&](const BlackboardElement& c) {
    if (!c.alive || !c.label || !c.retained || c.panel != Panel::Data) return false;
    if (!allowed.count(*c.label) || claimed.count(*c.label)) return false;
    if (c.parents.empty()) return true;
    // A boundary element may sit under one more grouping of a different model node.
    if (c.parents.size() >= 2) return false;
    return std::all_of(c.parents.begin(), c.parents.end(), [&](ElementId p) {
      const auto& pe = bb.element(p);
      const auto claim = pe.label ? pe.label : pe.hypothesis;
      return claim && *claim != model_target;
    });
  };

  const auto pool = bb.at(Panel::Data, s.level);
  while (true) {
    std::optional<ElementId> best;
    double best_score = params.tau_grow;
    for (ElementId c : pool) {
      if (std::find(g.members.begin(), g.members.end(), c) != g.members.end()) continue;
      const auto& ce = bb.element(c);
      if (!eligible(ce)) continue;
      double score = -1.0;
      for (ElementId m : g.members) {
        const auto& me = bb.element(m);
        const auto r = relation_agreement(bb, m, c, *me.label, *ce.label, params.metric);
        if (r) score = std::max(score, params.metric.alpha * *r);
      }
      if (score > best_score) {
        best_score = score;
        best = c;
      }
    }
    if (!best) break;
    g.members.push_back(*best);
    claimed.insert(*bb.element(*best).label);
  }
  return g;
}

std::optional<ElementId> find_identical_grouping(const Blackboard& bb, Level level,
                                                 const std::vector<ElementId>& members) {
  for (ElementId id : bb.at(Panel::Data, level)) {
    if (same_members(alive_children(bb, id), members)) return id;
  }
  return std::nullopt;
}

Grouping grouper(Blackboard& bb, ElementId seed, ElementId model_target, const KsParams& params) {
  Grouping g = propose_grouping(bb, seed, model_target, params);
  const Level up = level_above(bb.element(seed).level);
  if (find_identical_grouping(bb, up, g.members)) return g;
  BlackboardElement parent;
  parent.panel = Panel::Data;
  parent.level = up;
  parent.children = g.members;
  parent.hypothesis = model_target;
  g.parent_level_node = bb.insert_element(std::move(parent));
  return g;
}

std::vector<std::vector<ElementId>> competitor_sets(const Blackboard& bb, ElementId group) {
  std::vector<std::pair<Label, std::vector<ElementId>>> by_label;
  for (ElementId c : alive_children(bb, group)) {
    const auto& el = bb.element(c);
    if (!el.label) continue;
    auto it = std::find_if(by_label.begin(), by_label.end(), [&](const auto& p) { return p.first == *el.label; });
    if (it == by_label.end()) {
      by_label.push_back({*el.label, {c}});
    } else {
      it->second.push_back(c);
    }
  }
  std::vector<std::vector<ElementId>> out;
  for (auto& [l, ids] : by_label) {
    if (ids.size() >= 2) out.push_back(std::move(ids));
  }
  return out;
}

std::vector<Grouping> splitter(Blackboard& bb, ElementId group, const KsParams& params) {
  const auto sets = competitor_sets(bb, group);
  if (sets.empty()) return {};
  const auto members = alive_children(bb, group);
  const auto parents = bb.element(group).parents;
  const Level level = bb.element(group).level;

  // Odometer over the competitor sets; each combination keeps one per set.
  std::vector<std::vector<ElementId>> alternatives;
  std::vector<std::size_t> pick(sets.size(), 0);
  while (alternatives.size() < params.max_split_alternatives) {
    std::vector<ElementId> alt;
    for (ElementId m : members) {
      bool keep = true;
      for (std::size_t i = 0; i < sets.size(); ++i) {
        if (std::find(sets[i].begin(), sets[i].end(), m) != sets[i].end()) keep = (sets[i][pick[i]] == m);
      }
      if (keep) alt.push_back(m);
    }
    alternatives.push_back(std::move(alt));
    std::size_t i = 0;
    for (; i < sets.size(); ++i) {
      if (++pick[i] < sets[i].size()) break;
      pick[i] = 0;
    }
    if (i == sets.size()) break;
  }

  bb.cancel_element(group);
  std::vector<Grouping> out;
  for (auto& alt : alternatives) {
    if (find_identical_grouping(bb, level, alt)) continue;
    BlackboardElement e;
    e.panel = Panel::Data;
    e.level = level;
    e.children = alt;
    e.parents = parents;
    e.hypothesis = bb.element(group).hypothesis;
    Grouping g;
    g.model_hypothesis = e.hypothesis.value_or(ElementId{});
    g.members = alt;
    g.parent_level_node = bb.insert_element(std::move(e));
    out.push_back(std::move(g));
  }
  return out;
}

namespace {

bool edges_mergeable(const Blackboard& bb, const BlackboardElement& a, const BlackboardElement& b,
                     const KsParams& params) {
  if (!a.label || a.label != b.label || !a.parents.empty() || !b.parents.empty()) return false;
  const Segment2& sa = *a.segment();
  const Segment2& sb = *b.segment();
  if (undirected_angle_distance(sa.angle(), sb.angle()) >= params.merge_angle) return false;
  if (projected_gap(sa, sb, sa.direction()) >= params.merge_gap_px) return false;
  const double offset = std::max(distance_to_line(sb.midpoint(), sa), distance_to_line(sa.midpoint(), sb));
  (void)bb;
  return offset < params.merge_offset_px;
}

bool groups_mergeable(const Blackboard& bb, const BlackboardElement& a, const BlackboardElement& b,
                      const KsParams& params) {
  if (!a.label || a.label != b.label) return false;
  const auto ka = alive_children(bb, a.id);
  const auto kb = alive_children(bb, b.id);
  if (same_members(ka, kb)) return false;
  std::vector<ElementId> uni = ka;
  for (ElementId c : kb) {
    if (std::find(uni.begin(), uni.end(), c) == uni.end()) uni.push_back(c);
  }
  std::set<Label> seen;
  for (ElementId c : uni) {
    const auto& el = bb.element(c);
    if (!el.label) continue;
    if (!seen.insert(*el.label).second) return false;
  }
  const bool shared = std::any_of(ka.begin(), ka.end(),
                                  [&](ElementId c) { return std::find(kb.begin(), kb.end(), c) != kb.end(); });
  if (shared) return true;
  if (a.level != Level::Face) return false;
  for (ElementId x : ka) {
    const auto* sx = bb.element(x).segment();
    for (ElementId y : kb) {
      const auto* sy = bb.element(y).segment();
      if (!sx || !sy) continue;
      for (const Vec2& p : {sx->p0(), sx->p1()}) {
        for (const Vec2& q : {sy->p0(), sy->p1()}) {
          if ((p - q).norm() < params.merge_gap_px) return true;
        }
      }
    }
  }
  return false;
}

bool mergeable(const Blackboard& bb, const BlackboardElement& a, const BlackboardElement& b, const KsParams& params) {
  if (!a.alive || !b.alive || a.id == b.id || a.panel != Panel::Data || b.panel != Panel::Data) return false;
  if (a.level != b.level || a.level == Level::Vertex || a.level == Level::Scene) return false;
  return a.level == Level::Edge ? edges_mergeable(bb, a, b, params) : groups_mergeable(bb, a, b, params);
}

ElementId insert_data_vertex(Blackboard& bb, const Vec2& p) {
  BlackboardElement v;
  v.panel = Panel::Data;
  v.level = Level::Vertex;
  v.geometry = p;
  return bb.insert_element(std::move(v));
}

Merge merge_edges(Blackboard& bb, ElementId a, ElementId b) {
  const Segment2 sa = *bb.element(a).segment();
  const Segment2 sb = *bb.element(b).segment();
  const Vec2 axis = sa.direction();
  const Vec2 pts[] = {sa.p0(), sa.p1(), sb.p0(), sb.p1()};
  const Vec2* lo = &pts[0];
  const Vec2* hi = &pts[0];
  for (const Vec2& p : pts) {
    if (p.dot(axis) < lo->dot(axis)) lo = &p;
    if (p.dot(axis) > hi->dot(axis)) hi = &p;
  }
  const Segment2 merged(*lo, *hi);
  const double strength = std::max(bb.element(a).value.value_or(0.0), bb.element(b).value.value_or(0.0));

  auto drop_vertices = [&](ElementId edge) {
    for (ElementId v : std::vector<ElementId>(bb.element(edge).children)) {
      if (bb.element(v).parents.size() == 1) bb.cancel_element(v);
    }
  };
  drop_vertices(a);
  drop_vertices(b);
  bb.cancel_element(a);
  bb.cancel_element(b);

  BlackboardElement e;
  e.panel = Panel::Data;
  e.level = Level::Edge;
  e.geometry = merged;
  e.value = strength;
  e.children = {insert_data_vertex(bb, merged.p0()), insert_data_vertex(bb, merged.p1())};
  return {{a, b}, bb.insert_element(std::move(e))};
}

Merge merge_groups(Blackboard& bb, ElementId a, ElementId b) {
  const auto ka = alive_children(bb, a);
  const auto kb = alive_children(bb, b);
  std::vector<ElementId> uni = ka;
  for (ElementId c : kb) {
    if (std::find(uni.begin(), uni.end(), c) == uni.end()) uni.push_back(c);
  }
  // A subset is absorbed into its superset.
  if (same_members(uni, ka)) {
    bb.cancel_element(b);
    return {{a, b}, a};
  }
  if (same_members(uni, kb)) {
    bb.cancel_element(a);
    return {{a, b}, b};
  }
  std::vector<ElementId> parents = bb.element(a).parents;
  for (ElementId p : bb.element(b).parents) {
    if (std::find(parents.begin(), parents.end(), p) == parents.end()) parents.push_back(p);
  }
  const Level level = bb.element(a).level;
  bb.cancel_element(a);
  bb.cancel_element(b);
  BlackboardElement e;
  e.panel = Panel::Data;
  e.level = level;
  e.children = uni;
  e.parents = parents;
  e.hypothesis = bb.element(a).hypothesis;
  return {{a, b}, bb.insert_element(std::move(e))};
}

}  // namespace

std::vector<Merge> merger(Blackboard& bb, Level level, const KsParams& params) {
  std::vector<Merge> merges;
  bool again = true;
  while (again) {
    again = false;
    const auto ids = bb.at(Panel::Data, level);
    for (std::size_t i = 0; i < ids.size() && !again; ++i) {
      for (std::size_t j = i + 1; j < ids.size() && !again; ++j) {
        if (!mergeable(bb, bb.element(ids[i]), bb.element(ids[j]), params)) continue;
        merges.push_back(level == Level::Edge ? merge_edges(bb, ids[i], ids[j]) : merge_groups(bb, ids[i], ids[j]));
        again = true;
      }
    }
  }
  return merges;
}

bool has_merge_partner(const Blackboard& bb, ElementId element, const KsParams& params) {
  const auto& e = bb.element(element);
  if (!e.alive || e.panel != Panel::Data) return false;
  for (ElementId other : bb.at(Panel::Data, e.level)) {
    if (mergeable(bb, e, bb.element(other), params)) return true;
  }
  return false;
}

}  // namespace pseiki

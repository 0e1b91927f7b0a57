#pragma once

// Labeler, Grouper, Splitter and Merger. Each is a transformation of the
// blackboard fired through a KSAR; the scheduler owns sequencing.

#include <optional>
#include <vector>

#include "pseiki/blackboard.hpp"
#include "pseiki/geometry.hpp"

namespace pseiki {

struct KsParams {
  MetricParams metric;
  double tau_grow = 0.45;                     // on rel_similarity's sim, 0.5 * alpha
  double merge_angle = 3.0 * kPi / 180.0;     // rad
  double merge_gap_px = 8.0;
  double merge_offset_px = 2.0;
  std::size_t max_split_alternatives = 32;

  void validate() const;
};

struct LabelChange {
  ElementId node{};
  std::optional<Label> before;
  std::optional<Label> after;
};

// current_label restricted to model hypotheses: kUnmatched soaks up refuting
// mass but is never a label.
std::optional<Label> model_label(const BeliefState& belief);

// Initial belief for `target` from element-to-model similarity. The frame is
// the preset one after a relabel; otherwise edges use midpoint proximity and
// aggregates use the overlap of their leaf-edge labels with the model
// node's edges. An open-world kUnmatched hypothesis is
// always appended. Throws EmptyFod when no model element qualifies.
BeliefState labeler_init(const Blackboard& bb, ElementId target, const KsParams& params);

// Stores `belief` on `target` and resets its label to the argmax. Returns the
// change when the label moved.
std::optional<LabelChange> apply_belief(Blackboard& bb, ElementId target, BeliefState belief);

// Re-reads the argmax of an element's belief into its label.
std::optional<LabelChange> refresh_label(Blackboard& bb, ElementId target);

// Grows the frame of `element` by the children of `parent_label`.
std::optional<LabelChange> labeler_enlarge_fod(Blackboard& bb, ElementId element, Label parent_label);

// Relational revision of every child of `parent`: each labeled sibling acts
// as an expert on each child's current label.
std::vector<LabelChange> labeler_update(Blackboard& bb, ElementId parent, const KsParams& params);

struct PropagateResult {
  std::optional<LabelChange> change;
  bool conflict = false;
  bool contributed = false;
};

// Pushes the children's relational update bpas up into `parent`'s pool.
PropagateResult labeler_propagate(Blackboard& bb, ElementId parent);

// Re-labeling action: children lose pool and frame, receive the children of
// `new_label` as their frame, and get fresh Labeler-Init KSARs followed by a
// Labeler-Update for `node`. Returns the reset children.
std::vector<ElementId> labeler_relabel(Blackboard& bb, ElementId node, Label new_label,
                                       std::optional<Label> old_label);

// Relational agreement in [0, 1] of data pair (d1, d2) against model pair
// (m1, m2). Edges compare segments directly; aggregates average over their
// labeled descendant edges. Empty when there is nothing to compare.
std::optional<double> relation_agreement(const Blackboard& bb, ElementId d1, ElementId d2, ElementId m1,
                                         ElementId m2, const MetricParams& params);

struct Grouping {
  std::optional<ElementId> parent_level_node;  // empty when discarded as a duplicate
  std::vector<ElementId> members;
  ElementId model_hypothesis{};
};

// Greedy growth of `seed` under `model_target`, without touching the board.
Grouping propose_grouping(const Blackboard& bb, ElementId seed, ElementId model_target, const KsParams& params);

// propose_grouping + commit. An identical existing grouping is discarded.
Grouping grouper(Blackboard& bb, ElementId seed, ElementId model_target, const KsParams& params);

// Alive data element at `level` whose children equal `members` as a set.
std::optional<ElementId> find_identical_grouping(const Blackboard& bb, Level level,
                                                 const std::vector<ElementId>& members);

// Members sharing a label, one list per contested label.
std::vector<std::vector<ElementId>> competitor_sets(const Blackboard& bb, ElementId group);

// Replaces `group` with one alternative per combination of competitors.
// Returns the new groupings; empty when the group has no competitors.
std::vector<Grouping> splitter(Blackboard& bb, ElementId group, const KsParams& params);

struct Merge {
  std::vector<ElementId> constituents;
  ElementId result{};
};

// Repeatedly merges same-label data elements at `level` until no pair
// qualifies. Edges: near-collinear, near-contiguous orphans. Groupings:
// shared or adjacent members with a competitor-free union.
std::vector<Merge> merger(Blackboard& bb, Level level, const KsParams& params);

// Monitor check: is `element` part of a pair merger() would merge?
bool has_merge_partner(const Blackboard& bb, ElementId element, const KsParams& params);

}  // namespace pseiki

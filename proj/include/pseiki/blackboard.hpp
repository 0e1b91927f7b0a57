#pragma once

// Two-panel, five-level element store. Both panels use one record format;
// the data panel additionally carries evidence state. Monitor behaviour
// (posting KSARs when data conditions appear) runs synchronously inside the
// mutating calls.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include "pseiki/ds_core.hpp"
#include "pseiki/geometry.hpp"
#include "pseiki/ids.hpp"

namespace pseiki {

enum class Panel { Model, Data };
enum class Level { Vertex = 0, Edge = 1, Face = 2, Object = 3, Scene = 4 };

inline constexpr Level kLevels[] = {Level::Vertex, Level::Edge, Level::Face, Level::Object, Level::Scene};

const char* to_string(Panel panel);
const char* to_string(Level level);
inline Level level_above(Level l) { return static_cast<Level>(static_cast<int>(l) + 1); }
inline Level level_below(Level l) { return static_cast<Level>(static_cast<int>(l) - 1); }

// Vertices carry a point, edges a segment; higher levels are aggregates of
// their children and carry nothing.
using Geometry = std::variant<std::monostate, Vec2, Segment2>;

struct BlackboardElement {
  ElementId id{};
  Panel panel = Panel::Data;
  Level level = Level::Edge;
  std::vector<ElementId> children;
  std::vector<ElementId> parents;
  Geometry geometry;
  std::optional<double> value;          // edge strength
  std::optional<BeliefState> belief;    // data panel only
  std::optional<Label> label;           // data panel only; never kUnmatched
  std::optional<std::uint32_t> source;  // model panel: index of the generating 3-D edge / face
  std::optional<ElementId> hypothesis;  // data groupings: model node the Grouper formed it for

  bool alive = true;
  bool retained = true;   // survives the per-model-node n_G cut
  bool empty_fod = false; // no model element in range; stays unlabeled
  bool fod_preset = false;// frame fixed by a relabel; Labeler-Init uses it as is

  const Segment2* segment() const { return std::get_if<Segment2>(&geometry); }
};

enum class KsKind { LabelerInit, LabelerUpdate, LabelerPropagate, LabelerRelabel, Grouper, Splitter, Merger };
enum class KsarStatus { Pending, Active, Done, Cancelled };

const char* to_string(KsKind kind);
const char* to_string(KsarStatus status);

struct Ksar {
  std::uint32_t id = 0;
  KsKind ks = KsKind::LabelerInit;
  ElementId target{};
  KsarStatus status = KsarStatus::Pending;
  std::uint64_t created_seq = 0;
  std::optional<Label> new_label;  // relabel
  std::optional<Label> old_label;  // relabel
};

struct Goal {
  ElementId model_node{};
  int deficit = 1;
};

class Blackboard {
 public:
  // Stores `e` and runs the Monitor. e.id == 0 assigns the next free id.
  // Throws BadHierarchy or DuplicateId.
  ElementId insert_element(BlackboardElement e);

  bool contains(ElementId id) const { return index_.count(id) != 0; }
  const BlackboardElement& element(ElementId id) const;
  BlackboardElement& element(ElementId id);
  const std::vector<BlackboardElement>& elements() const { return elements_; }

  // Alive elements at panel + level, insertion order.
  std::vector<ElementId> at(Panel panel, Level level) const;
  // Alive, parentless elements at panel + level, insertion order.
  std::vector<ElementId> orphans(Panel panel, Level level) const;
  // Alive data elements whose current label is `model_node`.
  std::vector<ElementId> correspondents(ElementId model_node) const;
  bool has_data() const;
  std::size_t alive_count() const;

  void link(ElementId parent, ElementId child);
  void unlink(ElementId parent, ElementId child);
  // Marks an element dead, detaches it from parents and children and cancels
  // its pending KSARs.
  void cancel_element(ElementId id);

  // KSAR bookkeeping.
  std::uint32_t post_ksar(KsKind ks, ElementId target, std::optional<Label> new_label = std::nullopt,
                          std::optional<Label> old_label = std::nullopt);
  const std::vector<Ksar>& ksars() const { return ksars_; }
  const Ksar& ksar(std::uint32_t id) const { return ksars_.at(id); }
  std::vector<Ksar> pending() const;
  bool has_pending(KsKind ks, ElementId target) const;
  // Enforces Pending -> Active -> Done and (Pending | Active) -> Cancelled.
  void set_status(std::uint32_t ksar_id, KsarStatus status);
  void cancel_pending(ElementId target, std::optional<KsKind> ks = std::nullopt);

  void post_goal(Goal goal) { goals_.push_back(goal); }
  const std::vector<Goal>& goals() const { return goals_; }

  // One line per alive element: id panel level label top-3 masses.
  std::string dump() const;

 private:
  void check_child(const BlackboardElement& parent, ElementId child_id) const;

  std::vector<BlackboardElement> elements_;
  std::unordered_map<ElementId, std::size_t> index_;
  std::vector<Ksar> ksars_;
  std::vector<Goal> goals_;
  std::uint32_t next_id_ = 1;
  std::uint64_t seq_ = 0;
};

}  // namespace pseiki

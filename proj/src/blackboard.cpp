#include "pseiki/blackboard.hpp"

#include <algorithm>
#include <fmt/format.h>
#include <stdexcept>

#include "pseiki/errors.hpp"

namespace pseiki {

const char* to_string(Panel panel) { return panel == Panel::Model ? "M" : "D"; }

const char* to_string(Level level) {
  switch (level) {
    case Level::Vertex: return "Vertex";
    case Level::Edge: return "Edge";
    case Level::Face: return "Face";
    case Level::Object: return "Object";
    case Level::Scene: return "Scene";
  }
  return "?";
}

const char* to_string(KsKind kind) {
  switch (kind) {
    case KsKind::LabelerInit: return "Labeler-Init";
    case KsKind::LabelerUpdate: return "Labeler-Update";
    case KsKind::LabelerPropagate: return "Labeler-Propagate";
    case KsKind::LabelerRelabel: return "Labeler-Relabel";
    case KsKind::Grouper: return "Grouper";
    case KsKind::Splitter: return "Splitter";
    case KsKind::Merger: return "Merger";
  }
  return "?";
}

const char* to_string(KsarStatus status) {
  switch (status) {
    case KsarStatus::Pending: return "Pending";
    case KsarStatus::Active: return "Active";
    case KsarStatus::Done: return "Done";
    case KsarStatus::Cancelled: return "Cancelled";
  }
  return "?";
}

void Blackboard::check_child(const BlackboardElement& parent, ElementId child_id) const {
  auto it = index_.find(child_id);
  if (it == index_.end()) throw BadHierarchy("child " + to_string(child_id) + " does not exist");
  const auto& child = elements_[it->second];
  if (!child.alive) throw BadHierarchy("child " + to_string(child_id) + " is cancelled");
  if (child.panel != parent.panel) throw BadHierarchy("child on a different panel");
  if (parent.level == Level::Vertex || child.level != level_below(parent.level)) {
    throw BadHierarchy(fmt::format("{} element cannot hold a {} child", to_string(parent.level),
                                   to_string(child.level)));
  }
}

ElementId Blackboard::insert_element(BlackboardElement e) {
  if (e.id.is_auto()) {
    while (contains(ElementId{next_id_})) ++next_id_;
    e.id = ElementId{next_id_++};
  } else if (contains(e.id) || e.id == kUnmatched) {
    throw DuplicateId("element id " + to_string(e.id) + " already in use");
  }
  if (e.panel == Panel::Model && (e.belief || e.label)) {
    throw BadHierarchy("model-panel elements carry no belief or label");
  }
  for (ElementId c : e.children) check_child(e, c);
  {
    auto sorted = e.children;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
      throw BadHierarchy("repeated child");
    }
  }
  for (ElementId p : e.parents) {
    auto it = index_.find(p);
    if (it == index_.end()) throw BadHierarchy("parent " + to_string(p) + " does not exist");
    const auto& parent = elements_[it->second];
    if (parent.panel != e.panel || e.level == Level::Scene || parent.level != level_above(e.level)) {
      throw BadHierarchy("parent at the wrong panel or level");
    }
  }
  const ElementId id = e.id;
  const auto parents = e.parents;
  const auto children = e.children;
  elements_.push_back(std::move(e));
  index_[id] = elements_.size() - 1;
  for (ElementId p : parents) element(p).children.push_back(id);
  for (ElementId c : children) {
    auto& child = element(c);
    child.parents.push_back(id);
    cancel_pending(c, KsKind::Grouper);
  }

  const auto& stored = element(id);
  if (stored.panel == Panel::Data && stored.level != Level::Vertex) {
    post_ksar(KsKind::LabelerInit, id);
    if (stored.parents.empty() && stored.level != Level::Scene) post_ksar(KsKind::Grouper, id);
  }
  return id;
}

const BlackboardElement& Blackboard::element(ElementId id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw UnknownElement("unknown element " + to_string(id));
  return elements_[it->second];
}

BlackboardElement& Blackboard::element(ElementId id) {
  auto it = index_.find(id);
  if (it == index_.end()) throw UnknownElement("unknown element " + to_string(id));
  return elements_[it->second];
}

std::vector<ElementId> Blackboard::at(Panel panel, Level level) const {
  std::vector<ElementId> out;
  for (const auto& e : elements_) {
    if (e.alive && e.panel == panel && e.level == level) out.push_back(e.id);
  }
  return out;
}

std::vector<ElementId> Blackboard::orphans(Panel panel, Level level) const {
  std::vector<ElementId> out;
  for (const auto& e : elements_) {
    if (e.alive && e.panel == panel && e.level == level && e.parents.empty()) out.push_back(e.id);
  }
  return out;
}

std::vector<ElementId> Blackboard::correspondents(ElementId model_node) const {
  const auto& m = element(model_node);
  std::vector<ElementId> out;
  for (const auto& e : elements_) {
    if (e.alive && e.panel == Panel::Data && e.level == m.level && e.label == model_node) out.push_back(e.id);
  }
  return out;
}

bool Blackboard::has_data() const {
  return std::any_of(elements_.begin(), elements_.end(),
                     [](const BlackboardElement& e) { return e.alive && e.panel == Panel::Data; });
}

std::size_t Blackboard::alive_count() const {
  return static_cast<std::size_t>(
      std::count_if(elements_.begin(), elements_.end(), [](const BlackboardElement& e) { return e.alive; }));
}

void Blackboard::link(ElementId parent_id, ElementId child_id) {
  auto& parent = element(parent_id);
  check_child(parent, child_id);
  auto& child = element(child_id);
  if (std::find(parent.children.begin(), parent.children.end(), child_id) != parent.children.end()) return;
  parent.children.push_back(child_id);
  child.parents.push_back(parent_id);
  cancel_pending(child_id, KsKind::Grouper);
}

void Blackboard::unlink(ElementId parent_id, ElementId child_id) {
  auto& parent = element(parent_id);
  auto& child = element(child_id);
  std::erase(parent.children, child_id);
  std::erase(child.parents, parent_id);
}

void Blackboard::cancel_element(ElementId id) {
  auto& e = element(id);
  if (!e.alive) return;
  for (ElementId p : std::vector<ElementId>(e.parents)) unlink(p, id);
  for (ElementId c : std::vector<ElementId>(e.children)) unlink(id, c);
  element(id).alive = false;
  cancel_pending(id);
}

std::uint32_t Blackboard::post_ksar(KsKind ks, ElementId target, std::optional<Label> new_label,
                                    std::optional<Label> old_label) {
  if (!contains(target)) throw UnknownElement("KSAR target " + to_string(target) + " does not exist");
  Ksar k;
  k.id = static_cast<std::uint32_t>(ksars_.size());
  k.ks = ks;
  k.target = target;
  k.created_seq = seq_++;
  k.new_label = new_label;
  k.old_label = old_label;
  ksars_.push_back(k);
  return k.id;
}

std::vector<Ksar> Blackboard::pending() const {
  std::vector<Ksar> out;
  for (const auto& k : ksars_) {
    if (k.status == KsarStatus::Pending) out.push_back(k);
  }
  return out;
}

bool Blackboard::has_pending(KsKind ks, ElementId target) const {
  return std::any_of(ksars_.begin(), ksars_.end(), [&](const Ksar& k) {
    return k.status == KsarStatus::Pending && k.ks == ks && k.target == target;
  });
}

void Blackboard::set_status(std::uint32_t ksar_id, KsarStatus status) {
  Ksar& k = ksars_.at(ksar_id);
  const bool ok = (k.status == KsarStatus::Pending && (status == KsarStatus::Active || status == KsarStatus::Cancelled)) ||
                  (k.status == KsarStatus::Active && (status == KsarStatus::Done || status == KsarStatus::Cancelled));
  if (!ok) {
    throw std::logic_error(fmt::format("KSAR {}: illegal transition {} -> {}", ksar_id, to_string(k.status),
                                       to_string(status)));
  }
  k.status = status;
}

void Blackboard::cancel_pending(ElementId target, std::optional<KsKind> ks) {
  for (auto& k : ksars_) {
    if (k.status == KsarStatus::Pending && k.target == target && (!ks || k.ks == *ks)) {
      k.status = KsarStatus::Cancelled;
    }
  }
}

std::string Blackboard::dump() const {
  std::string out;
  for (const auto& e : elements_) {
    if (!e.alive) continue;
    out += fmt::format("{} {} {} {}", e.id.value, to_string(e.panel), to_string(e.level),
                       e.label ? to_string(*e.label) : std::string("-"));
    if (e.belief) {
      for (const auto& [l, m] : e.belief->top(3)) out += fmt::format(" {}:{:.6f}", to_string(l), m);
    }
    out += '\n';
  }
  return out;
}

}  // namespace pseiki

#pragma once

// Three-phase control loop over the blackboard: model-driven initialization
// with the n_G bound, top-down relational updating, bottom-up propagation.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pseiki/blackboard.hpp"
#include "pseiki/knowledge_sources.hpp"

namespace pseiki {

enum class Phase { Init, Update, Propagate };
const char* to_string(Phase phase);

struct SchedulerConfig {
  int n_g = 3;
  std::size_t max_firings = 0;  // 0: 50 * element count at run start
  KsParams ks;
  int jobs = 1;                 // worker threads for batched Labeler-Init; 1 is the serial kernel

  void validate() const;
};

struct FiringEvent {
  std::uint64_t seq = 0;
  std::uint32_t ksar = 0;
  KsKind ks = KsKind::LabelerInit;
  ElementId target{};
  Phase phase = Phase::Init;
  int relabels = 0;
};

struct RunReport {
  std::vector<FiringEvent> events;
  std::vector<ElementId> conflicts;  // propagation hit total conflict
  bool budget_exceeded = false;      // FiringBudgetExceeded diagnostic
  std::size_t firings = 0;
  std::size_t relabels = 0;
  // Largest number of retained correspondents seen for one model node at
  // retention time.
  std::size_t max_retained = 0;

  std::string log() const;
};

// Deterministic KSAR choice: Splitter = Merger > phase-appropriate Labeler >
// Grouper; Grouper seeds by strongest attachment; otherwise oldest first.
std::optional<Ksar> select_ksar(std::span<const Ksar> pending, Phase phase, const Blackboard& bb);

class Scheduler {
 public:
  Scheduler(Blackboard& bb, SchedulerConfig config);

  RunReport run();

  void init_phase();
  void update_phase();
  void propagate_phase();

  const RunReport& report() const { return report_; }

 private:
  bool fire(std::uint32_t ksar_id, std::optional<ElementId> model_target = std::nullopt);
  void drain(unsigned kinds);
  void label_level(Level level);
  void retain(Level level);
  void grow_level(Level level);

  void on_label_change(const LabelChange& change, int& relabels);
  void fire_labeler_init(const Ksar& k, int& relabels);
  void commit_init(ElementId target, std::optional<BeliefState> belief, int& relabels);
  void post_merger_if_needed(Level level);
  void post_splitter_if_needed(ElementId group);
  std::optional<ElementId> grouper_target(ElementId seed) const;
  bool seed_eligible(ElementId seed, ElementId model_target) const;
  bool budget_left();

  Blackboard& bb_;
  SchedulerConfig config_;
  Phase phase_ = Phase::Init;
  RunReport report_;
  std::uint64_t seq_ = 0;
};

// Convenience wrapper: constructs a Scheduler and runs all three phases.
RunReport run(Blackboard& bb, const SchedulerConfig& config);

}  // namespace pseiki

#pragma once

// Batched Labeler-Init over one blackboard level. The serial kernel is the
// reference; the OpenMP kernel must return identical beliefs in the same
// order. Both only read the blackboard.

#include <optional>
#include <span>
#include <vector>

#include "pseiki/blackboard.hpp"
#include "pseiki/knowledge_sources.hpp"

namespace pseiki {

// One entry per target; empty when the target's FOD is empty.
using InitBatch = std::vector<std::optional<BeliefState>>;

InitBatch batch_labeler_init_serial(const Blackboard& bb, std::span<const ElementId> targets,
                                    const KsParams& params);

// Mass observers are thread-local, so bpas built on worker threads are not
// reported. Use the serial kernel when instrumenting.
InitBatch batch_labeler_init_parallel(const Blackboard& bb, std::span<const ElementId> targets,
                                      const KsParams& params, int jobs);

}  // namespace pseiki

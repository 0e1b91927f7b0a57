#include "pseiki/kernels.hpp"

#include <exception>

#include "pseiki/errors.hpp"

namespace pseiki {

namespace {

std::optional<BeliefState> init_one(const Blackboard& bb, ElementId target, const KsParams& params) {
  try {
    return labeler_init(bb, target, params);
  } catch (const EmptyFod&) {
    return std::nullopt;
  }
}

}  // namespace

InitBatch batch_labeler_init_serial(const Blackboard& bb, std::span<const ElementId> targets,
                                    const KsParams& params) {
  InitBatch out;
  out.reserve(targets.size());
  for (ElementId t : targets) out.push_back(init_one(bb, t, params));
  return out;
}

InitBatch batch_labeler_init_parallel(const Blackboard& bb, std::span<const ElementId> targets,
                                      const KsParams& params, int jobs) {
  InitBatch out(targets.size());
  std::exception_ptr failure;
  const long n = static_cast<long>(targets.size());
#pragma omp parallel for schedule(static) num_threads(jobs > 0 ? jobs : 1)
  for (long i = 0; i < n; ++i) {
    try {
      out[static_cast<std::size_t>(i)] = init_one(bb, targets[static_cast<std::size_t>(i)], params);
    } catch (...) {
#pragma omp critical(pseiki_kernel_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

}  // namespace pseiki

#pragma once

#include <functional>
#include <string>

#include "kpstream/params.hpp"
#include "kpstream/tape.hpp"

namespace kpstream {

/// Builds a scalar loss on the given tape from the current parameter values.
/// Must be deterministic: any noise is frozen by the caller.
using LossBuilder = std::function<ad::Var(ad::Tape&)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
  Eigen::Index worst_index = -1;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t probes = 0;
};

/// Compares reverse-mode gradients against central differences
/// (L(p + h) - L(p - h)) / 2h at `probe_count` randomly chosen parameter entries
/// (every entry when probe_count <= 0 or exceeds the parameter count).
/// Relative error is |a - n| / max(|a|, |n|, 1e-8). Parameter values are restored.
GradCheckResult grad_check(const LossBuilder& loss, ParamStore& params, int probe_count, Rng& rng,
                           double h = 1e-5);

}  // namespace kpstream

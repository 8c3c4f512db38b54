#pragma once

#include <functional>
#include <span>

#include "inflect/autodiff.hpp"

namespace inflect {

/// Builds a fresh graph and returns its scalar loss.
using LossBuilder = std::function<Var(Graph&)>;

struct GradCheckResult {
  double max_relative_error = 0.0;
  Index entries_checked = 0;
  std::string worst_param;
  Index worst_index = -1;
};

/// Compares analytic gradients of `params` against central differences.
///
/// Relative error per entry is |a - c| / max(|a|, |c|, 1e-12). Every entry of
/// every listed parameter is perturbed (pass `max_entries_per_param` to cap
/// the count; entries are then taken at an even stride). Parameters are
/// restored and left with their original trainable flags and gradients.
/// Throws StateError if the graph is stochastic (dropout active).
GradCheckResult finite_diff_check(const LossBuilder& build, std::span<Param* const> params, double eps = 1e-5,
                                  Index max_entries_per_param = -1);

}  // namespace inflect

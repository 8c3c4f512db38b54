#include "inflect/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace inflect {

namespace {

double evaluate(const LossBuilder& build) {
  Graph g;
  return build(g).value()[0];
}

}  // namespace

GradCheckResult finite_diff_check(const LossBuilder& build, std::span<Param* const> params, double eps,
                                  Index max_entries_per_param) {
  if (!(eps > 0.0)) throw InvalidInput("finite_diff_check: eps must be positive");

  std::vector<bool> was_trainable;
  std::vector<std::optional<Vector<double>>> saved_grads;
  for (Param* p : params) {
    was_trainable.push_back(p->trainable);
    saved_grads.push_back(p->value.has_grad() ? std::optional(p->value.grad()) : std::nullopt);
    p->trainable = true;
    p->value.ensure_grad().setZero();
  }

  auto restore = [&] {
    for (std::size_t i = 0; i < params.size(); ++i) {
      params[i]->trainable = was_trainable[i];
      if (saved_grads[i]) {
        params[i]->value.grad() = *saved_grads[i];
      } else {
        params[i]->value.drop_grad();
      }
    }
  };

  GradCheckResult result;
  try {
    std::vector<Vector<double>> analytic;
    {
      Graph g;
      Var loss = build(g);
      if (g.stochastic()) throw StateError("finite_diff_check: graph contains active dropout");
      g.backward(loss);
    }
    for (Param* p : params) analytic.push_back(p->value.grad());

    for (std::size_t k = 0; k < params.size(); ++k) {
      Param& p = *params[k];
      const Index n = p.size();
      const Index count = max_entries_per_param < 0 ? n : std::min(n, max_entries_per_param);
      for (Index c = 0; c < count; ++c) {
        const Index i = count == n ? c : (c * n) / count;
        const double original = p.value[i];
        // Divide by the step actually realised in floating point, not 2·eps.
        const double hi = original + eps, lo = original - eps;
        p.value[i] = hi;
        const double plus = evaluate(build);
        p.value[i] = lo;
        const double minus = evaluate(build);
        p.value[i] = original;
        const double central = (plus - minus) / (hi - lo);
        const double a = analytic[k][i];
        const double err = std::abs(a - central) / std::max({std::abs(a), std::abs(central), 1e-12});
        ++result.entries_checked;
        if (err > result.max_relative_error || result.worst_index < 0) {
          result.max_relative_error = std::max(result.max_relative_error, err);
          if (err >= result.max_relative_error) {
            result.worst_param = p.name;
            result.worst_index = i;
          }
        }
      }
    }
  } catch (...) {
    restore();
    throw;
  }
  restore();
  return result;
}

}  // namespace inflect

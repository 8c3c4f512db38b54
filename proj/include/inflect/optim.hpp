#pragma once

#include <vector>

#include "inflect/autodiff.hpp"

namespace inflect {

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

/// Adam with decoupled weight decay and a fixed learning rate. Only
/// parameters that are trainable at step time are touched.
class AdamW {
 public:
  AdamW(std::vector<Param*> params, AdamWConfig config);

  void zero_grad();
  void step();
  long steps_taken() const { return t_; }

 private:
  std::vector<Param*> params_;
  std::vector<Vector<double>> m_;
  std::vector<Vector<double>> v_;
  AdamWConfig config_;
  long t_ = 0;
};

}  // namespace inflect

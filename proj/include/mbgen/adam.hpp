#pragma once

#include <cstddef>
#include <vector>

#include "mbgen/tape.hpp"

namespace mbgen {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Standard Adam. Moment state lives here, one slot per registered parameter,
// and persists across steps.
class Adam {
 public:
  Adam(std::vector<Parameter*> params, AdamConfig cfg);

  // Applies one update from the accumulated gradients, then zeroes them.
  // A non-finite gradient aborts before any parameter is modified.
  void step();

  std::size_t steps_taken() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  std::vector<Parameter*> params_;
  std::vector<Tensor> m_, v_;
  AdamConfig cfg_;
  std::size_t t_ = 0;
};

}  // namespace mbgen

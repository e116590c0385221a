#pragma once

#include "ceae/nn.hpp"

namespace ceae::nn {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction. State is serialized into checkpoints, so the
/// moment arrays and the timestep are public.
class Adam {
 public:
  Adam() = default;
  Adam(AdamConfig cfg, const ParamStore& store);

  /// Applies one update. Non-finite gradients reject the step (parameters
  /// untouched) with a NumericError naming the offending array.
  void step(ParamStore& store, const std::vector<Mat>& grads);

  AdamConfig cfg;
  long long t = 0;
  std::vector<Mat> m;
  std::vector<Mat> v;
};

}  // namespace ceae::nn

#pragma once

#include <vector>

#include "gblab/types.hpp"

namespace gblab {

// Bias-corrected Adam over a group of dense parameters. Distinct states are
// distinct groups and never interact.
struct AdamConfig {
  double lr = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class AdamState {
 public:
  explicit AdamState(AdamConfig config = {}) : config_(config) {}

  // Applies one update in place; moment buffers are created on first use and
  // must keep matching shapes afterwards. The step counter advances even for
  // all-zero gradients.
  void step(std::vector<Mat*> params, const std::vector<const Mat*>& grads);

  long long steps() const { return t_; }
  const AdamConfig& config() const { return config_; }

 private:
  AdamConfig config_;
  long long t_ = 0;
  std::vector<Mat> m_, v_;
};

}  // namespace gblab

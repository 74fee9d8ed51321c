// Copyright 2026 The essencekit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "essencekit/core.hpp"

namespace essencekit {

struct AdamConfig {
  double learning_rate = 0.2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam over a flat parameter vector.
class Adam {
 public:
  Adam(AdamConfig config, Eigen::Index size);

  void step(Vector& params, const Eigen::Ref<const Vector>& grad);
  long steps() const noexcept { return t_; }

 private:
  AdamConfig config_;
  Vector m_;
  Vector v_;
  long t_ = 0;
};

}  // namespace essencekit

// Copyright 2026 The essencekit Authors
// SPDX-License-Identifier: Apache-2.0

#include "essencekit/adam.hpp"

#include <cmath>

namespace essencekit {

Adam::Adam(AdamConfig config, Eigen::Index size)
    : config_(config), m_(Vector::Zero(size)), v_(Vector::Zero(size)) {
  if (!(config_.learning_rate > 0.0)) raise(ErrorCode::InvalidConfig, "learning rate must be positive");
  if (!(config_.beta1 >= 0.0 && config_.beta1 < 1.0) || !(config_.beta2 >= 0.0 && config_.beta2 < 1.0)) {
    raise(ErrorCode::InvalidConfig, "Adam betas must lie in [0, 1)");
  }
  if (!(config_.eps > 0.0)) raise(ErrorCode::InvalidConfig, "Adam eps must be positive");
}

void Adam::step(Vector& params, const Eigen::Ref<const Vector>& grad) {
  if (grad.size() != params.size() || params.size() != m_.size()) raise(ErrorCode::ShapeMismatch, "Adam size mismatch");
  ++t_;
  m_ = config_.beta1 * m_ + (1.0 - config_.beta1) * grad;
  v_ = config_.beta2 * v_ + (1.0 - config_.beta2) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  const double step = config_.learning_rate / c1;
  params.array() -= step * m_.array() / ((v_.array() / c2).sqrt() + config_.eps);
}

}  // namespace essencekit

// Copyright 2026 The essencekit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "essencekit/backends.hpp"
#include "essencekit/losses.hpp"

namespace essencekit {

enum class InitMode { Noise, TargetInversion };

std::string_view to_string(InitMode mode) noexcept;
InitMode init_mode_from_string(std::string_view name);

struct OptimizerConfig {
  int iterations = 1000;
  double learning_rate = 0.2;
  int batch_size = 4;
  LossWeights weights;
  InitMode init_mode = InitMode::Noise;
  std::uint64_t seed = 0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double init_noise_sigma = 1e-3;
  // 0 disables; otherwise stop after this many steps without a new best total.
  int early_stop_patience = 0;

  void validate() const;
};

void to_json(nlohmann::json& j, const OptimizerConfig& c);
void from_json(const nlohmann::json& j, OptimizerConfig& c);

struct OptimizationTrace {
  // Loss at the iterate before each Adam step.
  std::vector<LossBreakdown> steps;
  LossBreakdown final;
  double wall_seconds = 0.0;
  std::string essence_digest;

  std::vector<double> running_min_total() const;
  nlohmann::json to_json() const;
};

struct EssenceResult {
  EssenceVector essence;
  OptimizationTrace trace;
};

// Draws a fixed batch of n distinct latents from the pool.
SourceBatch sample_source_batch(std::span<const LatentCode> pool, std::size_t n, std::uint64_t seed);

// Adam on the combined objective with the source batch held fixed.
EssenceResult optimize_essence(const ImageTensor& target, const SourceBatch& sources, const Generator& g,
                               const SemanticEncoder& c, const Inverter* inverter, const OptimizerConfig& cfg);

// G(z + b).
ImageTensor apply_essence(const LatentCode& z, const EssenceVector& b, const Generator& g);

}  // namespace essencekit

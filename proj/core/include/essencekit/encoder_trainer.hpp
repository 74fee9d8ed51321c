// Copyright 2026 The essencekit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "essencekit/backends.hpp"
#include "essencekit/losses.hpp"

namespace essencekit {

struct EncoderTrainConfig {
  double learning_rate = 1e-4;
  int iterations = 3000;
  int targets_per_step = 1;
  int source_batch = 5;
  LossWeights weights;
  std::size_t train_set_size = 200;
  std::size_t eval_set_size = 50;
  std::uint64_t seed = 0;
  int eval_every = 500;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  void validate() const;
};

void to_json(nlohmann::json& j, const EncoderTrainConfig& c);
void from_json(const nlohmann::json& j, EncoderTrainConfig& c);

struct EvalPoint {
  int step = 0;
  double mean_objective = 0.0;
};

/// A fine-tuned inverter that maps a target image straight to its essence.
/// Generator and semantic encoder are shared and never modified.
class EssenceEncoder {
 public:
  EssenceEncoder(std::unique_ptr<TrainableInverter> inverter, std::shared_ptr<const Generator> g,
                 std::shared_ptr<const SemanticEncoder> c, nlohmann::json provenance);

  EssenceVector extract(const ImageTensor& target) const;

  const TrainableInverter& inverter() const noexcept { return *inverter_; }
  const nlohmann::json& provenance() const noexcept { return provenance_; }
  const std::vector<EvalPoint>& eval_log() const noexcept { return eval_log_; }
  void set_eval_log(std::vector<EvalPoint> log) { eval_log_ = std::move(log); }

 private:
  std::unique_ptr<TrainableInverter> inverter_;
  std::shared_ptr<const Generator> g_;
  std::shared_ptr<const SemanticEncoder> c_;
  nlohmann::json provenance_;
  std::string config_digest_;
  std::vector<EvalPoint> eval_log_;
};

// Mean combined objective over targets, with b = inverter(target) and one
// fixed source batch.
double mean_encoder_objective(const Inverter& inverter, std::span<const ImageTensor> targets,
                              const SourceBatch& sources, const Generator& g, const SemanticEncoder& c,
                              const LossWeights& w);

/// Fine-tunes a copy of `pretrained`. Each step draws targets_per_step
/// targets and a fresh batch of source_batch latents from the pool, sets
/// b = inverter(target) and takes one Adam step on the inverter parameters.
/// When eval targets are given, the held-out mean objective is logged every
/// eval_every steps against a fixed batch drawn from the pool.
EssenceEncoder finetune_essence_encoder(const Inverter& pretrained, std::span<const ImageTensor> train_targets,
                                        std::span<const LatentCode> source_pool, std::shared_ptr<const Generator> g,
                                        std::shared_ptr<const SemanticEncoder> c, const EncoderTrainConfig& cfg,
                                        std::span<const ImageTensor> eval_targets = {});

// Fixed held-out batch used for evaluation logging.
SourceBatch eval_source_batch(std::span<const LatentCode> pool, const EncoderTrainConfig& cfg);

// "ESKC1" | u64 LE count | count float64 LE, plus a JSON provenance sidecar.
void save_encoder_checkpoint(const std::filesystem::path& path, const EssenceEncoder& encoder,
                             const BackendSet& backends);
EssenceEncoder load_encoder_checkpoint(const std::filesystem::path& path, const BackendSet& backends);

}  // namespace essencekit

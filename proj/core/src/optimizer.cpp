// Copyright 2026 The essencekit Authors
// SPDX-License-Identifier: Apache-2.0

#include "essencekit/optimizer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "essencekit/adam.hpp"
#include "essencekit/digest.hpp"

namespace essencekit {

std::string_view to_string(InitMode mode) noexcept {
  return mode == InitMode::Noise ? "noise" : "inversion";
}

InitMode init_mode_from_string(std::string_view name) {
  if (name == "noise") return InitMode::Noise;
  if (name == "inversion" || name == "target_inversion") return InitMode::TargetInversion;
  raise(ErrorCode::InvalidConfig, "unknown init mode '" + std::string(name) + "'");
}

void OptimizerConfig::validate() const {
  if (iterations < 0) raise(ErrorCode::InvalidConfig, "iterations must be >= 0");
  if (!(learning_rate > 0.0)) raise(ErrorCode::InvalidConfig, "learning rate must be positive");
  if (batch_size < 2) {
    raise(ErrorCode::BatchTooSmall, "batch size must be >= 2 for the consistency term, got " + std::to_string(batch_size));
  }
  if (!(init_noise_sigma > 0.0)) raise(ErrorCode::InvalidConfig, "init noise sigma must be positive");
  if (early_stop_patience < 0) raise(ErrorCode::InvalidConfig, "early stop patience must be >= 0");
  weights.validate();
}

void to_json(nlohmann::json& j, const OptimizerConfig& c) {
  j = {
      {"iterations", c.iterations},
      {"learning_rate", c.learning_rate},
      {"batch_size", c.batch_size},
      {"weights", c.weights},
      {"init_mode", std::string(to_string(c.init_mode))},
      {"seed", c.seed},
      {"adam_beta1", c.adam_beta1},
      {"adam_beta2", c.adam_beta2},
      {"adam_eps", c.adam_eps},
      {"init_noise_sigma", c.init_noise_sigma},
      {"early_stop_patience", c.early_stop_patience},
  };
}

void from_json(const nlohmann::json& j, OptimizerConfig& c) {
  c.iterations = j.value("iterations", c.iterations);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.batch_size = j.value("batch_size", c.batch_size);
  if (j.contains("weights")) j.at("weights").get_to(c.weights);
  if (j.contains("init_mode")) c.init_mode = init_mode_from_string(j.at("init_mode").get<std::string>());
  c.seed = j.value("seed", c.seed);
  c.adam_beta1 = j.value("adam_beta1", c.adam_beta1);
  c.adam_beta2 = j.value("adam_beta2", c.adam_beta2);
  c.adam_eps = j.value("adam_eps", c.adam_eps);
  c.init_noise_sigma = j.value("init_noise_sigma", c.init_noise_sigma);
  c.early_stop_patience = j.value("early_stop_patience", c.early_stop_patience);
}

std::vector<double> OptimizationTrace::running_min_total() const {
  std::vector<double> out;
  out.reserve(steps.size());
  double best = std::numeric_limits<double>::infinity();
  for (const auto& s : steps) {
    best = std::min(best, s.total);
    out.push_back(best);
  }
  return out;
}

nlohmann::json OptimizationTrace::to_json() const {
  return {{"steps", steps}, {"final", final}, {"wall_seconds", wall_seconds}, {"essence_digest", essence_digest}};
}

SourceBatch sample_source_batch(std::span<const LatentCode> pool, std::size_t n, std::uint64_t seed) {
  if (n < 1) raise(ErrorCode::EmptyBatch, "cannot sample an empty batch");
  if (pool.size() < n) {
    raise(ErrorCode::BatchTooSmall, "source pool has " + std::to_string(pool.size()) + " latents, need " + std::to_string(n));
  }
  std::vector<std::size_t> idx(pool.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  // Partial Fisher-Yates; only the first n slots are drawn.
  for (std::size_t i = 0; i < n; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  std::vector<LatentCode> chosen;
  chosen.reserve(n);
  for (std::size_t i = 0; i < n; ++i) chosen.push_back(pool[idx[i]]);
  return SourceBatch(std::move(chosen), "seed:" + std::to_string(seed));
}

EssenceResult optimize_essence(const ImageTensor& target, const SourceBatch& sources, const Generator& g,
                               const SemanticEncoder& c, const Inverter* inverter, const OptimizerConfig& cfg) {
  cfg.validate();
  if (sources.size() != static_cast<std::size_t>(cfg.batch_size)) {
    raise(ErrorCode::InvalidConfig, "source batch has " + std::to_string(sources.size()) + " latents, config N = " +
                                        std::to_string(cfg.batch_size));
  }
  const auto start = std::chrono::steady_clock::now();
  const Objective obj(g, c, target, sources, cfg.weights);
  const auto shape = g.latent_shape();

  Vector b;
  if (cfg.init_mode == InitMode::TargetInversion) {
    if (inverter == nullptr) raise(ErrorCode::MissingInverter, "inversion init requested without an inverter");
    const auto z = inverter->invert(target);
    if (z.space_id() != g.space_id()) raise(ErrorCode::SpaceMismatch, "inverter is not paired with the generator");
    b = z.data();
  } else {
    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> normal(0.0, cfg.init_noise_sigma);
    b.resize(static_cast<Eigen::Index>(shape.size()));
    for (auto& v : b) v = normal(rng);
  }

  Adam adam({cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps}, b.size());
  OptimizationTrace trace;
  trace.steps.reserve(static_cast<std::size_t>(cfg.iterations));
  double best = std::numeric_limits<double>::infinity();
  int since_best = 0;
  Vector grad;
  for (int it = 0; it < cfg.iterations; ++it) {
    const auto loss = obj.evaluate(b, &grad);
    if (!std::isfinite(loss.total) || !grad.allFinite()) {
      raise(ErrorCode::NumericFailure, "non-finite loss at iteration " + std::to_string(it));
    }
    trace.steps.push_back(loss);
    if (cfg.early_stop_patience > 0) {
      if (loss.total < best) {
        best = loss.total;
        since_best = 0;
      } else if (++since_best >= cfg.early_stop_patience) {
        break;
      }
    }
    adam.step(b, grad);
  }
  trace.final = obj.evaluate(b);
  if (!std::isfinite(trace.final.total)) raise(ErrorCode::NumericFailure, "non-finite final loss");

  const nlohmann::json cfg_json = cfg;
  Provenance prov{EssenceMethod::Optimizer, digest_of(target), sha256_hex(cfg_json.dump())};
  EssenceVector essence(shape, std::move(b), g.space_id(), std::move(prov));
  trace.essence_digest = digest_of(essence.data());
  trace.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {std::move(essence), std::move(trace)};
}

ImageTensor apply_essence(const LatentCode& z, const EssenceVector& b, const Generator& g) { return g.decode(z + b); }

}  // namespace essencekit

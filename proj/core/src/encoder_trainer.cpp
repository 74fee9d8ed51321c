// Copyright 2026 The essencekit Authors
// SPDX-License-Identifier: Apache-2.0

#include "essencekit/encoder_trainer.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <numeric>
#include <optional>
#include <random>

#include "essencekit/adam.hpp"
#include "essencekit/digest.hpp"
#include "essencekit/essv.hpp"
#include "essencekit/optimizer.hpp"

namespace essencekit {

void EncoderTrainConfig::validate() const {
  if (iterations < 0) raise(ErrorCode::InvalidConfig, "iterations must be >= 0");
  if (!(learning_rate > 0.0)) raise(ErrorCode::InvalidConfig, "learning rate must be positive");
  if (targets_per_step < 1) raise(ErrorCode::InvalidConfig, "targets_per_step must be >= 1");
  if (source_batch < 2) raise(ErrorCode::BatchTooSmall, "source batch must be >= 2, got " + std::to_string(source_batch));
  if (eval_every < 1) raise(ErrorCode::InvalidConfig, "eval_every must be >= 1");
  weights.validate();
}

void to_json(nlohmann::json& j, const EncoderTrainConfig& c) {
  j = {
      {"learning_rate", c.learning_rate}, {"iterations", c.iterations},   {"targets_per_step", c.targets_per_step},
      {"source_batch", c.source_batch},   {"weights", c.weights},         {"train_set_size", c.train_set_size},
      {"eval_set_size", c.eval_set_size}, {"seed", c.seed},               {"eval_every", c.eval_every},
      {"adam_beta1", c.adam_beta1},       {"adam_beta2", c.adam_beta2},   {"adam_eps", c.adam_eps},
  };
}

void from_json(const nlohmann::json& j, EncoderTrainConfig& c) {
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.iterations = j.value("iterations", c.iterations);
  c.targets_per_step = j.value("targets_per_step", c.targets_per_step);
  c.source_batch = j.value("source_batch", c.source_batch);
  if (j.contains("weights")) j.at("weights").get_to(c.weights);
  c.train_set_size = j.value("train_set_size", c.train_set_size);
  c.eval_set_size = j.value("eval_set_size", c.eval_set_size);
  c.seed = j.value("seed", c.seed);
  c.eval_every = j.value("eval_every", c.eval_every);
  c.adam_beta1 = j.value("adam_beta1", c.adam_beta1);
  c.adam_beta2 = j.value("adam_beta2", c.adam_beta2);
  c.adam_eps = j.value("adam_eps", c.adam_eps);
}

EssenceEncoder::EssenceEncoder(std::unique_ptr<TrainableInverter> inverter, std::shared_ptr<const Generator> g,
                               std::shared_ptr<const SemanticEncoder> c, nlohmann::json provenance)
    : inverter_(std::move(inverter)), g_(std::move(g)), c_(std::move(c)), provenance_(std::move(provenance)) {
  if (!inverter_ || !g_ || !c_) raise(ErrorCode::BackendUnavailable, "essence encoder needs inverter, generator and encoder");
  if (!(inverter_->latent_shape() == g_->latent_shape()) || inverter_->space_id() != g_->space_id()) {
    raise(ErrorCode::SpaceMismatch, "essence encoder output does not match the generator latent space");
  }
  config_digest_ = sha256_hex(provenance_.dump() + digest_of(inverter_->parameters()));
}

EssenceVector EssenceEncoder::extract(const ImageTensor& target) const {
  const auto z = inverter_->invert(target);
  return EssenceVector(z.shape(), z.data(), z.space_id(),
                       Provenance{EssenceMethod::Encoder, digest_of(target), config_digest_});
}

double mean_encoder_objective(const Inverter& inverter, std::span<const ImageTensor> targets,
                              const SourceBatch& sources, const Generator& g, const SemanticEncoder& c,
                              const LossWeights& w) {
  if (targets.empty()) raise(ErrorCode::EmptyBatch, "no evaluation targets");
  CompensatedSum sum;
  for (const auto& t : targets) {
    const Objective obj(g, c, t, sources, w);
    sum.add(obj.evaluate(inverter.invert(t).data()).total);
  }
  return sum.value() / static_cast<double>(targets.size());
}

SourceBatch eval_source_batch(std::span<const LatentCode> pool, const EncoderTrainConfig& cfg) {
  return sample_source_batch(pool, static_cast<std::size_t>(cfg.source_batch), cfg.seed ^ 0xE7A1ULL);
}

namespace {

std::vector<ImageTensor> seeded_subset(std::span<const ImageTensor> items, std::size_t limit, std::uint64_t seed) {
  if (items.size() <= limit) return {items.begin(), items.end()};
  std::vector<std::size_t> idx(items.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < limit; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  std::vector<ImageTensor> out;
  out.reserve(limit);
  for (std::size_t i = 0; i < limit; ++i) out.push_back(items[idx[i]]);
  return out;
}

}  // namespace

EssenceEncoder finetune_essence_encoder(const Inverter& pretrained, std::span<const ImageTensor> train_targets,
                                        std::span<const LatentCode> source_pool, std::shared_ptr<const Generator> g,
                                        std::shared_ptr<const SemanticEncoder> c, const EncoderTrainConfig& cfg,
                                        std::span<const ImageTensor> eval_targets) {
  cfg.validate();
  const auto* trainable = dynamic_cast<const TrainableInverter*>(&pretrained);
  if (trainable == nullptr) raise(ErrorCode::NonTrainableInverter, "inverter exposes no trainable parameters");
  if (!g || !c) raise(ErrorCode::BackendUnavailable, "fine-tuning needs a generator and a semantic encoder");
  if (train_targets.empty()) raise(ErrorCode::EmptyBatch, "no training targets");
  if (source_pool.size() < static_cast<std::size_t>(cfg.source_batch)) {
    raise(ErrorCode::BatchTooSmall, "source pool has " + std::to_string(source_pool.size()) + " latents, need " +
                                        std::to_string(cfg.source_batch));
  }

  auto inverter = trainable->clone();
  const auto train = seeded_subset(train_targets, cfg.train_set_size, cfg.seed ^ 0x7A17ULL);
  const auto held_out = seeded_subset(eval_targets, cfg.eval_set_size, cfg.seed ^ 0xE7A1ULL);
  std::optional<SourceBatch> eval_batch;
  if (!held_out.empty()) eval_batch = eval_source_batch(source_pool, cfg);

  std::vector<EvalPoint> log;
  auto record = [&](int step) {
    if (eval_batch) log.push_back({step, mean_encoder_objective(*inverter, held_out, *eval_batch, *g, *c, cfg.weights)});
  };
  record(0);

  Vector params = inverter->parameters();
  Adam adam({cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps}, params.size());
  std::mt19937_64 rng(cfg.seed);
  std::uniform_int_distribution<std::size_t> pick_target(0, train.size() - 1);
  Vector grad_b;
  for (int step = 1; step <= cfg.iterations; ++step) {
    Vector grad = Vector::Zero(params.size());
    for (int k = 0; k < cfg.targets_per_step; ++k) {
      const auto& target = train[pick_target(rng)];
      const auto sources = sample_source_batch(source_pool, static_cast<std::size_t>(cfg.source_batch), rng());
      const Objective obj(*g, *c, target, sources, cfg.weights);
      const auto loss = obj.evaluate(inverter->invert(target).data(), &grad_b);
      if (!std::isfinite(loss.total)) raise(ErrorCode::NumericFailure, "non-finite loss at step " + std::to_string(step));
      grad += inverter->invert_vjp_params(target, grad_b);
    }
    grad /= static_cast<double>(cfg.targets_per_step);
    adam.step(params, grad);
    inverter->set_parameters(params);
    if (step % cfg.eval_every == 0 || step == cfg.iterations) record(step);
  }

  nlohmann::json prov = {
      {"config", cfg},
      {"train_targets", train.size()},
      {"eval_targets", held_out.size()},
      {"generator_digest", g->parameter_digest()},
      {"encoder_digest", c->parameter_digest()},
  };
  EssenceEncoder enc(std::move(inverter), std::move(g), std::move(c), std::move(prov));
  enc.set_eval_log(std::move(log));
  return enc;
}

// ---------------------------------------------------------------------------

namespace {

constexpr std::string_view kCheckpointMagic = "ESKC1";

}  // namespace

void save_encoder_checkpoint(const std::filesystem::path& path, const EssenceEncoder& encoder,
                             const BackendSet& backends) {
  const Vector params = encoder.inverter().parameters();
  std::string bytes(kCheckpointMagic);
  const auto count = static_cast<std::uint64_t>(params.size());
  for (int k = 0; k < 8; ++k) bytes.push_back(static_cast<char>((count >> (8 * k)) & 0xFF));
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    std::uint64_t bits = 0;
    const double v = params[i];
    std::memcpy(&bits, &v, sizeof bits);
    for (int k = 0; k < 8; ++k) bytes.push_back(static_cast<char>((bits >> (8 * k)) & 0xFF));
  }
  essv::write_file_atomic(path, bytes);

  nlohmann::json log = nlohmann::json::array();
  for (const auto& p : encoder.eval_log()) log.push_back({{"step", p.step}, {"mean_objective", p.mean_objective}});
  const nlohmann::json meta = {
      {"kind", "essence-encoder"},
      {"profile", backends.profile_name},
      {"profile_digest", backends.profile_digest},
      {"space_id", encoder.inverter().space_id()},
      {"parameter_count", params.size()},
      {"parameter_digest", digest_of(params)},
      {"provenance", encoder.provenance()},
      {"eval_log", log},
  };
  essv::write_file_atomic(essv::sidecar_path(path), meta.dump(2) + "\n");
}

EssenceEncoder load_encoder_checkpoint(const std::filesystem::path& path, const BackendSet& backends) {
  const auto meta = essv::load_sidecar(path);
  if (meta.value("kind", std::string()) != "essence-encoder") raise(ErrorCode::Format, path.string() + " is not an encoder checkpoint");
  if (meta.value("profile_digest", std::string()) != backends.profile_digest) {
    raise(ErrorCode::ProfileMismatch, "checkpoint was trained on profile '" + meta.value("profile", std::string("?")) +
                                          "', not '" + backends.profile_name + "'");
  }
  if (!backends.inverter) raise(ErrorCode::BackendUnavailable, "profile has no trainable inverter");

  const auto bytes = essv::read_file(path);
  if (bytes.size() < 13 || std::string_view(bytes).substr(0, 5) != kCheckpointMagic) {
    raise(ErrorCode::Format, path.string() + " is not an ESKC1 file");
  }
  std::uint64_t count = 0;
  for (int k = 0; k < 8; ++k) count |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[5 + k])) << (8 * k);
  if (bytes.size() != 13 + 8 * count) raise(ErrorCode::Format, "checkpoint length does not match its header");
  Vector params(static_cast<Eigen::Index>(count));
  for (std::uint64_t i = 0; i < count; ++i) {
    std::uint64_t bits = 0;
    for (int k = 0; k < 8; ++k) {
      bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[13 + 8 * i + k])) << (8 * k);
    }
    double v = 0.0;
    std::memcpy(&v, &bits, sizeof v);
    params[static_cast<Eigen::Index>(i)] = v;
  }
  auto inverter = backends.inverter->clone();
  if (inverter->parameter_count() != count) raise(ErrorCode::ProfileMismatch, "checkpoint parameter count differs from profile");
  inverter->set_parameters(params);
  EssenceEncoder enc(std::move(inverter), backends.generator, backends.encoder, meta.at("provenance"));
  std::vector<EvalPoint> log;
  for (const auto& p : meta.value("eval_log", nlohmann::json::array())) {
    log.push_back({p.at("step").get<int>(), p.at("mean_objective").get<double>()});
  }
  enc.set_eval_log(std::move(log));
  return enc;
}

}  // namespace essencekit

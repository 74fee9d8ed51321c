// Copyright 2026 The essencekit Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include "essencekit/digest.hpp"
#include "essencekit/encoder_trainer.hpp"
#include "essencekit/essv.hpp"
#include "essencekit/profiles.hpp"
#include "essencekit/toy_backends.hpp"
#include "oracles.hpp"

using namespace essencekit;

namespace {

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an essencekit::Error");
  return ErrorCode::InvalidValue;
}

LatentCode latent(const Generator& g, std::uint64_t seed) {
  return LatentCode(g.latent_shape(), toy::standard_normal(g.latent_shape().size(), 1, seed).col(0), g.space_id());
}

struct Setup {
  BackendSet b = make_backends(builtin_profiles().front());
  std::vector<ImageTensor> train;
  std::vector<ImageTensor> eval;
  std::vector<LatentCode> pool;

  Setup() {
    for (std::uint64_t i = 0; i < 24; ++i) train.push_back(b.generator->decode(latent(*b.generator, 100 + i)));
    for (std::uint64_t i = 0; i < 6; ++i) eval.push_back(b.generator->decode(latent(*b.generator, 200 + i)));
    for (std::uint64_t i = 0; i < 12; ++i) pool.push_back(latent(*b.generator, 300 + i));
  }

  EncoderTrainConfig cfg(int iters) const {
    EncoderTrainConfig c;
    c.iterations = iters;
    c.learning_rate = 3e-3;
    c.eval_every = 50;
    c.seed = 3;
    return c;
  }
};

class FixedInverter final : public Inverter {
 public:
  explicit FixedInverter(const Generator& g) : g_(g) {}
  const std::string& space_id() const override { return g_.space_id(); }
  LatentShape latent_shape() const override { return g_.latent_shape(); }
  ImageShape input_shape() const override { return g_.image_shape(); }

 protected:
  Vector invert_impl(const Vector&) const override { return Vector::Zero(static_cast<Eigen::Index>(g_.latent_shape().size())); }

 private:
  const Generator& g_;
};

}  // namespace

TEST_CASE("encoder fine-tune defaults") {
  const EncoderTrainConfig cfg;
  CHECK(cfg.learning_rate == 1e-4);
  CHECK(cfg.iterations == 3000);
  CHECK(cfg.targets_per_step == 1);
  CHECK(cfg.source_batch == 5);
  CHECK(cfg.train_set_size == 200);
  CHECK(cfg.eval_set_size == 50);
  CHECK(cfg.eval_every == 500);
  CHECK(cfg.weights.consistency == 0.5);
  CHECK(cfg.weights.l2 == 0.003);
  const nlohmann::json j = cfg;
  CHECK(nlohmann::json(j.get<EncoderTrainConfig>()) == j);
}

TEST_CASE("encoder config validation") {
  EncoderTrainConfig cfg;
  cfg.source_batch = 1;
  CHECK(code_of([&] { cfg.validate(); }) == ErrorCode::BatchTooSmall);
  cfg.source_batch = 5;
  cfg.learning_rate = -1;
  CHECK(code_of([&] { cfg.validate(); }) == ErrorCode::InvalidConfig);
}

TEST_CASE("fine-tuning lowers the held-out objective and leaves frozen parts alone") {
  const Setup s;
  const auto g_digest = s.b.generator->parameter_digest();
  const auto c_digest = s.b.encoder->parameter_digest();
  const auto pre = digest_of(s.b.inverter->parameters());

  const auto enc = finetune_essence_encoder(*s.b.inverter, s.train, s.pool, s.b.generator, s.b.encoder, s.cfg(200), s.eval);
  const auto& log = enc.eval_log();
  REQUIRE(log.size() == 5);
  CHECK(log.front().step == 0);
  CHECK(log[1].step == 50);
  CHECK(log.back().step == 200);
  CHECK(log.back().mean_objective < log.front().mean_objective);

  const auto batch = eval_source_batch(s.pool, s.cfg(200));
  CHECK(log.front().mean_objective ==
        mean_encoder_objective(*s.b.inverter, s.eval, batch, *s.b.generator, *s.b.encoder, LossWeights{}));

  CHECK(s.b.generator->parameter_digest() == g_digest);
  CHECK(s.b.encoder->parameter_digest() == c_digest);
  CHECK(digest_of(s.b.inverter->parameters()) == pre);
  CHECK(digest_of(enc.inverter().parameters()) != pre);
}

TEST_CASE("extract is a deterministic single forward pass") {
  const Setup s;
  const auto enc = finetune_essence_encoder(*s.b.inverter, s.train, s.pool, s.b.generator, s.b.encoder, s.cfg(20));
  const auto b1 = enc.extract(s.eval[0]);
  const auto b2 = enc.extract(s.eval[0]);
  CHECK(b1.data() == b2.data());
  CHECK(b1.provenance() == b2.provenance());
  CHECK(b1.provenance().method == EssenceMethod::Encoder);
  CHECK(b1.data() == enc.inverter().invert(s.eval[0]).data());
  CHECK(enc.eval_log().empty());

  const auto again = finetune_essence_encoder(*s.b.inverter, s.train, s.pool, s.b.generator, s.b.encoder, s.cfg(20));
  CHECK(again.extract(s.eval[0]).data() == b1.data());
}

TEST_CASE("fine-tuning needs a trainable inverter and enough sources") {
  const Setup s;
  const FixedInverter fixed(*s.b.generator);
  CHECK(code_of([&] { finetune_essence_encoder(fixed, s.train, s.pool, s.b.generator, s.b.encoder, s.cfg(1)); }) ==
        ErrorCode::NonTrainableInverter);
  const std::vector<LatentCode> few(s.pool.begin(), s.pool.begin() + 3);
  CHECK(code_of([&] { finetune_essence_encoder(*s.b.inverter, s.train, few, s.b.generator, s.b.encoder, s.cfg(1)); }) ==
        ErrorCode::BatchTooSmall);
  CHECK(code_of([&] { finetune_essence_encoder(*s.b.inverter, {}, s.pool, s.b.generator, s.b.encoder, s.cfg(1)); }) ==
        ErrorCode::EmptyBatch);
}

TEST_CASE("checkpoints round-trip and are bound to their profile") {
  const Setup s;
  const auto dir = oracle::scratch_dir("ckpt");
  const auto enc = finetune_essence_encoder(*s.b.inverter, s.train, s.pool, s.b.generator, s.b.encoder, s.cfg(10), s.eval);
  save_encoder_checkpoint(dir / "enc.eskc", enc, s.b);

  const auto loaded = load_encoder_checkpoint(dir / "enc.eskc", s.b);
  CHECK(loaded.inverter().parameters() == enc.inverter().parameters());
  CHECK(loaded.extract(s.eval[1]).data() == enc.extract(s.eval[1]).data());
  CHECK(essv::encode(loaded.extract(s.eval[1]).shape(), loaded.extract(s.eval[1]).data()) ==
        essv::encode(enc.extract(s.eval[1]).shape(), enc.extract(s.eval[1]).data()));

  BackendProfile other = builtin_profiles().front();
  other.seed = 8;
  const auto b2 = make_backends(other);
  CHECK(code_of([&] { load_encoder_checkpoint(dir / "enc.eskc", b2); }) == ErrorCode::ProfileMismatch);

  essv::write_file_atomic(dir / "enc.eskc", "ESKC1\x01");
  CHECK(code_of([&] { load_encoder_checkpoint(dir / "enc.eskc", s.b); }) == ErrorCode::Format);
  std::filesystem::remove_all(dir);
}

// Copyright 2026 The essencekit Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <random>

#include "essencekit/losses.hpp"
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

SemanticEmbedding emb(std::initializer_list<double> v) { return SemanticEmbedding(oracle::to_eigen(v), "enc"); }
SemanticDelta delta(std::initializer_list<double> v) { return SemanticDelta(oracle::to_eigen(v), "enc"); }

std::vector<LatentCode> latents(const Generator& g, std::size_t n, std::mt19937_64& rng) {
  std::vector<LatentCode> out;
  for (std::size_t i = 0; i < n; ++i) {
    out.emplace_back(g.latent_shape(), oracle::to_eigen(oracle::gaussian(g.latent_shape().size(), rng)), g.space_id());
  }
  return out;
}

}  // namespace

TEST_CASE("similarity loss hand example") {
  const std::vector<SemanticEmbedding> m{emb({0, 1}), emb({1, 0})};
  CHECK(similarity_loss(emb({1, 0}), m) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("consistency loss hand example") {
  const std::vector<SemanticDelta> d{delta({1, 0}), delta({0, 1}), delta({1, 0})};
  CHECK(consistency_loss(std::span<const SemanticDelta>(d)) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("consistency from paired embeddings uses after minus before") {
  const std::vector<SemanticEmbedding> src{emb({1, 1}), emb({0, 2})};
  const std::vector<SemanticEmbedding> out{emb({2, 1}), emb({1, 2})};
  CHECK(consistency_loss(std::span<const SemanticEmbedding>(src), std::span<const SemanticEmbedding>(out)) ==
        doctest::Approx(0.0).scale(1.0));
  const std::vector<SemanticEmbedding> one{emb({1, 1})};
  CHECK(code_of([&] { consistency_loss(std::span<const SemanticEmbedding>(src), std::span<const SemanticEmbedding>(one)); }) ==
        ErrorCode::DimMismatch);
}

TEST_CASE("l2 penalty and weighted objective hand examples") {
  const auto b = EssenceVector::manual({2, 3}, Vector::Ones(6), "x");
  CHECK(l2_penalty(b) == doctest::Approx(std::sqrt(6.0)).epsilon(1e-15));
  const auto total = compose(0.4, 0.2, 10.0, LossWeights{1.0, 0.5, 0.003});
  CHECK(total.total == doctest::Approx(0.53).epsilon(1e-14));
  CHECK(total.similarity == 0.4);
  CHECK(total.consistency == 0.2);
  CHECK(total.l2 == 10.0);
}

TEST_CASE("loss terms reject degenerate batches") {
  const std::vector<SemanticDelta> single{delta({1, 0})};
  CHECK(code_of([&] { consistency_loss(std::span<const SemanticDelta>(single)); }) == ErrorCode::BatchTooSmall);
  const std::vector<SemanticDelta> with_zero{delta({1, 0}), delta({0, 0})};
  CHECK(code_of([&] { consistency_loss(std::span<const SemanticDelta>(with_zero)); }) == ErrorCode::ZeroVector);
  CHECK(code_of([&] { similarity_loss(emb({1, 0}), {}); }) == ErrorCode::EmptyBatch);
  const std::vector<SemanticEmbedding> foreign{SemanticEmbedding(oracle::to_eigen({1, 0}), "other")};
  CHECK(code_of([&] { similarity_loss(emb({1, 0}), foreign); }) == ErrorCode::SpaceMismatch);
  const std::vector<SemanticDelta> mixed{delta({1, 0}), SemanticDelta(oracle::to_eigen({0, 1}), "other")};
  CHECK(code_of([&] { consistency_loss(std::span<const SemanticDelta>(mixed)); }) == ErrorCode::SpaceMismatch);
}

TEST_CASE("loss terms match brute-force loops") {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 25; ++trial) {
    const std::size_t n = 2 + trial % 6;
    const std::size_t dim = 3 + trial % 9;
    const auto t = oracle::gaussian(dim, rng);
    std::vector<oracle::Vec> m, d;
    std::vector<SemanticEmbedding> me;
    std::vector<SemanticDelta> de;
    for (std::size_t i = 0; i < n; ++i) {
      m.push_back(oracle::gaussian(dim, rng));
      d.push_back(oracle::gaussian(dim, rng));
      me.emplace_back(oracle::to_eigen(m.back()), "enc");
      de.emplace_back(oracle::to_eigen(d.back()), "enc");
    }
    CHECK(std::abs(similarity_loss(SemanticEmbedding(oracle::to_eigen(t), "enc"), me) - oracle::similarity(t, m)) <= 1e-12);
    CHECK(std::abs(consistency_loss(std::span<const SemanticDelta>(de)) - oracle::consistency(d)) <= 1e-12);
  }
}

TEST_CASE("term gradients match central differences") {
  std::mt19937_64 rng(5);
  const double h = 1e-6;
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t n = 2 + trial % 4;
    const Vector t = oracle::to_eigen(oracle::gaussian(5, rng));
    std::vector<Vector> m;
    for (std::size_t i = 0; i < n; ++i) m.push_back(oracle::to_eigen(oracle::gaussian(5, rng)));
    const auto sim = similarity_loss_grad(t, m);
    const auto cons = consistency_loss_grad(m);
    for (std::size_t i = 0; i < n; ++i) {
      for (Eigen::Index k = 0; k < 5; ++k) {
        auto up = m, dn = m;
        up[i][k] += h;
        dn[i][k] -= h;
        const double fs = (similarity_loss_grad(t, up).value - similarity_loss_grad(t, dn).value) / (2 * h);
        const double fc = (consistency_loss_grad(up).value - consistency_loss_grad(dn).value) / (2 * h);
        CHECK(sim.grads[i][k] == doctest::Approx(fs).epsilon(1e-6).scale(1.0));
        CHECK(cons.grads[i][k] == doctest::Approx(fc).epsilon(1e-6).scale(1.0));
      }
    }
  }
}

TEST_CASE("objective equals the explicit pipeline") {
  std::mt19937_64 rng(21);
  const toy::TanhGenerator g(3, 0.25);
  const toy::MlpEncoder c(4, 0.25);
  const auto zs = latents(g, 4, rng);
  const SourceBatch batch(zs, "b");
  const auto target = g.decode(latents(g, 1, rng).front());
  const LossWeights w{1.0, 0.5, 0.003};
  const auto bv = oracle::to_eigen(oracle::gaussian(g.latent_shape().size(), rng, 0.5));
  const auto b = EssenceVector::manual(g.latent_shape(), bv, g.space_id());

  const auto t = oracle::to_vec(c.raw_embed(target));
  std::vector<oracle::Vec> m, d;
  for (const auto& z : zs) {
    m.push_back(oracle::to_vec(c.raw_embed(g.decode(z + b))));
    const auto before = oracle::to_vec(c.raw_embed(g.decode(z)));
    oracle::Vec diff(before.size());
    for (std::size_t k = 0; k < diff.size(); ++k) diff[k] = m.back()[k] - before[k];
    d.push_back(diff);
  }
  const double expected = oracle::similarity(t, m) + 0.5 * oracle::consistency(d) + 0.003 * std::sqrt(oracle::dot(oracle::to_vec(bv), oracle::to_vec(bv)));
  const auto got = objective(b, target, batch, g, c, w);
  CHECK(got.total == doctest::Approx(expected).epsilon(1e-12));
  CHECK(got.similarity == doctest::Approx(oracle::similarity(t, m)).epsilon(1e-12));
  CHECK(got.consistency == doctest::Approx(oracle::consistency(d)).epsilon(1e-12));
}

TEST_CASE("objective gradient matches central differences on the nonlinear toy") {
  std::mt19937_64 rng(31);
  const toy::TanhGenerator g(5, 0.25);
  const toy::MlpEncoder c(6, 0.25);
  const SourceBatch batch(latents(g, 3, rng), "b");
  const auto target = g.decode(latents(g, 1, rng).front());
  const Objective obj(g, c, target, batch, LossWeights{1.0, 0.5, 0.003});
  const Vector b = oracle::to_eigen(oracle::gaussian(g.latent_shape().size(), rng, 0.5));
  Vector grad;
  obj.evaluate(b, &grad);
  for (Eigen::Index k = 0; k < b.size(); ++k) {
    Vector up = b, dn = b;
    up[k] += 1e-5;
    dn[k] -= 1e-5;
    const double fd = (obj.evaluate(up).total - obj.evaluate(dn).total) / 2e-5;
    CHECK(grad[k] == doctest::Approx(fd).epsilon(1e-5).scale(1.0));
  }
}

TEST_CASE("objective batch rules and the L2 subgradient at zero") {
  std::mt19937_64 rng(2);
  const toy::TanhGenerator g(1, 0.25);
  const toy::MlpEncoder c(2, 0.25);
  const auto target = g.decode(latents(g, 1, rng).front());
  const SourceBatch one(latents(g, 1, rng), "one");
  CHECK(code_of([&] { Objective(g, c, target, one, LossWeights{}); }) == ErrorCode::BatchTooSmall);
  CHECK_NOTHROW(Objective(g, c, target, one, LossWeights{1.0, 0.0, 0.003}));

  const SourceBatch two(latents(g, 2, rng), "two");
  const Objective only_l2(g, c, target, two, LossWeights{0.0, 0.0, 1.0});
  Vector grad;
  only_l2.evaluate(Vector::Zero(static_cast<Eigen::Index>(g.latent_shape().size())), &grad);
  CHECK(grad.isZero(0.0));
  CHECK(code_of([&] { only_l2.evaluate(Vector::Zero(3)); }) == ErrorCode::ShapeMismatch);

  const auto foreign = EssenceVector::zeros(g.latent_shape(), "elsewhere");
  CHECK(code_of([&] { only_l2.evaluate(foreign); }) == ErrorCode::SpaceMismatch);
}

TEST_CASE("loss weights validation and JSON keys") {
  CHECK(code_of([] { LossWeights{1.0, -0.1, 0.0}.validate(); }) == ErrorCode::InvalidConfig);
  CHECK(code_of([] { LossWeights{NAN, 0.5, 0.0}.validate(); }) == ErrorCode::InvalidConfig);
  const nlohmann::json j = LossWeights{};
  CHECK(j.at("lambda_consistency") == 0.5);
  CHECK(j.at("lambda_l2") == 0.003);
  CHECK(j.at("similarity") == 1.0);
  CHECK(j.get<LossWeights>().consistency == 0.5);
}

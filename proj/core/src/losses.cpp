// Copyright 2026 The essencekit Authors
// SPDX-License-Identifier: Apache-2.0

#include "essencekit/losses.hpp"

#include <cmath>

namespace essencekit {

void LossWeights::validate() const {
  if (!(similarity >= 0.0) || !(consistency >= 0.0) || !(l2 >= 0.0) || !std::isfinite(similarity) ||
      !std::isfinite(consistency) || !std::isfinite(l2)) {
    raise(ErrorCode::InvalidConfig, "loss weights must be finite and non-negative");
  }
}

void to_json(nlohmann::json& j, const LossWeights& w) {
  j = {{"similarity", w.similarity}, {"lambda_consistency", w.consistency}, {"lambda_l2", w.l2}};
}

void from_json(const nlohmann::json& j, LossWeights& w) {
  w.similarity = j.value("similarity", w.similarity);
  w.consistency = j.value("lambda_consistency", w.consistency);
  w.l2 = j.value("lambda_l2", w.l2);
}

void to_json(nlohmann::json& j, const LossBreakdown& b) {
  j = {{"similarity", b.similarity}, {"consistency", b.consistency}, {"l2", b.l2}, {"total", b.total}};
}

LossBreakdown compose(double similarity, double consistency, double l2, const LossWeights& w) {
  return {similarity, consistency, l2, w.similarity * similarity + w.consistency * consistency + w.l2 * l2};
}

namespace {

void check_same_encoder(std::span<const SemanticEmbedding> embs, const std::string& id) {
  for (const auto& e : embs) {
    if (e.encoder_id() != id) raise(ErrorCode::SpaceMismatch, "embeddings from encoders '" + id + "' and '" + e.encoder_id() + "'");
  }
}

std::vector<Vector> deltas_of(std::span<const SemanticEmbedding> sources, std::span<const SemanticEmbedding> manipulated) {
  if (sources.size() != manipulated.size()) {
    raise(ErrorCode::DimMismatch, "consistency needs paired batches, got " + std::to_string(sources.size()) + " and " +
                                      std::to_string(manipulated.size()));
  }
  if (sources.empty()) raise(ErrorCode::EmptyBatch, "consistency of an empty batch");
  check_same_encoder(sources, sources.front().encoder_id());
  check_same_encoder(manipulated, sources.front().encoder_id());
  std::vector<Vector> out;
  out.reserve(sources.size());
  for (std::size_t i = 0; i < sources.size(); ++i) out.push_back(SemanticDelta::between(manipulated[i], sources[i]).data());
  return out;
}

}  // namespace

TermGradient similarity_loss_grad(const Vector& target, std::span<const Vector> manipulated) {
  if (manipulated.empty()) raise(ErrorCode::EmptyBatch, "similarity loss over an empty batch");
  const double inv_n = 1.0 / static_cast<double>(manipulated.size());
  TermGradient out;
  CompensatedSum sum;
  out.grads.reserve(manipulated.size());
  for (const auto& m : manipulated) {
    sum.add(1.0 - cosine_similarity(target, m));
    out.grads.push_back(-inv_n * cosine_similarity_grad(target, m));
  }
  out.value = sum.value() * inv_n;
  return out;
}

TermGradient consistency_loss_grad(std::span<const Vector> deltas) {
  const std::size_t n = deltas.size();
  if (n < 2) raise(ErrorCode::BatchTooSmall, "consistency loss needs at least 2 sources, got " + std::to_string(n));
  for (std::size_t i = 0; i < n; ++i) {
    if (deltas[i].norm() <= kNormEpsilon) {
      raise(ErrorCode::ZeroVector, "semantic delta of source " + std::to_string(i) + " is zero; the edit did nothing");
    }
  }
  const double pairs = static_cast<double>(n * (n - 1) / 2);
  TermGradient out;
  out.grads.assign(n, Vector::Zero(deltas[0].size()));
  CompensatedSum sum;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      sum.add(1.0 - cosine_similarity(deltas[i], deltas[j]));
      out.grads[i] -= cosine_similarity_grad(deltas[j], deltas[i]) / pairs;
      out.grads[j] -= cosine_similarity_grad(deltas[i], deltas[j]) / pairs;
    }
  }
  out.value = sum.value() / pairs;
  return out;
}

double similarity_loss(const SemanticEmbedding& target, std::span<const SemanticEmbedding> manipulated) {
  if (manipulated.empty()) raise(ErrorCode::EmptyBatch, "similarity loss over an empty batch");
  check_same_encoder(manipulated, target.encoder_id());
  CompensatedSum sum;
  for (const auto& m : manipulated) sum.add(1.0 - cosine_similarity(target.data(), m.data()));
  return sum.value() / static_cast<double>(manipulated.size());
}

double consistency_loss(std::span<const SemanticDelta> deltas) {
  std::vector<Vector> raw;
  raw.reserve(deltas.size());
  for (const auto& d : deltas) {
    if (d.encoder_id() != deltas.front().encoder_id()) raise(ErrorCode::SpaceMismatch, "deltas from different encoders");
    raw.push_back(d.data());
  }
  const std::size_t n = raw.size();
  if (n < 2) raise(ErrorCode::BatchTooSmall, "consistency loss needs at least 2 sources, got " + std::to_string(n));
  CompensatedSum sum;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) sum.add(1.0 - cosine_similarity(raw[i], raw[j]));
  }
  return sum.value() / static_cast<double>(n * (n - 1) / 2);
}

double consistency_loss(std::span<const SemanticEmbedding> sources, std::span<const SemanticEmbedding> manipulated) {
  const auto raw = deltas_of(sources, manipulated);
  std::vector<SemanticDelta> deltas;
  deltas.reserve(raw.size());
  for (const auto& d : raw) deltas.emplace_back(d, sources.front().encoder_id());
  return consistency_loss(std::span<const SemanticDelta>(deltas));
}

double l2_penalty(const EssenceVector& b) { return b.data().norm(); }

// ---------------------------------------------------------------------------

namespace {

std::vector<SemanticEmbedding> embed_sources(const Generator& g, const SemanticEncoder& c, const SourceBatch& sources) {
  std::vector<SemanticEmbedding> out;
  out.reserve(sources.size());
  for (const auto& z : sources.latents()) out.push_back(c.embed(g.decode(z)));
  return out;
}

}  // namespace

Objective::Objective(const Generator& g, const SemanticEncoder& c, const ImageTensor& target, const SourceBatch& sources,
                     LossWeights weights)
    : g_(g),
      c_(c),
      sources_(sources),
      weights_(weights),
      target_embedding_(c.embed(target)),
      source_embeddings_(embed_sources(g, c, sources)) {
  weights_.validate();
  if (sources_.space_id() != g.space_id()) {
    raise(ErrorCode::SpaceMismatch, "sources from space '" + sources_.space_id() + "', generator '" + g.space_id() + "'");
  }
  if (weights_.consistency > 0.0 && sources_.size() < 2) {
    raise(ErrorCode::BatchTooSmall, "consistency term needs at least 2 sources, got " + std::to_string(sources_.size()));
  }
}

LossBreakdown Objective::evaluate(const EssenceVector& b, Vector* grad) const {
  if (b.space_id() != g_.space_id()) {
    raise(ErrorCode::SpaceMismatch, "essence from space '" + b.space_id() + "', generator '" + g_.space_id() + "'");
  }
  return evaluate(b.data(), grad);
}

LossBreakdown Objective::evaluate(const Eigen::Ref<const Vector>& b, Vector* grad) const {
  const auto shape = g_.latent_shape();
  if (static_cast<std::size_t>(b.size()) != shape.size()) {
    raise(ErrorCode::ShapeMismatch, "essence has " + std::to_string(b.size()) + " entries, generator latent " +
                                        to_string(shape));
  }
  const std::size_t n = sources_.size();
  std::vector<LatentCode> shifted;
  std::vector<ImageTensor> images;
  std::vector<Vector> manipulated;
  std::vector<Vector> deltas;
  shifted.reserve(n);
  images.reserve(n);
  manipulated.reserve(n);
  deltas.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    shifted.emplace_back(shape, sources_.latents()[i].data() + b, g_.space_id());
    images.push_back(g_.decode(shifted.back()));
    manipulated.push_back(c_.embed(images.back()).data());
    deltas.push_back(manipulated.back() - source_embeddings_[i].data());
  }

  const auto sim = similarity_loss_grad(target_embedding_.data(), manipulated);
  TermGradient cons;
  const bool use_consistency = weights_.consistency > 0.0;
  if (use_consistency) {
    cons = consistency_loss_grad(deltas);
  } else if (n >= 2) {
    // Monitoring only; an undefined value is reported as 0.
    try {
      cons.value = consistency_loss_grad(deltas).value;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::ZeroVector) throw;
    }
  }
  const double norm = b.norm();
  const LossBreakdown out = compose(sim.value, cons.value, norm, weights_);

  if (grad != nullptr) {
    Vector g = Vector::Zero(b.size());
    for (std::size_t i = 0; i < n; ++i) {
      Vector g_emb = weights_.similarity * sim.grads[i];
      if (use_consistency) g_emb += weights_.consistency * cons.grads[i];
      const Vector g_img = c_.embed_vjp(images[i], g_emb);
      g += g_.decode_vjp(shifted[i], g_img);
    }
    // Subgradient 0 at b = 0.
    if (norm > 0.0) g += (weights_.l2 / norm) * b;
    *grad = std::move(g);
  }
  return out;
}

LossBreakdown objective(const EssenceVector& b, const ImageTensor& target, const SourceBatch& sources,
                        const Generator& g, const SemanticEncoder& c, const LossWeights& w) {
  return Objective(g, c, target, sources, w).evaluate(b);
}

}  // namespace essencekit

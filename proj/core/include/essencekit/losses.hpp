// Copyright 2026 The essencekit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "essencekit/backends.hpp"
#include "essencekit/core.hpp"

namespace essencekit {

/// Weights of the combined objective. `similarity` exists so ablations can
/// switch the similarity term off; it is 1 everywhere else.
struct LossWeights {
  double similarity = 1.0;
  double consistency = 0.5;
  double l2 = 0.003;

  void validate() const;
  bool operator==(const LossWeights&) const = default;
};

struct LossBreakdown {
  double similarity = 0.0;
  double consistency = 0.0;
  double l2 = 0.0;
  double total = 0.0;
};

void to_json(nlohmann::json& j, const LossWeights& w);
void from_json(const nlohmann::json& j, LossWeights& w);
void to_json(nlohmann::json& j, const LossBreakdown& b);

LossBreakdown compose(double similarity, double consistency, double l2, const LossWeights& w);

// (1/N) sum_i (1 - cos(target, manipulated_i)).
double similarity_loss(const SemanticEmbedding& target, std::span<const SemanticEmbedding> manipulated);

// (1/C(N,2)) sum_{i<j} (1 - cos(delta_i, delta_j)), delta_i = manipulated_i - sources_i.
double consistency_loss(std::span<const SemanticEmbedding> sources, std::span<const SemanticEmbedding> manipulated);
double consistency_loss(std::span<const SemanticDelta> deltas);

// Euclidean norm of the flattened shift.
double l2_penalty(const EssenceVector& b);

struct TermGradient {
  double value = 0.0;
  std::vector<Vector> grads;  // one per input vector
};

// Value plus gradient with respect to each manipulated embedding.
TermGradient similarity_loss_grad(const Vector& target, std::span<const Vector> manipulated);
// Value plus gradient with respect to each delta.
TermGradient consistency_loss_grad(std::span<const Vector> deltas);

/// The combined objective for one target and a fixed source batch. Target and
/// source embeddings do not depend on the shift and are computed once here.
class Objective {
 public:
  Objective(const Generator& g, const SemanticEncoder& c, const ImageTensor& target, const SourceBatch& sources,
            LossWeights weights);

  LossBreakdown evaluate(const Eigen::Ref<const Vector>& b, Vector* grad = nullptr) const;
  LossBreakdown evaluate(const EssenceVector& b, Vector* grad = nullptr) const;

  const SemanticEmbedding& target_embedding() const noexcept { return target_embedding_; }
  const std::vector<SemanticEmbedding>& source_embeddings() const noexcept { return source_embeddings_; }
  const LossWeights& weights() const noexcept { return weights_; }
  const SourceBatch& sources() const noexcept { return sources_; }

 private:
  const Generator& g_;
  const SemanticEncoder& c_;
  SourceBatch sources_;
  LossWeights weights_;
  SemanticEmbedding target_embedding_;
  std::vector<SemanticEmbedding> source_embeddings_;
};

LossBreakdown objective(const EssenceVector& b, const ImageTensor& target, const SourceBatch& sources,
                        const Generator& g, const SemanticEncoder& c, const LossWeights& w);

}  // namespace essencekit

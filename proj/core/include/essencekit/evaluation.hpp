// Copyright 2026 The essencekit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "essencekit/backends.hpp"
#include "essencekit/optimizer.hpp"

namespace essencekit {

struct MetricRecord {
  std::string target_id;
  std::string source_id;
  double id_source = 0.0;
  double id_target = 0.0;
  double sem_clip = 0.0;
  std::optional<double> sem_blip;
};

struct IdScores {
  double id_source = 0.0;
  double id_target = 0.0;

  // Reported, never enforced.
  bool preserves_source() const noexcept { return id_source > id_target; }
};

// Cosines <R(I_s), R(I_st)> and <R(I_t), R(I_st)>.
IdScores id_scores(const ImageTensor& source, const ImageTensor& target, const ImageTensor& manipulated,
                   const FaceEmbedder& r);

// Cosine <C(I_t), C(I_st)>.
double semantic_score(const ImageTensor& target, const ImageTensor& manipulated, const SemanticEncoder& c);

// C(I_st) - C(I_s), raw.
SemanticDelta semantic_delta(const ImageTensor& source, const ImageTensor& manipulated, const SemanticEncoder& c);

// "ESDL1" | u32 LE id length | id bytes | u32 LE dim | dim float64 LE.
std::string encode_delta(const SemanticDelta& delta);
SemanticDelta decode_delta(std::string_view bytes);
void write_delta(const std::filesystem::path& path, const SemanticDelta& delta);
SemanticDelta read_delta(const std::filesystem::path& path);

struct GaussianStats {
  Vector mean;
  Matrix cov;

  // Rows are samples; unbiased (n - 1) covariance.
  static GaussianStats fit(const Matrix& samples);
};

// ||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a S_b)^{1/2}), clamped at 0.
double frechet_distance(const GaussianStats& a, const GaussianStats& b);
// Rows are feature vectors; each set needs at least dim + 1 rows.
double fid(const Matrix& set_a, const Matrix& set_b);

struct MetricSummary {
  double mean = 0.0;
  double std = 0.0;
};

struct TargetSummary {
  std::string target_id;
  std::size_t n_sources = 0;
  double id_source = 0.0;
  double id_target = 0.0;
  double sem_clip = 0.0;
  std::optional<double> sem_blip;
  std::optional<double> fid;
  // Run diagnostics (essence norm, losses); not part of the two-stage metrics.
  std::map<std::string, double> extras;
};

struct EvaluationReport {
  std::string variant;
  std::string config_digest;
  std::vector<TargetSummary> targets;  // sorted by target_id
  std::map<std::string, MetricSummary> overall;
  std::vector<MetricRecord> records;   // sorted by (target_id, source_id)

  const TargetSummary& target(const std::string& id) const;

  // scale multiplies the cosine metrics (100 for table-style values).
  nlohmann::json to_json(double scale = 1.0) const;
  std::string records_csv(double scale = 1.0) const;
  std::string fid_csv() const;
};

struct PairKey {
  std::string target_id;
  std::string source_id;
};

/// Two-stage mean: sources within each target first, then across targets.
/// Std is the population deviation of the per-target means. When `expected`
/// is non-empty every listed pair must be present.
EvaluationReport aggregate(std::span<const MetricRecord> records, const std::map<std::string, double>& fids,
                           std::span<const PairKey> expected = {});

// Recomputes `overall` from the per-target summaries and their extras.
void summarize_overall(EvaluationReport& report);

// ---------------------------------------------------------------------------
// Experiment harness.

struct TargetAsset {
  std::string id;
  ImageTensor image;
  bool is_face = true;
};

struct SourceAsset {
  std::string id;
  LatentCode latent;
};

struct EvaluationFixture {
  BackendSet backends;
  std::vector<TargetAsset> targets;
  std::vector<LatentCode> training_pool;   // sources the batch is drawn from
  std::vector<SourceAsset> eval_sources;   // sources the essence is applied to
  std::vector<ImageTensor> reference;      // FID reference images
  OptimizerConfig optimizer;
  int jobs = 1;
};

// Per-target fixed batch and noise seed used by every harness run.
std::uint64_t target_seed(std::uint64_t seed, std::size_t target_index);

struct SourceImage {
  std::string id;
  ImageTensor image;
};

// Scores already-rendered edits; edited[t][s] is source s edited toward target t.
// Extras: heldout_consistency. FID only for face targets with enough samples.
EvaluationReport evaluate_manipulations(const BackendSet& backends, std::span<const TargetAsset> targets,
                                        std::span<const SourceImage> sources,
                                        const std::vector<std::vector<ImageTensor>>& edited,
                                        std::span<const ImageTensor> reference, int jobs, const std::string& variant);

// Applies each target's essence to every eval source and scores the result.
EvaluationReport evaluate_essences(const EvaluationFixture& fixture, std::span<const EssenceVector> essences,
                                   const std::string& variant);

// Optimizes one essence per target under `cfg` then evaluates it. Extras:
// essence_norm, similarity, consistency (training batch), heldout_consistency.
EvaluationReport run_pipeline(const EvaluationFixture& fixture, const OptimizerConfig& cfg, const std::string& variant,
                              std::vector<EssenceResult>* results = nullptr);

// Unedited sources scored against each target (b = 0).
EvaluationReport baseline_report(const EvaluationFixture& fixture);

enum class AblationVariant { Full, NoConsistency, NoSimilarity, NoL2 };

std::string_view to_string(AblationVariant v) noexcept;
AblationVariant ablation_variant_from_string(std::string_view name);
LossWeights ablation_weights(AblationVariant v, const LossWeights& base);

EvaluationReport ablation_run(AblationVariant variant, const EvaluationFixture& fixture);

// One run per N on shared targets and seeds; every N must be >= 2.
std::map<int, EvaluationReport> sensitivity_run(std::span<const int> n_values, const EvaluationFixture& fixture);

}  // namespace essencekit

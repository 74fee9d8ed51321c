// Copyright 2026 The essencekit Authors
// SPDX-License-Identifier: Apache-2.0

#include "essencekit/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <set>

#include <Eigen/Eigenvalues>

#include "essencekit/digest.hpp"
#include "essencekit/essv.hpp"
#include "essencekit/parallel.hpp"
#include "essencekit/toy_backends.hpp"

namespace essencekit {

IdScores id_scores(const ImageTensor& source, const ImageTensor& target, const ImageTensor& manipulated,
                   const FaceEmbedder& r) {
  const Vector edited = r.embed(manipulated);
  return {cosine_similarity(r.embed(source), edited), cosine_similarity(r.embed(target), edited)};
}

double semantic_score(const ImageTensor& target, const ImageTensor& manipulated, const SemanticEncoder& c) {
  return cosine_similarity(c.embed(target).data(), c.embed(manipulated).data());
}

SemanticDelta semantic_delta(const ImageTensor& source, const ImageTensor& manipulated, const SemanticEncoder& c) {
  return SemanticDelta(c.raw_embed(manipulated) - c.raw_embed(source), c.encoder_id());
}

// ---------------------------------------------------------------------------

namespace {

constexpr std::string_view kDeltaMagic = "ESDL1";

void put_u32(std::string& out, std::uint32_t v) {
  for (int k = 0; k < 4; ++k) out.push_back(static_cast<char>((v >> (8 * k)) & 0xFF));
}

std::uint32_t get_u32(std::string_view b, std::size_t at) {
  if (at + 4 > b.size()) raise(ErrorCode::Format, "truncated delta file");
  std::uint32_t v = 0;
  for (int k = 0; k < 4; ++k) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(b[at + k])) << (8 * k);
  return v;
}

}  // namespace

std::string encode_delta(const SemanticDelta& delta) {
  std::string out(kDeltaMagic);
  put_u32(out, static_cast<std::uint32_t>(delta.encoder_id().size()));
  out += delta.encoder_id();
  put_u32(out, static_cast<std::uint32_t>(delta.dim()));
  for (Eigen::Index i = 0; i < delta.data().size(); ++i) {
    std::uint64_t bits = 0;
    const double v = delta.data()[i];
    std::memcpy(&bits, &v, sizeof bits);
    for (int k = 0; k < 8; ++k) out.push_back(static_cast<char>((bits >> (8 * k)) & 0xFF));
  }
  return out;
}

SemanticDelta decode_delta(std::string_view bytes) {
  if (bytes.substr(0, kDeltaMagic.size()) != kDeltaMagic) raise(ErrorCode::Format, "not an ESDL1 file");
  std::size_t at = kDeltaMagic.size();
  const auto id_len = get_u32(bytes, at);
  at += 4;
  if (at + id_len > bytes.size()) raise(ErrorCode::Format, "truncated delta file");
  std::string id(bytes.substr(at, id_len));
  at += id_len;
  const auto dim = get_u32(bytes, at);
  at += 4;
  if (bytes.size() != at + 8ull * dim) raise(ErrorCode::Format, "delta length does not match its header");
  Vector v(dim);
  for (std::uint32_t i = 0; i < dim; ++i) {
    std::uint64_t bits = 0;
    for (int k = 0; k < 8; ++k) bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[at + 8 * i + k])) << (8 * k);
    std::memcpy(&v[i], &bits, sizeof bits);
  }
  return SemanticDelta(std::move(v), std::move(id));
}

void write_delta(const std::filesystem::path& path, const SemanticDelta& delta) {
  essv::write_file_atomic(path, encode_delta(delta));
}

SemanticDelta read_delta(const std::filesystem::path& path) { return decode_delta(essv::read_file(path)); }

// ---------------------------------------------------------------------------

GaussianStats GaussianStats::fit(const Matrix& samples) {
  if (samples.rows() < 2) raise(ErrorCode::InsufficientSamples, "need at least 2 samples for a covariance");
  if (!samples.allFinite()) raise(ErrorCode::InvalidValue, "non-finite features");
  GaussianStats s;
  s.mean = samples.colwise().mean().transpose();
  const Matrix centered = samples.rowwise() - s.mean.transpose();
  s.cov = (centered.transpose() * centered) / static_cast<double>(samples.rows() - 1);
  s.cov = 0.5 * (s.cov + s.cov.transpose());
  return s;
}

namespace {

// Symmetric PSD square root with eigenvalues clamped at 0.
std::optional<Matrix> psd_sqrt(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(m);
  if (es.info() != Eigen::Success) return std::nullopt;
  const Vector roots = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * roots.asDiagonal() * es.eigenvectors().transpose();
}

// Tr((A B)^{1/2}) via the eigenvalues of A^{1/2} B A^{1/2}.
std::optional<double> trace_sqrt_product(const Matrix& a, const Matrix& b) {
  const auto root_a = psd_sqrt(a);
  if (!root_a) return std::nullopt;
  Matrix inner = *root_a * b * *root_a;
  inner = 0.5 * (inner + inner.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> es(inner, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success || !es.eigenvalues().allFinite()) return std::nullopt;
  return es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
}

}  // namespace

double frechet_distance(const GaussianStats& a, const GaussianStats& b) {
  if (a.mean.size() != b.mean.size() || a.cov.rows() != a.mean.size() || b.cov.rows() != b.mean.size() ||
      a.cov.cols() != a.cov.rows() || b.cov.cols() != b.cov.rows()) {
    raise(ErrorCode::DimMismatch, "Gaussian statistics of different dimension");
  }
  if (!a.cov.allFinite() || !b.cov.allFinite() || !a.mean.allFinite() || !b.mean.allFinite()) {
    raise(ErrorCode::InvalidValue, "non-finite Gaussian statistics");
  }
  auto tr = trace_sqrt_product(a.cov, b.cov);
  double extra = 0.0;
  if (!tr) {
    const double jitter = 1e-6;
    const Matrix eye = Matrix::Identity(a.cov.rows(), a.cov.cols());
    tr = trace_sqrt_product(a.cov + jitter * eye, b.cov + jitter * eye);
    if (!tr) raise(ErrorCode::SingularCovariance, "matrix square root failed after regularization");
    extra = 2.0 * jitter * static_cast<double>(a.cov.rows());
  }
  const double d = (a.mean - b.mean).squaredNorm() + a.cov.trace() + b.cov.trace() + extra - 2.0 * *tr;
  return std::max(d, 0.0);
}

double fid(const Matrix& set_a, const Matrix& set_b) {
  if (set_a.cols() != set_b.cols()) raise(ErrorCode::DimMismatch, "feature sets of different dimension");
  const auto need = set_a.cols() + 1;
  if (set_a.rows() < need || set_b.rows() < need) {
    raise(ErrorCode::InsufficientSamples, "FID needs at least " + std::to_string(need) + " samples per set, got " +
                                              std::to_string(set_a.rows()) + " and " + std::to_string(set_b.rows()));
  }
  return frechet_distance(GaussianStats::fit(set_a), GaussianStats::fit(set_b));
}

// ---------------------------------------------------------------------------

const TargetSummary& EvaluationReport::target(const std::string& id) const {
  for (const auto& t : targets) {
    if (t.target_id == id) return t;
  }
  raise(ErrorCode::MissingPair, "no target '" + id + "' in report");
}

namespace {

MetricSummary summarize(const std::vector<double>& values) {
  MetricSummary s;
  if (values.empty()) return s;
  CompensatedSum sum;
  for (double v : values) sum.add(v);
  s.mean = sum.value() / static_cast<double>(values.size());
  CompensatedSum sq;
  for (double v : values) sq.add((v - s.mean) * (v - s.mean));
  s.std = std::sqrt(sq.value() / static_cast<double>(values.size()));
  return s;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void summarize_overall(EvaluationReport& report) {
  report.overall.clear();
  std::vector<double> ids, idt, sem, blip, fids;
  std::map<std::string, std::vector<double>> extras;
  bool all_blip = !report.targets.empty();
  for (const auto& t : report.targets) {
    ids.push_back(t.id_source);
    idt.push_back(t.id_target);
    sem.push_back(t.sem_clip);
    if (t.sem_blip) {
      blip.push_back(*t.sem_blip);
    } else {
      all_blip = false;
    }
    if (t.fid) fids.push_back(*t.fid);
    for (const auto& [k, v] : t.extras) extras[k].push_back(v);
  }
  report.overall["id_source"] = summarize(ids);
  report.overall["id_target"] = summarize(idt);
  report.overall["sem_clip"] = summarize(sem);
  if (all_blip) report.overall["sem_blip"] = summarize(blip);
  if (!fids.empty()) report.overall["fid"] = summarize(fids);
  for (const auto& [k, v] : extras) report.overall[k] = summarize(v);
}

EvaluationReport aggregate(std::span<const MetricRecord> records, const std::map<std::string, double>& fids,
                           std::span<const PairKey> expected) {
  std::vector<MetricRecord> sorted(records.begin(), records.end());
  std::sort(sorted.begin(), sorted.end(), [](const MetricRecord& a, const MetricRecord& b) {
    return std::tie(a.target_id, a.source_id) < std::tie(b.target_id, b.source_id);
  });
  for (std::size_t i = 1; i < sorted.size(); ++i) {
    if (sorted[i].target_id == sorted[i - 1].target_id && sorted[i].source_id == sorted[i - 1].source_id) {
      raise(ErrorCode::DuplicatePair, "pair (" + sorted[i].target_id + ", " + sorted[i].source_id + ") appears twice");
    }
  }
  if (!expected.empty()) {
    std::set<std::pair<std::string, std::string>> have;
    for (const auto& r : sorted) have.emplace(r.target_id, r.source_id);
    for (const auto& p : expected) {
      if (!have.contains({p.target_id, p.source_id})) {
        raise(ErrorCode::MissingPair, "pair (" + p.target_id + ", " + p.source_id + ") has no record");
      }
    }
  }

  EvaluationReport report;
  for (std::size_t begin = 0; begin < sorted.size();) {
    std::size_t end = begin;
    while (end < sorted.size() && sorted[end].target_id == sorted[begin].target_id) ++end;
    TargetSummary t;
    t.target_id = sorted[begin].target_id;
    t.n_sources = end - begin;
    CompensatedSum ids, idt, sem, blip;
    bool has_blip = true;
    for (std::size_t i = begin; i < end; ++i) {
      ids.add(sorted[i].id_source);
      idt.add(sorted[i].id_target);
      sem.add(sorted[i].sem_clip);
      if (sorted[i].sem_blip) {
        blip.add(*sorted[i].sem_blip);
      } else {
        has_blip = false;
      }
    }
    const auto n = static_cast<double>(t.n_sources);
    t.id_source = ids.value() / n;
    t.id_target = idt.value() / n;
    t.sem_clip = sem.value() / n;
    if (has_blip) t.sem_blip = blip.value() / n;
    if (auto it = fids.find(t.target_id); it != fids.end()) t.fid = it->second;
    report.targets.push_back(std::move(t));
    begin = end;
  }
  report.records = std::move(sorted);
  summarize_overall(report);
  return report;
}

nlohmann::json EvaluationReport::to_json(double scale) const {
  nlohmann::json j;
  j["variant"] = variant;
  j["config_digest"] = config_digest;
  j["scale"] = scale;
  auto& ts = j["targets"] = nlohmann::json::array();
  for (const auto& t : targets) {
    nlohmann::json e = {{"target_id", t.target_id},
                        {"n_sources", t.n_sources},
                        {"id_source", scale * t.id_source},
                        {"id_target", scale * t.id_target},
                        {"sem_clip", scale * t.sem_clip}};
    if (t.sem_blip) e["sem_blip"] = scale * *t.sem_blip;
    if (t.fid) e["fid"] = *t.fid;
    if (!t.extras.empty()) e["extras"] = t.extras;
    ts.push_back(std::move(e));
  }
  auto& ov = j["overall"] = nlohmann::json::object();
  for (const auto& [k, s] : overall) {
    const bool cosine = k == "id_source" || k == "id_target" || k == "sem_clip" || k == "sem_blip";
    const double f = cosine ? scale : 1.0;
    ov[k] = {{"mean", f * s.mean}, {"std", f * s.std}};
  }
  return j;
}

std::string EvaluationReport::records_csv(double scale) const {
  std::string out = "target_id,source_id,id_source,id_target,sem_clip,sem_blip\n";
  for (const auto& r : records) {
    out += r.target_id + "," + r.source_id + "," + fmt(scale * r.id_source) + "," + fmt(scale * r.id_target) + "," +
           fmt(scale * r.sem_clip) + "," + (r.sem_blip ? fmt(scale * *r.sem_blip) : std::string()) + "\n";
  }
  return out;
}

std::string EvaluationReport::fid_csv() const {
  std::string out = "target_id,fid\n";
  for (const auto& t : targets) {
    if (t.fid) out += t.target_id + "," + fmt(*t.fid) + "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------

std::uint64_t target_seed(std::uint64_t seed, std::size_t target_index) {
  return toy::derive_seed(seed, 1000 + target_index);
}

namespace {

Matrix feature_matrix(const FeatureExtractor& f, std::span<const ImageTensor> images) {
  Matrix m(static_cast<Eigen::Index>(images.size()), static_cast<Eigen::Index>(f.dim()));
  for (std::size_t i = 0; i < images.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = f.features(images[i]).transpose();
  return m;
}

std::string harness_digest(const EvaluationFixture& fx, const OptimizerConfig& cfg) {
  const nlohmann::json j = {{"profile", fx.backends.profile_digest}, {"optimizer", cfg}};
  return sha256_hex(j.dump());
}

}  // namespace

EvaluationReport evaluate_manipulations(const BackendSet& b, std::span<const TargetAsset> targets,
                                        std::span<const SourceImage> sources,
                                        const std::vector<std::vector<ImageTensor>>& edited,
                                        std::span<const ImageTensor> reference, int jobs, const std::string& variant) {
  if (sources.empty()) raise(ErrorCode::EmptyBatch, "no evaluation sources");
  if (!b.encoder || !b.face) raise(ErrorCode::BackendUnavailable, "evaluation needs a semantic encoder and a face embedder");
  if (edited.size() != targets.size()) raise(ErrorCode::MissingPair, "one row of edited images per target required");
  for (const auto& row : edited) {
    if (row.size() != sources.size()) raise(ErrorCode::MissingPair, "one edited image per (target, source) pair required");
  }

  const std::size_t ns = sources.size();
  const std::size_t pairs = targets.size() * ns;
  std::vector<MetricRecord> records(pairs);
  parallel_for(pairs, jobs, [&](std::size_t k) {
    const std::size_t t = k / ns;
    const std::size_t s = k % ns;
    const auto& out = edited[t][s];
    const auto& target = targets[t].image;
    const auto ids = id_scores(sources[s].image, target, out, *b.face);
    MetricRecord r{targets[t].id, sources[s].id, ids.id_source, ids.id_target, semantic_score(target, out, *b.encoder),
                   std::nullopt};
    if (b.second_encoder) r.sem_blip = semantic_score(target, out, *b.second_encoder);
    records[k] = std::move(r);
  });

  std::map<std::string, double> fids;
  std::vector<std::map<std::string, double>> extras(targets.size());
  std::optional<Matrix> ref;
  if (b.features && reference.size() > b.features->dim()) ref = feature_matrix(*b.features, reference);
  for (std::size_t t = 0; t < targets.size(); ++t) {
    if (ref && targets[t].is_face && ns > b.features->dim()) {
      fids[targets[t].id] = fid(feature_matrix(*b.features, edited[t]), *ref);
    }
    if (ns >= 2) {
      std::vector<SemanticDelta> deltas;
      deltas.reserve(ns);
      for (std::size_t s = 0; s < ns; ++s) deltas.push_back(semantic_delta(sources[s].image, edited[t][s], *b.encoder));
      try {
        extras[t]["heldout_consistency"] = consistency_loss(std::span<const SemanticDelta>(deltas));
      } catch (const Error& e) {
        if (e.code() != ErrorCode::ZeroVector) throw;
      }
    }
  }

  auto report = aggregate(records, fids);
  for (auto& ts : report.targets) {
    for (std::size_t t = 0; t < targets.size(); ++t) {
      if (targets[t].id == ts.target_id) ts.extras.insert(extras[t].begin(), extras[t].end());
    }
  }
  summarize_overall(report);
  report.variant = variant;
  report.config_digest = b.profile_digest;
  return report;
}

EvaluationReport evaluate_essences(const EvaluationFixture& fx, std::span<const EssenceVector> essences,
                                   const std::string& variant) {
  if (essences.size() != fx.targets.size()) raise(ErrorCode::DimMismatch, "one essence per target required");
  if (!fx.backends.generator) raise(ErrorCode::BackendUnavailable, "applying essences needs a generator");
  const auto& g = *fx.backends.generator;

  std::vector<SourceImage> sources;
  sources.reserve(fx.eval_sources.size());
  for (const auto& s : fx.eval_sources) sources.push_back({s.id, g.decode(s.latent)});

  const std::size_t ns = fx.eval_sources.size();
  std::vector<std::vector<std::optional<ImageTensor>>> slots(fx.targets.size(), std::vector<std::optional<ImageTensor>>(ns));
  parallel_for(fx.targets.size() * ns, fx.jobs, [&](std::size_t k) {
    slots[k / ns][k % ns] = apply_essence(fx.eval_sources[k % ns].latent, essences[k / ns], g);
  });
  std::vector<std::vector<ImageTensor>> edited(fx.targets.size());
  for (std::size_t t = 0; t < fx.targets.size(); ++t) {
    for (auto& img : slots[t]) edited[t].push_back(std::move(*img));
  }

  auto report = evaluate_manipulations(fx.backends, fx.targets, sources, edited, fx.reference, fx.jobs, variant);
  for (auto& ts : report.targets) {
    for (std::size_t t = 0; t < fx.targets.size(); ++t) {
      if (fx.targets[t].id == ts.target_id) ts.extras["essence_norm"] = essences[t].data().norm();
    }
  }
  summarize_overall(report);
  return report;
}

EvaluationReport run_pipeline(const EvaluationFixture& fx, const OptimizerConfig& cfg, const std::string& variant,
                              std::vector<EssenceResult>* results) {
  cfg.validate();
  const auto& b = fx.backends;
  std::vector<std::optional<EssenceResult>> runs(fx.targets.size());
  parallel_for(fx.targets.size(), fx.jobs, [&](std::size_t t) {
    OptimizerConfig local = cfg;
    local.seed = target_seed(cfg.seed, t);
    const auto batch = sample_source_batch(fx.training_pool, static_cast<std::size_t>(cfg.batch_size), local.seed);
    runs[t] = optimize_essence(fx.targets[t].image, batch, *b.generator, *b.encoder, b.inverter.get(), local);
  });

  std::vector<EssenceVector> essences;
  essences.reserve(runs.size());
  for (auto& r : runs) essences.push_back(r->essence);
  auto report = evaluate_essences(fx, essences, variant);
  for (auto& ts : report.targets) {
    for (std::size_t t = 0; t < fx.targets.size(); ++t) {
      if (fx.targets[t].id != ts.target_id) continue;
      ts.extras["similarity"] = runs[t]->trace.final.similarity;
      ts.extras["consistency"] = runs[t]->trace.final.consistency;
      ts.extras["total"] = runs[t]->trace.final.total;
    }
  }
  summarize_overall(report);
  report.config_digest = harness_digest(fx, cfg);
  if (results != nullptr) {
    results->clear();
    for (auto& r : runs) results->push_back(std::move(*r));
  }
  return report;
}

EvaluationReport baseline_report(const EvaluationFixture& fx) {
  const auto& g = *fx.backends.generator;
  std::vector<EssenceVector> zeros(fx.targets.size(), EssenceVector::zeros(g.latent_shape(), g.space_id()));
  auto report = evaluate_essences(fx, zeros, "baseline");
  report.config_digest = harness_digest(fx, fx.optimizer);
  return report;
}

std::string_view to_string(AblationVariant v) noexcept {
  switch (v) {
    case AblationVariant::Full: return "full";
    case AblationVariant::NoConsistency: return "no_consistency";
    case AblationVariant::NoSimilarity: return "no_similarity";
    case AblationVariant::NoL2: return "no_l2";
  }
  return "full";
}

AblationVariant ablation_variant_from_string(std::string_view name) {
  for (auto v : {AblationVariant::Full, AblationVariant::NoConsistency, AblationVariant::NoSimilarity, AblationVariant::NoL2}) {
    if (to_string(v) == name) return v;
  }
  raise(ErrorCode::InvalidConfig, "unknown ablation variant '" + std::string(name) + "'");
}

LossWeights ablation_weights(AblationVariant v, const LossWeights& base) {
  LossWeights w = base;
  switch (v) {
    case AblationVariant::Full: break;
    case AblationVariant::NoConsistency: w.consistency = 0.0; break;
    case AblationVariant::NoSimilarity: w.similarity = 0.0; break;
    case AblationVariant::NoL2: w.l2 = 0.0; break;
  }
  return w;
}

EvaluationReport ablation_run(AblationVariant variant, const EvaluationFixture& fx) {
  OptimizerConfig cfg = fx.optimizer;
  cfg.weights = ablation_weights(variant, fx.optimizer.weights);
  return run_pipeline(fx, cfg, std::string(to_string(variant)));
}

std::map<int, EvaluationReport> sensitivity_run(std::span<const int> n_values, const EvaluationFixture& fx) {
  if (n_values.empty()) raise(ErrorCode::InvalidConfig, "no N values given");
  for (int n : n_values) {
    if (n < 2) raise(ErrorCode::BatchTooSmall, "N = " + std::to_string(n) + " leaves the consistency term undefined");
  }
  std::map<int, EvaluationReport> out;
  for (int n : n_values) {
    OptimizerConfig cfg = fx.optimizer;
    cfg.batch_size = n;
    out.emplace(n, run_pipeline(fx, cfg, "N=" + std::to_string(n)));
  }
  return out;
}

}  // namespace essencekit

// Copyright 2026 The essencekit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "essencekit/error.hpp"

namespace essencekit {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Norms at or below this are treated as zero by the cosine ops.
inline constexpr double kNormEpsilon = 1e-12;

struct LatentShape {
  std::size_t layers = 0;
  std::size_t dims = 0;

  std::size_t size() const noexcept { return layers * dims; }
  bool operator==(const LatentShape&) const = default;
};

struct ImageShape {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;

  std::size_t size() const noexcept { return height * width * channels; }
  bool operator==(const ImageShape&) const = default;
};

struct ValueRange {
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();

  bool bounded() const noexcept;
  bool contains(double v) const noexcept { return v >= lo && v <= hi; }
  bool operator==(const ValueRange&) const = default;

  static ValueRange unbounded() { return {}; }
};

enum class ColorOrder { Gray, RGB, BGR };

std::string to_string(const LatentShape& shape);
std::string to_string(const ImageShape& shape);

class EssenceVector;

/// A point in a generator's extended (per-layer) latent space, stored
/// layer-major: element (l, d) lives at index l * dims + d.
class LatentCode {
 public:
  LatentCode(LatentShape shape, Vector data, std::string space_id);

  static LatentCode zeros(LatentShape shape, std::string space_id);

  const LatentShape& shape() const noexcept { return shape_; }
  const Vector& data() const noexcept { return data_; }
  const std::string& space_id() const noexcept { return space_id_; }
  double at(std::size_t layer, std::size_t dim) const;

  // Elementwise shift; shape and space must match.
  LatentCode operator+(const EssenceVector& shift) const;
  LatentCode operator-(const EssenceVector& shift) const;

 private:
  LatentShape shape_;
  Vector data_;
  std::string space_id_;
};

enum class EssenceMethod { Optimizer, Encoder, Manual };

std::string_view to_string(EssenceMethod method) noexcept;
EssenceMethod essence_method_from_string(std::string_view name);

struct Provenance {
  EssenceMethod method = EssenceMethod::Manual;
  std::string target_digest;
  std::string config_digest;

  bool operator==(const Provenance&) const = default;
};

/// The learned latent shift b. Same layout as LatentCode.
class EssenceVector {
 public:
  EssenceVector(LatentShape shape, Vector data, std::string space_id, Provenance provenance);

  // Hand-built shift (tests, tooling); digests are derived from the data.
  static EssenceVector manual(LatentShape shape, Vector data, std::string space_id);
  static EssenceVector zeros(LatentShape shape, std::string space_id);

  const LatentShape& shape() const noexcept { return shape_; }
  const Vector& data() const noexcept { return data_; }
  const std::string& space_id() const noexcept { return space_id_; }
  const Provenance& provenance() const noexcept { return provenance_; }

  EssenceVector operator-() const;

 private:
  LatentShape shape_;
  Vector data_;
  std::string space_id_;
  Provenance provenance_;
};

class SemanticEmbedding {
 public:
  SemanticEmbedding(Vector data, std::string encoder_id);

  const Vector& data() const noexcept { return data_; }
  const std::string& encoder_id() const noexcept { return encoder_id_; }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(data_.size()); }

 private:
  Vector data_;
  std::string encoder_id_;
};

/// Difference between two embeddings of the same encoder.
class SemanticDelta {
 public:
  SemanticDelta(Vector data, std::string encoder_id);

  static SemanticDelta between(const SemanticEmbedding& after, const SemanticEmbedding& before);

  const Vector& data() const noexcept { return data_; }
  const std::string& encoder_id() const noexcept { return encoder_id_; }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(data_.size()); }

 private:
  Vector data_;
  std::string encoder_id_;
};

/// H x W x C image, row-major with interleaved channels.
class ImageTensor {
 public:
  ImageTensor(ImageShape shape, Vector data, ValueRange range = ValueRange::unbounded(),
              ColorOrder order = ColorOrder::Gray);

  static ImageTensor zeros(ImageShape shape, ValueRange range = ValueRange::unbounded());

  const ImageShape& shape() const noexcept { return shape_; }
  const Vector& data() const noexcept { return data_; }
  const ValueRange& value_range() const noexcept { return range_; }
  ColorOrder color_order() const noexcept { return order_; }
  double at(std::size_t y, std::size_t x, std::size_t c) const;

 private:
  ImageShape shape_;
  Vector data_;
  ValueRange range_;
  ColorOrder order_;
};

class SourceBatch {
 public:
  SourceBatch(std::vector<LatentCode> latents, std::string batch_id);

  const std::vector<LatentCode>& latents() const noexcept { return latents_; }
  const std::string& batch_id() const noexcept { return batch_id_; }
  std::size_t size() const noexcept { return latents_.size(); }
  const std::string& space_id() const noexcept { return latents_.front().space_id(); }
  const LatentShape& shape() const noexcept { return latents_.front().shape(); }

 private:
  std::vector<LatentCode> latents_;
  std::string batch_id_;
};

double cosine_similarity(const Eigen::Ref<const Vector>& a, const Eigen::Ref<const Vector>& b);
double cosine_distance(const Eigen::Ref<const Vector>& a, const Eigen::Ref<const Vector>& b);

// Gradient of cosine_similarity(a, b) with respect to b.
Vector cosine_similarity_grad(const Eigen::Ref<const Vector>& a, const Eigen::Ref<const Vector>& b);

bool all_finite(const Eigen::Ref<const Vector>& v) noexcept;

// Neumaier-compensated accumulator so that sums over pairs are insensitive
// to evaluation order at the 1e-12 level.
class CompensatedSum {
 public:
  void add(double value) noexcept;
  double value() const noexcept { return sum_ + compensation_; }

 private:
  double sum_ = 0.0;
  double compensation_ = 0.0;
};

}  // namespace essencekit

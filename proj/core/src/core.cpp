// Copyright 2026 The essencekit Authors
// SPDX-License-Identifier: Apache-2.0

#include "essencekit/core.hpp"

#include <algorithm>
#include <cmath>

#include "essencekit/digest.hpp"

namespace essencekit {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::ZeroVector: return "ZeroVector";
    case ErrorCode::DimMismatch: return "DimMismatch";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::SpaceMismatch: return "SpaceMismatch";
    case ErrorCode::ZeroEmbedding: return "ZeroEmbedding";
    case ErrorCode::EmptyBatch: return "EmptyBatch";
    case ErrorCode::BatchTooSmall: return "BatchTooSmall";
    case ErrorCode::MissingInverter: return "MissingInverter";
    case ErrorCode::NonTrainableInverter: return "NonTrainableInverter";
    case ErrorCode::SingularCovariance: return "SingularCovariance";
    case ErrorCode::InsufficientSamples: return "InsufficientSamples";
    case ErrorCode::MissingPair: return "MissingPair";
    case ErrorCode::DuplicatePair: return "DuplicatePair";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::InvalidValue: return "InvalidValue";
    case ErrorCode::Io: return "Io";
    case ErrorCode::Format: return "Format";
    case ErrorCode::BackendUnavailable: return "BackendUnavailable";
    case ErrorCode::ProfileMismatch: return "ProfileMismatch";
    case ErrorCode::NumericFailure: return "NumericFailure";
  }
  return "Unknown";
}

bool ValueRange::bounded() const noexcept { return std::isfinite(lo) && std::isfinite(hi); }

std::string to_string(const LatentShape& shape) {
  return "(" + std::to_string(shape.layers) + ", " + std::to_string(shape.dims) + ")";
}

std::string to_string(const ImageShape& shape) {
  return "(" + std::to_string(shape.height) + ", " + std::to_string(shape.width) + ", " +
         std::to_string(shape.channels) + ")";
}

bool all_finite(const Eigen::Ref<const Vector>& v) noexcept { return v.allFinite(); }

namespace {

void check_latent_layout(const LatentShape& shape, const Vector& data, const std::string& space_id,
                         const char* what) {
  if (shape.layers < 1 || shape.dims < 1) {
    raise(ErrorCode::ShapeMismatch, std::string(what) + " shape must be at least (1, 1), got " +
                                        to_string(shape));
  }
  if (static_cast<std::size_t>(data.size()) != shape.size()) {
    raise(ErrorCode::ShapeMismatch, std::string(what) + " data has " + std::to_string(data.size()) +
                                        " entries, shape " + to_string(shape) + " needs " +
                                        std::to_string(shape.size()));
  }
  if (!data.allFinite()) raise(ErrorCode::InvalidValue, std::string(what) + " has non-finite entries");
  if (space_id.empty()) raise(ErrorCode::InvalidValue, std::string(what) + " needs a space_id");
}

void check_same_space(const std::string& a, const std::string& b) {
  if (a != b) raise(ErrorCode::SpaceMismatch, "latent space '" + a + "' vs '" + b + "'");
}

}  // namespace

LatentCode::LatentCode(LatentShape shape, Vector data, std::string space_id)
    : shape_(shape), data_(std::move(data)), space_id_(std::move(space_id)) {
  check_latent_layout(shape_, data_, space_id_, "LatentCode");
}

LatentCode LatentCode::zeros(LatentShape shape, std::string space_id) {
  return LatentCode(shape, Vector::Zero(static_cast<Eigen::Index>(shape.size())), std::move(space_id));
}

double LatentCode::at(std::size_t layer, std::size_t dim) const {
  if (layer >= shape_.layers || dim >= shape_.dims) raise(ErrorCode::ShapeMismatch, "latent index out of range");
  return data_[static_cast<Eigen::Index>(layer * shape_.dims + dim)];
}

LatentCode LatentCode::operator+(const EssenceVector& shift) const {
  check_same_space(space_id_, shift.space_id());
  if (!(shape_ == shift.shape())) {
    raise(ErrorCode::ShapeMismatch, "latent " + to_string(shape_) + " vs essence " + to_string(shift.shape()));
  }
  return LatentCode(shape_, data_ + shift.data(), space_id_);
}

LatentCode LatentCode::operator-(const EssenceVector& shift) const { return *this + (-shift); }

std::string_view to_string(EssenceMethod method) noexcept {
  switch (method) {
    case EssenceMethod::Optimizer: return "optimizer";
    case EssenceMethod::Encoder: return "encoder";
    case EssenceMethod::Manual: return "manual";
  }
  return "manual";
}

EssenceMethod essence_method_from_string(std::string_view name) {
  if (name == "optimizer") return EssenceMethod::Optimizer;
  if (name == "encoder") return EssenceMethod::Encoder;
  if (name == "manual") return EssenceMethod::Manual;
  raise(ErrorCode::Format, "unknown essence method '" + std::string(name) + "'");
}

EssenceVector::EssenceVector(LatentShape shape, Vector data, std::string space_id, Provenance provenance)
    : shape_(shape), data_(std::move(data)), space_id_(std::move(space_id)), provenance_(std::move(provenance)) {
  check_latent_layout(shape_, data_, space_id_, "EssenceVector");
  if (provenance_.target_digest.empty() || provenance_.config_digest.empty()) {
    raise(ErrorCode::InvalidValue, "EssenceVector provenance digests must be non-empty");
  }
}

EssenceVector EssenceVector::manual(LatentShape shape, Vector data, std::string space_id) {
  Provenance p;
  p.method = EssenceMethod::Manual;
  p.config_digest = "manual";
  p.target_digest = digest_of(data);
  return EssenceVector(shape, std::move(data), std::move(space_id), std::move(p));
}

EssenceVector EssenceVector::zeros(LatentShape shape, std::string space_id) {
  return manual(shape, Vector::Zero(static_cast<Eigen::Index>(shape.size())), std::move(space_id));
}

EssenceVector EssenceVector::operator-() const {
  return EssenceVector(shape_, -data_, space_id_, provenance_);
}

SemanticEmbedding::SemanticEmbedding(Vector data, std::string encoder_id)
    : data_(std::move(data)), encoder_id_(std::move(encoder_id)) {
  if (data_.size() == 0) raise(ErrorCode::DimMismatch, "embedding must have at least one dimension");
  if (!data_.allFinite()) raise(ErrorCode::InvalidValue, "embedding has non-finite entries");
  if (encoder_id_.empty()) raise(ErrorCode::InvalidValue, "embedding needs an encoder_id");
}

SemanticDelta::SemanticDelta(Vector data, std::string encoder_id)
    : data_(std::move(data)), encoder_id_(std::move(encoder_id)) {
  if (!data_.allFinite()) raise(ErrorCode::InvalidValue, "delta has non-finite entries");
  if (encoder_id_.empty()) raise(ErrorCode::InvalidValue, "delta needs an encoder_id");
}

SemanticDelta SemanticDelta::between(const SemanticEmbedding& after, const SemanticEmbedding& before) {
  if (after.encoder_id() != before.encoder_id()) {
    raise(ErrorCode::SpaceMismatch, "encoder '" + after.encoder_id() + "' vs '" + before.encoder_id() + "'");
  }
  if (after.dim() != before.dim()) raise(ErrorCode::DimMismatch, "embedding dims differ");
  return SemanticDelta(after.data() - before.data(), after.encoder_id());
}

ImageTensor::ImageTensor(ImageShape shape, Vector data, ValueRange range, ColorOrder order)
    : shape_(shape), data_(std::move(data)), range_(range), order_(order) {
  if (shape_.channels != 1 && shape_.channels != 3) {
    raise(ErrorCode::ShapeMismatch, "image channels must be 1 or 3, got " + std::to_string(shape_.channels));
  }
  if (shape_.height == 0 || shape_.width == 0) raise(ErrorCode::ShapeMismatch, "empty image");
  if (static_cast<std::size_t>(data_.size()) != shape_.size()) {
    raise(ErrorCode::ShapeMismatch, "image data size does not match " + to_string(shape_));
  }
  if (shape_.channels == 1 && order_ != ColorOrder::Gray) order_ = ColorOrder::Gray;
  if (shape_.channels == 3 && order_ == ColorOrder::Gray) order_ = ColorOrder::RGB;
  if (!(range_.lo <= range_.hi)) raise(ErrorCode::InvalidValue, "invalid value range");
  for (Eigen::Index i = 0; i < data_.size(); ++i) {
    if (!std::isfinite(data_[i]) || !range_.contains(data_[i])) {
      raise(ErrorCode::InvalidValue, "image value " + std::to_string(data_[i]) + " outside declared range");
    }
  }
}

ImageTensor ImageTensor::zeros(ImageShape shape, ValueRange range) {
  return ImageTensor(shape, Vector::Zero(static_cast<Eigen::Index>(shape.size())), range);
}

double ImageTensor::at(std::size_t y, std::size_t x, std::size_t c) const {
  if (y >= shape_.height || x >= shape_.width || c >= shape_.channels) {
    raise(ErrorCode::ShapeMismatch, "pixel index out of range");
  }
  return data_[static_cast<Eigen::Index>((y * shape_.width + x) * shape_.channels + c)];
}

SourceBatch::SourceBatch(std::vector<LatentCode> latents, std::string batch_id)
    : latents_(std::move(latents)), batch_id_(std::move(batch_id)) {
  if (latents_.empty()) raise(ErrorCode::EmptyBatch, "source batch is empty");
  for (const auto& z : latents_) {
    check_same_space(latents_.front().space_id(), z.space_id());
    if (!(z.shape() == latents_.front().shape())) raise(ErrorCode::ShapeMismatch, "source batch shapes differ");
  }
}

double cosine_similarity(const Eigen::Ref<const Vector>& a, const Eigen::Ref<const Vector>& b) {
  if (a.size() != b.size()) {
    raise(ErrorCode::DimMismatch, "cosine of dims " + std::to_string(a.size()) + " and " + std::to_string(b.size()));
  }
  const double na = a.norm();
  const double nb = b.norm();
  if (na <= kNormEpsilon || nb <= kNormEpsilon) raise(ErrorCode::ZeroVector, "cosine of a (near-)zero vector");
  return std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
}

double cosine_distance(const Eigen::Ref<const Vector>& a, const Eigen::Ref<const Vector>& b) {
  return 1.0 - cosine_similarity(a, b);
}

Vector cosine_similarity_grad(const Eigen::Ref<const Vector>& a, const Eigen::Ref<const Vector>& b) {
  if (a.size() != b.size()) raise(ErrorCode::DimMismatch, "cosine gradient dims differ");
  const double na = a.norm();
  const double nb = b.norm();
  if (na <= kNormEpsilon || nb <= kNormEpsilon) raise(ErrorCode::ZeroVector, "cosine gradient at a zero vector");
  const double cos = a.dot(b) / (na * nb);
  return a / (na * nb) - (cos / (nb * nb)) * b;
}

void CompensatedSum::add(double value) noexcept {
  const double t = sum_ + value;
  if (std::abs(sum_) >= std::abs(value)) {
    compensation_ += (sum_ - t) + value;
  } else {
    compensation_ += (value - t) + sum_;
  }
  sum_ = t;
}

}  // namespace essencekit

// Copyright 2026 The essencekit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <string>

#include "essencekit/backends.hpp"

namespace essencekit::toy {

// Default desk-scale dimensions.
inline constexpr LatentShape kLatentShape{3, 8};
inline constexpr ImageShape kImageShape{8, 8, 1};
inline constexpr std::size_t kEmbedDim = 16;

// Seeded standard-normal matrix, filled row by row.
Matrix standard_normal(std::size_t rows, std::size_t cols, std::uint64_t seed);
// Independent stream for component `tag` of a profile seeded with `seed`.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag);

/// decode(z) = reshape(A * flatten(z)), exactly linear, unbounded range.
class LinearGenerator final : public Generator {
 public:
  LinearGenerator(std::uint64_t seed, LatentShape latent = kLatentShape, ImageShape image = kImageShape);
  LinearGenerator(Matrix a, LatentShape latent, ImageShape image, std::string space_id);

  const std::string& space_id() const override { return space_id_; }
  LatentShape latent_shape() const override { return latent_; }
  ImageShape image_shape() const override { return image_; }
  ValueRange value_range() const override { return ValueRange::unbounded(); }
  std::string parameter_digest() const override;

  const Matrix& matrix() const noexcept { return a_; }

 protected:
  Vector decode_impl(const Vector& z) const override;
  Vector decode_vjp_impl(const Vector& z, const Vector& grad_image) const override;

 private:
  Matrix a_;
  LatentShape latent_;
  ImageShape image_;
  std::string space_id_;
};

/// raw_embed(x) = M * flatten(x), exactly linear; no normalization.
class LinearEncoder final : public SemanticEncoder {
 public:
  LinearEncoder(std::uint64_t seed, ImageShape image = kImageShape, std::size_t embed_dim = kEmbedDim,
                std::string encoder_id = {});
  LinearEncoder(Matrix m, ImageShape image, std::string encoder_id);

  const std::string& encoder_id() const override { return encoder_id_; }
  std::size_t embed_dim() const override { return static_cast<std::size_t>(m_.rows()); }
  ImageShape input_shape() const override { return image_; }
  std::string parameter_digest() const override;

  const Matrix& matrix() const noexcept { return m_; }

 protected:
  Vector embed_impl(const Vector& pixels) const override;
  Vector embed_vjp_impl(const Vector& pixels, const Vector& grad_embedding) const override;

 private:
  Matrix m_;
  ImageShape image_;
  std::string encoder_id_;
};

/// decode(z) = tanh(gain * A z / sqrt(L*D)); images in [-1, 1].
class TanhGenerator final : public Generator {
 public:
  TanhGenerator(std::uint64_t seed, double gain, LatentShape latent = kLatentShape,
                ImageShape image = kImageShape);

  const std::string& space_id() const override { return space_id_; }
  LatentShape latent_shape() const override { return latent_; }
  ImageShape image_shape() const override { return image_; }
  ValueRange value_range() const override { return {-1.0, 1.0}; }
  std::string parameter_digest() const override;

 protected:
  Vector decode_impl(const Vector& z) const override;
  Vector decode_vjp_impl(const Vector& z, const Vector& grad_image) const override;

 private:
  Matrix a_;
  double scale_;
  LatentShape latent_;
  ImageShape image_;
  std::string space_id_;
};

/// embed(x) = M2 tanh(gain * M1 x / sqrt(P)) / sqrt(hidden).
class MlpEncoder final : public SemanticEncoder {
 public:
  MlpEncoder(std::uint64_t seed, double gain, std::size_t hidden = 32, ImageShape image = kImageShape,
             std::size_t embed_dim = kEmbedDim, std::string encoder_id = {});

  const std::string& encoder_id() const override { return encoder_id_; }
  std::size_t embed_dim() const override { return static_cast<std::size_t>(m2_.rows()); }
  ImageShape input_shape() const override { return image_; }
  std::string parameter_digest() const override;

 protected:
  Vector embed_impl(const Vector& pixels) const override;
  Vector embed_vjp_impl(const Vector& pixels, const Vector& grad_embedding) const override;

 private:
  Matrix m1_;
  Matrix m2_;
  double in_scale_;
  double out_scale_;
  ImageShape image_;
  std::string encoder_id_;
};

/// invert(x) = W flatten(x) + c. All of W and c are trainable.
class LinearInverter final : public TrainableInverter {
 public:
  LinearInverter(Matrix w, Vector c, LatentShape latent, ImageShape image, std::string space_id);

  // W = pinv(A), c = 0; exact on the range of a full-column-rank A.
  static LinearInverter pseudo_inverse(const LinearGenerator& g);
  // Ridge regression from decoded images back to latents drawn from N(0, I).
  static LinearInverter fit(const Generator& g, std::size_t samples, double ridge, std::uint64_t seed);

  const std::string& space_id() const override { return space_id_; }
  LatentShape latent_shape() const override { return latent_; }
  ImageShape input_shape() const override { return image_; }

  std::size_t parameter_count() const override;
  Vector parameters() const override;
  void set_parameters(const Eigen::Ref<const Vector>& params) override;
  std::unique_ptr<TrainableInverter> clone() const override;

 protected:
  Vector invert_impl(const Vector& pixels) const override;
  Vector invert_vjp_params_impl(const Vector& pixels, const Vector& grad_latent) const override;

 private:
  Matrix w_;
  Vector c_;
  LatentShape latent_;
  ImageShape image_;
  std::string space_id_;
};

/// Identity representation: the flattened image itself.
class FlattenFaceEmbedder final : public FaceEmbedder {
 public:
  explicit FlattenFaceEmbedder(ImageShape image = kImageShape) : image_(image) {}
  std::size_t dim() const override { return image_.size(); }
  ImageShape input_shape() const override { return image_; }

 protected:
  Vector embed_impl(const Vector& pixels) const override { return pixels; }

 private:
  ImageShape image_;
};

/// features(x) = tanh(R x / sqrt(P)), R seeded F x P.
class ProjectionFeatureExtractor final : public FeatureExtractor {
 public:
  ProjectionFeatureExtractor(std::uint64_t seed, std::size_t dim, ImageShape image = kImageShape);
  std::size_t dim() const override { return static_cast<std::size_t>(r_.rows()); }
  ImageShape input_shape() const override { return image_; }

 protected:
  Vector features_impl(const Vector& pixels) const override;

 private:
  Matrix r_;
  double scale_;
  ImageShape image_;
};

}  // namespace essencekit::toy

// Copyright 2026 The essencekit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <memory>
#include <string>

#include "essencekit/core.hpp"

namespace essencekit {

// Capability interfaces for the external models. Public entry points validate
// shapes and tags; implementations override the protected *_impl hooks.
// All const members must be safe for concurrent calls.

class Generator {
 public:
  virtual ~Generator() = default;

  virtual const std::string& space_id() const = 0;
  virtual LatentShape latent_shape() const = 0;
  virtual ImageShape image_shape() const = 0;
  virtual ValueRange value_range() const = 0;
  // Digest of the frozen parameters.
  virtual std::string parameter_digest() const = 0;

  ImageTensor decode(const LatentCode& z) const;
  // Pullback of an image-space gradient to the latent: J(z)^T grad.
  Vector decode_vjp(const LatentCode& z, const Eigen::Ref<const Vector>& grad_image) const;

  void check_latent(const LatentCode& z) const;

 protected:
  virtual Vector decode_impl(const Vector& z) const = 0;
  virtual Vector decode_vjp_impl(const Vector& z, const Vector& grad_image) const = 0;
};

class SemanticEncoder {
 public:
  virtual ~SemanticEncoder() = default;

  virtual const std::string& encoder_id() const = 0;
  virtual std::size_t embed_dim() const = 0;
  virtual ImageShape input_shape() const = 0;
  virtual std::string parameter_digest() const = 0;

  // Raises ZeroEmbedding when the output norm is at or below kNormEpsilon.
  SemanticEmbedding embed(const ImageTensor& image) const;
  Vector raw_embed(const ImageTensor& image) const;
  Vector embed_vjp(const ImageTensor& image, const Eigen::Ref<const Vector>& grad_embedding) const;

 protected:
  virtual Vector embed_impl(const Vector& pixels) const = 0;
  virtual Vector embed_vjp_impl(const Vector& pixels, const Vector& grad_embedding) const = 0;

 private:
  void check_image(const ImageTensor& image) const;
};

class Inverter {
 public:
  virtual ~Inverter() = default;

  virtual const std::string& space_id() const = 0;
  virtual LatentShape latent_shape() const = 0;
  virtual ImageShape input_shape() const = 0;

  LatentCode invert(const ImageTensor& image) const;

 protected:
  virtual Vector invert_impl(const Vector& pixels) const = 0;
};

/// Inverter whose parameters can be fine-tuned through gradients.
class TrainableInverter : public Inverter {
 public:
  virtual std::size_t parameter_count() const = 0;
  virtual Vector parameters() const = 0;
  virtual void set_parameters(const Eigen::Ref<const Vector>& params) = 0;
  // d<grad_latent, invert(image)> / d params.
  Vector invert_vjp_params(const ImageTensor& image, const Eigen::Ref<const Vector>& grad_latent) const;
  virtual std::unique_ptr<TrainableInverter> clone() const = 0;

 protected:
  virtual Vector invert_vjp_params_impl(const Vector& pixels, const Vector& grad_latent) const = 0;
};

class FaceEmbedder {
 public:
  virtual ~FaceEmbedder() = default;
  virtual std::size_t dim() const = 0;
  virtual ImageShape input_shape() const = 0;
  Vector embed(const ImageTensor& image) const;

 protected:
  virtual Vector embed_impl(const Vector& pixels) const = 0;
};

class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual std::size_t dim() const = 0;
  virtual ImageShape input_shape() const = 0;
  Vector features(const ImageTensor& image) const;

 protected:
  virtual Vector features_impl(const Vector& pixels) const = 0;
};

/// Everything one experiment profile provides. The BLIP-role second encoder
/// and the FID extractor are optional.
struct BackendSet {
  std::string profile_name;
  std::string profile_digest;
  std::shared_ptr<const Generator> generator;
  std::shared_ptr<const SemanticEncoder> encoder;
  std::shared_ptr<const SemanticEncoder> second_encoder;
  std::shared_ptr<const TrainableInverter> inverter;
  std::shared_ptr<const FaceEmbedder> face;
  std::shared_ptr<const FeatureExtractor> features;
};

// Shape/determinism suite every backend set must pass before use.
// Raises the first violation found.
void check_conformance(const BackendSet& backends, std::uint64_t seed = 0);

}  // namespace essencekit

// Copyright 2026 The essencekit Authors
// SPDX-License-Identifier: Apache-2.0

#include "essencekit/backends.hpp"

#include <random>

namespace essencekit {

namespace {

void check_image_shape(const ImageTensor& image, const ImageShape& expected, const char* who) {
  if (!(image.shape() == expected)) {
    raise(ErrorCode::ShapeMismatch, std::string(who) + " expects image " + to_string(expected) + ", got " +
                                        to_string(image.shape()));
  }
}

void check_output(const Vector& v, std::size_t expected, const char* who) {
  if (static_cast<std::size_t>(v.size()) != expected) {
    raise(ErrorCode::ShapeMismatch, std::string(who) + " produced " + std::to_string(v.size()) +
                                        " values, expected " + std::to_string(expected));
  }
  if (!v.allFinite()) raise(ErrorCode::NumericFailure, std::string(who) + " produced non-finite values");
}

}  // namespace

void Generator::check_latent(const LatentCode& z) const {
  if (z.space_id() != space_id()) {
    raise(ErrorCode::SpaceMismatch, "latent from space '" + z.space_id() + "' given to generator '" + space_id() + "'");
  }
  if (!(z.shape() == latent_shape())) {
    raise(ErrorCode::ShapeMismatch, "generator expects latent " + to_string(latent_shape()) + ", got " +
                                        to_string(z.shape()));
  }
}

ImageTensor Generator::decode(const LatentCode& z) const {
  check_latent(z);
  Vector pixels = decode_impl(z.data());
  check_output(pixels, image_shape().size(), "generator");
  return ImageTensor(image_shape(), std::move(pixels), value_range());
}

Vector Generator::decode_vjp(const LatentCode& z, const Eigen::Ref<const Vector>& grad_image) const {
  check_latent(z);
  if (static_cast<std::size_t>(grad_image.size()) != image_shape().size()) {
    raise(ErrorCode::ShapeMismatch, "image gradient has wrong size");
  }
  Vector g = decode_vjp_impl(z.data(), grad_image);
  check_output(g, latent_shape().size(), "generator vjp");
  return g;
}

void SemanticEncoder::check_image(const ImageTensor& image) const {
  check_image_shape(image, input_shape(), "semantic encoder");
}

Vector SemanticEncoder::raw_embed(const ImageTensor& image) const {
  check_image(image);
  Vector e = embed_impl(image.data());
  check_output(e, embed_dim(), "semantic encoder");
  return e;
}

SemanticEmbedding SemanticEncoder::embed(const ImageTensor& image) const {
  Vector e = raw_embed(image);
  if (e.norm() <= kNormEpsilon) raise(ErrorCode::ZeroEmbedding, "encoder '" + encoder_id() + "' emitted a zero vector");
  return SemanticEmbedding(std::move(e), encoder_id());
}

Vector SemanticEncoder::embed_vjp(const ImageTensor& image, const Eigen::Ref<const Vector>& grad_embedding) const {
  check_image(image);
  if (static_cast<std::size_t>(grad_embedding.size()) != embed_dim()) {
    raise(ErrorCode::DimMismatch, "embedding gradient has wrong size");
  }
  Vector g = embed_vjp_impl(image.data(), grad_embedding);
  check_output(g, input_shape().size(), "encoder vjp");
  return g;
}

LatentCode Inverter::invert(const ImageTensor& image) const {
  check_image_shape(image, input_shape(), "inverter");
  Vector z = invert_impl(image.data());
  check_output(z, latent_shape().size(), "inverter");
  return LatentCode(latent_shape(), std::move(z), space_id());
}

Vector TrainableInverter::invert_vjp_params(const ImageTensor& image, const Eigen::Ref<const Vector>& grad_latent) const {
  check_image_shape(image, input_shape(), "inverter");
  if (static_cast<std::size_t>(grad_latent.size()) != latent_shape().size()) {
    raise(ErrorCode::ShapeMismatch, "latent gradient has wrong size");
  }
  Vector g = invert_vjp_params_impl(image.data(), grad_latent);
  check_output(g, parameter_count(), "inverter parameter vjp");
  return g;
}

Vector FaceEmbedder::embed(const ImageTensor& image) const {
  check_image_shape(image, input_shape(), "face embedder");
  Vector e = embed_impl(image.data());
  check_output(e, dim(), "face embedder");
  return e;
}

Vector FeatureExtractor::features(const ImageTensor& image) const {
  check_image_shape(image, input_shape(), "feature extractor");
  Vector f = features_impl(image.data());
  check_output(f, dim(), "feature extractor");
  return f;
}

void check_conformance(const BackendSet& b, std::uint64_t seed) {
  if (!b.generator || !b.encoder) raise(ErrorCode::BackendUnavailable, "profile lacks a generator or encoder");
  const auto& g = *b.generator;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector raw(static_cast<Eigen::Index>(g.latent_shape().size()));
  for (auto& v : raw) v = normal(rng);
  const LatentCode z(g.latent_shape(), raw, g.space_id());

  const auto img1 = g.decode(z);
  const auto img2 = g.decode(z);
  if (img1.data() != img2.data()) raise(ErrorCode::BackendUnavailable, "generator decode is not deterministic");

  auto check_encoder = [&](const SemanticEncoder& c) {
    if (!(c.input_shape() == g.image_shape())) {
      raise(ErrorCode::ShapeMismatch, "encoder '" + c.encoder_id() + "' input does not match generator output");
    }
    if (c.embed_dim() == 0) raise(ErrorCode::DimMismatch, "encoder has zero embedding dim");
    const auto e1 = c.raw_embed(img1);
    if (e1 != c.raw_embed(img1)) raise(ErrorCode::BackendUnavailable, "encoder is not deterministic");
  };
  check_encoder(*b.encoder);
  if (b.second_encoder) check_encoder(*b.second_encoder);

  if (b.inverter) {
    if (b.inverter->space_id() != g.space_id() || !(b.inverter->latent_shape() == g.latent_shape())) {
      raise(ErrorCode::SpaceMismatch, "inverter is not paired with the generator");
    }
    const auto z1 = b.inverter->invert(img1);
    if (z1.data() != b.inverter->invert(img1).data()) raise(ErrorCode::BackendUnavailable, "inverter is not deterministic");
  }
  if (b.face) {
    const auto f = b.face->embed(img1);
    if (f != b.face->embed(img1)) raise(ErrorCode::BackendUnavailable, "face embedder is not deterministic");
  }
  if (b.features) {
    const auto f = b.features->features(img1);
    if (f != b.features->features(img1)) raise(ErrorCode::BackendUnavailable, "feature extractor is not deterministic");
  }
}

}  // namespace essencekit

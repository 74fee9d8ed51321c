// Copyright 2026 The essencekit Authors
// SPDX-License-Identifier: Apache-2.0

#include "essencekit/toy_backends.hpp"

#include <cmath>

#include <Eigen/Dense>

#include "essencekit/digest.hpp"

namespace essencekit::toy {

namespace {

std::string matrix_digest(const Matrix& m) {
  return digest_of(Eigen::Map<const Vector>(m.data(), m.size()));
}

Vector tanh_of(const Vector& u) { return u.array().tanh().matrix(); }

}  // namespace

Matrix standard_normal(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = normal(rng);
  }
  return m;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) {
  // splitmix64 finalizer over (seed, tag)
  std::uint64_t x = seed + 0x9E3779B97F4A7C15ULL * (tag + 1);
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// ---------------------------------------------------------------------------

LinearGenerator::LinearGenerator(std::uint64_t seed, LatentShape latent, ImageShape image)
    : LinearGenerator(standard_normal(image.size(), latent.size(), seed), latent, image,
                      "toy-linear:" + std::to_string(seed)) {}

LinearGenerator::LinearGenerator(Matrix a, LatentShape latent, ImageShape image, std::string space_id)
    : a_(std::move(a)), latent_(latent), image_(image), space_id_(std::move(space_id)) {
  if (static_cast<std::size_t>(a_.rows()) != image_.size() || static_cast<std::size_t>(a_.cols()) != latent_.size()) {
    raise(ErrorCode::ShapeMismatch, "generator matrix does not map " + to_string(latent_) + " to " + to_string(image_));
  }
}

std::string LinearGenerator::parameter_digest() const { return matrix_digest(a_); }

Vector LinearGenerator::decode_impl(const Vector& z) const { return a_ * z; }

Vector LinearGenerator::decode_vjp_impl(const Vector&, const Vector& grad_image) const {
  return a_.transpose() * grad_image;
}

LinearEncoder::LinearEncoder(std::uint64_t seed, ImageShape image, std::size_t embed_dim, std::string encoder_id)
    : LinearEncoder(standard_normal(embed_dim, image.size(), seed), image,
                    encoder_id.empty() ? "toy-linear-c:" + std::to_string(seed) : std::move(encoder_id)) {}

LinearEncoder::LinearEncoder(Matrix m, ImageShape image, std::string encoder_id)
    : m_(std::move(m)), image_(image), encoder_id_(std::move(encoder_id)) {
  if (static_cast<std::size_t>(m_.cols()) != image_.size()) {
    raise(ErrorCode::ShapeMismatch, "encoder matrix does not accept " + to_string(image_));
  }
}

std::string LinearEncoder::parameter_digest() const { return matrix_digest(m_); }

Vector LinearEncoder::embed_impl(const Vector& pixels) const { return m_ * pixels; }

Vector LinearEncoder::embed_vjp_impl(const Vector&, const Vector& grad_embedding) const {
  return m_.transpose() * grad_embedding;
}

// ---------------------------------------------------------------------------

TanhGenerator::TanhGenerator(std::uint64_t seed, double gain, LatentShape latent, ImageShape image)
    : a_(standard_normal(image.size(), latent.size(), seed)),
      scale_(gain / std::sqrt(static_cast<double>(latent.size()))),
      latent_(latent),
      image_(image),
      space_id_("toy-tanh:" + std::to_string(seed)) {
  if (!(gain > 0.0)) raise(ErrorCode::InvalidConfig, "generator gain must be positive");
}

std::string TanhGenerator::parameter_digest() const {
  return sha256_hex(matrix_digest(a_) + ":" + std::to_string(scale_));
}

Vector TanhGenerator::decode_impl(const Vector& z) const { return tanh_of(scale_ * (a_ * z)); }

Vector TanhGenerator::decode_vjp_impl(const Vector& z, const Vector& grad_image) const {
  const Vector x = decode_impl(z);
  const Vector local = ((1.0 - x.array().square()) * grad_image.array()).matrix();
  return scale_ * (a_.transpose() * local);
}

MlpEncoder::MlpEncoder(std::uint64_t seed, double gain, std::size_t hidden, ImageShape image, std::size_t embed_dim,
                       std::string encoder_id)
    : m1_(standard_normal(hidden, image.size(), seed)),
      m2_(standard_normal(embed_dim, hidden, derive_seed(seed, 1))),
      in_scale_(gain / std::sqrt(static_cast<double>(image.size()))),
      out_scale_(1.0 / std::sqrt(static_cast<double>(hidden))),
      image_(image),
      encoder_id_(encoder_id.empty() ? "toy-mlp-c:" + std::to_string(seed) : std::move(encoder_id)) {
  if (!(gain > 0.0)) raise(ErrorCode::InvalidConfig, "encoder gain must be positive");
}

std::string MlpEncoder::parameter_digest() const {
  return sha256_hex(matrix_digest(m1_) + matrix_digest(m2_) + ":" + std::to_string(in_scale_));
}

Vector MlpEncoder::embed_impl(const Vector& pixels) const {
  return out_scale_ * (m2_ * tanh_of(in_scale_ * (m1_ * pixels)));
}

Vector MlpEncoder::embed_vjp_impl(const Vector& pixels, const Vector& grad_embedding) const {
  const Vector h = tanh_of(in_scale_ * (m1_ * pixels));
  const Vector gh = out_scale_ * (m2_.transpose() * grad_embedding);
  const Vector local = ((1.0 - h.array().square()) * gh.array()).matrix();
  return in_scale_ * (m1_.transpose() * local);
}

// ---------------------------------------------------------------------------

LinearInverter::LinearInverter(Matrix w, Vector c, LatentShape latent, ImageShape image, std::string space_id)
    : w_(std::move(w)), c_(std::move(c)), latent_(latent), image_(image), space_id_(std::move(space_id)) {
  if (static_cast<std::size_t>(w_.rows()) != latent_.size() || static_cast<std::size_t>(w_.cols()) != image_.size() ||
      c_.size() != w_.rows()) {
    raise(ErrorCode::ShapeMismatch, "inverter parameters do not map " + to_string(image_) + " to " + to_string(latent_));
  }
}

LinearInverter LinearInverter::pseudo_inverse(const LinearGenerator& g) {
  Matrix pinv = g.matrix().completeOrthogonalDecomposition().pseudoInverse();
  return LinearInverter(std::move(pinv), Vector::Zero(static_cast<Eigen::Index>(g.latent_shape().size())),
                        g.latent_shape(), g.image_shape(), g.space_id());
}

LinearInverter LinearInverter::fit(const Generator& g, std::size_t samples, double ridge, std::uint64_t seed) {
  const auto k = static_cast<Eigen::Index>(g.latent_shape().size());
  const auto p = static_cast<Eigen::Index>(g.image_shape().size());
  const Matrix zs = standard_normal(samples, static_cast<std::size_t>(k), seed);
  Matrix xa(static_cast<Eigen::Index>(samples), p + 1);
  for (Eigen::Index i = 0; i < xa.rows(); ++i) {
    const LatentCode z(g.latent_shape(), zs.row(i).transpose(), g.space_id());
    xa.row(i).head(p) = g.decode(z).data().transpose();
    xa(i, p) = 1.0;
  }
  Matrix gram = xa.transpose() * xa;
  gram.diagonal().array() += ridge;
  const Matrix coef = gram.ldlt().solve(xa.transpose() * zs);  // (P+1) x K
  return LinearInverter(coef.topRows(p).transpose(), coef.row(p).transpose(), g.latent_shape(), g.image_shape(),
                        g.space_id());
}

std::size_t LinearInverter::parameter_count() const { return static_cast<std::size_t>(w_.size() + c_.size()); }

Vector LinearInverter::parameters() const {
  Vector out(static_cast<Eigen::Index>(parameter_count()));
  Eigen::Index i = 0;
  for (Eigen::Index r = 0; r < w_.rows(); ++r) {
    for (Eigen::Index c = 0; c < w_.cols(); ++c) out[i++] = w_(r, c);
  }
  out.tail(c_.size()) = c_;
  return out;
}

void LinearInverter::set_parameters(const Eigen::Ref<const Vector>& params) {
  if (static_cast<std::size_t>(params.size()) != parameter_count()) {
    raise(ErrorCode::ShapeMismatch, "inverter expects " + std::to_string(parameter_count()) + " parameters");
  }
  if (!params.allFinite()) raise(ErrorCode::NumericFailure, "non-finite inverter parameters");
  Eigen::Index i = 0;
  for (Eigen::Index r = 0; r < w_.rows(); ++r) {
    for (Eigen::Index c = 0; c < w_.cols(); ++c) w_(r, c) = params[i++];
  }
  c_ = params.tail(c_.size());
}

std::unique_ptr<TrainableInverter> LinearInverter::clone() const { return std::make_unique<LinearInverter>(*this); }

Vector LinearInverter::invert_impl(const Vector& pixels) const { return w_ * pixels + c_; }

Vector LinearInverter::invert_vjp_params_impl(const Vector& pixels, const Vector& grad_latent) const {
  Vector out(static_cast<Eigen::Index>(parameter_count()));
  Eigen::Index i = 0;
  for (Eigen::Index r = 0; r < w_.rows(); ++r) {
    for (Eigen::Index c = 0; c < w_.cols(); ++c) out[i++] = grad_latent[r] * pixels[c];
  }
  out.tail(c_.size()) = grad_latent;
  return out;
}

// ---------------------------------------------------------------------------

ProjectionFeatureExtractor::ProjectionFeatureExtractor(std::uint64_t seed, std::size_t dim, ImageShape image)
    : r_(standard_normal(dim, image.size(), seed)),
      scale_(1.0 / std::sqrt(static_cast<double>(image.size()))),
      image_(image) {}

Vector ProjectionFeatureExtractor::features_impl(const Vector& pixels) const {
  return tanh_of(scale_ * (r_ * pixels));
}

}  // namespace essencekit::toy

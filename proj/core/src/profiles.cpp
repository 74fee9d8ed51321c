// Copyright 2026 The essencekit Authors
// SPDX-License-Identifier: Apache-2.0

#include "essencekit/profiles.hpp"

#include <cstdlib>

#include "essencekit/digest.hpp"
#include "essencekit/essv.hpp"
#include "essencekit/toy_backends.hpp"

namespace essencekit {

std::string_view to_string(ProfileKind kind) noexcept {
  switch (kind) {
    case ProfileKind::Toy: return "toy";
    case ProfileKind::ToyLinear: return "toy-linear";
    case ProfileKind::Adapter: return "adapter";
  }
  return "toy";
}

namespace {

ProfileKind kind_from_string(const std::string& s) {
  if (s == "toy") return ProfileKind::Toy;
  if (s == "toy-linear") return ProfileKind::ToyLinear;
  if (s == "adapter") return ProfileKind::Adapter;
  raise(ErrorCode::InvalidConfig, "unknown profile kind '" + s + "'");
}

}  // namespace

nlohmann::json BackendProfile::to_json() const {
  return {
      {"kind", std::string(to_string(kind))},
      {"seed", seed},
      {"latent_shape", {latent_shape.layers, latent_shape.dims}},
      {"image_shape", {image_shape.height, image_shape.width, image_shape.channels}},
      {"embed_dim", embed_dim},
      {"hidden_dim", hidden_dim},
      {"generator_gain", generator_gain},
      {"encoder_gain", encoder_gain},
      {"feature_dim", feature_dim},
      {"second_encoder", second_encoder},
      {"inverter_samples", inverter_samples},
      {"inverter_ridge", inverter_ridge},
      {"checkpoints", checkpoints},
      {"preprocessing", preprocessing},
  };
}

BackendProfile BackendProfile::from_json(const std::string& name, const nlohmann::json& j) {
  BackendProfile p;
  p.name = name;
  try {
    p.kind = kind_from_string(j.value("kind", std::string("toy")));
    p.seed = j.value("seed", p.seed);
    if (j.contains("latent_shape")) {
      const auto& s = j.at("latent_shape");
      p.latent_shape = {s.at(0).get<std::size_t>(), s.at(1).get<std::size_t>()};
    }
    if (j.contains("image_shape")) {
      const auto& s = j.at("image_shape");
      p.image_shape = {s.at(0).get<std::size_t>(), s.at(1).get<std::size_t>(), s.at(2).get<std::size_t>()};
    }
    p.embed_dim = j.value("embed_dim", p.embed_dim);
    p.hidden_dim = j.value("hidden_dim", p.hidden_dim);
    p.generator_gain = j.value("generator_gain", p.generator_gain);
    p.encoder_gain = j.value("encoder_gain", p.encoder_gain);
    p.feature_dim = j.value("feature_dim", p.feature_dim);
    p.second_encoder = j.value("second_encoder", p.second_encoder);
    p.inverter_samples = j.value("inverter_samples", p.inverter_samples);
    p.inverter_ridge = j.value("inverter_ridge", p.inverter_ridge);
    if (j.contains("checkpoints")) p.checkpoints = j.at("checkpoints").get<std::map<std::string, std::string>>();
    if (j.contains("preprocessing")) p.preprocessing = j.at("preprocessing");
  } catch (const nlohmann::json::exception& e) {
    raise(ErrorCode::InvalidConfig, "profile '" + name + "': " + e.what());
  }
  return p;
}

std::string BackendProfile::digest() const { return sha256_hex(name + "\n" + to_json().dump()); }

std::vector<BackendProfile> builtin_profiles() {
  BackendProfile toy;
  toy.name = "toy";
  toy.kind = ProfileKind::Toy;

  BackendProfile linear;
  linear.name = "toy-linear";
  linear.kind = ProfileKind::ToyLinear;
  return {toy, linear};
}

ProfileRegistry ProfileRegistry::load(std::optional<std::filesystem::path> dir) {
  ProfileRegistry reg;
  for (auto& p : builtin_profiles()) reg.profiles_.emplace(p.name, p);
  if (!dir) {
    if (const char* env = std::getenv("ESSENCEKIT_PROFILE_DIR"); env != nullptr && *env != '\0') dir = env;
  }
  if (dir) {
    const auto file = *dir / "profiles.json";
    if (std::filesystem::exists(file)) {
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(essv::read_file(file));
      } catch (const nlohmann::json::exception& e) {
        raise(ErrorCode::InvalidConfig, file.string() + ": " + e.what());
      }
      const auto& entries = j.contains("profiles") ? j.at("profiles") : j;
      for (const auto& [name, body] : entries.items()) {
        reg.profiles_.insert_or_assign(name, BackendProfile::from_json(name, body));
      }
    }
  }
  return reg;
}

const BackendProfile& ProfileRegistry::get(const std::string& name) const {
  auto it = profiles_.find(name);
  if (it == profiles_.end()) raise(ErrorCode::InvalidConfig, "unknown profile '" + name + "'");
  return it->second;
}

std::vector<std::string> ProfileRegistry::names() const {
  std::vector<std::string> out;
  for (const auto& [name, _] : profiles_) out.push_back(name);
  return out;
}

BackendSet make_backends(const BackendProfile& p) {
  using toy::derive_seed;
  BackendSet b;
  b.profile_name = p.name;
  b.profile_digest = p.digest();
  switch (p.kind) {
    case ProfileKind::Toy: {
      auto g = std::make_shared<toy::TanhGenerator>(derive_seed(p.seed, 0), p.generator_gain, p.latent_shape,
                                                    p.image_shape);
      b.encoder = std::make_shared<toy::MlpEncoder>(derive_seed(p.seed, 1), p.encoder_gain, p.hidden_dim,
                                                    p.image_shape, p.embed_dim, "toy-clip:" + std::to_string(p.seed));
      if (p.second_encoder) {
        b.second_encoder = std::make_shared<toy::MlpEncoder>(derive_seed(p.seed, 2), p.encoder_gain, p.hidden_dim,
                                                             p.image_shape, p.embed_dim,
                                                             "toy-blip:" + std::to_string(p.seed));
      }
      b.inverter = std::make_shared<toy::LinearInverter>(
          toy::LinearInverter::fit(*g, p.inverter_samples, p.inverter_ridge, derive_seed(p.seed, 4)));
      b.generator = std::move(g);
      break;
    }
    case ProfileKind::ToyLinear: {
      auto g = std::make_shared<toy::LinearGenerator>(derive_seed(p.seed, 0), p.latent_shape, p.image_shape);
      b.encoder = std::make_shared<toy::LinearEncoder>(derive_seed(p.seed, 1), p.image_shape, p.embed_dim,
                                                       "toy-linear-clip:" + std::to_string(p.seed));
      if (p.second_encoder) {
        b.second_encoder = std::make_shared<toy::LinearEncoder>(derive_seed(p.seed, 2), p.image_shape, p.embed_dim,
                                                                "toy-linear-blip:" + std::to_string(p.seed));
      }
      b.inverter = std::make_shared<toy::LinearInverter>(toy::LinearInverter::pseudo_inverse(*g));
      b.generator = std::move(g);
      break;
    }
    case ProfileKind::Adapter:
      raise(ErrorCode::BackendUnavailable, "profile '" + p.name +
                                               "' needs pretrained adapters, which are not bundled with this build");
  }
  b.face = std::make_shared<toy::FlattenFaceEmbedder>(p.image_shape);
  b.features = std::make_shared<toy::ProjectionFeatureExtractor>(derive_seed(p.seed, 3), p.feature_dim, p.image_shape);
  check_conformance(b, p.seed);
  return b;
}

}  // namespace essencekit

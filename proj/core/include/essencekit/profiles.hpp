// Copyright 2026 The essencekit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "essencekit/backends.hpp"

namespace essencekit {

enum class ProfileKind { Toy, ToyLinear, Adapter };

/// One entry of the backend registry. Toy kinds are fully described by the
/// numeric fields; adapter kinds carry checkpoint paths and preprocessing.
struct BackendProfile {
  std::string name;
  ProfileKind kind = ProfileKind::Toy;
  std::uint64_t seed = 7;
  LatentShape latent_shape{3, 8};
  ImageShape image_shape{8, 8, 1};
  std::size_t embed_dim = 16;
  std::size_t hidden_dim = 32;
  double generator_gain = 0.25;
  double encoder_gain = 0.25;
  std::size_t feature_dim = 8;
  bool second_encoder = true;
  std::size_t inverter_samples = 512;
  double inverter_ridge = 1e-1;
  std::map<std::string, std::string> checkpoints;
  nlohmann::json preprocessing = nlohmann::json::object();

  nlohmann::json to_json() const;
  static BackendProfile from_json(const std::string& name, const nlohmann::json& j);
  std::string digest() const;
};

std::string_view to_string(ProfileKind kind) noexcept;

// "toy" (tanh generator, MLP encoder) and "toy-linear" (exact linear pair).
std::vector<BackendProfile> builtin_profiles();

/// Built-ins overlaid with `<dir>/profiles.json` when a directory is given
/// (falls back to $ESSENCEKIT_PROFILE_DIR).
class ProfileRegistry {
 public:
  static ProfileRegistry load(std::optional<std::filesystem::path> dir = std::nullopt);

  const BackendProfile& get(const std::string& name) const;
  std::vector<std::string> names() const;

 private:
  std::map<std::string, BackendProfile> profiles_;
};

// Instantiates and conformance-checks the backends of a profile.
// Adapter profiles raise BackendUnavailable: no pretrained stack is bundled.
BackendSet make_backends(const BackendProfile& profile);

}  // namespace essencekit

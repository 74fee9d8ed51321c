// Copyright 2026 The essencekit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "essencekit/core.hpp"

namespace essencekit::essv {

// "ESSV1" | u32 LE layers | u32 LE dims | layers*dims float32 LE.
inline constexpr std::string_view kMagic = "ESSV1";

struct Payload {
  LatentShape shape;
  std::vector<float> values;
};

std::string encode(const LatentShape& shape, const Eigen::Ref<const Vector>& values);
Payload decode(std::string_view bytes);

// Sidecar lives next to the binary as "<path>.json".
std::filesystem::path sidecar_path(const std::filesystem::path& path);

void save_essence(const std::filesystem::path& path, const EssenceVector& essence,
                  const nlohmann::json& config_snapshot = nlohmann::json::object());
EssenceVector load_essence(const std::filesystem::path& path);
nlohmann::json load_sidecar(const std::filesystem::path& path);

void save_latent(const std::filesystem::path& path, const LatentCode& latent);
LatentCode load_latent(const std::filesystem::path& path);

// Atomic file write: temp file in the same directory, then rename.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);
std::string read_file(const std::filesystem::path& path);

}  // namespace essencekit::essv

// Copyright 2026 The essencekit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>

#include "essencekit/evaluation.hpp"
#include "essencekit/profiles.hpp"

namespace essencekit::cli {

// On-disk evaluation assets:
//   fixture.json                       profile name/digest, non-face target ids
//   targets/<id>.png                   target images
//   train_sources/<id>.essv            pool the optimizer batch is drawn from
//   eval_sources/<id>.essv             sources the essence is applied to
//   reference/<id>.png                 FID reference images
struct FixtureSpec {
  std::size_t targets = 10;
  std::size_t train_sources = 16;
  std::size_t eval_sources = 10;
  std::size_t reference = 24;
  std::size_t non_face = 0;  // the last K targets are marked non-face
  std::uint64_t seed = 0;
};

// Hidden-target assets: each target is G(z_t) for a random z_t.
void write_fixture(const std::filesystem::path& dir, const BackendProfile& profile, const BackendSet& backends,
                   const FixtureSpec& spec);

// Optimizer config and jobs are left at defaults for the caller to fill.
EvaluationFixture load_fixture(const std::filesystem::path& dir, const BackendSet& backends);

}  // namespace essencekit::cli

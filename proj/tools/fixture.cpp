// Copyright 2026 The essencekit Authors
// SPDX-License-Identifier: Apache-2.0

#include "fixture.hpp"

#include <algorithm>
#include <cstdio>
#include <set>

#include "essencekit/essv.hpp"
#include "essencekit/image_io.hpp"
#include "essencekit/toy_backends.hpp"

namespace essencekit::cli {

namespace fs = std::filesystem;

namespace {

std::string numbered(const char* prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%03zu", prefix, i);
  return buf;
}

LatentCode random_latent(const Generator& g, std::uint64_t seed) {
  const auto shape = g.latent_shape();
  return LatentCode(shape, toy::standard_normal(shape.size(), 1, seed).col(0), g.space_id());
}

std::vector<fs::path> files_with(const fs::path& dir, std::string_view ext) {
  std::vector<fs::path> out;
  if (!fs::is_directory(dir)) raise(ErrorCode::Io, dir.string() + " is not a directory");
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ext) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

void write_fixture(const fs::path& dir, const BackendProfile& profile, const BackendSet& backends,
                   const FixtureSpec& spec) {
  if (spec.targets == 0 || spec.eval_sources == 0) raise(ErrorCode::InvalidConfig, "fixture needs targets and eval sources");
  if (spec.non_face > spec.targets) raise(ErrorCode::InvalidConfig, "more non-face targets than targets");
  const auto& g = *backends.generator;
  for (const char* sub : {"targets", "train_sources", "eval_sources", "reference"}) fs::create_directories(dir / sub);

  nlohmann::json non_face = nlohmann::json::array();
  for (std::size_t i = 0; i < spec.targets; ++i) {
    const auto id = numbered("t", i);
    image_io::write_png(dir / "targets" / (id + ".png"), g.decode(random_latent(g, toy::derive_seed(spec.seed, 100 + i))));
    if (i + spec.non_face >= spec.targets) non_face.push_back(id);
  }
  for (std::size_t i = 0; i < spec.train_sources; ++i) {
    essv::save_latent(dir / "train_sources" / (numbered("s", i) + ".essv"),
                      random_latent(g, toy::derive_seed(spec.seed, 200 + i)));
  }
  for (std::size_t i = 0; i < spec.eval_sources; ++i) {
    essv::save_latent(dir / "eval_sources" / (numbered("e", i) + ".essv"),
                      random_latent(g, toy::derive_seed(spec.seed, 300 + i)));
  }
  for (std::size_t i = 0; i < spec.reference; ++i) {
    image_io::write_png(dir / "reference" / (numbered("r", i) + ".png"),
                        g.decode(random_latent(g, toy::derive_seed(spec.seed, 400 + i))));
  }
  const nlohmann::json meta = {{"profile", profile.name},
                               {"profile_digest", backends.profile_digest},
                               {"seed", spec.seed},
                               {"non_face", non_face}};
  essv::write_file_atomic(dir / "fixture.json", meta.dump(2) + "\n");
}

EvaluationFixture load_fixture(const fs::path& dir, const BackendSet& backends) {
  const auto meta_path = dir / "fixture.json";
  if (!fs::exists(meta_path)) raise(ErrorCode::Io, meta_path.string() + " not found");
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(essv::read_file(meta_path));
  } catch (const nlohmann::json::exception& e) {
    raise(ErrorCode::Format, meta_path.string() + ": " + e.what());
  }
  const auto digest = meta.value("profile_digest", std::string());
  if (!digest.empty() && digest != backends.profile_digest) {
    raise(ErrorCode::ProfileMismatch, "fixture was built for profile '" + meta.value("profile", std::string("?")) +
                                          "', not '" + backends.profile_name + "'");
  }
  std::set<std::string> non_face;
  for (const auto& id : meta.value("non_face", nlohmann::json::array())) non_face.insert(id.get<std::string>());

  EvaluationFixture fx;
  fx.backends = backends;
  const auto range = backends.generator->value_range();
  const auto channels = backends.generator->image_shape().channels;
  for (const auto& p : files_with(dir / "targets", ".png")) {
    const auto id = p.stem().string();
    fx.targets.push_back({id, image_io::read_png(p, range, channels), !non_face.contains(id)});
  }
  for (const auto& p : files_with(dir / "train_sources", ".essv")) fx.training_pool.push_back(essv::load_latent(p));
  for (const auto& p : files_with(dir / "eval_sources", ".essv")) {
    fx.eval_sources.push_back({p.stem().string(), essv::load_latent(p)});
  }
  if (fs::is_directory(dir / "reference")) {
    for (const auto& p : files_with(dir / "reference", ".png")) fx.reference.push_back(image_io::read_png(p, range, channels));
  }
  if (fx.targets.empty()) raise(ErrorCode::EmptyBatch, "fixture has no targets");
  return fx;
}

}  // namespace essencekit::cli

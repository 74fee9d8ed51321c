// Copyright 2026 The essencekit Authors
// SPDX-License-Identifier: Apache-2.0

#include "essencekit/essv.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace essencekit::essv {

namespace {

static_assert(std::endian::native == std::endian::little, "ESSV1 I/O assumes a little-endian host");

void put_u32(std::string& out, std::uint32_t v) {
  for (int k = 0; k < 4; ++k) out.push_back(static_cast<char>((v >> (8 * k)) & 0xFF));
}

std::uint32_t get_u32(std::string_view bytes, std::size_t offset) {
  std::uint32_t v = 0;
  for (int k = 0; k < 4; ++k) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[offset + k])) << (8 * k);
  return v;
}

}  // namespace

std::string encode(const LatentShape& shape, const Eigen::Ref<const Vector>& values) {
  if (static_cast<std::size_t>(values.size()) != shape.size()) {
    raise(ErrorCode::ShapeMismatch, "ESSV1 payload size does not match " + to_string(shape));
  }
  std::string out(kMagic);
  put_u32(out, static_cast<std::uint32_t>(shape.layers));
  put_u32(out, static_cast<std::uint32_t>(shape.dims));
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    const float f = static_cast<float>(values[i]);
    std::uint32_t bits = 0;
    std::memcpy(&bits, &f, sizeof bits);
    put_u32(out, bits);
  }
  return out;
}

Payload decode(std::string_view bytes) {
  constexpr std::size_t kHeader = 5 + 4 + 4;
  if (bytes.size() < kHeader || bytes.substr(0, kMagic.size()) != kMagic) {
    raise(ErrorCode::Format, "not an ESSV1 file");
  }
  Payload p;
  p.shape.layers = get_u32(bytes, 5);
  p.shape.dims = get_u32(bytes, 9);
  const std::size_t count = p.shape.size();
  if (bytes.size() != kHeader + 4 * count) {
    raise(ErrorCode::Format, "ESSV1 length " + std::to_string(bytes.size()) + " does not match header " +
                                 to_string(p.shape));
  }
  p.values.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint32_t bits = get_u32(bytes, kHeader + 4 * i);
    std::memcpy(&p.values[i], &bits, sizeof bits);
  }
  return p;
}

std::filesystem::path sidecar_path(const std::filesystem::path& path) {
  auto s = path;
  s += ".json";
  return s;
}

void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) raise(ErrorCode::Io, "cannot open " + tmp.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) raise(ErrorCode::Io, "short write to " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) raise(ErrorCode::Io, "rename to " + path.string() + " failed: " + ec.message());
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(ErrorCode::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

namespace {

Vector to_vector(const std::vector<float>& values) {
  Vector v(static_cast<Eigen::Index>(values.size()));
  for (std::size_t i = 0; i < values.size(); ++i) v[static_cast<Eigen::Index>(i)] = values[i];
  return v;
}

}  // namespace

void save_essence(const std::filesystem::path& path, const EssenceVector& essence,
                  const nlohmann::json& config_snapshot) {
  write_file_atomic(path, encode(essence.shape(), essence.data()));
  nlohmann::json meta = {
      {"kind", "essence"},
      {"space_id", essence.space_id()},
      {"provenance",
       {{"method", std::string(to_string(essence.provenance().method))},
        {"target_digest", essence.provenance().target_digest},
        {"config_digest", essence.provenance().config_digest}}},
      {"config", config_snapshot},
  };
  write_file_atomic(sidecar_path(path), meta.dump(2) + "\n");
}

nlohmann::json load_sidecar(const std::filesystem::path& path) {
  const auto side = sidecar_path(path);
  if (!std::filesystem::exists(side)) raise(ErrorCode::Io, "missing sidecar " + side.string());
  try {
    return nlohmann::json::parse(read_file(side));
  } catch (const nlohmann::json::exception& e) {
    raise(ErrorCode::Format, side.string() + ": " + e.what());
  }
}

namespace {

void check_kind(const nlohmann::json& meta, std::string_view kind, const std::filesystem::path& path) {
  if (meta.value("kind", std::string()) != kind) {
    raise(ErrorCode::Format, path.string() + " holds a '" + meta.value("kind", std::string("?")) + "', expected '" +
                                 std::string(kind) + "'");
  }
}

}  // namespace

EssenceVector load_essence(const std::filesystem::path& path) {
  const auto payload = decode(read_file(path));
  const auto meta = load_sidecar(path);
  check_kind(meta, "essence", path);
  try {
    const auto& prov = meta.at("provenance");
    Provenance p{essence_method_from_string(prov.at("method").get<std::string>()),
                 prov.at("target_digest").get<std::string>(), prov.at("config_digest").get<std::string>()};
    return EssenceVector(payload.shape, to_vector(payload.values), meta.at("space_id").get<std::string>(), p);
  } catch (const nlohmann::json::exception& e) {
    raise(ErrorCode::Format, path.string() + " sidecar: " + e.what());
  }
}

void save_latent(const std::filesystem::path& path, const LatentCode& latent) {
  write_file_atomic(path, encode(latent.shape(), latent.data()));
  nlohmann::json meta = {{"kind", "latent"}, {"space_id", latent.space_id()}};
  write_file_atomic(sidecar_path(path), meta.dump(2) + "\n");
}

LatentCode load_latent(const std::filesystem::path& path) {
  const auto payload = decode(read_file(path));
  const auto meta = load_sidecar(path);
  check_kind(meta, "latent", path);
  try {
    return LatentCode(payload.shape, to_vector(payload.values), meta.at("space_id").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    raise(ErrorCode::Format, path.string() + " sidecar: " + e.what());
  }
}

}  // namespace essencekit::essv

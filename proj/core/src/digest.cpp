// Copyright 2026 The essencekit Authors
// SPDX-License-Identifier: Apache-2.0

#include "essencekit/digest.hpp"

#include <array>
#include <cstdint>
#include <cstring>

#include <openssl/evp.h>

namespace essencekit {

std::string sha256_hex(std::string_view bytes) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> hash{};
  unsigned int length = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), hash.data(), &length, EVP_sha256(), nullptr) != 1) {
    raise(ErrorCode::NumericFailure, "sha256 failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(length * 2);
  for (unsigned int i = 0; i < length; ++i) {
    out.push_back(kHex[hash[i] >> 4]);
    out.push_back(kHex[hash[i] & 0xF]);
  }
  return out;
}

std::string digest_of(const Eigen::Ref<const Vector>& values) {
  std::string bytes;
  bytes.reserve(static_cast<std::size_t>(values.size()) * 8);
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    std::uint64_t bits = 0;
    const double v = values[i];
    std::memcpy(&bits, &v, sizeof bits);
    for (int k = 0; k < 8; ++k) bytes.push_back(static_cast<char>((bits >> (8 * k)) & 0xFF));
  }
  return sha256_hex(bytes);
}

std::string digest_of(const ImageTensor& image) {
  const auto& s = image.shape();
  std::string header = std::to_string(s.height) + "x" + std::to_string(s.width) + "x" +
                       std::to_string(s.channels) + ":";
  return sha256_hex(header + digest_of(image.data()));
}

}  // namespace essencekit

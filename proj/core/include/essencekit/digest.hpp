// Copyright 2026 The essencekit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <string_view>

#include "essencekit/core.hpp"

namespace essencekit {

// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view bytes);

// Digest over the little-endian float64 representation of the values.
std::string digest_of(const Eigen::Ref<const Vector>& values);
std::string digest_of(const ImageTensor& image);

}  // namespace essencekit

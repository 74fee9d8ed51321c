// Copyright 2026 The essencekit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "essencekit/core.hpp"

namespace essencekit::image_io {

// Unbounded tensors are written as if their range were [-1, 1].
ValueRange png_range(const ValueRange& declared);

// 8-bit PNG, gray or RGB. Values outside the range are clamped.
std::string encode_png(const ImageTensor& image);
void write_png(const std::filesystem::path& path, const ImageTensor& image);

// Decodes to `range` (as png_range). Alpha is dropped; `channels` forces gray or
// RGB when given.
ImageTensor decode_png(std::string_view bytes, const ValueRange& range, std::optional<std::size_t> channels = {});
ImageTensor read_png(const std::filesystem::path& path, const ValueRange& range,
                     std::optional<std::size_t> channels = {});

// Rows of tiles on a white background, each tile normalized by its own range.
// Tiles must share channel count; short rows are left blank.
ImageTensor compose_grid(const std::vector<std::vector<ImageTensor>>& rows, std::size_t padding = 2);

}  // namespace essencekit::image_io

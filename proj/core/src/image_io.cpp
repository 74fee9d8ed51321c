// Copyright 2026 The essencekit Authors
// SPDX-License-Identifier: Apache-2.0

#include "essencekit/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <memory>

#include <png.h>

#include "essencekit/essv.hpp"

namespace essencekit::image_io {

ValueRange png_range(const ValueRange& declared) {
  if (declared.bounded()) return declared;
  return {-1.0, 1.0};
}

namespace {

struct PngImage {
  png_image image{};
  PngImage() { image.version = PNG_IMAGE_VERSION; }
  ~PngImage() { png_image_free(&image); }
  PngImage(const PngImage&) = delete;
  PngImage& operator=(const PngImage&) = delete;
};

std::uint8_t quantize(double v, const ValueRange& r) {
  const double t = std::clamp((v - r.lo) / (r.hi - r.lo), 0.0, 1.0);
  return static_cast<std::uint8_t>(std::lround(t * 255.0));
}

}  // namespace

std::string encode_png(const ImageTensor& image) {
  const auto& s = image.shape();
  const auto r = png_range(image.value_range());
  std::vector<std::uint8_t> pixels(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) pixels[i] = quantize(image.data()[static_cast<Eigen::Index>(i)], r);
  if (s.channels == 3 && image.color_order() == ColorOrder::BGR) {
    for (std::size_t i = 0; i < s.size(); i += 3) std::swap(pixels[i], pixels[i + 2]);
  }

  PngImage png;
  png.image.width = static_cast<png_uint_32>(s.width);
  png.image.height = static_cast<png_uint_32>(s.height);
  png.image.format = s.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&png.image, nullptr, &size, 0, pixels.data(), 0, nullptr)) {
    raise(ErrorCode::Io, std::string("png encode failed: ") + png.image.message);
  }
  std::string out(size, '\0');
  if (!png_image_write_to_memory(&png.image, out.data(), &size, 0, pixels.data(), 0, nullptr)) {
    raise(ErrorCode::Io, std::string("png encode failed: ") + png.image.message);
  }
  out.resize(size);
  return out;
}

void write_png(const std::filesystem::path& path, const ImageTensor& image) {
  essv::write_file_atomic(path, encode_png(image));
}

ImageTensor decode_png(std::string_view bytes, const ValueRange& range, std::optional<std::size_t> channels) {
  PngImage png;
  if (!png_image_begin_read_from_memory(&png.image, bytes.data(), bytes.size())) {
    raise(ErrorCode::Format, std::string("not a readable PNG: ") + png.image.message);
  }
  std::size_t c = channels.value_or((png.image.format & PNG_FORMAT_FLAG_COLOR) != 0 ? 3 : 1);
  if (c != 1 && c != 3) raise(ErrorCode::ShapeMismatch, "images must have 1 or 3 channels");
  png.image.format = c == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  std::vector<std::uint8_t> pixels(PNG_IMAGE_SIZE(png.image));
  if (!png_image_finish_read(&png.image, nullptr, pixels.data(), 0, nullptr)) {
    raise(ErrorCode::Format, std::string("png decode failed: ") + png.image.message);
  }
  const auto r = png_range(range);
  const ImageShape shape{png.image.height, png.image.width, c};
  Vector data(static_cast<Eigen::Index>(shape.size()));
  for (std::size_t i = 0; i < shape.size(); ++i) {
    data[static_cast<Eigen::Index>(i)] = r.lo + (r.hi - r.lo) * (pixels[i] / 255.0);
  }
  return ImageTensor(shape, std::move(data), r, c == 3 ? ColorOrder::RGB : ColorOrder::Gray);
}

ImageTensor read_png(const std::filesystem::path& path, const ValueRange& range, std::optional<std::size_t> channels) {
  try {
    return decode_png(essv::read_file(path), range, channels);
  } catch (const Error& e) {
    raise(e.code(), path.string() + ": " + e.what());
  }
}

ImageTensor compose_grid(const std::vector<std::vector<ImageTensor>>& rows, std::size_t padding) {
  std::size_t tile_h = 0, tile_w = 0, cols = 0, channels = 0;
  for (const auto& row : rows) {
    cols = std::max(cols, row.size());
    for (const auto& t : row) {
      if (channels == 0) channels = t.shape().channels;
      if (t.shape().channels != channels) raise(ErrorCode::ShapeMismatch, "grid tiles differ in channel count");
      tile_h = std::max(tile_h, t.shape().height);
      tile_w = std::max(tile_w, t.shape().width);
    }
  }
  if (cols == 0) raise(ErrorCode::EmptyBatch, "grid has no tiles");
  const ImageShape shape{rows.size() * (tile_h + padding) + padding, cols * (tile_w + padding) + padding, channels};
  Vector data = Vector::Ones(static_cast<Eigen::Index>(shape.size()));
  for (std::size_t gy = 0; gy < rows.size(); ++gy) {
    for (std::size_t gx = 0; gx < rows[gy].size(); ++gx) {
      const auto& t = rows[gy][gx];
      const auto r = png_range(t.value_range());
      const std::size_t oy = padding + gy * (tile_h + padding);
      const std::size_t ox = padding + gx * (tile_w + padding);
      for (std::size_t y = 0; y < t.shape().height; ++y) {
        for (std::size_t x = 0; x < t.shape().width; ++x) {
          for (std::size_t c = 0; c < channels; ++c) {
            const double v = std::clamp((t.at(y, x, c) - r.lo) / (r.hi - r.lo), 0.0, 1.0);
            data[static_cast<Eigen::Index>(((oy + y) * shape.width + ox + x) * channels + c)] = v;
          }
        }
      }
    }
  }
  return ImageTensor(shape, std::move(data), {0.0, 1.0}, channels == 3 ? ColorOrder::RGB : ColorOrder::Gray);
}

}  // namespace essencekit::image_io

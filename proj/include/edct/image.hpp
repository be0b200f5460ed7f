#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace edct {

/// 8-bit RGB raster, row-major, no padding.
struct Image {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::vector<std::uint8_t> rgb;

  [[nodiscard]] std::size_t pixel_count() const noexcept {
    return static_cast<std::size_t>(width) * height;
  }
};

/// Sniffs magic bytes: image/png, image/jpeg, image/gif, image/webp.
std::optional<std::string> detect_media_type(std::string_view bytes);

/// PNG and JPEG only. Throws Error(undecodable_image).
Image decode_image(std::string_view bytes);

std::string encode_png(const Image& image);

struct PixelDiff {
  double changed_fraction = 0.0;
  std::size_t changed_pixels = 0;
  /// Grayscale PNG of the per-pixel max channel difference, downsampled
  /// (max-pooled) so the longer side is at most `kMaxDiffSide`.
  std::string diff_png;
  std::uint32_t width = 0;
  std::uint32_t height = 0;
};

inline constexpr std::uint32_t kMaxDiffSide = 256;

/// A pixel counts as changed when any channel differs by more than
/// `tolerance`. An edited image with other dimensions is sampled
/// nearest-neighbour onto the original's grid.
PixelDiff pixel_diff(const Image& original, const Image& edited, int tolerance = 8);

}  // namespace edct

#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace slsnet {

/// 8-bit raster, interleaved channels, row-major.
struct Image8 {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 0;  // 1 (gray) or 3 (RGB)
  std::vector<std::uint8_t> pixels;
};

/// Reads an 8-bit PNG. Gray+alpha and RGBA lose their alpha channel; palette
/// images expand to RGB. Throws IoError for unreadable files and FormatError
/// for any bit depth other than 8.
Image8 read_png(const std::filesystem::path& path);

/// Writes a 1- or 3-channel 8-bit PNG.
void write_png(const std::filesystem::path& path, const Image8& img);

}  // namespace slsnet

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace activeseg {

/// Decoded PNG. samples holds width*height*channels values; 8-bit images
/// store 0..255, 16-bit images 0..65535.
struct PngImage {
  std::size_t width = 0;
  std::size_t height = 0;
  int channels = 1;
  int bit_depth = 8;
  std::vector<std::uint16_t> samples;
};

/// Reads a PNG without any colour conversion. Throws std::runtime_error on
/// I/O or decode failure.
PngImage read_png(const std::filesystem::path& path);

void write_png(const std::filesystem::path& path, const PngImage& image);

/// Encodes to an in-memory PNG byte string.
std::string encode_png(const PngImage& image);

PngImage gray8_image(std::size_t width, std::size_t height, std::span<const std::uint8_t> pixels);

}  // namespace activeseg

#include "activeseg/png_io.hpp"

#include <png.h>

#include <cstdio>
#include <memory>
#include <stdexcept>

namespace activeseg {
namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};

// libpng unwinds with longjmp; the message is stashed for the setjmp site to rethrow.
[[noreturn]] void png_error_handler(png_structp png, png_const_charp message) {
  if (auto* slot = static_cast<std::string*>(png_get_error_ptr(png))) *slot = message;
  png_longjmp(png, 1);
}
void png_warning_handler(png_structp, png_const_charp) {}

int color_type_for(int channels) {
  switch (channels) {
    case 1: return PNG_COLOR_TYPE_GRAY;
    case 2: return PNG_COLOR_TYPE_GRAY_ALPHA;
    case 3: return PNG_COLOR_TYPE_RGB;
    case 4: return PNG_COLOR_TYPE_RGBA;
    default: throw std::invalid_argument("unsupported PNG channel count");
  }
}

void check_image(const PngImage& image) {
  if (image.bit_depth != 8 && image.bit_depth != 16) throw std::invalid_argument("PNG bit depth must be 8 or 16");
  if (image.samples.size() != image.width * image.height * static_cast<std::size_t>(image.channels)) {
    throw std::invalid_argument("PNG sample buffer size mismatch");
  }
}

std::vector<std::vector<png_byte>> pack_rows(const PngImage& image) {
  const std::size_t bytes_per_sample = image.bit_depth == 16 ? 2 : 1;
  const std::size_t row_samples = image.width * static_cast<std::size_t>(image.channels);
  std::vector<std::vector<png_byte>> rows(image.height, std::vector<png_byte>(row_samples * bytes_per_sample));
  for (std::size_t y = 0; y < image.height; ++y) {
    for (std::size_t s = 0; s < row_samples; ++s) {
      const std::uint16_t v = image.samples[y * row_samples + s];
      if (bytes_per_sample == 2) {
        rows[y][2 * s] = static_cast<png_byte>(v >> 8);
        rows[y][2 * s + 1] = static_cast<png_byte>(v & 0xff);
      } else {
        rows[y][s] = static_cast<png_byte>(v);
      }
    }
  }
  return rows;
}

// Must not own C++ objects: libpng may longjmp out of it.
void write_with(png_structp png, png_infop info, const PngImage& image, int color_type, png_bytepp row_ptrs) {
  png_set_IHDR(png, info, static_cast<png_uint_32>(image.width), static_cast<png_uint_32>(image.height),
               image.bit_depth, color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, row_ptrs);
  png_write_end(png, nullptr);
}

void append_to_string(png_structp png, png_bytep data, png_size_t length) {
  auto* out = static_cast<std::string*>(png_get_io_ptr(png));
  out->append(reinterpret_cast<const char*>(data), length);
}

void flush_noop(png_structp) {}

}  // namespace

PngImage read_png(const std::filesystem::path& path) {
  std::unique_ptr<std::FILE, FileCloser> file(std::fopen(path.c_str(), "rb"));
  if (!file) throw std::runtime_error("cannot open PNG file: " + path.string());

  png_byte signature[8];
  if (std::fread(signature, 1, 8, file.get()) != 8 || png_sig_cmp(signature, 0, 8) != 0) {
    throw std::runtime_error("not a PNG file: " + path.string());
  }

  std::string error;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &error, png_error_handler, png_warning_handler);
  if (!png) throw std::runtime_error("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  struct Guard {
    png_structp* p;
    png_infop* i;
    ~Guard() { png_destroy_read_struct(p, i, nullptr); }
  } guard{&png, &info};

  PngImage image;
  std::vector<png_byte> buffer;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) throw std::runtime_error("PNG decode failed (" + error + "): " + path.string());

  png_init_io(png, file.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  image.width = png_get_image_width(png, info);
  image.height = png_get_image_height(png, info);
  image.bit_depth = png_get_bit_depth(png, info);
  const int color = png_get_color_type(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) throw std::runtime_error("palette PNGs are not supported: " + path.string());
  if (image.bit_depth != 8 && image.bit_depth != 16) {
    throw std::runtime_error("unsupported PNG bit depth " + std::to_string(image.bit_depth) + ": " + path.string());
  }
  image.channels = png_get_channels(png, info);

  const std::size_t rowbytes = png_get_rowbytes(png, info);
  buffer.resize(rowbytes * image.height);
  rows.resize(image.height);
  for (std::size_t y = 0; y < image.height; ++y) rows[y] = buffer.data() + y * rowbytes;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);

  const std::size_t count = image.width * image.height * static_cast<std::size_t>(image.channels);
  image.samples.resize(count);
  const std::size_t row_samples = image.width * static_cast<std::size_t>(image.channels);
  for (std::size_t y = 0; y < image.height; ++y) {
    for (std::size_t s = 0; s < row_samples; ++s) {
      image.samples[y * row_samples + s] =
          image.bit_depth == 16 ? static_cast<std::uint16_t>((rows[y][2 * s] << 8) | rows[y][2 * s + 1])
                                : rows[y][s];
    }
  }
  return image;
}

void write_png(const std::filesystem::path& path, const PngImage& image) {
  check_image(image);
  const int color_type = color_type_for(image.channels);
  auto rows = pack_rows(image);
  std::vector<png_bytep> row_ptrs(rows.size());
  for (std::size_t y = 0; y < rows.size(); ++y) row_ptrs[y] = rows[y].data();
  std::unique_ptr<std::FILE, FileCloser> file(std::fopen(path.c_str(), "wb"));
  if (!file) throw std::runtime_error("cannot create PNG file: " + path.string());
  std::string error;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &error, png_error_handler, png_warning_handler);
  if (!png) throw std::runtime_error("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  struct Guard {
    png_structp* p;
    png_infop* i;
    ~Guard() { png_destroy_write_struct(p, i); }
  } guard{&png, &info};
  if (setjmp(png_jmpbuf(png))) throw std::runtime_error("PNG encode failed: " + error);
  png_init_io(png, file.get());
  write_with(png, info, image, color_type, row_ptrs.data());
}

std::string encode_png(const PngImage& image) {
  check_image(image);
  const int color_type = color_type_for(image.channels);
  auto rows = pack_rows(image);
  std::vector<png_bytep> row_ptrs(rows.size());
  for (std::size_t y = 0; y < rows.size(); ++y) row_ptrs[y] = rows[y].data();
  std::string out;
  std::string error;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &error, png_error_handler, png_warning_handler);
  if (!png) throw std::runtime_error("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  struct Guard {
    png_structp* p;
    png_infop* i;
    ~Guard() { png_destroy_write_struct(p, i); }
  } guard{&png, &info};
  if (setjmp(png_jmpbuf(png))) throw std::runtime_error("PNG encode failed: " + error);
  png_set_write_fn(png, &out, append_to_string, flush_noop);
  write_with(png, info, image, color_type, row_ptrs.data());
  return out;
}

PngImage gray8_image(std::size_t width, std::size_t height, std::span<const std::uint8_t> pixels) {
  PngImage image;
  image.width = width;
  image.height = height;
  image.channels = 1;
  image.bit_depth = 8;
  image.samples.assign(pixels.begin(), pixels.end());
  return image;
}

}  // namespace activeseg

#include "fscn/image_io.hpp"

#include <png.h>

#include <cstdio>
#include <cstring>
#include <string>

namespace fscn {
namespace {

struct ErrorSlot {
  char message[256] = "unknown libpng error";
};

void on_error(png_structp png, png_const_charp msg) {
  auto* slot = static_cast<ErrorSlot*>(png_get_error_ptr(png));
  std::snprintf(slot->message, sizeof(slot->message), "%s", msg);
  png_longjmp(png, 1);
}

void on_warning(png_structp, png_const_charp) {}

struct ReadHandle {
  std::FILE* fp = nullptr;
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~ReadHandle() {
    if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
    if (fp) std::fclose(fp);
  }
};

struct WriteHandle {
  std::FILE* fp = nullptr;
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~WriteHandle() {
    if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
    if (fp) std::fclose(fp);
  }
};

struct Header {
  png_uint_32 width = 0;
  png_uint_32 height = 0;
  int bit_depth = 0;
  int color_type = 0;
};

// Reads the whole file into `rows`; returns false on libpng failure.
bool read_rows(ReadHandle& h, ErrorSlot& slot, Header& header, std::vector<png_byte>& buffer,
               std::vector<png_bytep>& rows, int expected_depth, int expected_color) {
  if (setjmp(png_jmpbuf(h.png))) return false;
  png_init_io(h.png, h.fp);
  png_read_info(h.png, h.info);
  png_get_IHDR(h.png, h.info, &header.width, &header.height, &header.bit_depth, &header.color_type,
               nullptr, nullptr, nullptr);
  if (header.bit_depth != expected_depth || header.color_type != expected_color) {
    std::snprintf(slot.message, sizeof(slot.message),
                  "expected bit depth %d colour type %d, found bit depth %d colour type %d",
                  expected_depth, expected_color, header.bit_depth, header.color_type);
    return false;
  }
  if (header.bit_depth == 16) png_set_swap(h.png);
  png_read_update_info(h.png, h.info);
  const std::size_t stride = png_get_rowbytes(h.png, h.info);
  buffer.resize(stride * header.height);
  rows.resize(header.height);
  for (png_uint_32 y = 0; y < header.height; ++y) rows[y] = buffer.data() + y * stride;
  png_read_image(h.png, rows.data());
  png_read_end(h.png, nullptr);
  return true;
}

std::vector<png_byte> read_file(const std::filesystem::path& path, int depth, int color,
                                Header& header) {
  ReadHandle h;
  ErrorSlot slot;
  h.fp = std::fopen(path.c_str(), "rb");
  if (!h.fp) throw ImageIoError("cannot open image '" + path.string() + "'");
  png_byte signature[8];
  if (std::fread(signature, 1, 8, h.fp) != 8 || png_sig_cmp(signature, 0, 8) != 0) {
    throw ImageIoError("not a PNG file: '" + path.string() + "'");
  }
  h.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &slot, on_error, on_warning);
  if (!h.png) throw ImageIoError("libpng initialisation failed");
  h.info = png_create_info_struct(h.png);
  if (!h.info) throw ImageIoError("libpng initialisation failed");
  png_set_sig_bytes(h.png, 8);
  std::vector<png_byte> buffer;
  std::vector<png_bytep> rows;
  if (!read_rows(h, slot, header, buffer, rows, depth, color)) {
    throw ImageIoError("corrupt or unsupported image '" + path.string() + "': " + slot.message);
  }
  return buffer;
}

bool write_rows(WriteHandle& h, png_uint_32 width, png_uint_32 height, int depth, int color,
                std::vector<png_bytep>& rows) {
  if (setjmp(png_jmpbuf(h.png))) return false;
  png_init_io(h.png, h.fp);
  png_set_IHDR(h.png, h.info, width, height, depth, color, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(h.png, h.info);
  if (depth == 16) png_set_swap(h.png);
  png_write_image(h.png, rows.data());
  png_write_end(h.png, nullptr);
  return true;
}

void write_file(const std::filesystem::path& path, int width, int height, int depth, int color,
                const png_byte* data, std::size_t stride) {
  if (width <= 0 || height <= 0) throw ImageIoError("cannot write empty image '" + path.string() + "'");
  WriteHandle h;
  ErrorSlot slot;
  h.fp = std::fopen(path.c_str(), "wb");
  if (!h.fp) throw ImageIoError("cannot create image '" + path.string() + "'");
  h.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &slot, on_error, on_warning);
  if (!h.png) throw ImageIoError("libpng initialisation failed");
  h.info = png_create_info_struct(h.png);
  if (!h.info) throw ImageIoError("libpng initialisation failed");
  std::vector<png_bytep> rows(height);
  for (int y = 0; y < height; ++y) rows[y] = const_cast<png_bytep>(data + y * stride);
  if (!write_rows(h, width, height, depth, color, rows)) {
    throw ImageIoError("failed writing '" + path.string() + "': " + slot.message);
  }
}

}  // namespace

Rgb8Image read_png_rgb8(const std::filesystem::path& path) {
  Header header;
  auto buffer = read_file(path, 8, PNG_COLOR_TYPE_RGB, header);
  Rgb8Image image;
  image.height = static_cast<int>(header.height);
  image.width = static_cast<int>(header.width);
  image.pixels.assign(buffer.begin(), buffer.end());
  return image;
}

Gray16Image read_png_gray16(const std::filesystem::path& path) {
  Header header;
  auto buffer = read_file(path, 16, PNG_COLOR_TYPE_GRAY, header);
  Gray16Image image;
  image.height = static_cast<int>(header.height);
  image.width = static_cast<int>(header.width);
  image.pixels.resize(static_cast<std::size_t>(image.height) * image.width);
  std::memcpy(image.pixels.data(), buffer.data(), image.pixels.size() * sizeof(std::uint16_t));
  return image;
}

void write_png(const std::filesystem::path& path, const Rgb8Image& image) {
  if (image.pixels.size() != static_cast<std::size_t>(image.height) * image.width * 3) {
    throw ImageIoError("rgb buffer size does not match dimensions");
  }
  write_file(path, image.width, image.height, 8, PNG_COLOR_TYPE_RGB, image.pixels.data(),
             static_cast<std::size_t>(image.width) * 3);
}

void write_png(const std::filesystem::path& path, const Gray16Image& image) {
  if (image.pixels.size() != static_cast<std::size_t>(image.height) * image.width) {
    throw ImageIoError("depth buffer size does not match dimensions");
  }
  write_file(path, image.width, image.height, 16, PNG_COLOR_TYPE_GRAY,
             reinterpret_cast<const png_byte*>(image.pixels.data()),
             static_cast<std::size_t>(image.width) * 2);
}

}  // namespace fscn

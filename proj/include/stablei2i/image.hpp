#pragma once

// 8-bit RGB image buffer and PNG/JPEG codecs (libpng simplified API, libjpeg).

#include "stablei2i/core.hpp"

#include <png.h>
#include <jpeglib.h>

#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace stablei2i {

struct Image
{
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;  // row-major, interleaved RGB

  static constexpr std::size_t channels = 3;

  Image() = default;
  Image(std::size_t w, std::size_t h) : width(w), height(h), pixels(w * h * channels, 0) {}

  std::uint8_t& at(std::size_t x, std::size_t y, std::size_t c)
  {
    return pixels[(y * width + x) * channels + c];
  }
  std::uint8_t at(std::size_t x, std::size_t y, std::size_t c) const
  {
    return pixels[(y * width + x) * channels + c];
  }

  bool empty() const { return width == 0 || height == 0; }
  bool operator==(const Image&) const = default;
};

class ImageError : public Error
{
public:
  using Error::Error;
};

inline std::string read_binary_file(const std::filesystem::path& file)
{
  std::ifstream in(file, std::ios::binary);
  if (!in)
    throw Error("cannot read " + file.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_binary_file(const std::filesystem::path& file, std::string_view bytes)
{
  if (file.has_parent_path())
    std::filesystem::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out || !out.write(bytes.data(), static_cast<std::streamsize>(bytes.size())))
    throw Error("cannot write " + file.string());
}

namespace image_detail {

struct JpegErrorManager
{
  jpeg_error_mgr base;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

extern "C" inline void jpeg_error_exit_to_jump(j_common_ptr info)
{
  auto* err = reinterpret_cast<JpegErrorManager*>(info->err);
  (*info->err->format_message)(info, err->message);
  std::longjmp(err->jump, 1);
}

// Only trivially destructible state lives between setjmp and longjmp.
inline bool jpeg_compress_raw(const std::uint8_t* rgb, std::size_t w, std::size_t h, int quality,
                              unsigned char** out, unsigned long* out_size, char* message)
{
  jpeg_compress_struct cinfo;
  JpegErrorManager err;
  cinfo.err = jpeg_std_error(&err.base);
  err.base.error_exit = jpeg_error_exit_to_jump;
  if (setjmp(err.jump)) {
    std::memcpy(message, err.message, JMSG_LENGTH_MAX);
    jpeg_destroy_compress(&cinfo);
    return false;
  }
  jpeg_create_compress(&cinfo);
  jpeg_mem_dest(&cinfo, out, out_size);
  cinfo.image_width = static_cast<JDIMENSION>(w);
  cinfo.image_height = static_cast<JDIMENSION>(h);
  cinfo.input_components = 3;
  cinfo.in_color_space = JCS_RGB;
  jpeg_set_defaults(&cinfo);
  cinfo.dct_method = JDCT_ISLOW;
  jpeg_set_quality(&cinfo, quality, TRUE);
  jpeg_start_compress(&cinfo, TRUE);
  while (cinfo.next_scanline < cinfo.image_height) {
    auto* row = const_cast<JSAMPLE*>(rgb + static_cast<std::size_t>(cinfo.next_scanline) * w * 3);
    jpeg_write_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_compress(&cinfo);
  jpeg_destroy_compress(&cinfo);
  return true;
}

inline bool jpeg_decompress_raw(const unsigned char* data, std::size_t size, Image* img, char* message)
{
  jpeg_decompress_struct cinfo;
  JpegErrorManager err;
  cinfo.err = jpeg_std_error(&err.base);
  err.base.error_exit = jpeg_error_exit_to_jump;
  if (setjmp(err.jump)) {
    std::memcpy(message, err.message, JMSG_LENGTH_MAX);
    jpeg_destroy_decompress(&cinfo);
    return false;
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, data, static_cast<unsigned long>(size));
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;
  cinfo.dct_method = JDCT_ISLOW;
  jpeg_start_decompress(&cinfo);
  img->width = cinfo.output_width;
  img->height = cinfo.output_height;
  img->pixels.resize(img->width * img->height * 3);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = img->pixels.data() + static_cast<std::size_t>(cinfo.output_scanline) * img->width * 3;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return true;
}

}  // namespace image_detail

inline std::string encode_jpeg(const Image& img, int quality)
{
  if (img.empty())
    throw ImageError("cannot encode an empty image");
  unsigned char* buf = nullptr;
  unsigned long size = 0;
  char message[JMSG_LENGTH_MAX] = {};
  bool ok = image_detail::jpeg_compress_raw(img.pixels.data(), img.width, img.height, quality, &buf,
                                            &size, message);
  std::string out;
  if (ok)
    out.assign(reinterpret_cast<char*>(buf), size);
  std::free(buf);
  if (!ok)
    throw ImageError(std::string("jpeg encode: ") + message);
  return out;
}

inline Image decode_jpeg(std::string_view bytes)
{
  Image img;
  char message[JMSG_LENGTH_MAX] = {};
  if (!image_detail::jpeg_decompress_raw(reinterpret_cast<const unsigned char*>(bytes.data()),
                                         bytes.size(), &img, message))
    throw ImageError(std::string("jpeg decode: ") + message);
  return img;
}

inline std::string encode_png(const Image& img)
{
  if (img.empty())
    throw ImageError("cannot encode an empty image");
  png_image pimg;
  std::memset(&pimg, 0, sizeof pimg);
  pimg.version = PNG_IMAGE_VERSION;
  pimg.width = static_cast<png_uint_32>(img.width);
  pimg.height = static_cast<png_uint_32>(img.height);
  pimg.format = PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&pimg, nullptr, &size, 0, img.pixels.data(), 0, nullptr))
    throw ImageError(std::string("png encode: ") + pimg.message);
  std::string out(size, '\0');
  if (!png_image_write_to_memory(&pimg, out.data(), &size, 0, img.pixels.data(), 0, nullptr))
    throw ImageError(std::string("png encode: ") + pimg.message);
  out.resize(size);
  return out;
}

inline Image decode_png(std::string_view bytes)
{
  png_image pimg;
  std::memset(&pimg, 0, sizeof pimg);
  pimg.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&pimg, bytes.data(), bytes.size()))
    throw ImageError(std::string("png decode: ") + pimg.message);
  pimg.format = PNG_FORMAT_RGB;  // gray is replicated, alpha composited
  Image img(pimg.width, pimg.height);
  if (!png_image_finish_read(&pimg, nullptr, img.pixels.data(), 0, nullptr)) {
    png_image_free(&pimg);
    throw ImageError(std::string("png decode: ") + pimg.message);
  }
  return img;
}

/// Decodes PNG or JPEG by signature.
inline Image decode_image(std::string_view bytes)
{
  if (bytes.size() >= 8 && std::memcmp(bytes.data(), "\x89PNG\r\n\x1a\n", 8) == 0)
    return decode_png(bytes);
  if (bytes.size() >= 3 && static_cast<unsigned char>(bytes[0]) == 0xFF &&
      static_cast<unsigned char>(bytes[1]) == 0xD8)
    return decode_jpeg(bytes);
  throw ImageError("unsupported image format");
}

inline Image read_image(const std::filesystem::path& file)
{
  try {
    return decode_image(read_binary_file(file));
  } catch (const ImageError& e) {
    throw ImageError(file.string() + ": " + e.what());
  }
}

inline void write_png(const std::filesystem::path& file, const Image& img)
{
  write_binary_file(file, encode_png(img));
}

}  // namespace stablei2i

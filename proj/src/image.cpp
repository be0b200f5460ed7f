#include "edct/image.hpp"

#include "edct/error.hpp"

#include <png.h>
// jpeglib.h needs FILE and size_t declared first.
#include <cstdio>
#include <jpeglib.h>

#include <algorithm>
#include <csetjmp>
#include <cstdlib>
#include <cstring>
#include <memory>

namespace edct {

namespace {

bool starts_with_bytes(std::string_view bytes, std::string_view magic) {
  return bytes.size() >= magic.size() && bytes.substr(0, magic.size()) == magic;
}

Image decode_png(std::string_view bytes) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  if (png_image_begin_read_from_memory(&img, bytes.data(), bytes.size()) == 0) {
    throw Error(Errc::undecodable_image, std::string("png: ") + img.message);
  }
  img.format = PNG_FORMAT_RGB;
  Image out;
  out.width = img.width;
  out.height = img.height;
  out.rgb.resize(PNG_IMAGE_SIZE(img));
  if (png_image_finish_read(&img, nullptr, out.rgb.data(), 0, nullptr) == 0) {
    std::string msg = img.message;
    png_image_free(&img);
    throw Error(Errc::undecodable_image, "png: " + msg);
  }
  return out;
}

struct JpegErrorManager {
  jpeg_error_mgr pub;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

void jpeg_error_exit(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegErrorManager*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  std::longjmp(err->jump, 1);
}

Image decode_jpeg(std::string_view bytes) {
  jpeg_decompress_struct cinfo{};
  JpegErrorManager err{};
  cinfo.err = jpeg_std_error(&err.pub);
  err.pub.error_exit = jpeg_error_exit;
  Image out;
  // Nothing with a non-trivial destructor may be constructed between setjmp and longjmp.
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw Error(Errc::undecodable_image, std::string("jpeg: ") + err.message);
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, reinterpret_cast<const unsigned char*>(bytes.data()),
               static_cast<unsigned long>(bytes.size()));
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  out.width = cinfo.output_width;
  out.height = cinfo.output_height;
  out.rgb.resize(out.pixel_count() * 3);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = out.rgb.data() + static_cast<std::size_t>(cinfo.output_scanline) * out.width * 3;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return out;
}

std::string encode_png_raw(const std::uint8_t* pixels, std::uint32_t width, std::uint32_t height,
                           png_uint_32 format) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  img.width = width;
  img.height = height;
  img.format = format;
  png_alloc_size_t size = 0;
  if (png_image_write_to_memory(&img, nullptr, &size, 0, pixels, 0, nullptr) == 0) {
    throw Error(Errc::io_failure, std::string("png encode: ") + img.message);
  }
  std::string out(size, '\0');
  if (png_image_write_to_memory(&img, out.data(), &size, 0, pixels, 0, nullptr) == 0) {
    throw Error(Errc::io_failure, std::string("png encode: ") + img.message);
  }
  out.resize(size);
  return out;
}

}  // namespace

std::optional<std::string> detect_media_type(std::string_view bytes) {
  if (starts_with_bytes(bytes, "\x89PNG\r\n\x1a\n")) return "image/png";
  if (starts_with_bytes(bytes, "\xff\xd8\xff")) return "image/jpeg";
  if (starts_with_bytes(bytes, "GIF87a") || starts_with_bytes(bytes, "GIF89a")) return "image/gif";
  if (bytes.size() >= 12 && starts_with_bytes(bytes, "RIFF") && bytes.substr(8, 4) == "WEBP") {
    return "image/webp";
  }
  return std::nullopt;
}

Image decode_image(std::string_view bytes) {
  const auto type = detect_media_type(bytes);
  if (!type) throw Error(Errc::undecodable_image, "unrecognized image format");
  Image img;
  if (*type == "image/png") img = decode_png(bytes);
  else if (*type == "image/jpeg") img = decode_jpeg(bytes);
  else throw Error(Errc::undecodable_image, "unsupported image format " + *type);
  if (img.width == 0 || img.height == 0) throw Error(Errc::undecodable_image, "empty image");
  return img;
}

std::string encode_png(const Image& image) {
  require(image.width > 0 && image.height > 0, "image has zero dimensions");
  require(image.rgb.size() == image.pixel_count() * 3, "rgb buffer size mismatch");
  return encode_png_raw(image.rgb.data(), image.width, image.height, PNG_FORMAT_RGB);
}

PixelDiff pixel_diff(const Image& original, const Image& edited, int tolerance) {
  require(original.pixel_count() > 0 && edited.pixel_count() > 0, "pixel_diff on empty image");
  const std::uint32_t w = original.width;
  const std::uint32_t h = original.height;

  std::vector<std::uint8_t> delta(original.pixel_count());
  std::size_t changed = 0;
  for (std::uint32_t y = 0; y < h; ++y) {
    const std::uint32_t ey = static_cast<std::uint32_t>(static_cast<std::uint64_t>(y) * edited.height / h);
    for (std::uint32_t x = 0; x < w; ++x) {
      const std::uint32_t ex = static_cast<std::uint32_t>(static_cast<std::uint64_t>(x) * edited.width / w);
      const std::uint8_t* a = &original.rgb[(static_cast<std::size_t>(y) * w + x) * 3];
      const std::uint8_t* b = &edited.rgb[(static_cast<std::size_t>(ey) * edited.width + ex) * 3];
      int d = 0;
      for (int c = 0; c < 3; ++c) d = std::max(d, std::abs(int(a[c]) - int(b[c])));
      delta[static_cast<std::size_t>(y) * w + x] = static_cast<std::uint8_t>(d);
      if (d > tolerance) ++changed;
    }
  }

  const std::uint32_t scale = (std::max(w, h) + kMaxDiffSide - 1) / kMaxDiffSide;
  const std::uint32_t dw = (w + scale - 1) / scale;
  const std::uint32_t dh = (h + scale - 1) / scale;
  std::vector<std::uint8_t> pooled(static_cast<std::size_t>(dw) * dh, 0);
  for (std::uint32_t y = 0; y < h; ++y) {
    for (std::uint32_t x = 0; x < w; ++x) {
      auto& cell = pooled[static_cast<std::size_t>(y / scale) * dw + x / scale];
      cell = std::max(cell, delta[static_cast<std::size_t>(y) * w + x]);
    }
  }

  PixelDiff out;
  out.changed_pixels = changed;
  out.changed_fraction = static_cast<double>(changed) / static_cast<double>(original.pixel_count());
  out.diff_png = encode_png_raw(pooled.data(), dw, dh, PNG_FORMAT_GRAY);
  out.width = dw;
  out.height = dh;
  return out;
}

}  // namespace edct

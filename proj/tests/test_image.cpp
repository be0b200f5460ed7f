#include "edct/error.hpp"
#include "edct/image.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <jpeglib.h>

#include <cstdio>

using namespace edct;

namespace {

std::string encode_jpeg(const Image& img) {
  jpeg_compress_struct cinfo;
  jpeg_error_mgr jerr;
  cinfo.err = jpeg_std_error(&jerr);
  jpeg_create_compress(&cinfo);
  unsigned char* buf = nullptr;
  unsigned long size = 0;
  jpeg_mem_dest(&cinfo, &buf, &size);
  cinfo.image_width = img.width;
  cinfo.image_height = img.height;
  cinfo.input_components = 3;
  cinfo.in_color_space = JCS_RGB;
  jpeg_set_defaults(&cinfo);
  jpeg_set_quality(&cinfo, 95, TRUE);
  jpeg_start_compress(&cinfo, TRUE);
  while (cinfo.next_scanline < cinfo.image_height) {
    JSAMPROW row = const_cast<JSAMPROW>(&img.rgb[cinfo.next_scanline * img.width * 3]);
    jpeg_write_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_compress(&cinfo);
  std::string out(reinterpret_cast<char*>(buf), size);
  jpeg_destroy_compress(&cinfo);
  std::free(buf);
  return out;
}

}  // namespace

TEST(Image, PngRoundTrip) {
  const auto png = tst::make_png(20, 10, 4);
  EXPECT_EQ(detect_media_type(png), "image/png");
  const auto img = decode_image(png);
  EXPECT_EQ(img.width, 20u);
  EXPECT_EQ(img.height, 10u);
  EXPECT_EQ(encode_png(img), encode_png(decode_image(encode_png(img))));
}

TEST(Image, JpegDecodes) {
  const auto img = decode_image(tst::make_png(16, 8, 1));
  const auto jpg = encode_jpeg(img);
  EXPECT_EQ(detect_media_type(jpg), "image/jpeg");
  const auto back = decode_image(jpg);
  EXPECT_EQ(back.width, 16u);
  EXPECT_EQ(back.height, 8u);
}

TEST(Image, GarbageIsUndecodable) {
  for (const std::string bad : {std::string(), std::string("hello"), std::string("\x89PNG\r\n\x1a\n trunc", 15),
                                std::string("\xff\xd8\xff\xe0 broken jpeg")}) {
    try {
      decode_image(bad);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), Errc::undecodable_image);
    }
  }
  EXPECT_EQ(detect_media_type("GIF89a...."), "image/gif");
  EXPECT_FALSE(detect_media_type("plain").has_value());
}

TEST(PixelDiff, IdenticalAndChanged) {
  auto img = decode_image(tst::make_png(40, 30, 2));
  const auto same = pixel_diff(img, img);
  EXPECT_EQ(same.changed_pixels, 0u);
  EXPECT_EQ(same.changed_fraction, 0.0);
  auto edited = img;
  for (std::uint32_t x = 0; x < 40; ++x) {
    for (int c = 0; c < 3; ++c) edited.rgb[(5 * 40 + x) * 3 + c] ^= 0xff;
  }
  const auto d = pixel_diff(img, edited);
  EXPECT_EQ(d.changed_pixels, 40u);
  EXPECT_DOUBLE_EQ(d.changed_fraction, 40.0 / 1200.0);
  const auto diff = decode_image(d.diff_png);
  EXPECT_EQ(diff.width, 40u);
  EXPECT_EQ(diff.height, 30u);
}

TEST(PixelDiff, LargeImagesAreDownsampledAndSizesMayDiffer) {
  const auto big = decode_image(tst::make_png(600, 300, 1));
  const auto other = decode_image(tst::make_png(300, 150, 1));
  const auto d = pixel_diff(big, other);
  EXPECT_LE(d.width, kMaxDiffSide);
  EXPECT_LE(d.height, kMaxDiffSide);
  EXPECT_GE(d.changed_fraction, 0.0);
  EXPECT_LE(d.changed_fraction, 1.0);
}

#include "steerkit/image.hpp"

#include <jpeglib.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <fstream>

namespace steerkit {

namespace {

struct JpegErrorMgr {
  jpeg_error_mgr pub;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

void jpeg_error_exit(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegErrorMgr*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  std::longjmp(err->jump, 1);
}

}  // namespace

ImageU8 ImageU8::filled(int h, int w, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  ImageU8 img;
  img.height = h;
  img.width = w;
  img.pixels.resize(static_cast<size_t>(h) * w * 3);
  for (size_t i = 0; i < img.pixels.size(); i += 3) {
    img.pixels[i] = r;
    img.pixels[i + 1] = g;
    img.pixels[i + 2] = b;
  }
  return img;
}

std::vector<std::uint8_t> encode_jpeg(const ImageU8& img, int quality) {
  if (!img.valid()) throw ConfigError("encode_jpeg: invalid image");
  jpeg_compress_struct cinfo{};
  JpegErrorMgr jerr{};
  cinfo.err = jpeg_std_error(&jerr.pub);
  jerr.pub.error_exit = jpeg_error_exit;

  unsigned char* out_buf = nullptr;
  unsigned long out_size = 0;
  if (setjmp(jerr.jump)) {
    jpeg_destroy_compress(&cinfo);
    if (out_buf) free(out_buf);
    throw IoError(std::string("JPEG encode failed: ") + jerr.message);
  }
  jpeg_create_compress(&cinfo);
  jpeg_mem_dest(&cinfo, &out_buf, &out_size);
  cinfo.image_width = static_cast<JDIMENSION>(img.width);
  cinfo.image_height = static_cast<JDIMENSION>(img.height);
  cinfo.input_components = 3;
  cinfo.in_color_space = JCS_RGB;
  jpeg_set_defaults(&cinfo);
  jpeg_set_quality(&cinfo, quality, TRUE);
  jpeg_start_compress(&cinfo, TRUE);
  while (cinfo.next_scanline < cinfo.image_height) {
    const JSAMPLE* row = img.pixels.data() + static_cast<size_t>(cinfo.next_scanline) * img.width * 3;
    JSAMPROW rows[1] = {const_cast<JSAMPROW>(row)};
    jpeg_write_scanlines(&cinfo, rows, 1);
  }
  jpeg_finish_compress(&cinfo);
  jpeg_destroy_compress(&cinfo);
  std::vector<std::uint8_t> bytes(out_buf, out_buf + out_size);
  free(out_buf);
  return bytes;
}

ImageU8 decode_jpeg(std::span<const std::uint8_t> bytes) {
  jpeg_decompress_struct cinfo{};
  JpegErrorMgr jerr{};
  cinfo.err = jpeg_std_error(&jerr.pub);
  jerr.pub.error_exit = jpeg_error_exit;
  if (setjmp(jerr.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw ParseError(std::string("JPEG decode failed: ") + jerr.message);
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  ImageU8 img;
  img.height = static_cast<int>(cinfo.output_height);
  img.width = static_cast<int>(cinfo.output_width);
  img.pixels.resize(static_cast<size_t>(img.height) * img.width * 3);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = img.pixels.data() + static_cast<size_t>(cinfo.output_scanline) * img.width * 3;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return img;
}

void save_jpeg(const ImageU8& img, const std::filesystem::path& path, int quality) {
  auto bytes = encode_jpeg(img, quality);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to " + path.string());
}

ImageU8 load_jpeg(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return decode_jpeg(bytes);
}

ImageU8 flip_horizontal(const ImageU8& img) {
  ImageU8 out;
  out.height = img.height;
  out.width = img.width;
  out.pixels.resize(img.pixels.size());
  for (int r = 0; r < img.height; ++r)
    for (int c = 0; c < img.width; ++c)
      for (int ch = 0; ch < 3; ++ch) out.at(r, c, ch) = img.at(r, img.width - 1 - c, ch);
  return out;
}

namespace {

// Bilinear fetch with edge clamping.
void sample_bilinear(const ImageU8& img, double y, double x, std::uint8_t* rgb) {
  const double yc = std::clamp(y, 0.0, static_cast<double>(img.height - 1));
  const double xc = std::clamp(x, 0.0, static_cast<double>(img.width - 1));
  const int y0 = static_cast<int>(std::floor(yc));
  const int x0 = static_cast<int>(std::floor(xc));
  const int y1 = std::min(y0 + 1, img.height - 1);
  const int x1 = std::min(x0 + 1, img.width - 1);
  const double fy = yc - y0, fx = xc - x0;
  for (int ch = 0; ch < 3; ++ch) {
    const double v = (1 - fy) * ((1 - fx) * img.at(y0, x0, ch) + fx * img.at(y0, x1, ch)) +
                     fy * ((1 - fx) * img.at(y1, x0, ch) + fx * img.at(y1, x1, ch));
    rgb[ch] = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
  }
}

}  // namespace

ImageU8 rotate_about_center(const ImageU8& img, double degrees) {
  if (degrees == 0.0) return img;
  ImageU8 out;
  out.height = img.height;
  out.width = img.width;
  out.pixels.resize(img.pixels.size());
  const double rad = degrees * M_PI / 180.0;
  const double cy = (img.height - 1) / 2.0, cx = (img.width - 1) / 2.0;
  const double c = std::cos(rad), s = std::sin(rad);
  for (int r = 0; r < img.height; ++r) {
    for (int col = 0; col < img.width; ++col) {
      // Inverse mapping: where did this output pixel come from?
      const double dy = r - cy, dx = col - cx;
      const double sy = cy + (c * dy - s * dx);
      const double sx = cx + (s * dy + c * dx);
      sample_bilinear(img, sy, sx, &out.at(r, col, 0));
    }
  }
  return out;
}

ImageU8 crop(const ImageU8& img, int top, int left, int out_h, int out_w) {
  if (top < 0 || left < 0 || out_h < 1 || out_w < 1 || top + out_h > img.height ||
      left + out_w > img.width)
    throw ConfigError("crop window [" + std::to_string(top) + "," + std::to_string(left) + " " +
                      std::to_string(out_h) + "x" + std::to_string(out_w) +
                      "] does not fit a " + std::to_string(img.height) + "x" +
                      std::to_string(img.width) + " image");
  ImageU8 out;
  out.height = out_h;
  out.width = out_w;
  out.pixels.resize(static_cast<size_t>(out_h) * out_w * 3);
  for (int r = 0; r < out_h; ++r)
    std::memcpy(&out.at(r, 0, 0), &img.at(top + r, left, 0), static_cast<size_t>(out_w) * 3);
  return out;
}

ImageU8 resize_bilinear(const ImageU8& img, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1) throw ConfigError("resize target must be positive");
  if (out_h == img.height && out_w == img.width) return img;
  ImageU8 out;
  out.height = out_h;
  out.width = out_w;
  out.pixels.resize(static_cast<size_t>(out_h) * out_w * 3);
  const double sy = static_cast<double>(img.height) / out_h;
  const double sx = static_cast<double>(img.width) / out_w;
  for (int r = 0; r < out_h; ++r) {
    const double y = (r + 0.5) * sy - 0.5;
    for (int c = 0; c < out_w; ++c) {
      const double x = (c + 0.5) * sx - 0.5;
      sample_bilinear(img, y, x, &out.at(r, c, 0));
    }
  }
  return out;
}

}  // namespace steerkit

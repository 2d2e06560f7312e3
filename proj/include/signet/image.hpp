#pragma once

// 8-bit grayscale images: binary PGM read/write and PNG read (color inputs
// are converted to luma with BT.601 weights, alpha composited over white).

#include <png.h>

#include <cctype>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "signet/common.hpp"

namespace signet {

struct GrayImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> pixels;  // row-major

  GrayImage() = default;
  GrayImage(std::size_t h, std::size_t w, std::uint8_t fill = 255) : height(h), width(w), pixels(h * w, fill) {}

  std::uint8_t at(std::size_t y, std::size_t x) const { return pixels[y * width + x]; }
  std::uint8_t& at(std::size_t y, std::size_t x) { return pixels[y * width + x]; }
  bool empty() const { return pixels.empty(); }
  friend bool operator==(const GrayImage&, const GrayImage&) = default;
};

inline std::string encode_pgm(const GrayImage& img) {
  std::string out = concat("P5\n", img.width, " ", img.height, "\n255\n");
  out.append(reinterpret_cast<const char*>(img.pixels.data()), img.pixels.size());
  return out;
}

namespace detail {

inline GrayImage decode_pgm(std::string_view bytes, const std::string& origin) {
  std::size_t pos = 0;
  auto token = [&]() -> std::string {
    while (pos < bytes.size()) {
      if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else {
        break;
      }
    }
    const std::size_t start = pos;
    while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
    return std::string(bytes.substr(start, pos - start));
  };
  const std::string magic = token();
  if (magic != "P5" && magic != "P2") fail(origin, ": not a PGM file");
  auto number = [&](const char* what) {
    const std::string t = token();
    if (t.empty() || t.find_first_not_of("0123456789") != std::string::npos) fail(origin, ": bad PGM ", what);
    return std::stoul(t);
  };
  const std::size_t w = number("width"), h = number("height"), maxval = number("maxval");
  if (w == 0 || h == 0) fail(origin, ": zero-area image");
  if (maxval == 0 || maxval > 255) fail(origin, ": only 8-bit PGM is supported");
  GrayImage img(h, w);
  if (magic == "P5") {
    ++pos;  // single whitespace after maxval
    if (bytes.size() < pos + w * h) fail(origin, ": truncated PGM data");
    for (std::size_t i = 0; i < w * h; ++i) {
      img.pixels[i] = static_cast<std::uint8_t>(static_cast<unsigned char>(bytes[pos + i]) * 255 / maxval);
    }
  } else {
    for (std::size_t i = 0; i < w * h; ++i) img.pixels[i] = static_cast<std::uint8_t>(number("sample") * 255 / maxval);
  }
  return img;
}

inline double luma(double r, double g, double b) { return 0.299 * r + 0.587 * g + 0.114 * b; }

inline GrayImage decode_png(const std::filesystem::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.string().c_str())) {
    fail(path.string(), ": cannot decode PNG: ", image.message);
  }
  const bool color = image.format & PNG_FORMAT_FLAG_COLOR;
  const bool alpha = image.format & PNG_FORMAT_FLAG_ALPHA;
  image.format = color ? (alpha ? PNG_FORMAT_RGBA : PNG_FORMAT_RGB) : (alpha ? PNG_FORMAT_GA : PNG_FORMAT_GRAY);
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr)) {
    fail(path.string(), ": cannot decode PNG: ", image.message);
  }
  if (image.width == 0 || image.height == 0) fail(path.string(), ": zero-area image");
  GrayImage img(image.height, image.width);
  const std::size_t channels = PNG_IMAGE_PIXEL_CHANNELS(image.format);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    const std::uint8_t* px = buf.data() + i * channels;
    double v = color ? luma(px[0], px[1], px[2]) : px[0];
    if (alpha) {
      const double a = px[channels - 1] / 255.0;
      v = a * v + (1.0 - a) * 255.0;
    }
    img.pixels[i] = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
  }
  return img;
}

}  // namespace detail

inline bool is_image_path(const std::filesystem::path& p) {
  auto ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".pgm";
}

inline GrayImage read_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(path.string(), ": cannot open image");
  std::string bytes((std::istreambuf_iterator<char>(in)), {});
  if (bytes.size() >= 8 && std::memcmp(bytes.data(), "\x89PNG\r\n\x1a\n", 8) == 0) return detail::decode_png(path);
  return detail::decode_pgm(bytes, path.string());
}

inline void write_pgm(const std::filesystem::path& path, const GrayImage& img) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(path.string(), ": cannot open for writing");
  const auto bytes = encode_pgm(img);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(path.string(), ": write failed");
}

}  // namespace signet

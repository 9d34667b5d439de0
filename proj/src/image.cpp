#include "hybridboost/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>

#include "hybridboost/binary_io.hpp"
#include "hybridboost/errors.hpp"

#ifdef HYBRIDBOOST_HAVE_PNG
#include <png.h>
#endif

namespace hybridboost::data {

GrayImage::GrayImage(std::size_t w, std::size_t h, std::vector<double> values)
    : width(w), height(h), pixels(std::move(values)) {
  if (pixels.size() != w * h) {
    throw DimensionError("image has " + std::to_string(pixels.size()) + " pixels, expected " +
                         std::to_string(w) + "x" + std::to_string(h));
  }
}

void GrayImage::clamp_unit() {
  for (double& p : pixels) p = std::clamp(p, 0.0, 1.0);
}

double GrayImage::mean() const {
  if (pixels.empty()) return 0.0;
  return std::accumulate(pixels.begin(), pixels.end(), 0.0) / static_cast<double>(pixels.size());
}

namespace {

class PgmHeaderParser {
 public:
  PgmHeaderParser(std::span<const std::uint8_t> bytes, const std::string& origin)
      : bytes_(bytes), origin_(origin) {}

  void magic() {
    if (bytes_.size() < 2 || bytes_[0] != 'P' || bytes_[1] != '5') {
      throw FormatError(origin_ + ": bad PGM magic at byte offset 0 (expected P5)");
    }
    pos_ = 2;
  }

  std::size_t number(const char* field) {
    skip_space_and_comments();
    const std::size_t start = pos_;
    std::size_t value = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      value = value * 10 + (bytes_[pos_] - '0');
      if (value > 1u << 30) break;
      ++pos_;
    }
    if (pos_ == start) {
      throw FormatError(origin_ + ": expected PGM " + field + " at byte offset " +
                        std::to_string(start));
    }
    return value;
  }

  // Exactly one whitespace byte separates maxval from the raster.
  std::size_t raster_start() {
    if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) {
      throw FormatError(origin_ + ": missing whitespace before raster at byte offset " +
                        std::to_string(pos_));
    }
    return pos_ + 1;
  }

 private:
  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  std::span<const std::uint8_t> bytes_;
  const std::string& origin_;
  std::size_t pos_ = 0;
};

}  // namespace

GrayImage decode_pgm(std::span<const std::uint8_t> bytes, const std::string& origin) {
  PgmHeaderParser parser(bytes, origin);
  parser.magic();
  const std::size_t width = parser.number("width");
  const std::size_t height = parser.number("height");
  const std::size_t maxval = parser.number("maxval");
  if (width == 0 || height == 0) throw FormatError(origin + ": PGM has a zero dimension");
  if (maxval == 0 || maxval > 65535) {
    throw FormatError(origin + ": PGM maxval " + std::to_string(maxval) + " outside [1,65535]");
  }
  const std::size_t start = parser.raster_start();
  const std::size_t bytes_per_sample = maxval > 255 ? 2 : 1;
  const std::size_t needed = width * height * bytes_per_sample;
  if (bytes.size() < start + needed) {
    throw CorruptionError(origin + ": PGM raster truncated at byte offset " +
                          std::to_string(bytes.size()) + " (expected " +
                          std::to_string(start + needed) + " bytes)");
  }
  GrayImage image(width, height);
  const double denom = static_cast<double>(maxval);
  for (std::size_t i = 0; i < width * height; ++i) {
    std::size_t v;
    if (bytes_per_sample == 1) {
      v = bytes[start + i];
    } else {
      v = (static_cast<std::size_t>(bytes[start + 2 * i]) << 8) | bytes[start + 2 * i + 1];
    }
    image.pixels[i] = std::min(1.0, static_cast<double>(v) / denom);
  }
  return image;
}

std::vector<std::uint8_t> encode_pgm(const GrayImage& image, std::uint16_t maxval) {
  if (maxval == 0) throw ConfigError("PGM maxval must be positive");
  const std::string header = "P5\n" + std::to_string(image.width) + " " +
                             std::to_string(image.height) + "\n" + std::to_string(maxval) + "\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  for (double p : image.pixels) {
    const auto v = static_cast<std::uint32_t>(std::lround(std::clamp(p, 0.0, 1.0) * maxval));
    if (maxval > 255) {
      out.push_back(static_cast<std::uint8_t>(v >> 8));
      out.push_back(static_cast<std::uint8_t>(v & 0xFF));
    } else {
      out.push_back(static_cast<std::uint8_t>(v));
    }
  }
  return out;
}

void save_pgm(const GrayImage& image, const std::filesystem::path& path, std::uint16_t maxval) {
  io::write_file(path, encode_pgm(image, maxval));
}

bool png_supported() {
#ifdef HYBRIDBOOST_HAVE_PNG
  return true;
#else
  return false;
#endif
}

namespace {

#ifdef HYBRIDBOOST_HAVE_PNG
GrayImage decode_png(const std::filesystem::path& path) {
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.c_str())) {
    throw FormatError(path.string() + ": " + png.message);
  }
  png.format = PNG_FORMAT_GRAY;
  std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, buffer.data(), 0, nullptr)) {
    const std::string message = png.message;
    png_image_free(&png);
    throw FormatError(path.string() + ": " + message);
  }
  GrayImage image(png.width, png.height);
  for (std::size_t i = 0; i < image.pixels.size(); ++i) image.pixels[i] = buffer[i] / 255.0;
  return image;
}
#endif

std::string lower_extension(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext;
}

}  // namespace

GrayImage load_image(const std::filesystem::path& path) {
  const std::string ext = lower_extension(path);
  if (ext == ".png") {
#ifdef HYBRIDBOOST_HAVE_PNG
    return decode_png(path);
#else
    throw FormatError(path.string() + ": PNG decoding is not available in this build");
#endif
  }
  const auto bytes = io::read_file(path);
  return decode_pgm(bytes, path.string());
}

GrayImage resize_bilinear(const GrayImage& image, std::size_t out_width, std::size_t out_height) {
  if (out_width == 0 || out_height == 0) throw DimensionError("resize target has a zero dimension");
  if (image.width == 0 || image.height == 0) throw DimensionError("cannot resize an empty image");
  GrayImage out(out_width, out_height);
  const double sx = static_cast<double>(image.width) / static_cast<double>(out_width);
  const double sy = static_cast<double>(image.height) / static_cast<double>(out_height);
  const double max_x = static_cast<double>(image.width - 1);
  const double max_y = static_cast<double>(image.height - 1);
  for (std::size_t y = 0; y < out_height; ++y) {
    const double fy = std::clamp((static_cast<double>(y) + 0.5) * sy - 0.5, 0.0, max_y);
    const auto y0 = static_cast<std::size_t>(fy);
    const std::size_t y1 = std::min(y0 + 1, image.height - 1);
    const double wy = fy - static_cast<double>(y0);
    for (std::size_t x = 0; x < out_width; ++x) {
      const double fx = std::clamp((static_cast<double>(x) + 0.5) * sx - 0.5, 0.0, max_x);
      const auto x0 = static_cast<std::size_t>(fx);
      const std::size_t x1 = std::min(x0 + 1, image.width - 1);
      const double wx = fx - static_cast<double>(x0);
      const double top = image.at(x0, y0) * (1.0 - wx) + image.at(x1, y0) * wx;
      const double bottom = image.at(x0, y1) * (1.0 - wx) + image.at(x1, y1) * wx;
      out.at(x, y) = std::clamp(top * (1.0 - wy) + bottom * wy, 0.0, 1.0);
    }
  }
  return out;
}

}  // namespace hybridboost::data

#include "neuvis/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>

#include "neuvis/errors.hpp"

namespace neuvis {

namespace {

// Next whitespace-separated token, skipping '#' comments to end of line.
std::string next_token(std::istream& in) {
  std::string tok;
  int ch;
  while ((ch = in.get()) != EOF) {
    if (ch == '#') {
      while ((ch = in.get()) != EOF && ch != '\n') {
      }
      continue;
    }
    if (std::isspace(ch)) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok.push_back(static_cast<char>(ch));
  }
  return tok;
}

}  // namespace

Image load_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in.good()) throw DataError("cannot open image: " + path);

  if (next_token(in) != "P6")
    throw DataError("not a binary PPM (P6) file: " + path);
  std::int64_t w, h, maxval;
  try {
    w = parse_int(next_token(in));
    h = parse_int(next_token(in));
    maxval = parse_int(next_token(in));
  } catch (const std::exception&) {
    throw DataError("malformed PPM header: " + path);
  }
  if (w < 1 || h < 1) throw DataError("PPM has empty dimensions: " + path);
  if (maxval != 255)
    throw DataError("only 8-bit PPM (maxval 255) is supported: " + path);

  Image img(h, w);
  const std::size_t n = static_cast<std::size_t>(h * w * 3);
  std::vector<std::uint8_t> raw(n);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n)
    throw DataError("truncated PPM payload: " + path);
  for (std::size_t i = 0; i < n; ++i) img.data[i] = raw[i] / 255.0;
  return img;
}

void save_ppm(const Image& img, const std::string& path) {
  if (img.height < 1 || img.width < 1)
    throw DataError("cannot save an empty image");
  std::string out;
  out.reserve(img.data.size() + 32);
  out += "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) +
         "\n255\n";
  for (double v : img.data) {
    const double clamped = std::clamp(v, 0.0, 1.0);
    out.push_back(static_cast<char>(
        static_cast<std::uint8_t>(std::lround(clamped * 255.0))));
  }
  write_file_atomic(path, out);
}

Image resize_bilinear(const Image& img, Eigen::Index height, Eigen::Index width) {
  if (img.height < 1 || img.width < 1) throw DataError("cannot resize an empty image");
  if (height < 1 || width < 1) throw ConfigError("resize target must be positive");

  Image out(height, width);
  const double sy = static_cast<double>(img.height) / static_cast<double>(height);
  const double sx = static_cast<double>(img.width) / static_cast<double>(width);
  for (Eigen::Index y = 0; y < height; ++y) {
    const double fy = std::max(0.0, (y + 0.5) * sy - 0.5);
    const Eigen::Index y0 = std::min<Eigen::Index>(
        static_cast<Eigen::Index>(fy), img.height - 1);
    const Eigen::Index y1 = std::min<Eigen::Index>(y0 + 1, img.height - 1);
    const double wy = fy - static_cast<double>(y0);
    for (Eigen::Index x = 0; x < width; ++x) {
      const double fx = std::max(0.0, (x + 0.5) * sx - 0.5);
      const Eigen::Index x0 = std::min<Eigen::Index>(
          static_cast<Eigen::Index>(fx), img.width - 1);
      const Eigen::Index x1 = std::min<Eigen::Index>(x0 + 1, img.width - 1);
      const double wx = fx - static_cast<double>(x0);
      for (Eigen::Index c = 0; c < 3; ++c) {
        const double top =
            (1.0 - wx) * img.at(y0, x0, c) + wx * img.at(y0, x1, c);
        const double bot =
            (1.0 - wx) * img.at(y1, x0, c) + wx * img.at(y1, x1, c);
        out.at(y, x, c) = (1.0 - wy) * top + wy * bot;
      }
    }
  }
  return out;
}

Mat to_gray(const Image& img) {
  Mat g(img.height, img.width);
  for (Eigen::Index y = 0; y < img.height; ++y)
    for (Eigen::Index x = 0; x < img.width; ++x)
      g(y, x) = 0.299 * img.at(y, x, 0) + 0.587 * img.at(y, x, 1) +
                0.114 * img.at(y, x, 2);
  return g;
}

}  // namespace neuvis

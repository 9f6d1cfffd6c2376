#include <doctest.h>

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <string>

#include "neuvis/errors.hpp"
#include "neuvis/image.hpp"

using namespace neuvis;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() /
           ("nv_img_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

Image byte_noise(Eigen::Index h, Eigen::Index w, std::uint64_t seed) {
  Rng rng(seed);
  Image img(h, w);
  for (auto& v : img.data)
    v = static_cast<double>(rng.uniform_int(256)) / 255.0;
  return img;
}

void write_raw(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_SUITE("image") {

TEST_CASE("ppm round trip preserves byte-quantized values") {
  TempDir dir("rt");
  Image img = byte_noise(5, 7, 3);
  save_ppm(img, dir.file("a.ppm"));
  Image back = load_ppm(dir.file("a.ppm"));

  REQUIRE(back.height == 5);
  REQUIRE(back.width == 7);
  double max_diff = 0.0;
  for (std::size_t i = 0; i < img.data.size(); ++i)
    max_diff = std::max(max_diff, std::abs(img.data[i] - back.data[i]));
  CHECK(max_diff == 0.0);
}

TEST_CASE("ppm header parsing accepts comments and rejects malformed files") {
  TempDir dir("hdr");

  write_raw(dir.file("c.ppm"),
            std::string("P6 # binary rgb\n# size follows\n2 1\n255\n") +
                std::string("\x00\x7f\xff\xff\x7f\x00", 6));
  Image img = load_ppm(dir.file("c.ppm"));
  CHECK(img.width == 2);
  CHECK(img.height == 1);
  CHECK(img.at(0, 0, 2) == 1.0);
  CHECK(img.at(0, 1, 0) == 1.0);

  write_raw(dir.file("p3.ppm"), "P3\n1 1\n255\n0 0 0\n");
  CHECK_THROWS_AS(load_ppm(dir.file("p3.ppm")), DataError);

  write_raw(dir.file("wide.ppm"), std::string("P6\n1 1\n65535\n") +
                                      std::string(6, '\x00'));
  CHECK_THROWS_AS(load_ppm(dir.file("wide.ppm")), DataError);

  write_raw(dir.file("short.ppm"),
            std::string("P6\n2 2\n255\n") + std::string(5, '\x10'));
  CHECK_THROWS_AS(load_ppm(dir.file("short.ppm")), DataError);

  write_raw(dir.file("junk.ppm"), "P6\nx y\n255\n");
  CHECK_THROWS_AS(load_ppm(dir.file("junk.ppm")), DataError);

  CHECK_THROWS_AS(load_ppm(dir.file("absent.ppm")), DataError);
}

TEST_CASE("save clamps out-of-range values") {
  TempDir dir("clamp");
  Image img(1, 2);
  img.at(0, 0, 0) = 1.5;
  img.at(0, 1, 0) = -0.5;
  save_ppm(img, dir.file("c.ppm"));
  Image back = load_ppm(dir.file("c.ppm"));
  CHECK(back.at(0, 0, 0) == 1.0);
  CHECK(back.at(0, 1, 0) == 0.0);
}

TEST_CASE("bilinear resize: identity, constants, and a hand-computed ramp") {
  Image img = byte_noise(6, 4, 5);
  Image same = resize_bilinear(img, 6, 4);
  double max_diff = 0.0;
  for (std::size_t i = 0; i < img.data.size(); ++i)
    max_diff = std::max(max_diff, std::abs(img.data[i] - same.data[i]));
  CHECK(max_diff == 0.0);

  Image flat(3, 3);
  for (auto& v : flat.data) v = 0.25;
  Image up = resize_bilinear(flat, 7, 5);
  for (double v : up.data) CHECK(v == 0.25);

  // 2x2 with a horizontal step; half-pixel sampling gives 0, 1/4, 3/4, 1.
  Image step(2, 2);
  for (Eigen::Index y = 0; y < 2; ++y)
    for (Eigen::Index c = 0; c < 3; ++c) {
      step.at(y, 0, c) = 0.0;
      step.at(y, 1, c) = 1.0;
    }
  Image wide = resize_bilinear(step, 2, 4);
  CHECK(wide.at(0, 0, 0) == 0.0);
  CHECK(wide.at(0, 1, 0) == 0.25);
  CHECK(wide.at(0, 2, 0) == 0.75);
  CHECK(wide.at(0, 3, 0) == 1.0);

  CHECK_THROWS_AS(resize_bilinear(img, 0, 4), ConfigError);
  CHECK_THROWS_AS(resize_bilinear(Image(), 4, 4), DataError);
}

TEST_CASE("grayscale uses the documented luma weights") {
  Image img(1, 3);
  img.at(0, 0, 0) = 1.0;
  img.at(0, 1, 1) = 1.0;
  img.at(0, 2, 2) = 1.0;
  Mat g = to_gray(img);
  CHECK(g(0, 0) == 0.299);
  CHECK(g(0, 1) == 0.587);
  CHECK(g(0, 2) == 0.114);

  Image white(2, 2);
  for (auto& v : white.data) v = 1.0;
  Mat gw = to_gray(white);
  CHECK(gw.minCoeff() == doctest::Approx(1.0).epsilon(1e-12));
}

}  // TEST_SUITE

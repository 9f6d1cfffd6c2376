#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "neuvis/common.hpp"

namespace neuvis {

// RGB image, interleaved row-major, values in [0, 1].
struct Image {
  Eigen::Index height = 0;
  Eigen::Index width = 0;
  std::vector<double> data;  // height * width * 3

  Image() = default;
  Image(Eigen::Index h, Eigen::Index w)
      : height(h), width(w), data(static_cast<std::size_t>(h * w * 3), 0.0) {}

  double& at(Eigen::Index y, Eigen::Index x, Eigen::Index c) {
    return data[static_cast<std::size_t>((y * width + x) * 3 + c)];
  }
  double at(Eigen::Index y, Eigen::Index x, Eigen::Index c) const {
    return data[static_cast<std::size_t>((y * width + x) * 3 + c)];
  }
  bool same_shape(const Image& o) const {
    return height == o.height && width == o.width;
  }
};

// Binary PPM (P6), 8-bit, '#' comments allowed in the header.
Image load_ppm(const std::string& path);
void save_ppm(const Image& img, const std::string& path);

// Bilinear resampling with edge clamping (half-pixel centers).
Image resize_bilinear(const Image& img, Eigen::Index height, Eigen::Index width);

// Luma (BT.601 weights), height x width.
Mat to_gray(const Image& img);

}  // namespace neuvis

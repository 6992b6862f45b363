#include "damgan/data.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace damgan::data {

ImageTensor resize_bilinear(const ImageTensor& image, Index height, Index width) {
  const Shape s = image.shape();
  if (height <= 0 || width <= 0) throw std::invalid_argument("resize_bilinear: empty target");
  if (s.h == height && s.w == width) return image;
  ImageTensor out({s.n, s.c, height, width});
  const double sy = double(s.h) / double(height);
  const double sx = double(s.w) / double(width);
  auto sample = [](double src, Index size, Index& i0, Index& i1, double& frac) {
    src = std::clamp(src, 0.0, double(size - 1));
    i0 = Index(std::floor(src));
    i1 = std::min(i0 + 1, size - 1);
    frac = src - double(i0);
  };
  for (Index y = 0; y < height; ++y) {
    Index y0, y1;
    double fy;
    sample((double(y) + 0.5) * sy - 0.5, s.h, y0, y1, fy);
    for (Index x = 0; x < width; ++x) {
      Index x0, x1;
      double fx;
      sample((double(x) + 0.5) * sx - 0.5, s.w, x0, x1, fx);
      for (Index n = 0; n < s.n; ++n)
        for (Index c = 0; c < s.c; ++c) {
          const double top = (1 - fx) * image(n, c, y0, x0) + fx * image(n, c, y0, x1);
          const double bottom = (1 - fx) * image(n, c, y1, x0) + fx * image(n, c, y1, x1);
          out(n, c, y, x) = float((1 - fy) * top + fy * bottom);
        }
    }
  }
  return out;
}

ImageTensor load_image(const std::filesystem::path& path, Index resolution) {
  if (resolution <= 0) throw std::invalid_argument("load_image: resolution must be positive");
  cv::Mat bgr;
  try {
    bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  } catch (const cv::Exception& e) {
    throw std::runtime_error("cannot decode image " + path.string() + ": " + e.what());
  }
  if (bgr.empty()) throw std::runtime_error("cannot decode image " + path.string());
  if (bgr.depth() != CV_8U) bgr.convertTo(bgr, CV_8U);
  ImageTensor img({1, 3, bgr.rows, bgr.cols});
  for (int y = 0; y < bgr.rows; ++y) {
    const auto* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < bgr.cols; ++x)
      for (int c = 0; c < 3; ++c) img(0, c, y, x) = float(row[x][2 - c]) / 255.f;
  }
  return resize_bilinear(img, resolution, resolution);
}

Mask load_mask(const std::filesystem::path& path) {
  cv::Mat gray;
  try {
    gray = cv::imread(path.string(), cv::IMREAD_GRAYSCALE);
  } catch (const cv::Exception& e) {
    throw std::runtime_error("cannot decode mask " + path.string() + ": " + e.what());
  }
  if (gray.empty()) throw std::runtime_error("cannot decode mask " + path.string());
  if (gray.depth() != CV_8U) gray.convertTo(gray, CV_8U);
  Mask m({1, 1, gray.rows, gray.cols});
  for (int y = 0; y < gray.rows; ++y) {
    const auto* row = gray.ptr<std::uint8_t>(y);
    for (int x = 0; x < gray.cols; ++x) m(0, 0, y, x) = row[x] > 127 ? 1.f : 0.f;
  }
  return m;
}

std::uint8_t quantize(float v) {
  const float scaled = std::clamp(v, 0.f, 1.f) * 255.f;
  // Default rounding mode rounds half to even.
  return static_cast<std::uint8_t>(std::nearbyint(scaled));
}

void save_png(const std::filesystem::path& path, const ImageTensor& image, Index index) {
  const Shape s = image.shape();
  if (s.c != 3 || index < 0 || index >= s.n) {
    throw std::invalid_argument("save_png: expected an RGB item, got " + to_string(s));
  }
  cv::Mat bgr(int(s.h), int(s.w), CV_8UC3);
  for (Index y = 0; y < s.h; ++y) {
    auto* row = bgr.ptr<cv::Vec3b>(int(y));
    for (Index x = 0; x < s.w; ++x)
      for (int c = 0; c < 3; ++c) row[x][2 - c] = quantize(image(index, c, y, x));
  }
  bool ok = false;
  try {
    ok = cv::imwrite(path.string(), bgr);
  } catch (const cv::Exception&) {
    ok = false;
  }
  if (!ok) throw std::runtime_error("cannot write image " + path.string());
}

}  // namespace damgan::data

#pragma once

#include "damgan/tensor.hpp"

#include <array>
#include <cmath>
#include <filesystem>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace damgan::metrics {

/// Reported PSNR for identical images.
inline constexpr double kPsnrCap = 99.0;

inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimK1 = 0.01;
inline constexpr double kSsimK2 = 0.03;

template <typename Scalar>
double mse(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  require_same_shape(a.shape(), b.shape(), "mse");
  if (a.empty()) throw std::invalid_argument("mse: empty tensors");
  return (a.array().template cast<double>() - b.array().template cast<double>()).square().mean();
}

/// 10 log10(peak^2 / mse), capped at kPsnrCap.
template <typename Scalar>
double psnr(const Tensor<Scalar>& a, const Tensor<Scalar>& b, double peak = 1.0) {
  if (!(peak > 0)) throw std::invalid_argument("psnr: peak must be positive");
  const double e = mse(a, b);
  if (e == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(peak * peak / e));
}

namespace detail {

inline std::array<double, kSsimWindow> gaussian_window() {
  std::array<double, kSsimWindow> w{};
  double sum = 0;
  const int r = kSsimWindow / 2;
  for (int i = 0; i < kSsimWindow; ++i) {
    const double d = double(i - r);
    w[std::size_t(i)] = std::exp(-d * d / (2 * kSsimSigma * kSsimSigma));
    sum += w[std::size_t(i)];
  }
  for (double& v : w) v /= sum;
  return w;
}

using Plane = Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Separable Gaussian filter keeping only fully covered positions.
inline Plane filter_valid(const Plane& p, const std::array<double, kSsimWindow>& w) {
  const Index oh = p.rows() - kSsimWindow + 1;
  const Index ow = p.cols() - kSsimWindow + 1;
  Plane rows = Plane::Zero(p.rows(), ow);
  for (int k = 0; k < kSsimWindow; ++k) rows += w[std::size_t(k)] * p.middleCols(k, ow);
  Plane out = Plane::Zero(oh, ow);
  for (int k = 0; k < kSsimWindow; ++k) out += w[std::size_t(k)] * rows.middleRows(k, oh);
  return out;
}

/// Mean local SSIM of one channel plane, dynamic range 1.
inline double ssim_plane(const Plane& x, const Plane& y) {
  static const auto w = gaussian_window();
  const double c1 = (kSsimK1 * 1.0) * (kSsimK1 * 1.0);
  const double c2 = (kSsimK2 * 1.0) * (kSsimK2 * 1.0);
  const Plane mx = filter_valid(x, w);
  const Plane my = filter_valid(y, w);
  const Plane vx = filter_valid(x * x, w) - mx * mx;
  const Plane vy = filter_valid(y * y, w) - my * my;
  const Plane cxy = filter_valid(x * y, w) - mx * my;
  const Plane num = (2 * mx * my + c1) * (2 * cxy + c2);
  const Plane den = (mx * mx + my * my + c1) * (vx + vy + c2);
  return (num / den).mean();
}

inline void require_mask(const Shape& image, const Shape& mask, const char* what) {
  if (mask.c != 1 || mask.h != image.h || mask.w != image.w || (mask.n != image.n && mask.n != 1)) {
    throw std::invalid_argument(std::string(what) + ": mask " + to_string(mask) + " does not match " +
                                to_string(image));
  }
}

}  // namespace detail

/// Gaussian-window SSIM (11x11, sigma 1.5), averaged over channels and items.
template <typename Scalar>
double ssim(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  require_same_shape(a.shape(), b.shape(), "ssim");
  const Shape s = a.shape();
  if (s.h < kSsimWindow || s.w < kSsimWindow) {
    throw std::invalid_argument("ssim: image " + to_string(s) + " smaller than the 11x11 window");
  }
  double sum = 0;
  for (Index n = 0; n < s.n; ++n)
    for (Index c = 0; c < s.c; ++c) {
      detail::Plane x(s.h, s.w), y(s.h, s.w);
      for (Index r = 0; r < s.h; ++r)
        for (Index q = 0; q < s.w; ++q) {
          x(r, q) = double(a(n, c, r, q));
          y(r, q) = double(b(n, c, r, q));
        }
      sum += detail::ssim_plane(x, y);
    }
  return sum / double(s.n * s.c);
}

enum class Compositing { raw, composited };
enum class MaskTag { center, free };

const char* to_string(Compositing c);
const char* to_string(MaskTag m);

struct PairScore {
  double psnr = 0;
  double ssim = 0;
};

/// final * mask + x_hat * (1 - mask); a single-item mask broadcasts.
template <typename Scalar>
Tensor<Scalar> composite(const Tensor<Scalar>& x_hat, const Tensor<Scalar>& final,
                         const Tensor<Scalar>& mask) {
  require_same_shape(x_hat.shape(), final.shape(), "composite");
  const Shape s = x_hat.shape();
  const Shape ms = mask.shape();
  detail::require_mask(s, ms, "composite");
  Tensor<Scalar> out(s);
  for (Index n = 0; n < s.n; ++n) {
    const auto m = mask.item(ms.n == 1 ? 0 : n).row(0).array();
    for (Index c = 0; c < s.c; ++c) {
      out.item(n).row(c).array() =
          final.item(n).row(c).array() * m + x_hat.item(n).row(c).array() * (Scalar(1) - m);
    }
  }
  return out;
}

/// Scores `final` (raw) or its composite with the known pixels against x_hat.
template <typename Scalar>
PairScore evaluate_pair(const Tensor<Scalar>& x_hat, const Tensor<Scalar>& final,
                        const Tensor<Scalar>& mask, Compositing mode) {
  require_same_shape(x_hat.shape(), final.shape(), "evaluate_pair");
  detail::require_mask(x_hat.shape(), mask.shape(), "evaluate_pair");
  const Tensor<Scalar> scored = mode == Compositing::composited ? composite(x_hat, final, mask) : final;
  return {psnr(x_hat, scored), ssim(x_hat, scored)};
}

struct MetricsRow {
  std::string id;
  double psnr = 0;
  double ssim = 0;
};

struct MetricsReport {
  std::vector<MetricsRow> rows;  // sorted by id
  double mean_psnr = 0;
  double mean_ssim = 0;
  MaskTag mask = MaskTag::center;
  Compositing compositing = Compositing::composited;
};

/// Arithmetic means over rows; rows re-ordered by id. Throws on empty input.
MetricsReport aggregate(std::vector<MetricsRow> rows, MaskTag mask, Compositing compositing);

/// "id,psnr_db,ssim" header, one line per row, then a "mean" line; %.6g.
void write_report_csv(std::ostream& out, const MetricsReport& report);
void write_report_csv(const std::filesystem::path& file, const MetricsReport& report);

}  // namespace damgan::metrics

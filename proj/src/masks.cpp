#include "damgan/data.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>

namespace damgan::data {

void MaskSpec::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("mask spec: " + what); };
  if (resolution <= 0) fail("resolution must be positive");
  if (mode == MaskMode::center) {
    if (center_size <= 0 || center_size > resolution) fail("center_size must lie in (0, resolution]");
    if (center_size % 2 != 0 || resolution % 2 != 0) fail("center_size and resolution must be even");
    return;
  }
  if (stroke_count.lo < 1 || stroke_count.lo > stroke_count.hi) fail("stroke_count range is empty");
  if (vertex_count.lo < 2 || vertex_count.lo > vertex_count.hi) fail("vertex_count range is empty");
  if (!(stroke_width.lo > 0 && stroke_width.lo <= stroke_width.hi)) fail("stroke_width range is empty");
  if (!(segment_length.lo > 0 && segment_length.lo <= segment_length.hi)) {
    fail("segment_length range is empty");
  }
  if (!(max_turn_angle >= 0)) fail("max_turn_angle must be non-negative");
  if (!(coverage.lo > 0 && coverage.lo <= coverage.hi && coverage.hi < 1)) {
    fail("coverage range must be a non-empty subset of (0,1)");
  }
  if (max_attempts < 1) fail("max_attempts must be positive");
}

Mask center_mask(Index resolution, Index center_size) {
  MaskSpec spec;
  spec.resolution = resolution;
  spec.center_size = center_size;
  spec.validate();
  Mask m({1, 1, resolution, resolution});
  const Index start = (resolution - center_size) / 2;
  for (Index y = start; y < start + center_size; ++y)
    for (Index x = start; x < start + center_size; ++x) m(0, 0, y, x) = 1.f;
  return m;
}

namespace {

struct Point {
  double x;
  double y;
};

/// Sets every pixel whose center lies within `radius` of segment ab.
void stamp_segment(Mask& m, Point a, Point b, double radius) {
  const Index res = m.shape().w;
  const auto lo = [&](double v) { return std::max<Index>(0, Index(std::floor(v - radius - 0.5))); };
  const auto hi = [&](double v) { return std::min<Index>(res - 1, Index(std::ceil(v + radius))); };
  const double dx = b.x - a.x, dy = b.y - a.y;
  const double len2 = dx * dx + dy * dy;
  const double r2 = radius * radius;
  for (Index y = lo(std::min(a.y, b.y)); y <= hi(std::max(a.y, b.y)); ++y)
    for (Index x = lo(std::min(a.x, b.x)); x <= hi(std::max(a.x, b.x)); ++x) {
      const double px = double(x) + 0.5, py = double(y) + 0.5;
      double t = len2 > 0 ? ((px - a.x) * dx + (py - a.y) * dy) / len2 : 0.0;
      t = std::clamp(t, 0.0, 1.0);
      const double ex = a.x + t * dx - px, ey = a.y + t * dy - py;
      if (ex * ex + ey * ey <= r2) m(0, 0, y, x) = 1.f;
    }
}

Mask draw_strokes(const MaskSpec& spec, std::mt19937_64& rng) {
  const double res = double(spec.resolution);
  Mask m({1, 1, spec.resolution, spec.resolution});
  std::uniform_int_distribution<int> strokes(spec.stroke_count.lo, spec.stroke_count.hi);
  std::uniform_int_distribution<int> vertices(spec.vertex_count.lo, spec.vertex_count.hi);
  std::uniform_real_distribution<double> width(spec.stroke_width.lo, spec.stroke_width.hi);
  std::uniform_real_distribution<double> length(spec.segment_length.lo, spec.segment_length.hi);
  std::uniform_real_distribution<double> turn(-spec.max_turn_angle, spec.max_turn_angle);
  std::uniform_real_distribution<double> pos(0.0, res);
  std::uniform_real_distribution<double> heading(0.0, 2.0 * 3.14159265358979323846);

  const int n_strokes = strokes(rng);
  for (int s = 0; s < n_strokes; ++s) {
    const double radius = 0.5 * width(rng);
    Point p{pos(rng), pos(rng)};
    double angle = heading(rng);
    const int n_vertices = vertices(rng);
    for (int v = 1; v < n_vertices; ++v) {
      angle += turn(rng);
      const double step = length(rng);
      Point q{std::clamp(p.x + step * std::cos(angle), 0.0, res),
              std::clamp(p.y + step * std::sin(angle), 0.0, res)};
      stamp_segment(m, p, q, radius);
      p = q;
    }
  }
  return m;
}

}  // namespace

Mask free_form_mask(const MaskSpec& spec) {
  if (spec.mode != MaskMode::free_form) {
    throw std::invalid_argument("free_form_mask: spec.mode must be free_form");
  }
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  double achieved = 0.0;
  for (int attempt = 0; attempt < spec.max_attempts; ++attempt) {
    Mask m = draw_strokes(spec, rng);
    achieved = coverage(m);
    if (spec.coverage.contains(achieved)) return m;
  }
  std::ostringstream msg;
  msg << "free_form_mask: coverage range [" << spec.coverage.lo << "," << spec.coverage.hi
      << "] unreachable after " << spec.max_attempts << " attempts; achieved coverage " << achieved;
  throw std::runtime_error(msg.str());
}

Mask make_mask(const MaskSpec& spec) {
  return spec.mode == MaskMode::center ? center_mask(spec.resolution, spec.center_size)
                                       : free_form_mask(spec);
}

double coverage(const Mask& mask) {
  return mask.empty() ? 0.0 : mask.array().template cast<double>().mean();
}

MaskedInput apply_mask(const ImageTensor& image, const Mask& mask, const Fill& fill) {
  const Shape is = image.shape();
  const Shape ms = mask.shape();
  if (is.c != 3 || ms.c != 1 || ms.h != is.h || ms.w != is.w || (ms.n != is.n && ms.n != 1)) {
    throw std::invalid_argument("apply_mask: image " + to_string(is) + " and mask " + to_string(ms) +
                                " do not agree");
  }
  MaskedInput out{ImageTensor(is), Tensor<float>({is.n, 4, is.h, is.w})};
  for (Index n = 0; n < is.n; ++n) {
    const auto m = mask.item(ms.n == 1 ? 0 : n).row(0).array();
    for (Index c = 0; c < 3; ++c) {
      const float f = fill.mode == FillMode::zeros ? 0.f : fill.mean_rgb[std::size_t(c)];
      // Known pixels are copied, not recomputed, so they stay bit-exact.
      auto dst = out.masked_image.item(n).row(c).array();
      dst = (m > 0.5f).select(f, image.item(n).row(c).array());
    }
    out.generator_input.item(n).topRows(3) = out.masked_image.item(n);
    out.generator_input.item(n).row(3) = m.matrix();
  }
  return out;
}

}  // namespace damgan::data

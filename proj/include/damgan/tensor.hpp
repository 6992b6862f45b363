#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <ostream>
#include <stdexcept>
#include <string>

namespace damgan {

using Index = Eigen::Index;

/// NCHW extents of a dense 4-D tensor.
struct Shape {
  Index n = 0;
  Index c = 0;
  Index h = 0;
  Index w = 0;

  constexpr Index size() const { return n * c * h * w; }
  constexpr Index plane() const { return h * w; }
  constexpr Index item() const { return c * h * w; }
  friend constexpr bool operator==(const Shape&, const Shape&) = default;
};

inline std::string to_string(const Shape& s) {
  return "[" + std::to_string(s.n) + "," + std::to_string(s.c) + "," +
         std::to_string(s.h) + "," + std::to_string(s.w) + "]";
}

inline std::ostream& operator<<(std::ostream& os, const Shape& s) {
  return os << to_string(s);
}

inline void require_same_shape(const Shape& a, const Shape& b, const char* what) {
  if (!(a == b)) {
    throw std::invalid_argument(std::string(what) + ": shape mismatch " +
                                to_string(a) + " vs " + to_string(b));
  }
}

/// Dense NCHW tensor over an Eigen array. Row-major within each item, so
/// the [c, h*w] slab of a batch item maps directly onto a row-major matrix.
template <typename Scalar>
class Tensor {
 public:
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
  using RowMatrix =
      Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using MatrixMap = Eigen::Map<RowMatrix>;
  using ConstMatrixMap = Eigen::Map<const RowMatrix>;

  Tensor() = default;
  explicit Tensor(const Shape& shape) : shape_(shape), data_(Array::Zero(shape.size())) {}
  Tensor(const Shape& shape, Scalar fill)
      : shape_(shape), data_(Array::Constant(shape.size(), fill)) {}
  Tensor(const Shape& shape, Array data) : shape_(shape), data_(std::move(data)) {
    if (data_.size() != shape_.size()) {
      throw std::invalid_argument("Tensor: data size does not match shape " + to_string(shape_));
    }
  }

  const Shape& shape() const { return shape_; }
  Index size() const { return data_.size(); }
  bool empty() const { return data_.size() == 0; }

  Array& array() { return data_; }
  const Array& array() const { return data_; }
  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }

  Scalar& operator()(Index n, Index c, Index y, Index x) {
    return data_[((n * shape_.c + c) * shape_.h + y) * shape_.w + x];
  }
  Scalar operator()(Index n, Index c, Index y, Index x) const {
    return data_[((n * shape_.c + c) * shape_.h + y) * shape_.w + x];
  }
  Scalar& operator[](Index i) { return data_[i]; }
  Scalar operator[](Index i) const { return data_[i]; }

  /// Item `n` viewed as a [c, h*w] matrix.
  MatrixMap item(Index n) {
    return MatrixMap(data_.data() + n * shape_.item(), shape_.c, shape_.plane());
  }
  ConstMatrixMap item(Index n) const {
    return ConstMatrixMap(data_.data() + n * shape_.item(), shape_.c, shape_.plane());
  }

  Tensor& reshape(const Shape& s) {
    if (s.size() != shape_.size()) {
      throw std::invalid_argument("Tensor::reshape: size mismatch");
    }
    shape_ = s;
    return *this;
  }

  void set_zero() { data_.setZero(); }
  bool all_finite() const { return data_.isFinite().all(); }

  template <typename Other>
  Tensor<Other> cast() const {
    return Tensor<Other>(shape_, data_.template cast<Other>());
  }

 private:
  Shape shape_;
  Array data_;
};

/// Channel slice [begin, begin + count) of every item.
template <typename Scalar>
Tensor<Scalar> slice_channels(const Tensor<Scalar>& t, Index begin, Index count) {
  const Shape& s = t.shape();
  if (begin < 0 || count < 0 || begin + count > s.c) {
    throw std::out_of_range("slice_channels: channel range out of bounds");
  }
  Tensor<Scalar> out({s.n, count, s.h, s.w});
  for (Index n = 0; n < s.n; ++n) {
    out.item(n) = t.item(n).middleRows(begin, count);
  }
  return out;
}

/// Items [begin, begin + count) of a batch.
template <typename Scalar>
Tensor<Scalar> slice_batch(const Tensor<Scalar>& t, Index begin, Index count) {
  const Shape& s = t.shape();
  if (begin < 0 || count < 0 || begin + count > s.n) {
    throw std::out_of_range("slice_batch: item range out of bounds");
  }
  return Tensor<Scalar>({count, s.c, s.h, s.w},
                        t.array().segment(begin * s.item(), count * s.item()));
}

template <typename Scalar>
Tensor<Scalar> concat_channels(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.n != sb.n || sa.h != sb.h || sa.w != sb.w) {
    throw std::invalid_argument("concat_channels: shape mismatch " + to_string(sa) +
                                " vs " + to_string(sb));
  }
  Tensor<Scalar> out({sa.n, sa.c + sb.c, sa.h, sa.w});
  for (Index n = 0; n < sa.n; ++n) {
    out.item(n).topRows(sa.c) = a.item(n);
    out.item(n).bottomRows(sb.c) = b.item(n);
  }
  return out;
}

template <typename Scalar>
Tensor<Scalar> concat_batch(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  if (a.empty()) return b;
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.c != sb.c || sa.h != sb.h || sa.w != sb.w) {
    throw std::invalid_argument("concat_batch: shape mismatch");
  }
  typename Tensor<Scalar>::Array data(a.size() + b.size());
  data << a.array(), b.array();
  return Tensor<Scalar>({sa.n + sb.n, sa.c, sa.h, sa.w}, std::move(data));
}

/// Mean over non-overlapping `factor` x `factor` blocks.
template <typename Scalar>
Tensor<Scalar> area_downsample(const Tensor<Scalar>& t, Index factor) {
  const Shape& s = t.shape();
  if (factor < 1 || s.h % factor != 0 || s.w % factor != 0) {
    throw std::invalid_argument("area_downsample: size not divisible by factor");
  }
  if (factor == 1) return t;
  const Index oh = s.h / factor;
  const Index ow = s.w / factor;
  Tensor<Scalar> out({s.n, s.c, oh, ow});
  const Scalar inv = Scalar(1) / Scalar(factor * factor);
  for (Index n = 0; n < s.n; ++n)
    for (Index c = 0; c < s.c; ++c)
      for (Index y = 0; y < oh; ++y)
        for (Index x = 0; x < ow; ++x) {
          Scalar acc = 0;
          for (Index dy = 0; dy < factor; ++dy)
            for (Index dx = 0; dx < factor; ++dx) acc += t(n, c, y * factor + dy, x * factor + dx);
          out(n, c, y, x) = acc * inv;
        }
  return out;
}

}  // namespace damgan

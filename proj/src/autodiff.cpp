#include "damgan/autodiff.hpp"

#include <cmath>
#include <stdexcept>

namespace damgan::ad {

template <typename Scalar>
Var<Scalar> Tape<Scalar>::constant(Tensor<Scalar> value) {
  return leaf(std::move(value), false);
}

template <typename Scalar>
Var<Scalar> Tape<Scalar>::leaf(Tensor<Scalar> value, bool requires_grad) {
  auto node = std::make_unique<Node>();
  node->value = std::move(value);
  node->requires_grad = requires_grad;
  nodes_.push_back(std::move(node));
  return Var<Scalar>(this, nodes_.size() - 1);
}

template <typename Scalar>
Var<Scalar> Tape<Scalar>::record(Tensor<Scalar> value, std::initializer_list<std::size_t> inputs,
                                 Backward backward) {
  bool needs = false;
  for (std::size_t id : inputs) needs = needs || nodes_.at(id)->requires_grad;
  auto node = std::make_unique<Node>();
  node->value = std::move(value);
  node->requires_grad = needs;
  if (needs) node->backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var<Scalar>(this, nodes_.size() - 1);
}

template <typename Scalar>
Tensor<Scalar>& Tape<Scalar>::grad(std::size_t id) {
  Node& node = *nodes_[id];
  if (node.grad.empty()) node.grad = Tensor<Scalar>(node.value.shape());
  return node.grad;
}

template <typename Scalar>
Tensor<Scalar> Tape<Scalar>::gradient(const Var<Scalar>& v) const {
  const Node& node = *nodes_.at(v.id());
  if (node.grad.empty()) return Tensor<Scalar>(node.value.shape());
  return node.grad;
}

template <typename Scalar>
void Tape<Scalar>::backward(const Var<Scalar>& root) {
  if (root.tape() != this) throw std::invalid_argument("backward: node from another tape");
  if (value(root.id()).size() != 1) throw std::invalid_argument("backward: root must be a scalar");
  if (!requires_grad(root.id())) return;
  grad(root.id())[0] += Scalar(1);
  for (std::size_t i = root.id() + 1; i-- > 0;) {
    Node& node = *nodes_[i];
    if (node.backward && !node.grad.empty()) node.backward(*this, i);
  }
}

namespace {

template <typename Scalar>
using RowMatrix = typename Tensor<Scalar>::RowMatrix;

Index conv_out(Index in, Index k, const ConvOptions& o) {
  return (in + 2 * o.padding - o.dilation * (k - 1) - 1) / o.stride + 1;
}

template <typename Scalar>
void im2col(const Scalar* src, Index c, Index h, Index w, Index k, const ConvOptions& o,
            Index oh, Index ow, RowMatrix<Scalar>& cols) {
  cols.resize(c * k * k, oh * ow);
  for (Index ch = 0; ch < c; ++ch)
    for (Index ky = 0; ky < k; ++ky)
      for (Index kx = 0; kx < k; ++kx) {
        Scalar* row = cols.data() + ((ch * k + ky) * k + kx) * oh * ow;
        for (Index oy = 0; oy < oh; ++oy) {
          const Index iy = oy * o.stride - o.padding + ky * o.dilation;
          Scalar* dst = row + oy * ow;
          if (iy < 0 || iy >= h) {
            std::fill(dst, dst + ow, Scalar(0));
            continue;
          }
          const Scalar* line = src + (ch * h + iy) * w;
          for (Index ox = 0; ox < ow; ++ox) {
            const Index ix = ox * o.stride - o.padding + kx * o.dilation;
            dst[ox] = (ix >= 0 && ix < w) ? line[ix] : Scalar(0);
          }
        }
      }
}

template <typename Scalar>
void col2im_add(const RowMatrix<Scalar>& cols, Index c, Index h, Index w, Index k,
                const ConvOptions& o, Index oh, Index ow, Scalar* dst) {
  for (Index ch = 0; ch < c; ++ch)
    for (Index ky = 0; ky < k; ++ky)
      for (Index kx = 0; kx < k; ++kx) {
        const Scalar* row = cols.data() + ((ch * k + ky) * k + kx) * oh * ow;
        for (Index oy = 0; oy < oh; ++oy) {
          const Index iy = oy * o.stride - o.padding + ky * o.dilation;
          if (iy < 0 || iy >= h) continue;
          Scalar* line = dst + (ch * h + iy) * w;
          const Scalar* src = row + oy * ow;
          for (Index ox = 0; ox < ow; ++ox) {
            const Index ix = ox * o.stride - o.padding + kx * o.dilation;
            if (ix >= 0 && ix < w) line[ix] += src[ox];
          }
        }
      }
}

bool is_pointwise(Index k, const ConvOptions& o) {
  return k == 1 && o.stride == 1 && o.padding == 0;
}

}  // namespace

template <typename Scalar>
Var<Scalar> conv2d(const Var<Scalar>& x, const Var<Scalar>& weight,
                   const std::optional<Var<Scalar>>& bias, const ConvOptions& opt) {
  Tape<Scalar>& tape = *x.tape();
  const Shape xs = x.shape();
  const Shape ws = weight.shape();
  if (ws.c != xs.c || ws.h != ws.w) {
    throw std::invalid_argument("conv2d: weight " + to_string(ws) + " incompatible with input " +
                                to_string(xs));
  }
  if (bias && bias->shape() != Shape{1, ws.n, 1, 1}) {
    throw std::invalid_argument("conv2d: bias shape " + to_string(bias->shape()));
  }
  const Index k = ws.h;
  const Index oh = conv_out(xs.h, k, opt);
  const Index ow = conv_out(xs.w, k, opt);
  if (oh <= 0 || ow <= 0) throw std::invalid_argument("conv2d: empty output for input " + to_string(xs));

  using ConstMap = typename Tensor<Scalar>::ConstMatrixMap;
  const ConstMap wmat(weight.value().data(), ws.n, ws.c * k * k);
  Tensor<Scalar> out({xs.n, ws.n, oh, ow});
  RowMatrix<Scalar> cols;
  for (Index n = 0; n < xs.n; ++n) {
    if (is_pointwise(k, opt)) {
      out.item(n).noalias() = wmat * x.value().item(n);
    } else {
      im2col(x.value().data() + n * xs.item(), xs.c, xs.h, xs.w, k, opt, oh, ow, cols);
      out.item(n).noalias() = wmat * cols;
    }
    if (bias) {
      out.item(n).colwise() += Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>(
          bias->value().data(), ws.n);
    }
  }

  const std::size_t xi = x.id(), wi = weight.id();
  const std::optional<std::size_t> bi = bias ? std::optional(bias->id()) : std::nullopt;
  std::initializer_list<std::size_t> ids = {xi, wi};
  auto backward = [=](Tape<Scalar>& t, std::size_t self) {
    const Tensor<Scalar>& gout = t.grad(self);
    const Tensor<Scalar>& xv = t.value(xi);
    const ConstMap wm(t.value(wi).data(), ws.n, ws.c * k * k);
    const bool gx = t.requires_grad(xi);
    const bool gw = t.requires_grad(wi);
    RowMatrix<Scalar> c;
    RowMatrix<Scalar> dcols;
    for (Index n = 0; n < xs.n; ++n) {
      const auto go = gout.item(n);
      if (gw) {
        typename Tensor<Scalar>::MatrixMap dw(t.grad(wi).data(), ws.n, ws.c * k * k);
        if (is_pointwise(k, opt)) {
          dw.noalias() += go * xv.item(n).transpose();
        } else {
          im2col(xv.data() + n * xs.item(), xs.c, xs.h, xs.w, k, opt, oh, ow, c);
          dw.noalias() += go * c.transpose();
        }
      }
      if (gx) {
        if (is_pointwise(k, opt)) {
          t.grad(xi).item(n).noalias() += wm.transpose() * go;
        } else {
          dcols.noalias() = wm.transpose() * go;
          col2im_add(dcols, xs.c, xs.h, xs.w, k, opt, oh, ow, t.grad(xi).data() + n * xs.item());
        }
      }
      if (bi && t.requires_grad(*bi)) {
        Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>> db(t.grad(*bi).data(), ws.n);
        db += go.rowwise().sum();
      }
    }
  };
  if (bi) return tape.record(std::move(out), {xi, wi, *bi}, backward);
  return tape.record(std::move(out), ids, backward);
}

template <typename Scalar>
Var<Scalar> linear(const Var<Scalar>& x, const Var<Scalar>& weight, const Var<Scalar>& bias) {
  Tape<Scalar>& tape = *x.tape();
  const Shape xs = x.shape();
  const Shape ws = weight.shape();
  if (ws.c != xs.item() || ws.h != 1 || ws.w != 1 || bias.shape() != Shape{1, ws.n, 1, 1}) {
    throw std::invalid_argument("linear: weight " + to_string(ws) + " incompatible with input " +
                                to_string(xs));
  }
  using ConstMap = typename Tensor<Scalar>::ConstMatrixMap;
  using Map = typename Tensor<Scalar>::MatrixMap;
  const ConstMap xm(x.value().data(), xs.n, xs.item());
  const ConstMap wm(weight.value().data(), ws.n, ws.c);
  const ConstMap bm(bias.value().data(), 1, ws.n);
  Tensor<Scalar> out({xs.n, ws.n, 1, 1});
  Map om(out.data(), xs.n, ws.n);
  om.noalias() = xm * wm.transpose();
  om.rowwise() += bm.row(0);

  const std::size_t xi = x.id(), wi = weight.id(), bi = bias.id();
  return tape.record(std::move(out), {xi, wi, bi}, [=](Tape<Scalar>& t, std::size_t self) {
    const ConstMap go(t.grad(self).data(), xs.n, ws.n);
    if (t.requires_grad(xi)) {
      Map(t.grad(xi).data(), xs.n, xs.item()).noalias() +=
          go * ConstMap(t.value(wi).data(), ws.n, ws.c);
    }
    if (t.requires_grad(wi)) {
      Map(t.grad(wi).data(), ws.n, ws.c).noalias() +=
          go.transpose() * ConstMap(t.value(xi).data(), xs.n, xs.item());
    }
    if (t.requires_grad(bi)) {
      Map(t.grad(bi).data(), 1, ws.n) += go.colwise().sum();
    }
  });
}

template <typename Scalar>
Var<Scalar> leaky_relu(const Var<Scalar>& x, Scalar slope) {
  const auto& xv = x.value().array();
  Tensor<Scalar> out(x.shape(), (xv > Scalar(0)).select(xv, slope * xv));
  const std::size_t xi = x.id();
  return x.tape()->record(std::move(out), {xi}, [=](Tape<Scalar>& t, std::size_t self) {
    const auto& in = t.value(xi).array();
    const auto& g = t.grad(self).array();
    t.grad(xi).array() += (in > Scalar(0)).select(g, slope * g);
  });
}

template <typename Scalar>
Var<Scalar> sigmoid(const Var<Scalar>& x) {
  Tensor<Scalar> out(x.shape(), Scalar(1) / (Scalar(1) + (-x.value().array()).exp()));
  const std::size_t xi = x.id();
  return x.tape()->record(std::move(out), {xi}, [=](Tape<Scalar>& t, std::size_t self) {
    const auto& s = t.value(self).array();
    t.grad(xi).array() += t.grad(self).array() * s * (Scalar(1) - s);
  });
}

template <typename Scalar>
Var<Scalar> instance_norm(const Var<Scalar>& x, Scalar eps) {
  const Shape s = x.shape();
  Tensor<Scalar> out(s);
  Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic> inv_std(s.c, s.n);
  for (Index n = 0; n < s.n; ++n) {
    const auto in = x.value().item(n);
    auto o = out.item(n);
    for (Index c = 0; c < s.c; ++c) {
      const Scalar mean = in.row(c).mean();
      const Scalar var = (in.row(c).array() - mean).square().mean();
      inv_std(c, n) = Scalar(1) / std::sqrt(var + eps);
      o.row(c) = (in.row(c).array() - mean) * inv_std(c, n);
    }
  }
  const std::size_t xi = x.id();
  return x.tape()->record(std::move(out), {xi}, [=](Tape<Scalar>& t, std::size_t self) {
    const Tensor<Scalar>& y = t.value(self);
    const Tensor<Scalar>& g = t.grad(self);
    Tensor<Scalar>& gx = t.grad(xi);
    for (Index n = 0; n < s.n; ++n)
      for (Index c = 0; c < s.c; ++c) {
        const auto yr = y.item(n).row(c).array();
        const auto gr = g.item(n).row(c).array();
        const Scalar mg = gr.mean();
        const Scalar mgy = (gr * yr).mean();
        gx.item(n).row(c).array() += inv_std(c, n) * (gr - mg - yr * mgy);
      }
  });
}

template <typename Scalar>
Var<Scalar> upsample_nearest(const Var<Scalar>& x, Index factor) {
  const Shape s = x.shape();
  const Shape os{s.n, s.c, s.h * factor, s.w * factor};
  Tensor<Scalar> out(os);
  const Tensor<Scalar>& xv = x.value();
  for (Index n = 0; n < s.n; ++n)
    for (Index c = 0; c < s.c; ++c)
      for (Index y = 0; y < os.h; ++y)
        for (Index xx = 0; xx < os.w; ++xx) out(n, c, y, xx) = xv(n, c, y / factor, xx / factor);
  const std::size_t xi = x.id();
  return x.tape()->record(std::move(out), {xi}, [=](Tape<Scalar>& t, std::size_t self) {
    const Tensor<Scalar>& g = t.grad(self);
    Tensor<Scalar>& gx = t.grad(xi);
    for (Index n = 0; n < s.n; ++n)
      for (Index c = 0; c < s.c; ++c)
        for (Index y = 0; y < os.h; ++y)
          for (Index xx = 0; xx < os.w; ++xx) gx(n, c, y / factor, xx / factor) += g(n, c, y, xx);
  });
}

template <typename Scalar>
Var<Scalar> concat_channels(const Var<Scalar>& a, const Var<Scalar>& b) {
  const Index ca = a.shape().c;
  const Index cb = b.shape().c;
  const Index batch = a.shape().n;
  const std::size_t ai = a.id(), bi = b.id();
  return a.tape()->record(damgan::concat_channels(a.value(), b.value()), {ai, bi},
                          [=](Tape<Scalar>& t, std::size_t self) {
                            const Tensor<Scalar>& g = t.grad(self);
                            for (Index n = 0; n < batch; ++n) {
                              if (t.requires_grad(ai)) t.grad(ai).item(n) += g.item(n).topRows(ca);
                              if (t.requires_grad(bi)) t.grad(bi).item(n) += g.item(n).bottomRows(cb);
                            }
                          });
}

template <typename Scalar>
Var<Scalar> add(const Var<Scalar>& a, const Var<Scalar>& b) {
  require_same_shape(a.shape(), b.shape(), "add");
  Tensor<Scalar> out(a.shape(), a.value().array() + b.value().array());
  const std::size_t ai = a.id(), bi = b.id();
  return a.tape()->record(std::move(out), {ai, bi}, [=](Tape<Scalar>& t, std::size_t self) {
    if (t.requires_grad(ai)) t.grad(ai).array() += t.grad(self).array();
    if (t.requires_grad(bi)) t.grad(bi).array() += t.grad(self).array();
  });
}

template <typename Scalar>
Var<Scalar> mul(const Var<Scalar>& a, const Var<Scalar>& b) {
  require_same_shape(a.shape(), b.shape(), "mul");
  Tensor<Scalar> out(a.shape(), a.value().array() * b.value().array());
  const std::size_t ai = a.id(), bi = b.id();
  return a.tape()->record(std::move(out), {ai, bi}, [=](Tape<Scalar>& t, std::size_t self) {
    if (t.requires_grad(ai)) t.grad(ai).array() += t.grad(self).array() * t.value(bi).array();
    if (t.requires_grad(bi)) t.grad(bi).array() += t.grad(self).array() * t.value(ai).array();
  });
}

template <typename Scalar>
Var<Scalar> scale(const Var<Scalar>& x, Scalar s) {
  Tensor<Scalar> out(x.shape(), x.value().array() * s);
  const std::size_t xi = x.id();
  return x.tape()->record(std::move(out), {xi}, [=](Tape<Scalar>& t, std::size_t self) {
    t.grad(xi).array() += s * t.grad(self).array();
  });
}

template <typename Scalar>
Var<Scalar> mul_channel_broadcast(const Var<Scalar>& features, const Var<Scalar>& map) {
  const Shape fs = features.shape();
  const Shape ms = map.shape();
  if (ms.c != 1 || ms.n != fs.n || ms.h != fs.h || ms.w != fs.w) {
    throw std::invalid_argument("mul_channel_broadcast: map " + to_string(ms) +
                                " does not match features " + to_string(fs));
  }
  Tensor<Scalar> out(fs);
  for (Index n = 0; n < fs.n; ++n) {
    out.item(n) = features.value().item(n).array().rowwise() * map.value().item(n).row(0).array();
  }
  const std::size_t fi = features.id(), mi = map.id();
  return features.tape()->record(std::move(out), {fi, mi}, [=](Tape<Scalar>& t, std::size_t self) {
    const Tensor<Scalar>& g = t.grad(self);
    for (Index n = 0; n < fs.n; ++n) {
      if (t.requires_grad(fi)) {
        t.grad(fi).item(n).array() += g.item(n).array().rowwise() * t.value(mi).item(n).row(0).array();
      }
      if (t.requires_grad(mi)) {
        t.grad(mi).item(n).row(0).array() +=
            (g.item(n).array() * t.value(fi).item(n).array()).colwise().sum();
      }
    }
  });
}

template <typename Scalar>
Var<Scalar> l1_mean(const Var<Scalar>& a, const Var<Scalar>& b) {
  require_same_shape(a.shape(), b.shape(), "l1_mean");
  const Scalar count = Scalar(a.value().size());
  Tensor<Scalar> out({1, 1, 1, 1}, (a.value().array() - b.value().array()).abs().sum() / count);
  const std::size_t ai = a.id(), bi = b.id();
  return a.tape()->record(std::move(out), {ai, bi}, [=](Tape<Scalar>& t, std::size_t self) {
    const Scalar g = t.grad(self)[0] / count;
    const auto sign = (t.value(ai).array() - t.value(bi).array()).sign();
    if (t.requires_grad(ai)) t.grad(ai).array() += g * sign;
    if (t.requires_grad(bi)) t.grad(bi).array() -= g * sign;
  });
}

template <typename Scalar>
Var<Scalar> neg_mean_log(const Var<Scalar>& x, Scalar eps) {
  const Scalar count = Scalar(x.value().size());
  const auto clamped = x.value().array().max(eps).min(Scalar(1) - eps);
  Tensor<Scalar> out({1, 1, 1, 1}, -clamped.log().sum() / count);
  const std::size_t xi = x.id();
  return x.tape()->record(std::move(out), {xi}, [=](Tape<Scalar>& t, std::size_t self) {
    const Scalar g = t.grad(self)[0] / count;
    const auto& v = t.value(xi).array();
    const auto inside = (v >= eps) && (v <= Scalar(1) - eps);
    t.grad(xi).array() += inside.select(-g / v, Scalar(0));
  });
}

template <typename Scalar>
Var<Scalar> neg_mean_log1m(const Var<Scalar>& x, Scalar eps) {
  const Scalar count = Scalar(x.value().size());
  const auto clamped = x.value().array().max(eps).min(Scalar(1) - eps);
  Tensor<Scalar> out({1, 1, 1, 1}, -(Scalar(1) - clamped).log().sum() / count);
  const std::size_t xi = x.id();
  return x.tape()->record(std::move(out), {xi}, [=](Tape<Scalar>& t, std::size_t self) {
    const Scalar g = t.grad(self)[0] / count;
    const auto& v = t.value(xi).array();
    const auto inside = (v >= eps) && (v <= Scalar(1) - eps);
    t.grad(xi).array() += inside.select(g / (Scalar(1) - v), Scalar(0));
  });
}

#define DAMGAN_INSTANTIATE_AD(S)                                                              \
  template class Tape<S>;                                                                     \
  template Var<S> conv2d(const Var<S>&, const Var<S>&, const std::optional<Var<S>>&,          \
                         const ConvOptions&);                                                 \
  template Var<S> linear(const Var<S>&, const Var<S>&, const Var<S>&);                        \
  template Var<S> leaky_relu(const Var<S>&, S);                                               \
  template Var<S> sigmoid(const Var<S>&);                                                     \
  template Var<S> instance_norm(const Var<S>&, S);                                            \
  template Var<S> upsample_nearest(const Var<S>&, Index);                                     \
  template Var<S> concat_channels(const Var<S>&, const Var<S>&);                              \
  template Var<S> add(const Var<S>&, const Var<S>&);                                          \
  template Var<S> mul(const Var<S>&, const Var<S>&);                                          \
  template Var<S> scale(const Var<S>&, S);                                                    \
  template Var<S> mul_channel_broadcast(const Var<S>&, const Var<S>&);                        \
  template Var<S> l1_mean(const Var<S>&, const Var<S>&);                                      \
  template Var<S> neg_mean_log(const Var<S>&, S);                                             \
  template Var<S> neg_mean_log1m(const Var<S>&, S);

DAMGAN_INSTANTIATE_AD(float)
DAMGAN_INSTANTIATE_AD(double)

}  // namespace damgan::ad

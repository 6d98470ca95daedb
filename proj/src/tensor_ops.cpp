#include <Eigen/Core>

#include <algorithm>
#include <cmath>

#include "ssr/tensor.hpp"

namespace ssr::ad {
namespace {

using RMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const RMat>;
using Map = Eigen::Map<RMat>;

// Products run on Eigen-owned copies. Eigen peels vectorized loops by the
// runtime address of its operands, so working in place on std::vector
// storage would make the rounding depend on where the allocator put it.
void add_into(std::span<double> dst, const RMat& m) {
  const double* src = m.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

using Data = std::shared_ptr<const std::vector<double>>;

Data share(const Tensor& t) { return t.storage(); }

[[noreturn]] void mismatch(std::string_view op, const Shape& a, const Shape& b) {
  throw AdError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " +
                shape_str(b));
}

bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  return std::equal(small.begin(), small.end(), big.end() - small.size());
}

// Output shape of a broadcasting binary op.
Shape broadcast_shape(std::string_view op, const Shape& a, const Shape& b) {
  if (a == b) return a;
  if (is_suffix(b, a)) return a;
  if (is_suffix(a, b)) return b;
  mismatch(op, a, b);
}

template <class Fwd, class DA, class DB>
Tensor binary(std::string_view op, const Tensor& a, const Tensor& b, Fwd fwd,
              DA da, DB db) {
  Shape out_shape = broadcast_shape(op, a.shape(), b.shape());
  const std::size_t n = numel(out_shape);
  const std::size_t na = a.size(), nb = b.size();
  std::vector<double> out(n);
  const auto& av = a.vec();
  const auto& bv = b.vec();
  for (std::size_t i = 0; i < n; ++i) out[i] = fwd(av[i % na], bv[i % nb]);
  if (!a.tracked() && !b.tracked()) return Tensor(std::move(out_shape), std::move(out));

  Data ad = share(a), bd = share(b);
  return Tape::record(
      op, {a, b}, Tensor(std::move(out_shape), std::move(out)),
      [ad, bd, n, na, nb, da, db](std::span<const double> g, GradSinks& in) {
        const auto& av = *ad;
        const auto& bv = *bd;
        if (!in[0].empty()) {
          for (std::size_t i = 0; i < n; ++i)
            in[0][i % na] += g[i] * da(av[i % na], bv[i % nb]);
        }
        if (!in[1].empty()) {
          for (std::size_t i = 0; i < n; ++i)
            in[1][i % nb] += g[i] * db(av[i % na], bv[i % nb]);
        }
      });
}

// Elementwise unary op; dfx receives (x, y) where y = f(x).
template <class F, class DF>
Tensor unary(std::string_view op, const Tensor& x, F f, DF dfx) {
  const std::size_t n = x.size();
  std::vector<double> out(n);
  const auto& xv = x.vec();
  for (std::size_t i = 0; i < n; ++i) out[i] = f(xv[i]);
  if (!x.tracked()) return Tensor(x.shape(), std::move(out));
  Data xd = share(x);
  auto yd = std::make_shared<const std::vector<double>>(out);
  return Tape::record(op, {x}, Tensor(x.shape(), std::move(out)),
                      [xd, yd, dfx](std::span<const double> g, GradSinks& in) {
                        for (std::size_t i = 0; i < g.size(); ++i)
                          in[0][i] += g[i] * dfx((*xd)[i], (*yd)[i]);
                      });
}

double guard_den(double b) {
  if (std::abs(b) >= kDivGuard) return b;
  return b < 0 ? -kDivGuard : kDivGuard;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double, double y) { return y; }, [](double x, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary(
      "div", a, b, [](double x, double y) { return x / guard_den(y); },
      [](double, double y) { return 1.0 / guard_den(y); },
      [](double x, double y) {
        if (std::abs(y) < kDivGuard) return 0.0;
        return -x / (y * y);
      });
}

Tensor neg(const Tensor& x) {
  return unary(
      "neg", x, [](double v) { return -v; }, [](double, double) { return -1.0; });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    mismatch("matmul", a.shape(), b.shape());
  }
  const auto m = static_cast<Eigen::Index>(a.dim(0));
  const auto k = static_cast<Eigen::Index>(a.dim(1));
  const auto n = static_cast<Eigen::Index>(b.dim(1));
  const RMat c = RMat(MapC(a.vec().data(), m, k)) * RMat(MapC(b.vec().data(), k, n));
  Tensor result({a.dim(0), b.dim(1)}, std::vector<double>(c.data(), c.data() + c.size()));
  if (!a.tracked() && !b.tracked()) return result;
  Data ad = share(a), bd = share(b);
  return Tape::record("matmul", {a, b}, std::move(result),
                      [ad, bd, m, k, n](std::span<const double> g, GradSinks& in) {
                        const RMat G = MapC(g.data(), m, n);
                        if (!in[0].empty()) add_into(in[0], G * RMat(MapC(bd->data(), k, n)).transpose());
                        if (!in[1].empty()) add_into(in[1], RMat(MapC(ad->data(), m, k)).transpose() * G);
                      });
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.values()) s += v;
  return Tape::record("sum", {x}, Tensor::scalar(s),
                      [](std::span<const double> g, GradSinks& in) {
                        for (auto& v : in[0]) v += g[0];
                      });
}

Tensor mean(const Tensor& x) {
  const double n = static_cast<double>(x.size());
  double s = 0.0;
  for (double v : x.values()) s += v;
  return Tape::record("mean", {x}, Tensor::scalar(s / n),
                      [n](std::span<const double> g, GradSinks& in) {
                        for (auto& v : in[0]) v += g[0] / n;
                      });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      "sigmoid", x,
      [](double v) {
        if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor relu(const Tensor& x) {
  return unary(
      "relu", x, [](double v) { return v <= 0 ? 0.0 : v; },  // NaN passes through
      [](double v, double) { return v > 0 ? 1.0 : 0.0; });
}

Tensor tanh(const Tensor& x) {
  return unary(
      "tanh", x, [](double v) { return std::tanh(v); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor log(const Tensor& x) {
  return unary(
      "log", x, [](double v) { return std::log(std::max(v, kLogGuard)); },
      [](double v, double) { return v < kLogGuard ? 0.0 : 1.0 / v; });
}

Tensor exp(const Tensor& x) {
  return unary(
      "exp", x, [](double v) { return std::exp(v); },
      [](double, double y) { return y; });
}

Tensor pow(const Tensor& x, double p) {
  return unary(
      "pow", x, [p](double v) { return std::pow(v, p); },
      [p](double v, double) { return p == 0.0 ? 0.0 : p * std::pow(v, p - 1.0); });
}

Tensor abs(const Tensor& x) {
  return unary(
      "abs", x, [](double v) { return std::abs(v); },
      [](double v, double) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); });
}

Tensor clamp(const Tensor& x, double lo, double hi) {
  if (lo > hi) throw AdError("clamp: lo > hi");
  return unary(
      "clamp", x, [lo, hi](double v) { return std::clamp(v, lo, hi); },
      [lo, hi](double v, double) { return (v < lo || v > hi) ? 0.0 : 1.0; });
}

// ---- convolution ----------------------------------------------------------

namespace {

struct ConvGeom {
  std::size_t n, c, h, w, o, k, s, p, ho, wo;
  std::size_t rows() const { return c * k * k; }
  std::size_t cols() const { return n * ho * wo; }
};

// col[(ci*k + kh)*k + kw][(ni*ho + oh)*wo + ow]
void im2col(const ConvGeom& g, const double* x, double* col) {
  const std::size_t cols = g.cols();
  for (std::size_t ci = 0; ci < g.c; ++ci)
    for (std::size_t kh = 0; kh < g.k; ++kh)
      for (std::size_t kw = 0; kw < g.k; ++kw) {
        double* row = col + ((ci * g.k + kh) * g.k + kw) * cols;
        for (std::size_t ni = 0; ni < g.n; ++ni) {
          const double* plane = x + (ni * g.c + ci) * g.h * g.w;
          for (std::size_t oh = 0; oh < g.ho; ++oh) {
            const auto ih = static_cast<std::ptrdiff_t>(oh * g.s + kh) -
                            static_cast<std::ptrdiff_t>(g.p);
            double* dst = row + (ni * g.ho + oh) * g.wo;
            if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.h)) {
              std::fill(dst, dst + g.wo, 0.0);
              continue;
            }
            const double* src = plane + static_cast<std::size_t>(ih) * g.w;
            for (std::size_t ow = 0; ow < g.wo; ++ow) {
              const auto iw = static_cast<std::ptrdiff_t>(ow * g.s + kw) -
                              static_cast<std::ptrdiff_t>(g.p);
              dst[ow] = (iw < 0 || iw >= static_cast<std::ptrdiff_t>(g.w))
                            ? 0.0
                            : src[iw];
            }
          }
        }
      }
}

void col2im(const ConvGeom& g, const double* col, double* dx) {
  const std::size_t cols = g.cols();
  for (std::size_t ci = 0; ci < g.c; ++ci)
    for (std::size_t kh = 0; kh < g.k; ++kh)
      for (std::size_t kw = 0; kw < g.k; ++kw) {
        const double* row = col + ((ci * g.k + kh) * g.k + kw) * cols;
        for (std::size_t ni = 0; ni < g.n; ++ni) {
          double* plane = dx + (ni * g.c + ci) * g.h * g.w;
          for (std::size_t oh = 0; oh < g.ho; ++oh) {
            const auto ih = static_cast<std::ptrdiff_t>(oh * g.s + kh) -
                            static_cast<std::ptrdiff_t>(g.p);
            if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.h)) continue;
            const double* src = row + (ni * g.ho + oh) * g.wo;
            double* dst = plane + static_cast<std::size_t>(ih) * g.w;
            for (std::size_t ow = 0; ow < g.wo; ++ow) {
              const auto iw = static_cast<std::ptrdiff_t>(ow * g.s + kw) -
                              static_cast<std::ptrdiff_t>(g.p);
              if (iw >= 0 && iw < static_cast<std::ptrdiff_t>(g.w)) dst[iw] += src[ow];
            }
          }
        }
      }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias,
              Conv2dOptions opt) {
  if (x.rank() != 4 || weight.rank() != 4 || bias.rank() != 1 ||
      x.dim(1) != weight.dim(1) || weight.dim(2) != weight.dim(3) ||
      bias.dim(0) != weight.dim(0)) {
    throw AdError("conv2d: shape mismatch x" + shape_str(x.shape()) + " w" +
                  shape_str(weight.shape()) + " b" + shape_str(bias.shape()));
  }
  if (opt.stride == 0) throw AdError("conv2d: stride must be positive");
  ConvGeom g{x.dim(0), x.dim(1), x.dim(2), x.dim(3), weight.dim(0), weight.dim(2),
             opt.stride, opt.padding, 0, 0};
  if (g.h + 2 * g.p < g.k || g.w + 2 * g.p < g.k) {
    throw AdError("conv2d: kernel larger than padded input " + shape_str(x.shape()));
  }
  g.ho = (g.h + 2 * g.p - g.k) / g.s + 1;
  g.wo = (g.w + 2 * g.p - g.k) / g.s + 1;

  // One sample at a time keeps the column buffer cache-resident; the output
  // block (O, Ho*Wo) of a sample is already in NCHW order.
  ConvGeom g1 = g;
  g1.n = 1;
  const auto rows = static_cast<Eigen::Index>(g1.rows());
  const auto cols = static_cast<Eigen::Index>(g1.cols());
  const auto oc = static_cast<Eigen::Index>(g.o);
  const std::size_t in_plane = g.c * g.h * g.w, out_plane = g.o * g.ho * g.wo;
  RMat col(rows, cols);
  const RMat w = MapC(weight.vec().data(), oc, rows);
  std::vector<double> out(g.n * out_plane);
  for (std::size_t ni = 0; ni < g.n; ++ni) {
    im2col(g1, x.vec().data() + ni * in_plane, col.data());
    const RMat o = w * col;
    double* dst = out.data() + ni * out_plane;
    for (Eigen::Index r = 0; r < oc; ++r)
      for (Eigen::Index c = 0; c < cols; ++c) dst[r * cols + c] = o(r, c) + bias[r];
  }
  Tensor result({g.n, g.o, g.ho, g.wo}, std::move(out));
  if (!x.tracked() && !weight.tracked() && !bias.tracked()) return result;

  Data wd = share(weight);
  Data xd = share(x);
  return Tape::record(
      "conv2d", {x, weight, bias}, std::move(result),
      [g1, n = g.n, wd, xd, rows, cols, oc, in_plane, out_plane](std::span<const double> grad,
                                                                 GradSinks& in) {
        RMat col(in[1].empty() ? 0 : rows, in[1].empty() ? 0 : cols);
        RMat dw = RMat::Zero(in[1].empty() ? 0 : oc, in[1].empty() ? 0 : rows);
        RMat dcol;
        const RMat w = in[0].empty() ? RMat() : RMat(MapC(wd->data(), oc, rows));
        for (std::size_t ni = 0; ni < n; ++ni) {
          const RMat gmat = MapC(grad.data() + ni * out_plane, oc, cols);
          if (!in[2].empty())
            for (Eigen::Index r = 0; r < oc; ++r) {
              double acc = 0.0;
              for (Eigen::Index c = 0; c < cols; ++c) acc += gmat(r, c);
              in[2][r] += acc;
            }
          if (!in[1].empty()) {
            im2col(g1, xd->data() + ni * in_plane, col.data());
            dw.noalias() += gmat * col.transpose();
          }
          if (!in[0].empty()) {
            dcol.noalias() = w.transpose() * gmat;
            col2im(g1, dcol.data(), in[0].data() + ni * in_plane);
          }
        }
        if (!in[1].empty()) add_into(in[1], dw);
      });
}

Tensor max_pool2d(const Tensor& x, std::size_t kernel, std::size_t stride) {
  if (x.rank() != 4 || kernel == 0 || stride == 0 || x.dim(2) < kernel ||
      x.dim(3) < kernel) {
    throw AdError("max_pool2d: bad input " + shape_str(x.shape()) + " for kernel " +
                  std::to_string(kernel));
  }
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t ho = (h - kernel) / stride + 1, wo = (w - kernel) / stride + 1;
  std::vector<double> out(n * c * ho * wo);
  auto arg = std::make_shared<std::vector<std::size_t>>(out.size());
  const auto& xv = x.vec();
  for (std::size_t plane = 0; plane < n * c; ++plane)
    for (std::size_t oh = 0; oh < ho; ++oh)
      for (std::size_t ow = 0; ow < wo; ++ow) {
        std::size_t best = plane * h * w + oh * stride * w + ow * stride;
        for (std::size_t kh = 0; kh < kernel; ++kh)
          for (std::size_t kw = 0; kw < kernel; ++kw) {
            const std::size_t idx = plane * h * w + (oh * stride + kh) * w + ow * stride + kw;
            if (xv[idx] > xv[best]) best = idx;
          }
        const std::size_t o = (plane * ho + oh) * wo + ow;
        out[o] = xv[best];
        (*arg)[o] = best;
      }
  return Tape::record("max_pool2d", {x}, Tensor({n, c, ho, wo}, std::move(out)),
                      [arg](std::span<const double> g, GradSinks& in) {
                        for (std::size_t i = 0; i < g.size(); ++i) in[0][(*arg)[i]] += g[i];
                      });
}

// ---- shape ops --------------------------------------------------------------

Tensor reshape(const Tensor& x, Shape shape) {
  if (numel(shape) != x.size()) mismatch("reshape", x.shape(), shape);
  return Tape::record("reshape", {x}, Tensor(std::move(shape), x.vec()),
                      [](std::span<const double> g, GradSinks& in) {
                        for (std::size_t i = 0; i < g.size(); ++i) in[0][i] += g[i];
                      });
}

Tensor concat(const std::vector<Tensor>& xs, std::size_t axis) {
  if (xs.empty()) throw AdError("concat: no inputs");
  const Shape& first = xs.front().shape();
  if (axis >= first.size()) throw AdError("concat: axis out of range for " + shape_str(first));
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const auto& t : xs) {
    Shape a = t.shape(), b = first;
    if (a.size() != b.size()) mismatch("concat", first, t.shape());
    a[axis] = b[axis] = 0;
    if (a != b) mismatch("concat", first, t.shape());
    out_shape[axis] += t.dim(axis);
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= first[i];
  for (std::size_t i = axis + 1; i < first.size(); ++i) inner *= first[i];

  std::vector<std::size_t> chunk;  // elements per outer index for each input
  for (const auto& t : xs) chunk.push_back(t.dim(axis) * inner);
  const std::size_t row = out_shape[axis] * inner;
  std::vector<double> out(outer * row);
  std::size_t off = 0;
  for (std::size_t j = 0; j < xs.size(); ++j) {
    const auto& v = xs[j].vec();
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(v.data() + o * chunk[j], chunk[j], out.data() + o * row + off);
    off += chunk[j];
  }
  return Tape::record("concat", xs, Tensor(std::move(out_shape), std::move(out)),
                      [chunk, outer, row](std::span<const double> g, GradSinks& in) {
                        std::size_t off = 0;
                        for (std::size_t j = 0; j < in.size(); ++j) {
                          if (!in[j].empty())
                            for (std::size_t o = 0; o < outer; ++o)
                              for (std::size_t i = 0; i < chunk[j]; ++i)
                                in[j][o * chunk[j] + i] += g[o * row + off + i];
                          off += chunk[j];
                        }
                      });
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end) {
  if (axis >= x.rank() || begin > end || end > x.dim(axis)) {
    throw AdError("slice: range [" + std::to_string(begin) + "," + std::to_string(end) +
                  ") on axis " + std::to_string(axis) + " invalid for " +
                  shape_str(x.shape()));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= x.dim(i);
  for (std::size_t i = axis + 1; i < x.rank(); ++i) inner *= x.dim(i);
  const std::size_t src_row = x.dim(axis) * inner;
  const std::size_t len = (end - begin) * inner;
  const std::size_t start = begin * inner;
  Shape out_shape = x.shape();
  out_shape[axis] = end - begin;
  std::vector<double> out(outer * len);
  for (std::size_t o = 0; o < outer; ++o)
    std::copy_n(x.vec().data() + o * src_row + start, len, out.data() + o * len);
  return Tape::record("slice", {x}, Tensor(std::move(out_shape), std::move(out)),
                      [outer, len, src_row, start](std::span<const double> g, GradSinks& in) {
                        for (std::size_t o = 0; o < outer; ++o)
                          for (std::size_t i = 0; i < len; ++i)
                            in[0][o * src_row + start + i] += g[o * len + i];
                      });
}

// ---- operators ---------------------------------------------------------------

Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
Tensor operator-(const Tensor& x) { return neg(x); }
Tensor operator+(const Tensor& a, double b) { return add(a, Tensor::scalar(b)); }
Tensor operator+(double a, const Tensor& b) { return add(Tensor::scalar(a), b); }
Tensor operator-(const Tensor& a, double b) { return sub(a, Tensor::scalar(b)); }
Tensor operator-(double a, const Tensor& b) { return sub(Tensor::scalar(a), b); }
Tensor operator*(const Tensor& a, double b) { return mul(a, Tensor::scalar(b)); }
Tensor operator*(double a, const Tensor& b) { return mul(Tensor::scalar(a), b); }
Tensor operator/(const Tensor& a, double b) { return div(a, Tensor::scalar(b)); }

}  // namespace ssr::ad

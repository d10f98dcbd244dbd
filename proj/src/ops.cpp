#include "fscn/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>

namespace fscn {
namespace {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;

void require_same_shape(const Shape& a, const Shape& b, const char* op) {
  if (a != b) {
    throw ShapeError(std::string(op) + ": shape mismatch " + a.str() + " vs " + b.str());
  }
}

struct ConvGeometry {
  int cin, h, w, k, stride, pad, oh, ow;
  int rows() const { return cin * k * k; }
  int cols() const { return oh * ow; }
  bool pointwise() const { return k == 1 && stride == 1 && pad == 0; }
};

// Output columns [lo, hi) whose input column ox*stride - pad + kx is in range.
struct ColumnRange {
  int lo, hi;
};

inline ColumnRange valid_columns(const ConvGeometry& geo, int kx) {
  const int offset = kx - geo.pad;
  const int lo = offset >= 0 ? 0 : (-offset + geo.stride - 1) / geo.stride;
  const int hi = offset > geo.w - 1 ? 0 : std::min(geo.ow, (geo.w - 1 - offset) / geo.stride + 1);
  return {lo, std::max(lo, hi)};
}

// col is (cin*k*k) x (oh*ow), row-major.
template <typename T>
void im2col(const T* image, const ConvGeometry& geo, T* col) {
  for (int ci = 0; ci < geo.cin; ++ci) {
    const T* plane = image + static_cast<std::size_t>(ci) * geo.h * geo.w;
    for (int ky = 0; ky < geo.k; ++ky) {
      for (int kx = 0; kx < geo.k; ++kx) {
        T* row = col + (static_cast<std::size_t>(ci * geo.k + ky) * geo.k + kx) * geo.cols();
        const auto [lo, hi] = valid_columns(geo, kx);
        const int offset = kx - geo.pad;
        for (int oy = 0; oy < geo.oh; ++oy) {
          const int iy = oy * geo.stride - geo.pad + ky;
          T* dst = row + static_cast<std::size_t>(oy) * geo.ow;
          if (iy < 0 || iy >= geo.h) {
            std::fill(dst, dst + geo.ow, T(0));
            continue;
          }
          const T* src = plane + static_cast<std::size_t>(iy) * geo.w + offset;
          std::fill(dst, dst + lo, T(0));
          if (geo.stride == 1) {
            std::copy(src + lo, src + hi, dst + lo);
          } else {
            for (int ox = lo; ox < hi; ++ox) dst[ox] = src[ox * geo.stride];
          }
          std::fill(dst + hi, dst + geo.ow, T(0));
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, const ConvGeometry& geo, T* image) {
  for (int ci = 0; ci < geo.cin; ++ci) {
    T* plane = image + static_cast<std::size_t>(ci) * geo.h * geo.w;
    for (int ky = 0; ky < geo.k; ++ky) {
      for (int kx = 0; kx < geo.k; ++kx) {
        const T* row = col + (static_cast<std::size_t>(ci * geo.k + ky) * geo.k + kx) * geo.cols();
        const auto [lo, hi] = valid_columns(geo, kx);
        const int offset = kx - geo.pad;
        for (int oy = 0; oy < geo.oh; ++oy) {
          const int iy = oy * geo.stride - geo.pad + ky;
          if (iy < 0 || iy >= geo.h) continue;
          const T* src = row + static_cast<std::size_t>(oy) * geo.ow;
          T* dst = plane + static_cast<std::size_t>(iy) * geo.w + offset;
          for (int ox = lo; ox < hi; ++ox) dst[ox * geo.stride] += src[ox];
        }
      }
    }
  }
}

// Per-axis bilinear taps for half-pixel centres with edge clamping.
struct Taps {
  std::vector<int> lo, hi;
  std::vector<double> frac;
};

Taps bilinear_taps(int in, int out) {
  Taps taps;
  taps.lo.resize(out);
  taps.hi.resize(out);
  taps.frac.resize(out);
  const double ratio = static_cast<double>(in) / out;
  for (int o = 0; o < out; ++o) {
    double src = (o + 0.5) * ratio - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in - 1));
    const int lo = std::min(static_cast<int>(std::floor(src)), in - 1);
    taps.lo[o] = lo;
    taps.hi[o] = std::min(lo + 1, in - 1);
    taps.frac[o] = taps.hi[o] == lo ? 0.0 : src - lo;
  }
  return taps;
}

// Mean written as base + mean of offsets so that constant inputs reproduce
// the constant bit-exactly.
template <typename T, typename Fn>
T stable_mean(int count, T base, Fn&& at) {
  T acc = 0;
  for (int i = 0; i < count; ++i) acc += at(i) - base;
  return base + acc / static_cast<T>(count);
}

}  // namespace

template <typename T>
Tensor<T> conv2d(Graph<T>& g, const Tensor<T>& input, const Tensor<T>& weight,
                 const Tensor<T>& bias, int stride, int pad) {
  const Shape& xs = input.shape();
  const Shape& ws = weight.shape();
  if (ws.c != xs.c) {
    throw ShapeError("conv2d: input has " + std::to_string(xs.c) + " channels, weight expects " +
                     std::to_string(ws.c));
  }
  if (ws.h != ws.w || ws.h % 2 == 0) {
    throw ShapeError("conv2d: kernel must be square with odd size, got " + ws.str());
  }
  if (stride < 1 || pad < 0) {
    throw std::invalid_argument("conv2d: stride must be >= 1 and pad >= 0");
  }
  const int k = ws.h;
  if (xs.h + 2 * pad < k || xs.w + 2 * pad < k) {
    throw ShapeError("conv2d: padded input " + xs.str() + " smaller than kernel");
  }
  if (bias.defined() && bias.numel() != static_cast<std::size_t>(ws.n)) {
    throw ShapeError("conv2d: bias has " + std::to_string(bias.numel()) + " entries for " +
                     std::to_string(ws.n) + " output channels");
  }

  const ConvGeometry geo{xs.c, xs.h, xs.w, k, stride, pad,
                         (xs.h + 2 * pad - k) / stride + 1, (xs.w + 2 * pad - k) / stride + 1};
  const int cout = ws.n;
  const bool taped = g.wants({&input, &weight, &bias});
  Tensor<T> out(Shape{xs.n, cout, geo.oh, geo.ow}, taped);

  const ConstMatrixMap<T> wmat(weight.ptr(), cout, geo.rows());
  std::vector<T> col(geo.pointwise() ? 0 : static_cast<std::size_t>(geo.rows()) * geo.cols());
  for (int n = 0; n < xs.n; ++n) {
    const T* image = input.ptr() + static_cast<std::size_t>(n) * xs.c * xs.h * xs.w;
    const T* col_ptr = image;
    if (!geo.pointwise()) {
      im2col(image, geo, col.data());
      col_ptr = col.data();
    }
    const ConstMatrixMap<T> cmat(col_ptr, geo.rows(), geo.cols());
    MatrixMap<T> omat(out.ptr() + static_cast<std::size_t>(n) * cout * geo.cols(), cout, geo.cols());
    omat.noalias() = wmat * cmat;
    if (bias.defined()) {
      for (int co = 0; co < cout; ++co) omat.row(co).array() += bias.data()[co];
    }
  }

  if (taped) {
    g.record("conv2d", [input = input, weight = weight, bias = bias, out, geo, cout]() mutable {
      if (!out.has_grad()) return;
      const Shape xs = input.shape();
      std::vector<T> col(static_cast<std::size_t>(geo.rows()) * geo.cols());
      const ConstMatrixMap<T> wmat(weight.ptr(), cout, geo.rows());
      for (int n = 0; n < xs.n; ++n) {
        const ConstMatrixMap<T> dy(out.grad().data() + static_cast<std::size_t>(n) * cout * geo.cols(),
                                   cout, geo.cols());
        const std::size_t image_offset = static_cast<std::size_t>(n) * xs.c * xs.h * xs.w;
        if (bias.defined() && bias.requires_grad()) {
          auto db = bias.grad();
          // Plain loop: Eigen's vectorised sum() peels by address alignment,
          // which would make the result depend on where the heap put dy.
          for (int co = 0; co < cout; ++co) {
            const T* row = dy.data() + static_cast<std::size_t>(co) * geo.cols();
            T acc = 0;
            for (int i = 0; i < geo.cols(); ++i) acc += row[i];
            db[co] += acc;
          }
        }
        if (weight.requires_grad()) {
          const T* col_ptr = input.ptr() + image_offset;
          if (!geo.pointwise()) {
            im2col(input.ptr() + image_offset, geo, col.data());
            col_ptr = col.data();
          }
          const ConstMatrixMap<T> cmat(col_ptr, geo.rows(), geo.cols());
          MatrixMap<T> dw(weight.grad().data(), cout, geo.rows());
          dw.noalias() += dy * cmat.transpose();
        }
        if (input.requires_grad()) {
          T* dx = input.grad().data() + image_offset;
          if (geo.pointwise()) {
            MatrixMap<T> dxm(dx, geo.rows(), geo.cols());
            dxm.noalias() += wmat.transpose() * dy;
          } else {
            MatrixMap<T> dcol(col.data(), geo.rows(), geo.cols());
            dcol.noalias() = wmat.transpose() * dy;
            col2im_add(col.data(), geo, dx);
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> activation(Graph<T>& g, const Tensor<T>& input, Activation kind) {
  const bool taped = g.wants({&input});
  Tensor<T> out(input.shape(), taped);
  auto x = input.data();
  auto y = out.data();
  if (kind == Activation::kRelu) {
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
    if (auto* signs = g.relu_trace()) {
      for (const T v : x) signs->push_back(v > T(0) ? 1 : 0);
    }
  } else {
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = T(1) / (T(1) + std::exp(-x[i]));
  }
  if (taped) {
    g.record(kind == Activation::kRelu ? "relu" : "sigmoid", [input = input, out, kind]() mutable {
      if (!out.has_grad()) return;
      auto dx = input.grad();
      auto dy = out.grad();
      auto x = input.data();
      auto y = out.data();
      if (kind == Activation::kRelu) {
        // Subgradient at exactly zero is taken as zero.
        for (std::size_t i = 0; i < dx.size(); ++i) {
          if (x[i] > T(0)) dx[i] += dy[i];
        }
      } else {
        for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[i] * y[i] * (T(1) - y[i]);
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> concat_channels(Graph<T>& g, std::span<const Tensor<T>> parts) {
  if (parts.empty()) throw ShapeError("concat_channels: no parts");
  const Shape& first = parts.front().shape();
  int channels = 0;
  bool taped = false;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.n != first.n || s.h != first.h || s.w != first.w) {
      throw ShapeError("concat_channels: part " + s.str() + " incompatible with " + first.str());
    }
    channels += s.c;
    taped = taped || g.wants({&p});
  }
  Tensor<T> out(Shape{first.n, channels, first.h, first.w}, taped);
  const std::size_t plane = first.plane();
  for (int n = 0; n < first.n; ++n) {
    T* dst = out.ptr() + static_cast<std::size_t>(n) * channels * plane;
    for (const auto& p : parts) {
      const std::size_t block = static_cast<std::size_t>(p.shape().c) * plane;
      const T* src = p.ptr() + n * block;
      std::copy(src, src + block, dst);
      dst += block;
    }
  }
  if (taped) {
    std::vector<Tensor<T>> sources(parts.begin(), parts.end());
    g.record("concat_channels", [sources, out, channels, plane]() mutable {
      if (!out.has_grad()) return;
      const int batch = out.shape().n;
      const T* dy = out.grad().data();
      for (int n = 0; n < batch; ++n) {
        const T* src = dy + static_cast<std::size_t>(n) * channels * plane;
        for (auto& p : sources) {
          const std::size_t block = static_cast<std::size_t>(p.shape().c) * plane;
          if (p.requires_grad()) {
            T* dx = p.grad().data() + n * block;
            for (std::size_t i = 0; i < block; ++i) dx[i] += src[i];
          }
          src += block;
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> slice_channels(Graph<T>& g, const Tensor<T>& input, int begin, int count) {
  const Shape& s = input.shape();
  if (begin < 0 || count < 0 || begin + count > s.c) {
    throw ShapeError("slice_channels: range [" + std::to_string(begin) + "," +
                     std::to_string(begin + count) + ") outside " + s.str());
  }
  const bool taped = g.wants({&input});
  Tensor<T> out(Shape{s.n, count, s.h, s.w}, taped);
  const std::size_t plane = s.plane();
  for (int n = 0; n < s.n; ++n) {
    const T* src = input.ptr() + (static_cast<std::size_t>(n) * s.c + begin) * plane;
    std::copy(src, src + count * plane, out.ptr() + static_cast<std::size_t>(n) * count * plane);
  }
  if (taped) {
    g.record("slice_channels", [input = input, out, begin, count, plane]() mutable {
      if (!out.has_grad()) return;
      const Shape s = input.shape();
      auto dx = input.grad();
      auto dy = out.grad();
      for (int n = 0; n < s.n; ++n) {
        T* dst = dx.data() + (static_cast<std::size_t>(n) * s.c + begin) * plane;
        const T* src = dy.data() + static_cast<std::size_t>(n) * count * plane;
        for (std::size_t i = 0; i < count * plane; ++i) dst[i] += src[i];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> resample(Graph<T>& g, const Tensor<T>& input, int target_h, int target_w) {
  const Shape s = input.shape();
  if (target_h < 1 || target_w < 1) {
    throw ShapeError("resample: target extent must be >= 1");
  }
  const bool grow = target_h >= s.h && target_w >= s.w;
  const bool shrink = target_h <= s.h && target_w <= s.w;
  if (!grow && !shrink) {
    throw ShapeError("resample: mixed up/down scaling from " + s.str() + " to " +
                     std::to_string(target_h) + "x" + std::to_string(target_w));
  }
  const bool taped = g.wants({&input});
  Tensor<T> out(Shape{s.n, s.c, target_h, target_w}, taped);
  const int planes = s.n * s.c;

  if (grow) {
    const Taps ty = bilinear_taps(s.h, target_h);
    const Taps tx = bilinear_taps(s.w, target_w);
    for (int p = 0; p < planes; ++p) {
      const T* src = input.ptr() + p * s.plane();
      T* dst = out.ptr() + p * out.shape().plane();
      for (int y = 0; y < target_h; ++y) {
        const T* r0 = src + ty.lo[y] * s.w;
        const T* r1 = src + ty.hi[y] * s.w;
        const T fy = static_cast<T>(ty.frac[y]);
        for (int x = 0; x < target_w; ++x) {
          const T fx = static_cast<T>(tx.frac[x]);
          const T top = r0[tx.lo[x]] + fx * (r0[tx.hi[x]] - r0[tx.lo[x]]);
          const T bottom = r1[tx.lo[x]] + fx * (r1[tx.hi[x]] - r1[tx.lo[x]]);
          dst[y * target_w + x] = top + fy * (bottom - top);
        }
      }
    }
    if (taped) {
      g.record("resample_bilinear", [input = input, out, ty, tx, planes]() mutable {
        if (!out.has_grad()) return;
        const Shape s = input.shape();
        const Shape os = out.shape();
        auto dx = input.grad();
        auto dy = out.grad();
        for (int p = 0; p < planes; ++p) {
          T* dsrc = dx.data() + p * s.plane();
          const T* ddst = dy.data() + p * os.plane();
          for (int y = 0; y < os.h; ++y) {
            const T fy = static_cast<T>(ty.frac[y]);
            for (int x = 0; x < os.w; ++x) {
              const T fx = static_cast<T>(tx.frac[x]);
              const T d = ddst[y * os.w + x];
              dsrc[ty.lo[y] * s.w + tx.lo[x]] += d * (T(1) - fx) * (T(1) - fy);
              dsrc[ty.lo[y] * s.w + tx.hi[x]] += d * fx * (T(1) - fy);
              dsrc[ty.hi[y] * s.w + tx.lo[x]] += d * (T(1) - fx) * fy;
              dsrc[ty.hi[y] * s.w + tx.hi[x]] += d * fx * fy;
            }
          }
        }
      });
    }
    return out;
  }

  if (s.h % target_h != 0 || s.w % target_w != 0) {
    throw ShapeError("resample: non-integer downscale factor from " + s.str() + " to " +
                     std::to_string(target_h) + "x" + std::to_string(target_w));
  }
  const int fh = s.h / target_h;
  const int fw = s.w / target_w;
  for (int p = 0; p < planes; ++p) {
    const T* src = input.ptr() + p * s.plane();
    T* dst = out.ptr() + p * out.shape().plane();
    for (int y = 0; y < target_h; ++y) {
      for (int x = 0; x < target_w; ++x) {
        const T* corner = src + (y * fh) * s.w + x * fw;
        dst[y * target_w + x] = stable_mean<T>(fh * fw, corner[0], [&](int i) {
          return corner[(i / fw) * s.w + i % fw];
        });
      }
    }
  }
  if (taped) {
    g.record("resample_avgpool", [input = input, out, fh, fw, planes]() mutable {
      if (!out.has_grad()) return;
      const Shape s = input.shape();
      const Shape os = out.shape();
      auto dx = input.grad();
      auto dy = out.grad();
      const T inv = T(1) / static_cast<T>(fh * fw);
      for (int p = 0; p < planes; ++p) {
        T* dsrc = dx.data() + p * s.plane();
        const T* ddst = dy.data() + p * os.plane();
        for (int y = 0; y < s.h; ++y) {
          for (int x = 0; x < s.w; ++x) {
            dsrc[y * s.w + x] += ddst[(y / fh) * os.w + x / fw] * inv;
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> global_avg_pool(Graph<T>& g, const Tensor<T>& input) {
  const Shape s = input.shape();
  if (s.h < 1 || s.w < 1) throw ShapeError("global_avg_pool: empty spatial extent");
  const bool taped = g.wants({&input});
  Tensor<T> out(Shape{s.n, s.c, 1, 1}, taped);
  const int area = static_cast<int>(s.plane());
  for (int p = 0; p < s.n * s.c; ++p) {
    const T* src = input.ptr() + p * s.plane();
    out.data()[p] = stable_mean<T>(area, src[0], [src](int i) { return src[i]; });
  }
  if (taped) {
    g.record("global_avg_pool", [input = input, out, area]() mutable {
      if (!out.has_grad()) return;
      auto dx = input.grad();
      auto dy = out.grad();
      const T inv = T(1) / static_cast<T>(area);
      for (std::size_t p = 0; p < dy.size(); ++p) {
        T* dst = dx.data() + p * area;
        for (int i = 0; i < area; ++i) dst[i] += dy[p] * inv;
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> scale_channels(Graph<T>& g, const Tensor<T>& input, const Tensor<T>& gates) {
  const Shape s = input.shape();
  const Shape gs = gates.shape();
  if (gs != Shape{s.n, s.c, 1, 1}) {
    throw ShapeError("scale_channels: gates " + gs.str() + " do not match input " + s.str());
  }
  const bool taped = g.wants({&input, &gates});
  Tensor<T> out(s, taped);
  const std::size_t plane = s.plane();
  for (int p = 0; p < s.n * s.c; ++p) {
    const T gate = gates.data()[p];
    const T* src = input.ptr() + p * plane;
    T* dst = out.ptr() + p * plane;
    for (std::size_t i = 0; i < plane; ++i) dst[i] = src[i] * gate;
  }
  if (taped) {
    g.record("scale_channels", [input = input, gates = gates, out, plane]() mutable {
      if (!out.has_grad()) return;
      auto dy = out.grad();
      const std::size_t planes = gates.numel();
      for (std::size_t p = 0; p < planes; ++p) {
        const T* d = dy.data() + p * plane;
        const T* x = input.ptr() + p * plane;
        if (input.requires_grad()) {
          T* dx = input.grad().data() + p * plane;
          const T gate = gates.data()[p];
          for (std::size_t i = 0; i < plane; ++i) dx[i] += d[i] * gate;
        }
        if (gates.requires_grad()) {
          T acc = 0;
          for (std::size_t i = 0; i < plane; ++i) acc += d[i] * x[i];
          gates.grad()[p] += acc;
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> scalar_mul(Graph<T>& g, const Tensor<T>& input, const Tensor<T>& a) {
  if (a.numel() != 1) throw ShapeError("scalar_mul: factor must be a scalar, got " + a.shape().str());
  const bool taped = g.wants({&input, &a});
  Tensor<T> out(input.shape(), taped);
  const T factor = a.item();
  auto x = input.data();
  auto y = out.data();
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = factor * x[i];
  if (taped) {
    g.record("scalar_mul", [input = input, a = a, out]() mutable {
      if (!out.has_grad()) return;
      auto dy = out.grad();
      auto x = input.data();
      if (input.requires_grad()) {
        auto dx = input.grad();
        const T factor = a.item();
        for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += factor * dy[i];
      }
      if (a.requires_grad()) {
        T acc = 0;
        for (std::size_t i = 0; i < x.size(); ++i) acc += dy[i] * x[i];
        a.grad()[0] += acc;
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> scale(Graph<T>& g, const Tensor<T>& input, T factor) {
  const bool taped = g.wants({&input});
  Tensor<T> out(input.shape(), taped);
  auto x = input.data();
  auto y = out.data();
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = factor * x[i];
  if (taped) {
    g.record("scale", [input = input, out, factor]() mutable {
      if (!out.has_grad()) return;
      auto dx = input.grad();
      auto dy = out.grad();
      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += factor * dy[i];
    });
  }
  return out;
}

template <typename T>
Tensor<T> add(Graph<T>& g, const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "add");
  const bool taped = g.wants({&a, &b});
  Tensor<T> out(a.shape(), taped);
  for (std::size_t i = 0; i < out.numel(); ++i) out.data()[i] = a.data()[i] + b.data()[i];
  if (taped) {
    g.record("add", [a = a, b = b, out]() mutable {
      if (!out.has_grad()) return;
      auto dy = out.grad();
      for (Tensor<T>* t : {&a, &b}) {
        if (!t->requires_grad()) continue;
        auto dx = t->grad();
        for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[i];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> mul(Graph<T>& g, const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "mul");
  const bool taped = g.wants({&a, &b});
  Tensor<T> out(a.shape(), taped);
  for (std::size_t i = 0; i < out.numel(); ++i) out.data()[i] = a.data()[i] * b.data()[i];
  if (taped) {
    g.record("mul", [a = a, b = b, out]() mutable {
      if (!out.has_grad()) return;
      auto dy = out.grad();
      // a and b may alias (x * x); each side accumulates into the shared grad.
      if (a.requires_grad()) {
        auto da = a.grad();
        for (std::size_t i = 0; i < da.size(); ++i) da[i] += dy[i] * b.data()[i];
      }
      if (b.requires_grad()) {
        auto db = b.grad();
        for (std::size_t i = 0; i < db.size(); ++i) db[i] += dy[i] * a.data()[i];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> sum(Graph<T>& g, const Tensor<T>& input) {
  const bool taped = g.wants({&input});
  T acc = 0;
  for (T v : input.data()) acc += v;
  Tensor<T> out(Shape{1, 1, 1, 1}, std::vector<T>{acc}, taped);
  if (taped) {
    g.record("sum", [input = input, out]() mutable {
      if (!out.has_grad()) return;
      const T d = out.grad()[0];
      for (T& v : input.grad()) v += d;
    });
  }
  return out;
}

#define FSCN_INSTANTIATE_OPS(T)                                                                  \
  template Tensor<T> conv2d(Graph<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int, \
                            int);                                                                \
  template Tensor<T> activation(Graph<T>&, const Tensor<T>&, Activation);                        \
  template Tensor<T> concat_channels(Graph<T>&, std::span<const Tensor<T>>);                     \
  template Tensor<T> slice_channels(Graph<T>&, const Tensor<T>&, int, int);                      \
  template Tensor<T> resample(Graph<T>&, const Tensor<T>&, int, int);                            \
  template Tensor<T> global_avg_pool(Graph<T>&, const Tensor<T>&);                               \
  template Tensor<T> scale_channels(Graph<T>&, const Tensor<T>&, const Tensor<T>&);              \
  template Tensor<T> scalar_mul(Graph<T>&, const Tensor<T>&, const Tensor<T>&);                  \
  template Tensor<T> scale(Graph<T>&, const Tensor<T>&, T);                                      \
  template Tensor<T> add(Graph<T>&, const Tensor<T>&, const Tensor<T>&);                         \
  template Tensor<T> mul(Graph<T>&, const Tensor<T>&, const Tensor<T>&);                         \
  template Tensor<T> sum(Graph<T>&, const Tensor<T>&);

FSCN_INSTANTIATE_OPS(float)
FSCN_INSTANTIATE_OPS(double)

}  // namespace fscn

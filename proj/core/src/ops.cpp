#include "poseref/ops.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <stdexcept>

namespace poseref {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

void require(bool ok, const std::string& message) {
  if (!ok) throw std::invalid_argument(message);
}

void check_finite(const char* op, const Tensor& t) {
  if (!checked_mode()) return;
  for (double v : t.values())
    if (!std::isfinite(v))
      throw std::domain_error(std::string(op) + ": non-finite input in checked mode");
}

bool should_record(std::initializer_list<const Tensor*> inputs) {
  if (!grad_enabled()) return false;
  for (const Tensor* t : inputs)
    if (t->tracked()) return true;
  return false;
}

void attach(Tensor& out, const char* op, std::initializer_list<const Tensor*> inputs,
            std::function<void(const TensorImpl&)> backprop) {
  auto node = std::make_unique<TapeNode>();
  node->op = op;
  for (const Tensor* t : inputs) node->inputs.push_back(t->impl_ptr());
  node->backprop = std::move(backprop);
  out.impl()->node = std::move(node);
}

// ---------------------------------------------------------------------------
// broadcasting machinery

struct Bcast {
  std::vector<std::size_t> ext;     // output extents
  std::vector<std::size_t> sa, sb;  // per-axis strides into a and b (0 = stretched)
  Shape out_shape;
  std::size_t total = 1;
  bool same_shape = false;
};

Bcast make_bcast(const char* op, const Shape& a, const Shape& b) {
  Bcast bc;
  const int ra = static_cast<int>(a.size());
  const int rb = static_cast<int>(b.size());
  const int r = std::max(ra, rb);
  bc.ext.resize(r);
  bc.sa.assign(r, 0);
  bc.sb.assign(r, 0);
  bc.out_shape.resize(r);
  for (int i = r - 1; i >= 0; --i) {
    const int da = i - (r - ra) >= 0 ? a[i - (r - ra)] : 1;
    const int db = i - (r - rb) >= 0 ? b[i - (r - rb)] : 1;
    require(da == db || da == 1 || db == 1,
            std::string(op) + ": shapes " + shape_str(a) + " and " + shape_str(b) +
                " do not broadcast");
    bc.ext[i] = static_cast<std::size_t>(std::max(da, db));
    bc.out_shape[i] = std::max(da, db);
  }
  std::size_t stride = 1;
  for (int i = r - 1; i >= 0; --i) {
    const int da = i - (r - ra) >= 0 ? a[i - (r - ra)] : 1;
    if (da != 1) bc.sa[i] = stride;
    stride *= static_cast<std::size_t>(da == 1 ? 1 : da);
  }
  stride = 1;
  for (int i = r - 1; i >= 0; --i) {
    const int db = i - (r - rb) >= 0 ? b[i - (r - rb)] : 1;
    if (db != 1) bc.sb[i] = stride;
    stride *= static_cast<std::size_t>(db == 1 ? 1 : db);
  }
  for (std::size_t e : bc.ext) bc.total *= e;
  bc.same_shape = (a == b);
  return bc;
}

template <class F>
void bcast_loop(const Bcast& bc, F&& f) {
  const int r = static_cast<int>(bc.ext.size());
  if (r == 0) {
    f(std::size_t{0}, std::size_t{0}, std::size_t{0});
    return;
  }
  std::vector<std::size_t> idx(r, 0);
  std::size_t oa = 0, ob = 0;
  for (std::size_t o = 0; o < bc.total; ++o) {
    f(o, oa, ob);
    for (int ax = r - 1; ax >= 0; --ax) {
      ++idx[ax];
      oa += bc.sa[ax];
      ob += bc.sb[ax];
      if (idx[ax] < bc.ext[ax]) break;
      oa -= bc.sa[ax] * bc.ext[ax];
      ob -= bc.sb[ax] * bc.ext[ax];
      idx[ax] = 0;
    }
  }
}

template <class FwdF, class DaF, class DbF>
Tensor ew_binary(const char* op, const Tensor& a, const Tensor& b, FwdF f, DaF dfa,
                 DbF dfb) {
  check_finite(op, a);
  check_finite(op, b);
  const Bcast bc = make_bcast(op, a.shape(), b.shape());
  Tensor out = make_tensor(bc.out_shape);
  const double* pa = a.data();
  const double* pb = b.data();
  double* po = out.data();
  if (bc.same_shape) {
    for (std::size_t i = 0; i < bc.total; ++i) po[i] = f(pa[i], pb[i]);
  } else {
    bcast_loop(bc, [&](std::size_t o, std::size_t ia, std::size_t ib) {
      po[o] = f(pa[ia], pb[ib]);
    });
  }
  if (should_record({&a, &b})) {
    auto ai = a.impl_ptr();
    auto bi = b.impl_ptr();
    const bool need_a = a.tracked();
    const bool need_b = b.tracked();
    attach(out, op, {&a, &b}, [=](const TensorImpl& o) {
      const double* g = o.grad.data();
      const double* xa = ai->data.data();
      const double* xb = bi->data.data();
      double* ga = need_a ? ai->grad_buffer().data() : nullptr;
      double* gb = need_b ? bi->grad_buffer().data() : nullptr;
      if (bc.same_shape) {
        for (std::size_t i = 0; i < bc.total; ++i) {
          if (ga) ga[i] += dfa(g[i], xa[i], xb[i]);
          if (gb) gb[i] += dfb(g[i], xa[i], xb[i]);
        }
      } else {
        bcast_loop(bc, [&](std::size_t o2, std::size_t ia, std::size_t ib) {
          if (ga) ga[ia] += dfa(g[o2], xa[ia], xb[ib]);
          if (gb) gb[ib] += dfb(g[o2], xa[ia], xb[ib]);
        });
      }
    });
  }
  return out;
}

template <class FwdF, class DxF>
Tensor ew_unary(const char* op, const Tensor& x, FwdF f, DxF dfx) {
  check_finite(op, x);
  Tensor out = make_tensor(x.shape());
  const double* px = x.data();
  double* po = out.data();
  const std::size_t n = x.numel();
  for (std::size_t i = 0; i < n; ++i) po[i] = f(px[i]);
  if (should_record({&x})) {
    auto xi = x.impl_ptr();
    attach(out, op, {&x}, [=](const TensorImpl& o) {
      const double* g = o.grad.data();
      const double* xv = xi->data.data();
      const double* ov = o.data.data();
      double* gx = xi->grad_buffer().data();
      for (std::size_t i = 0; i < o.data.size(); ++i) gx[i] += dfx(g[i], xv[i], ov[i]);
    });
  }
  return out;
}

std::vector<int> normalize_axes(const char* op, const std::vector<int>& axes, int rank) {
  std::vector<int> out;
  if (axes.empty()) {
    out.resize(rank);
    std::iota(out.begin(), out.end(), 0);
    return out;
  }
  for (int a : axes) {
    if (a < 0) a += rank;
    require(a >= 0 && a < rank, std::string(op) + ": axis out of range");
    out.push_back(a);
  }
  std::sort(out.begin(), out.end());
  require(std::adjacent_find(out.begin(), out.end()) == out.end(),
          std::string(op) + ": duplicate axis");
  return out;
}

// Shared engine for sum/mean: forward accumulation plus a broadcast backward.
Tensor reduce_op(const char* op, const Tensor& x, const std::vector<int>& axes_in,
                 bool keepdims, bool take_mean) {
  check_finite(op, x);
  const Shape& xs = x.shape();
  const int rank = static_cast<int>(xs.size());
  const std::vector<int> axes = normalize_axes(op, axes_in, rank);

  std::vector<bool> reduced(rank, false);
  std::size_t count = 1;
  for (int a : axes) {
    reduced[a] = true;
    count *= static_cast<std::size_t>(xs[a]);
  }
  Shape out_shape;
  for (int i = 0; i < rank; ++i) {
    if (!reduced[i])
      out_shape.push_back(xs[i]);
    else if (keepdims)
      out_shape.push_back(1);
  }

  // Per input axis: stride into the output (0 when the axis is reduced away).
  std::vector<std::size_t> ostride(rank, 0);
  std::size_t stride = 1;
  for (int i = rank - 1; i >= 0; --i) {
    if (!reduced[i]) {
      ostride[i] = stride;
      stride *= static_cast<std::size_t>(xs[i]);
    }
  }

  Tensor out = make_tensor(out_shape);
  double* po = out.data();
  const double* px = x.data();
  const std::size_t n = x.numel();
  const double inv = take_mean ? 1.0 / static_cast<double>(count == 0 ? 1 : count) : 1.0;
  {
    std::vector<std::size_t> idx(rank, 0);
    std::size_t o = 0;
    for (std::size_t i = 0; i < n; ++i) {
      po[o] += px[i];
      for (int ax = rank - 1; ax >= 0; --ax) {
        ++idx[ax];
        o += ostride[ax];
        if (idx[ax] < static_cast<std::size_t>(xs[ax])) break;
        o -= ostride[ax] * static_cast<std::size_t>(xs[ax]);
        idx[ax] = 0;
      }
    }
  }
  if (take_mean)
    for (std::size_t i = 0; i < out.numel(); ++i) po[i] *= inv;

  if (should_record({&x})) {
    auto xi = x.impl_ptr();
    const Shape xshape = xs;
    attach(out, op, {&x}, [=](const TensorImpl& o) {
      const double* g = o.grad.data();
      double* gx = xi->grad_buffer().data();
      std::vector<std::size_t> idx(rank, 0);
      std::size_t off = 0;
      const std::size_t total = xi->data.size();
      for (std::size_t i = 0; i < total; ++i) {
        gx[i] += g[off] * inv;
        for (int ax = rank - 1; ax >= 0; --ax) {
          ++idx[ax];
          off += ostride[ax];
          if (idx[ax] < static_cast<std::size_t>(xshape[ax])) break;
          off -= ostride[ax] * static_cast<std::size_t>(xshape[ax]);
          idx[ax] = 0;
        }
      }
    });
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// elementwise

Tensor add(const Tensor& a, const Tensor& b) {
  return ew_binary(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double g, double, double) { return g; },
      [](double g, double, double) { return g; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return ew_binary(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double g, double, double) { return g; },
      [](double g, double, double) { return -g; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return ew_binary(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double g, double, double y) { return g * y; },
      [](double g, double x, double) { return g * x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return ew_binary(
      "div", a, b, [](double x, double y) { return x / y; },
      [](double g, double, double y) { return g / y; },
      [](double g, double x, double y) { return -g * x / (y * y); });
}

Tensor add(const Tensor& a, double b) {
  return ew_unary(
      "add_scalar", a, [b](double x) { return x + b; },
      [](double g, double, double) { return g; });
}

Tensor sub(const Tensor& a, double b) { return add(a, -b); }

Tensor sub(double a, const Tensor& b) {
  return ew_unary(
      "rsub_scalar", b, [a](double x) { return a - x; },
      [](double g, double, double) { return -g; });
}

Tensor mul(const Tensor& a, double b) {
  return ew_unary(
      "mul_scalar", a, [b](double x) { return x * b; },
      [b](double g, double, double) { return g * b; });
}

Tensor relu(const Tensor& x) {
  return ew_unary(
      "relu", x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double g, double v, double) { return v > 0.0 ? g : 0.0; });
}

Tensor abs(const Tensor& x) {
  return ew_unary(
      "abs", x, [](double v) { return std::fabs(v); },
      [](double g, double v, double) { return v > 0.0 ? g : (v < 0.0 ? -g : 0.0); });
}

Tensor sqrt(const Tensor& x) {
  return ew_unary(
      "sqrt", x, [](double v) { return std::sqrt(v); },
      [](double g, double, double o) { return o > 0.0 ? 0.5 * g / o : 0.0; });
}

Tensor square(const Tensor& x) {
  return ew_unary(
      "square", x, [](double v) { return v * v; },
      [](double g, double v, double) { return 2.0 * g * v; });
}

// ---------------------------------------------------------------------------
// matrix products

Tensor matmul(const Tensor& a, const Tensor& b) {
  check_finite("matmul", a);
  check_finite("matmul", b);
  require(a.rank() == 2 && b.rank() == 2,
          "matmul: expects rank-2 tensors, got " + shape_str(a.shape()) + " x " +
              shape_str(b.shape()));
  const int m = a.size(0), k = a.size(1), k2 = b.size(0), n = b.size(1);
  require(k == k2, "matmul: inner extents differ: " + shape_str(a.shape()) + " x " +
                       shape_str(b.shape()));
  Tensor out = make_tensor({m, n});
  CMapMat A(a.data(), m, k), B(b.data(), k, n);
  MapMat(out.data(), m, n).noalias() = A * B;
  if (should_record({&a, &b})) {
    auto ai = a.impl_ptr();
    auto bi = b.impl_ptr();
    const bool need_a = a.tracked();
    const bool need_b = b.tracked();
    attach(out, "matmul", {&a, &b}, [=](const TensorImpl& o) {
      CMapMat G(o.grad.data(), m, n);
      CMapMat A2(ai->data.data(), m, k), B2(bi->data.data(), k, n);
      if (need_a) MapMat(ai->grad_buffer().data(), m, k).noalias() += G * B2.transpose();
      if (need_b) MapMat(bi->grad_buffer().data(), k, n).noalias() += A2.transpose() * G;
    });
  }
  return out;
}

Tensor bmm(const Tensor& a, const Tensor& b) {
  check_finite("bmm", a);
  check_finite("bmm", b);
  require(a.rank() == 3 && b.rank() == 3,
          "bmm: expects rank-3 tensors, got " + shape_str(a.shape()) + " x " +
              shape_str(b.shape()));
  const int bt = a.size(0), m = a.size(1), k = a.size(2);
  require(b.size(0) == bt && b.size(1) == k,
          "bmm: incompatible shapes: " + shape_str(a.shape()) + " x " +
              shape_str(b.shape()));
  const int n = b.size(2);
  Tensor out = make_tensor({bt, m, n});
  for (int i = 0; i < bt; ++i) {
    CMapMat A(a.data() + static_cast<std::size_t>(i) * m * k, m, k);
    CMapMat B(b.data() + static_cast<std::size_t>(i) * k * n, k, n);
    MapMat(out.data() + static_cast<std::size_t>(i) * m * n, m, n).noalias() = A * B;
  }
  if (should_record({&a, &b})) {
    auto ai = a.impl_ptr();
    auto bi = b.impl_ptr();
    const bool need_a = a.tracked();
    const bool need_b = b.tracked();
    attach(out, "bmm", {&a, &b}, [=](const TensorImpl& o) {
      for (int i = 0; i < bt; ++i) {
        CMapMat G(o.grad.data() + static_cast<std::size_t>(i) * m * n, m, n);
        CMapMat A2(ai->data.data() + static_cast<std::size_t>(i) * m * k, m, k);
        CMapMat B2(bi->data.data() + static_cast<std::size_t>(i) * k * n, k, n);
        if (need_a)
          MapMat(ai->grad_buffer().data() + static_cast<std::size_t>(i) * m * k, m, k)
              .noalias() += G * B2.transpose();
        if (need_b)
          MapMat(bi->grad_buffer().data() + static_cast<std::size_t>(i) * k * n, k, n)
              .noalias() += A2.transpose() * G;
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// softmax and reductions

Tensor softmax(const Tensor& x, int axis) {
  check_finite("softmax", x);
  const int rank = x.rank();
  if (axis < 0) axis += rank;
  require(axis >= 0 && axis < rank, "softmax: axis out of range");
  const Shape& s = x.shape();
  const int dim = s[axis];
  require(dim > 0, "softmax: empty axis");
  std::size_t inner = 1, outer = 1;
  for (int i = axis + 1; i < rank; ++i) inner *= static_cast<std::size_t>(s[i]);
  for (int i = 0; i < axis; ++i) outer *= static_cast<std::size_t>(s[i]);

  Tensor out = make_tensor(s);
  const double* px = x.data();
  double* po = out.data();
  for (std::size_t ou = 0; ou < outer; ++ou) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = ou * static_cast<std::size_t>(dim) * inner + in;
      double mx = px[base];
      for (int j = 1; j < dim; ++j) mx = std::max(mx, px[base + j * inner]);
      double z = 0.0;
      for (int j = 0; j < dim; ++j) {
        const double e = std::exp(px[base + j * inner] - mx);
        po[base + j * inner] = e;
        z += e;
      }
      const double invz = 1.0 / z;
      for (int j = 0; j < dim; ++j) po[base + j * inner] *= invz;
    }
  }
  if (should_record({&x})) {
    auto xi = x.impl_ptr();
    attach(out, "softmax", {&x}, [=](const TensorImpl& o) {
      const double* g = o.grad.data();
      const double* y = o.data.data();
      double* gx = xi->grad_buffer().data();
      for (std::size_t ou = 0; ou < outer; ++ou) {
        for (std::size_t in = 0; in < inner; ++in) {
          const std::size_t base = ou * static_cast<std::size_t>(dim) * inner + in;
          double dot = 0.0;
          for (int j = 0; j < dim; ++j)
            dot += g[base + j * inner] * y[base + j * inner];
          for (int j = 0; j < dim; ++j) {
            const std::size_t p = base + j * inner;
            gx[p] += y[p] * (g[p] - dot);
          }
        }
      }
    });
  }
  return out;
}

Tensor sum(const Tensor& x, const std::vector<int>& axes, bool keepdims) {
  return reduce_op("sum", x, axes, keepdims, false);
}

Tensor mean(const Tensor& x, const std::vector<int>& axes, bool keepdims) {
  return reduce_op("mean", x, axes, keepdims, true);
}

// ---------------------------------------------------------------------------
// shape ops

Tensor reshape(const Tensor& x, const Shape& shape) {
  require(shape_numel(shape) == x.numel(),
          "reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  Tensor out = make_tensor(shape);
  out.values() = x.values();
  if (should_record({&x})) {
    auto xi = x.impl_ptr();
    attach(out, "reshape", {&x}, [=](const TensorImpl& o) {
      double* gx = xi->grad_buffer().data();
      const double* g = o.grad.data();
      for (std::size_t i = 0; i < o.data.size(); ++i) gx[i] += g[i];
    });
  }
  return out;
}

Tensor permute(const Tensor& x, const std::vector<int>& order) {
  const int rank = x.rank();
  require(static_cast<int>(order.size()) == rank, "permute: order rank mismatch");
  std::vector<bool> used(rank, false);
  for (int a : order) {
    require(a >= 0 && a < rank && !used[a], "permute: invalid axis order");
    used[a] = true;
  }
  const Shape& xs = x.shape();
  Shape os(rank);
  for (int i = 0; i < rank; ++i) os[i] = xs[order[i]];

  std::vector<std::size_t> xstride(rank, 1);
  for (int i = rank - 2; i >= 0; --i)
    xstride[i] = xstride[i + 1] * static_cast<std::size_t>(xs[i + 1]);
  // Stride into x for each *output* axis.
  std::vector<std::size_t> stride(rank);
  for (int i = 0; i < rank; ++i) stride[i] = xstride[order[i]];

  Tensor out = make_tensor(os);
  const double* px = x.data();
  double* po = out.data();
  const std::size_t n = x.numel();
  {
    std::vector<std::size_t> idx(rank, 0);
    std::size_t xoff = 0;
    for (std::size_t o = 0; o < n; ++o) {
      po[o] = px[xoff];
      for (int ax = rank - 1; ax >= 0; --ax) {
        ++idx[ax];
        xoff += stride[ax];
        if (idx[ax] < static_cast<std::size_t>(os[ax])) break;
        xoff -= stride[ax] * static_cast<std::size_t>(os[ax]);
        idx[ax] = 0;
      }
    }
  }
  if (should_record({&x})) {
    auto xi = x.impl_ptr();
    attach(out, "permute", {&x}, [=](const TensorImpl& o) {
      double* gx = xi->grad_buffer().data();
      const double* g = o.grad.data();
      std::vector<std::size_t> idx(rank, 0);
      std::size_t xoff = 0;
      for (std::size_t o2 = 0; o2 < o.data.size(); ++o2) {
        gx[xoff] += g[o2];
        for (int ax = rank - 1; ax >= 0; --ax) {
          ++idx[ax];
          xoff += stride[ax];
          if (idx[ax] < static_cast<std::size_t>(os[ax])) break;
          xoff -= stride[ax] * static_cast<std::size_t>(os[ax]);
          idx[ax] = 0;
        }
      }
    });
  }
  return out;
}

Tensor narrow(const Tensor& x, int axis, int start, int length) {
  const int rank = x.rank();
  if (axis < 0) axis += rank;
  require(axis >= 0 && axis < rank, "narrow: axis out of range");
  const Shape& xs = x.shape();
  require(start >= 0 && length >= 1 && start + length <= xs[axis],
          "narrow: slice out of range");
  Shape os = xs;
  os[axis] = length;
  std::size_t inner = 1, outer = 1;
  for (int i = axis + 1; i < rank; ++i) inner *= static_cast<std::size_t>(xs[i]);
  for (int i = 0; i < axis; ++i) outer *= static_cast<std::size_t>(xs[i]);
  const std::size_t xrow = static_cast<std::size_t>(xs[axis]) * inner;
  const std::size_t orow = static_cast<std::size_t>(length) * inner;

  Tensor out = make_tensor(os);
  const double* px = x.data();
  double* po = out.data();
  for (std::size_t o = 0; o < outer; ++o)
    std::memcpy(po + o * orow, px + o * xrow + static_cast<std::size_t>(start) * inner,
                orow * sizeof(double));
  if (should_record({&x})) {
    auto xi = x.impl_ptr();
    attach(out, "narrow", {&x}, [=](const TensorImpl& o) {
      double* gx = xi->grad_buffer().data();
      const double* g = o.grad.data();
      for (std::size_t ou = 0; ou < outer; ++ou) {
        double* dst = gx + ou * xrow + static_cast<std::size_t>(start) * inner;
        const double* src = g + ou * orow;
        for (std::size_t i = 0; i < orow; ++i) dst[i] += src[i];
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// batch norm (composed from primitives so the backward pass comes for free)

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  BatchNormStats& stats, bool training, double momentum, double eps) {
  require(x.rank() >= 2, "batch_norm: input must be at least rank 2");
  const int channels = x.size(1);
  require(static_cast<int>(gamma.numel()) == channels &&
              static_cast<int>(beta.numel()) == channels,
          "batch_norm: gamma/beta extent must match channel count");
  if (stats.mean.empty()) stats.mean.assign(channels, 0.0);
  if (stats.var.empty()) stats.var.assign(channels, 1.0);
  require(static_cast<int>(stats.mean.size()) == channels &&
              static_cast<int>(stats.var.size()) == channels,
          "batch_norm: running stats extent must match channel count");

  // Align per-channel vectors as (C,1,...,1) so they broadcast against (N,C,...).
  Shape cshape(static_cast<std::size_t>(x.rank()) - 1, 1);
  cshape[0] = channels;
  const Tensor g = reshape(gamma, cshape);
  const Tensor b = reshape(beta, cshape);

  std::vector<int> axes;
  for (int i = 0; i < x.rank(); ++i)
    if (i != 1) axes.push_back(i);

  if (training) {
    const Tensor mu = mean(x, axes, true);
    const Tensor xc = sub(x, mu);
    const Tensor var = mean(square(xc), axes, true);
    const Tensor xhat = div(xc, sqrt(add(var, eps)));
    // Fold batch statistics into the running estimates (biased variance, matching
    // what inference mode divides by).
    const Tensor mu_d = mu.detach();
    const Tensor var_d = var.detach();
    for (int c = 0; c < channels; ++c) {
      stats.mean[c] = (1.0 - momentum) * stats.mean[c] + momentum * mu_d.values()[c];
      stats.var[c] = (1.0 - momentum) * stats.var[c] + momentum * var_d.values()[c];
    }
    return add(mul(xhat, g), b);
  }

  Tensor rm = make_tensor(cshape);
  Tensor rs = make_tensor(cshape);
  for (int c = 0; c < channels; ++c) {
    rm.values()[c] = stats.mean[c];
    rs.values()[c] = 1.0 / std::sqrt(stats.var[c] + eps);
  }
  return add(mul(mul(sub(x, rm), rs), g), b);
}

// ---------------------------------------------------------------------------
// temporal convolution over (N,C,T,V), kernel (C_out,C_in,k_t), same padding

namespace {

// Xcol layout: row = c*kt + dt, column = (n*T + t)*V + v.
void im2col_time(const double* x, int N, int C, int T, int V, int kt, int pad,
                 double* xcol) {
  const std::size_t cols = static_cast<std::size_t>(N) * T * V;
  const std::size_t plane = static_cast<std::size_t>(T) * V;
  for (int c = 0; c < C; ++c) {
    for (int dt = 0; dt < kt; ++dt) {
      double* row = xcol + (static_cast<std::size_t>(c) * kt + dt) * cols;
      for (int n = 0; n < N; ++n) {
        const double* xc = x + (static_cast<std::size_t>(n) * C + c) * plane;
        for (int t = 0; t < T; ++t) {
          const int tt = t + dt - pad;
          double* dst = row + (static_cast<std::size_t>(n) * T + t) * V;
          if (tt < 0 || tt >= T) {
            std::memset(dst, 0, static_cast<std::size_t>(V) * sizeof(double));
          } else {
            std::memcpy(dst, xc + static_cast<std::size_t>(tt) * V,
                        static_cast<std::size_t>(V) * sizeof(double));
          }
        }
      }
    }
  }
}

}  // namespace

Tensor temporal_conv(const Tensor& x, const Tensor& kernel) {
  check_finite("temporal_conv", x);
  check_finite("temporal_conv", kernel);
  require(x.rank() == 4, "temporal_conv: input must be (N,C,T,V), got " +
                             shape_str(x.shape()));
  require(kernel.rank() == 3, "temporal_conv: kernel must be (C_out,C_in,k_t), got " +
                                  shape_str(kernel.shape()));
  const int N = x.size(0), C = x.size(1), T = x.size(2), V = x.size(3);
  const int Cout = kernel.size(0), Cin = kernel.size(1), kt = kernel.size(2);
  require(Cin == C, "temporal_conv: kernel input channels " + std::to_string(Cin) +
                        " do not match input channels " + std::to_string(C));
  require(kt >= 1 && kt <= 2 * T + 1, "temporal_conv: kernel width out of range");
  const int pad = (kt - 1) / 2;

  const std::size_t cols = static_cast<std::size_t>(N) * T * V;
  std::vector<double> xcol(static_cast<std::size_t>(C) * kt * cols);
  im2col_time(x.data(), N, C, T, V, kt, pad, xcol.data());

  Tensor out = make_tensor({N, Cout, T, V});
  // Y2d (Cout, N*T*V) lands in a scratch buffer because the output layout is
  // (N,Cout,T,V), not (Cout,N,T,V).
  std::vector<double> y2d(static_cast<std::size_t>(Cout) * cols);
  CMapMat K(kernel.data(), Cout, C * kt);
  CMapMat X(xcol.data(), C * kt, static_cast<int>(cols));
  MapMat(y2d.data(), Cout, static_cast<int>(cols)).noalias() = K * X;

  double* po = out.data();
  const std::size_t plane = static_cast<std::size_t>(T) * V;
  for (int n = 0; n < N; ++n)
    for (int co = 0; co < Cout; ++co) {
      const double* src = y2d.data() + static_cast<std::size_t>(co) * cols +
                          static_cast<std::size_t>(n) * plane;
      std::memcpy(po + (static_cast<std::size_t>(n) * Cout + co) * plane, src,
                  plane * sizeof(double));
    }

  if (should_record({&x, &kernel})) {
    auto xi = x.impl_ptr();
    auto ki = kernel.impl_ptr();
    const bool need_x = x.tracked();
    const bool need_k = kernel.tracked();
    attach(out, "temporal_conv", {&x, &kernel}, [=](const TensorImpl& o) {
      // Regroup the output grad as (Cout, N*T*V).
      std::vector<double> g2d(static_cast<std::size_t>(Cout) * cols);
      const double* g = o.grad.data();
      for (int n = 0; n < N; ++n)
        for (int co = 0; co < Cout; ++co)
          std::memcpy(g2d.data() + static_cast<std::size_t>(co) * cols +
                          static_cast<std::size_t>(n) * plane,
                      g + (static_cast<std::size_t>(n) * Cout + co) * plane,
                      plane * sizeof(double));
      CMapMat G(g2d.data(), Cout, static_cast<int>(cols));
      if (need_k) {
        std::vector<double> xcol2(static_cast<std::size_t>(C) * kt * cols);
        im2col_time(xi->data.data(), N, C, T, V, kt, pad, xcol2.data());
        CMapMat X2(xcol2.data(), C * kt, static_cast<int>(cols));
        MapMat(ki->grad_buffer().data(), Cout, C * kt).noalias() += G * X2.transpose();
      }
      if (need_x) {
        std::vector<double> gcol(static_cast<std::size_t>(C) * kt * cols);
        CMapMat K2(ki->data.data(), Cout, C * kt);
        MapMat(gcol.data(), C * kt, static_cast<int>(cols)).noalias() =
            K2.transpose() * G;
        double* gx = xi->grad_buffer().data();
        for (int c = 0; c < C; ++c)
          for (int dt = 0; dt < kt; ++dt) {
            const double* row =
                gcol.data() + (static_cast<std::size_t>(c) * kt + dt) * cols;
            for (int n = 0; n < N; ++n) {
              double* xg = gx + (static_cast<std::size_t>(n) * C + c) * plane;
              for (int t = 0; t < T; ++t) {
                const int tt = t + dt - pad;
                if (tt < 0 || tt >= T) continue;
                const double* src = row + (static_cast<std::size_t>(n) * T + t) * V;
                double* dst = xg + static_cast<std::size_t>(tt) * V;
                for (int v = 0; v < V; ++v) dst[v] += src[v];
              }
            }
          }
      }
    });
  }
  return out;
}

}  // namespace poseref

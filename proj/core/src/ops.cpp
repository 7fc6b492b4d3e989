#include "fgd/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace fgd {
namespace {

template <typename T>
Tape<T>& same_tape(const Var<T>& a, const Var<T>& b) {
  if (&a.tape() != &b.tape()) throw ContractError("operands recorded on different tapes");
  return a.tape();
}

void require_same_shape(const Shape& a, const Shape& b, const char* op) {
  if (a != b) throw ContractError(std::string(op) + ": shape mismatch " + to_string(a) + " vs " + to_string(b));
}

void require_rank(const Shape& s, std::size_t rank, const char* op) {
  if (s.size() != rank) {
    throw ContractError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " + to_string(s));
  }
}

template <typename T, typename F, typename D>
Var<T> unary(const Var<T>& x, F f, D dfdx) {
  Tape<T>& tape = x.tape();
  const Tensor<T>& xv = x.value();
  Tensor<T> out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
  const std::size_t xid = x.id();
  const std::size_t oid = tape.size();
  return tape.record(std::move(out), {xid}, [xid, oid, dfdx](Tape<T>& t, const Tensor<T>& g) {
    const Tensor<T>& xin = t.value(xid);
    const Tensor<T>& y = t.value(oid);
    Tensor<T>& gx = t.grad_buffer(xid);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * dfdx(xin[i], y[i]);
  });
}

// Row-major transpose of an [r, c] block into [c, r].
template <typename T>
void transpose_into(const T* src, std::size_t r, std::size_t c, T* dst) {
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) dst[j * r + i] = src[i * c + j];
}

struct ConvGeom {
  std::size_t B, C, H, W, O, K, stride, pad, Ho, Wo;
  std::size_t patch() const { return C * K * K; }
  std::size_t pixels() const { return Ho * Wo; }
};

// cols[(c*K + ki)*K + kj, b*P + oy*Wo + ox]
template <typename T>
void im2col(const ConvGeom& g, const T* x, std::vector<T>& cols) {
  const std::size_t P = g.pixels();
  const std::size_t ncol = g.B * P;
  cols.assign(g.patch() * ncol, T{0});
  for (std::size_t b = 0; b < g.B; ++b) {
    for (std::size_t c = 0; c < g.C; ++c) {
      const T* plane = x + (b * g.C + c) * g.H * g.W;
      for (std::size_t ki = 0; ki < g.K; ++ki) {
        for (std::size_t kj = 0; kj < g.K; ++kj) {
          T* row = cols.data() + ((c * g.K + ki) * g.K + kj) * ncol + b * P;
          for (std::size_t oy = 0; oy < g.Ho; ++oy) {
            const long iy = static_cast<long>(oy * g.stride + ki) - static_cast<long>(g.pad);
            if (iy < 0 || iy >= static_cast<long>(g.H)) continue;
            for (std::size_t ox = 0; ox < g.Wo; ++ox) {
              const long ix = static_cast<long>(ox * g.stride + kj) - static_cast<long>(g.pad);
              if (ix < 0 || ix >= static_cast<long>(g.W)) continue;
              row[oy * g.Wo + ox] = plane[iy * g.W + ix];
            }
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const ConvGeom& g, const std::vector<T>& cols, T* dx) {
  const std::size_t P = g.pixels();
  const std::size_t ncol = g.B * P;
  for (std::size_t b = 0; b < g.B; ++b) {
    for (std::size_t c = 0; c < g.C; ++c) {
      T* plane = dx + (b * g.C + c) * g.H * g.W;
      for (std::size_t ki = 0; ki < g.K; ++ki) {
        for (std::size_t kj = 0; kj < g.K; ++kj) {
          const T* row = cols.data() + ((c * g.K + ki) * g.K + kj) * ncol + b * P;
          for (std::size_t oy = 0; oy < g.Ho; ++oy) {
            const long iy = static_cast<long>(oy * g.stride + ki) - static_cast<long>(g.pad);
            if (iy < 0 || iy >= static_cast<long>(g.H)) continue;
            for (std::size_t ox = 0; ox < g.Wo; ++ox) {
              const long ix = static_cast<long>(ox * g.stride + kj) - static_cast<long>(g.pad);
              if (ix < 0 || ix >= static_cast<long>(g.W)) continue;
              plane[iy * g.W + ix] += row[oy * g.Wo + ox];
            }
          }
        }
      }
    }
  }
}

std::vector<std::size_t> strides_of(const Shape& s) {
  std::vector<std::size_t> st(s.size(), 1);
  for (std::size_t i = s.size(); i-- > 1;) st[i - 1] = st[i] * s[i];
  return st;
}

// Splits a shape around `axis` into (outer, extent, inner).
std::array<std::size_t, 3> split_axis(const Shape& s, std::size_t axis) {
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  return {outer, s[axis], inner};
}

}  // namespace

namespace detail {

template <typename T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c,
          bool accumulate) {
  if (!accumulate) std::fill(c, c + m * n, T{0});
  std::vector<T> bt;
  if (trans_b) {
    // b stored [n,k]; materialize [k,n] so the inner loop stays contiguous.
    bt.resize(k * n);
    transpose_into(b, n, k, bt.data());
    b = bt.data();
  }
  if (!trans_a) {
    for (std::size_t i = 0; i < m; ++i) {
      T* crow = c + i * n;
      const T* arow = a + i * k;
      for (std::size_t p = 0; p < k; ++p) {
        const T av = arow[p];
        if (av == T{0}) continue;
        const T* brow = b + p * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  } else {
    // a stored [k,m]
    for (std::size_t p = 0; p < k; ++p) {
      const T* acol = a + p * m;
      const T* brow = b + p * n;
      for (std::size_t i = 0; i < m; ++i) {
        const T av = acol[i];
        if (av == T{0}) continue;
        T* crow = c + i * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  }
}

}  // namespace detail

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  Tape<T>& tape = same_tape(a, b);
  require_same_shape(a.shape(), b.shape(), "add");
  Tensor<T> out = a.value();
  const Tensor<T>& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  const std::size_t ia = a.id(), ib = b.id();
  return tape.record(std::move(out), {ia, ib}, [ia, ib](Tape<T>& t, const Tensor<T>& g) {
    t.accumulate(ia, g);
    t.accumulate(ib, g);
  });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  Tape<T>& tape = same_tape(a, b);
  require_same_shape(a.shape(), b.shape(), "sub");
  Tensor<T> out = a.value();
  const Tensor<T>& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  const std::size_t ia = a.id(), ib = b.id();
  return tape.record(std::move(out), {ia, ib}, [ia, ib](Tape<T>& t, const Tensor<T>& g) {
    t.accumulate(ia, g);
    if (t.requires_grad(ib)) {
      Tensor<T>& gb = t.grad_buffer(ib);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  Tape<T>& tape = same_tape(a, b);
  require_same_shape(a.shape(), b.shape(), "mul");
  Tensor<T> out = a.value();
  const Tensor<T>& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  const std::size_t ia = a.id(), ib = b.id();
  return tape.record(std::move(out), {ia, ib}, [ia, ib](Tape<T>& t, const Tensor<T>& g) {
    const Tensor<T>& av = t.value(ia);
    const Tensor<T>& bv2 = t.value(ib);
    if (t.requires_grad(ia)) {
      Tensor<T>& ga = t.grad_buffer(ia);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv2[i];
    }
    if (t.requires_grad(ib)) {
      Tensor<T>& gb = t.grad_buffer(ib);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

template <typename T>
Var<T> scale(const Var<T>& a, T c) {
  Tensor<T> out = a.value();
  for (auto& v : out.storage()) v *= c;
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {ia}, [ia, c](Tape<T>& t, const Tensor<T>& g) {
    Tensor<T>& ga = t.grad_buffer(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += c * g[i];
  });
}

template <typename T>
Var<T> add_scalar(const Var<T>& a, T c) {
  Tensor<T> out = a.value();
  for (auto& v : out.storage()) v += c;
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {ia}, [ia](Tape<T>& t, const Tensor<T>& g) { t.accumulate(ia, g); });
}

template <typename T>
Var<T> add_rowwise(const Var<T>& x, const Var<T>& b) {
  Tape<T>& tape = same_tape(x, b);
  const std::size_t n = b.size();
  if (x.shape().back() != n || b.shape().size() != 1) {
    throw ContractError("add_rowwise: " + to_string(x.shape()) + " with bias " + to_string(b.shape()));
  }
  Tensor<T> out = x.value();
  const Tensor<T>& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i % n];
  const std::size_t ix = x.id(), ib = b.id();
  return tape.record(std::move(out), {ix, ib}, [ix, ib, n](Tape<T>& t, const Tensor<T>& g) {
    t.accumulate(ix, g);
    if (t.requires_grad(ib)) {
      Tensor<T>& gb = t.grad_buffer(ib);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i % n] += g[i];
    }
  });
}

template <typename T>
Var<T> mul_rowwise(const Var<T>& x, const Var<T>& v) {
  Tape<T>& tape = same_tape(x, v);
  const std::size_t n = v.size();
  if (x.shape().back() != n || v.shape().size() != 1) {
    throw ContractError("mul_rowwise: " + to_string(x.shape()) + " with " + to_string(v.shape()));
  }
  Tensor<T> out = x.value();
  const Tensor<T>& vv = v.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= vv[i % n];
  const std::size_t ix = x.id(), iv = v.id();
  return tape.record(std::move(out), {ix, iv}, [ix, iv, n](Tape<T>& t, const Tensor<T>& g) {
    const Tensor<T>& xv = t.value(ix);
    const Tensor<T>& vv2 = t.value(iv);
    if (t.requires_grad(ix)) {
      Tensor<T>& gx = t.grad_buffer(ix);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * vv2[i % n];
    }
    if (t.requires_grad(iv)) {
      Tensor<T>& gv = t.grad_buffer(iv);
      for (std::size_t i = 0; i < g.size(); ++i) gv[i % n] += g[i] * xv[i];
    }
  });
}

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  Tape<T>& tape = same_tape(a, b);
  require_rank(a.shape(), 2, "matmul");
  require_rank(b.shape(), 2, "matmul");
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k) throw ContractError("matmul: " + to_string(a.shape()) + " x " + to_string(b.shape()));
  Tensor<T> out({m, n});
  detail::gemm(false, false, m, n, k, a.value().data().data(), b.value().data().data(), out.data().data(), false);
  const std::size_t ia = a.id(), ib = b.id();
  return tape.record(std::move(out), {ia, ib}, [ia, ib, m, n, k](Tape<T>& t, const Tensor<T>& g) {
    if (t.requires_grad(ia)) {
      detail::gemm(false, true, m, k, n, g.data().data(), t.value(ib).data().data(),
                   t.grad_buffer(ia).data().data(), true);
    }
    if (t.requires_grad(ib)) {
      detail::gemm(true, false, k, n, m, t.value(ia).data().data(), g.data().data(),
                   t.grad_buffer(ib).data().data(), true);
    }
  });
}

template <typename T>
Var<T> matmul_nt(const Var<T>& a, const Var<T>& b) {
  Tape<T>& tape = same_tape(a, b);
  require_rank(a.shape(), 2, "matmul_nt");
  require_rank(b.shape(), 2, "matmul_nt");
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[0];
  if (b.shape()[1] != k) throw ContractError("matmul_nt: " + to_string(a.shape()) + " x " + to_string(b.shape()) + "^T");
  Tensor<T> out({m, n});
  detail::gemm(false, true, m, n, k, a.value().data().data(), b.value().data().data(), out.data().data(), false);
  const std::size_t ia = a.id(), ib = b.id();
  return tape.record(std::move(out), {ia, ib}, [ia, ib, m, n, k](Tape<T>& t, const Tensor<T>& g) {
    if (t.requires_grad(ia)) {
      // dA[m,k] = G[m,n] B[n,k]
      detail::gemm(false, false, m, k, n, g.data().data(), t.value(ib).data().data(),
                   t.grad_buffer(ia).data().data(), true);
    }
    if (t.requires_grad(ib)) {
      // dB[n,k] = G^T[n,m] A[m,k]
      detail::gemm(true, false, n, k, m, g.data().data(), t.value(ia).data().data(),
                   t.grad_buffer(ib).data().data(), true);
    }
  });
}

template <typename T>
Var<T> transpose(const Var<T>& a) {
  require_rank(a.shape(), 2, "transpose");
  const std::size_t r = a.shape()[0], c = a.shape()[1];
  Tensor<T> out({c, r});
  transpose_into(a.value().data().data(), r, c, out.data().data());
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {ia}, [ia, r, c](Tape<T>& t, const Tensor<T>& g) {
    Tensor<T>& ga = t.grad_buffer(ia);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += g[j * r + i];
  });
}

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& b, std::size_t stride, std::size_t padding) {
  Tape<T>& tape = same_tape(x, w);
  same_tape(x, b);
  require_rank(x.shape(), 4, "conv2d input");
  require_rank(w.shape(), 4, "conv2d weight");
  const Shape& xs = x.shape();
  const Shape& ws = w.shape();
  if (ws[1] != xs[1]) {
    throw ContractError("conv2d: expected " + std::to_string(ws[1]) + " input channels, got " + std::to_string(xs[1]) +
                        " (input " + to_string(xs) + ", weight " + to_string(ws) + ")");
  }
  if (ws[2] != ws[3]) throw ContractError("conv2d: kernel must be square, got " + to_string(ws));
  if (b.shape() != Shape{ws[0]}) throw ContractError("conv2d: bias shape " + to_string(b.shape()));
  if (stride == 0) throw ContractError("conv2d: stride must be positive");
  ConvGeom geo{xs[0], xs[1], xs[2], xs[3], ws[0], ws[2], stride, padding, 0, 0};
  const long span_h = static_cast<long>(geo.H + 2 * padding) - static_cast<long>(geo.K);
  const long span_w = static_cast<long>(geo.W + 2 * padding) - static_cast<long>(geo.K);
  if (span_h < 0 || span_w < 0) {
    throw ContractError("conv2d: kernel " + std::to_string(geo.K) + " larger than padded input " + to_string(xs));
  }
  geo.Ho = static_cast<std::size_t>(span_h) / stride + 1;
  geo.Wo = static_cast<std::size_t>(span_w) / stride + 1;

  std::vector<T> cols;
  im2col(geo, x.value().data().data(), cols);
  const std::size_t P = geo.pixels(), ncol = geo.B * P;
  std::vector<T> tmp(geo.O * ncol);
  detail::gemm(false, false, geo.O, ncol, geo.patch(), w.value().data().data(), cols.data(), tmp.data(), false);
  Tensor<T> out({geo.B, geo.O, geo.Ho, geo.Wo});
  const Tensor<T>& bv = b.value();
  for (std::size_t o = 0; o < geo.O; ++o)
    for (std::size_t bb = 0; bb < geo.B; ++bb) {
      const T* src = tmp.data() + o * ncol + bb * P;
      T* dst = out.data().data() + (bb * geo.O + o) * P;
      for (std::size_t p = 0; p < P; ++p) dst[p] = src[p] + bv[o];
    }

  const std::size_t ix = x.id(), iw = w.id(), ib = b.id();
  return tape.record(std::move(out), {ix, iw, ib}, [ix, iw, ib, geo](Tape<T>& t, const Tensor<T>& g) {
    const std::size_t P2 = geo.pixels(), ncol2 = geo.B * P2;
    std::vector<T> gmat(geo.O * ncol2);
    for (std::size_t o = 0; o < geo.O; ++o)
      for (std::size_t bb = 0; bb < geo.B; ++bb)
        std::copy_n(g.data().data() + (bb * geo.O + o) * P2, P2, gmat.data() + o * ncol2 + bb * P2);
    if (t.requires_grad(ib)) {
      Tensor<T>& gb = t.grad_buffer(ib);
      for (std::size_t o = 0; o < geo.O; ++o) {
        T s{0};
        for (std::size_t j = 0; j < ncol2; ++j) s += gmat[o * ncol2 + j];
        gb[o] += s;
      }
    }
    const bool need_w = t.requires_grad(iw), need_x = t.requires_grad(ix);
    if (need_w) {
      std::vector<T> cols2;
      im2col(geo, t.value(ix).data().data(), cols2);
      detail::gemm(false, true, geo.O, geo.patch(), ncol2, gmat.data(), cols2.data(), t.grad_buffer(iw).data().data(),
                   true);
    }
    if (need_x) {
      std::vector<T> dcols(geo.patch() * ncol2);
      detail::gemm(true, false, geo.patch(), ncol2, geo.O, t.value(iw).data().data(), gmat.data(), dcols.data(),
                   false);
      col2im(geo, dcols, t.grad_buffer(ix).data().data());
    }
  });
}

template <typename T>
Var<T> avg_pool2d(const Var<T>& x, std::size_t k) {
  require_rank(x.shape(), 4, "avg_pool2d");
  const Shape& s = x.shape();
  if (k == 0 || s[2] % k != 0 || s[3] % k != 0) {
    throw ContractError("avg_pool2d: " + to_string(s) + " not divisible by window " + std::to_string(k));
  }
  const std::size_t planes = s[0] * s[1], H = s[2], W = s[3], Ho = H / k, Wo = W / k;
  const T inv = T{1} / static_cast<T>(k * k);
  Tensor<T> out({s[0], s[1], Ho, Wo});
  const Tensor<T>& xv = x.value();
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t i = 0; i < H; ++i)
      for (std::size_t j = 0; j < W; ++j) out[(p * Ho + i / k) * Wo + j / k] += xv[(p * H + i) * W + j] * inv;
  const std::size_t ix = x.id();
  return x.tape().record(std::move(out), {ix}, [ix, planes, H, W, Ho, Wo, k, inv](Tape<T>& t, const Tensor<T>& g) {
    Tensor<T>& gx = t.grad_buffer(ix);
    for (std::size_t p = 0; p < planes; ++p)
      for (std::size_t i = 0; i < H; ++i)
        for (std::size_t j = 0; j < W; ++j) gx[(p * H + i) * W + j] += g[(p * Ho + i / k) * Wo + j / k] * inv;
  });
}

template <typename T>
Var<T> global_avg_pool(const Var<T>& x) {
  require_rank(x.shape(), 4, "global_avg_pool");
  const Shape& s = x.shape();
  const std::size_t planes = s[0] * s[1], P = s[2] * s[3];
  const T inv = T{1} / static_cast<T>(P);
  Tensor<T> out({s[0], s[1]});
  const Tensor<T>& xv = x.value();
  for (std::size_t p = 0; p < planes; ++p) {
    T acc{0};
    for (std::size_t i = 0; i < P; ++i) acc += xv[p * P + i];
    out[p] = acc * inv;
  }
  const std::size_t ix = x.id();
  return x.tape().record(std::move(out), {ix}, [ix, planes, P, inv](Tape<T>& t, const Tensor<T>& g) {
    Tensor<T>& gx = t.grad_buffer(ix);
    for (std::size_t p = 0; p < planes; ++p)
      for (std::size_t i = 0; i < P; ++i) gx[p * P + i] += g[p] * inv;
  });
}

template <typename T>
Var<T> tanh(const Var<T>& x) {
  return unary(x, [](T v) { return std::tanh(v); }, [](T, T y) { return T{1} - y * y; });
}

template <typename T>
Var<T> sigmoid(const Var<T>& x) {
  return unary(
      x,
      [](T v) {
        if (v >= T{0}) return T{1} / (T{1} + std::exp(-v));
        const T e = std::exp(v);
        return e / (T{1} + e);
      },
      [](T, T y) { return y * (T{1} - y); });
}

template <typename T>
Var<T> softplus(const Var<T>& x) {
  return unary(
      x, [](T v) { return std::max(v, T{0}) + std::log1p(std::exp(-std::abs(v))); },
      [](T v, T) {
        if (v >= T{0}) return T{1} / (T{1} + std::exp(-v));
        const T e = std::exp(v);
        return e / (T{1} + e);
      });
}

template <typename T>
Var<T> relu(const Var<T>& x) {
  return unary(x, [](T v) { return v > T{0} ? v : T{0}; }, [](T v, T) { return v > T{0} ? T{1} : T{0}; });
}

template <typename T>
Var<T> exp(const Var<T>& x) {
  return unary(x, [](T v) { return std::exp(v); }, [](T, T y) { return y; });
}

template <typename T>
Var<T> log(const Var<T>& x) {
  return unary(x, [](T v) { return std::log(v); }, [](T v, T) { return T{1} / v; });
}

template <typename T>
Var<T> sqrt(const Var<T>& x) {
  return unary(x, [](T v) { return std::sqrt(v); }, [](T, T y) { return y > T{0} ? T{0.5} / y : T{0}; });
}

template <typename T>
Var<T> softmax(const Var<T>& x) {
  const std::size_t n = x.shape().back();
  const std::size_t rows = x.size() / n;
  Tensor<T> out(x.shape());
  const Tensor<T>& xv = x.value();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = xv.data().data() + r * n;
    T* o = out.data().data() + r * n;
    const T mx = *std::max_element(in, in + n);
    T z{0};
    for (std::size_t j = 0; j < n; ++j) {
      o[j] = std::exp(in[j] - mx);
      z += o[j];
    }
    for (std::size_t j = 0; j < n; ++j) o[j] /= z;
  }
  const std::size_t ix = x.id();
  const std::size_t oid = x.tape().size();
  return x.tape().record(std::move(out), {ix}, [ix, oid, rows, n](Tape<T>& t, const Tensor<T>& g) {
    const Tensor<T>& y = t.value(oid);
    Tensor<T>& gx = t.grad_buffer(ix);
    for (std::size_t r = 0; r < rows; ++r) {
      const std::size_t off = r * n;
      T dot{0};
      for (std::size_t j = 0; j < n; ++j) dot += g[off + j] * y[off + j];
      for (std::size_t j = 0; j < n; ++j) gx[off + j] += y[off + j] * (g[off + j] - dot);
    }
  });
}

template <typename T>
Var<T> cross_entropy(const Var<T>& logits, std::size_t label) {
  const std::size_t k = logits.size();
  if (k < 2) throw ContractError("cross_entropy: need at least 2 classes, got " + std::to_string(k));
  if (label >= k) {
    throw ContractError("cross_entropy: label " + std::to_string(label) + " out of range [0," + std::to_string(k) + ")");
  }
  const Tensor<T>& lv = logits.value();
  const T mx = *std::max_element(lv.data().begin(), lv.data().end());
  T z{0};
  for (std::size_t j = 0; j < k; ++j) z += std::exp(lv[j] - mx);
  const T loss = std::log(z) + mx - lv[label];
  const std::size_t il = logits.id();
  return logits.tape().record(Tensor<T>::scalar(loss), {il}, [il, label, k](Tape<T>& t, const Tensor<T>& g) {
    const Tensor<T>& l = t.value(il);
    const T m = *std::max_element(l.data().begin(), l.data().end());
    T zz{0};
    for (std::size_t j = 0; j < k; ++j) zz += std::exp(l[j] - m);
    Tensor<T>& gl = t.grad_buffer(il);
    for (std::size_t j = 0; j < k; ++j) {
      const T p = std::exp(l[j] - m) / zz;
      gl[j] += g[0] * (p - (j == label ? T{1} : T{0}));
    }
  });
}

template <typename T>
Var<T> reshape(const Var<T>& x, Shape shape) {
  Tensor<T> out = x.value().reshaped(std::move(shape));
  const std::size_t ix = x.id();
  return x.tape().record(std::move(out), {ix}, [ix](Tape<T>& t, const Tensor<T>& g) {
    Tensor<T>& gx = t.grad_buffer(ix);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

template <typename T>
Var<T> permute(const Var<T>& x, const std::vector<std::size_t>& axes) {
  const Shape& s = x.shape();
  const std::size_t r = s.size();
  if (axes.size() != r) throw ContractError("permute: " + std::to_string(axes.size()) + " axes for " + to_string(s));
  std::vector<bool> seen(r, false);
  Shape os(r);
  for (std::size_t i = 0; i < r; ++i) {
    if (axes[i] >= r || seen[axes[i]]) throw ContractError("permute: invalid axis list for " + to_string(s));
    seen[axes[i]] = true;
    os[i] = s[axes[i]];
  }
  const auto in_strides = strides_of(s);
  // Input stride for each output axis.
  std::vector<std::size_t> src_stride(r);
  for (std::size_t i = 0; i < r; ++i) src_stride[i] = in_strides[axes[i]];
  const std::size_t n = x.size();
  std::vector<std::size_t> index(n);
  {
    std::vector<std::size_t> ctr(r, 0);
    std::size_t src = 0;
    for (std::size_t o = 0; o < n; ++o) {
      index[o] = src;
      for (std::size_t d = r; d-- > 0;) {
        ++ctr[d];
        src += src_stride[d];
        if (ctr[d] < os[d]) break;
        src -= src_stride[d] * os[d];
        ctr[d] = 0;
      }
    }
  }
  Tensor<T> out(os);
  const Tensor<T>& xv = x.value();
  for (std::size_t o = 0; o < n; ++o) out[o] = xv[index[o]];
  const std::size_t ix = x.id();
  return x.tape().record(std::move(out), {ix}, [ix, index = std::move(index)](Tape<T>& t, const Tensor<T>& g) {
    Tensor<T>& gx = t.grad_buffer(ix);
    for (std::size_t o = 0; o < index.size(); ++o) gx[index[o]] += g[o];
  });
}

template <typename T>
Var<T> concat(const std::vector<Var<T>>& parts, std::size_t axis) {
  if (parts.empty()) throw ContractError("concat: no operands");
  Tape<T>& tape = parts.front().tape();
  const Shape& s0 = parts.front().shape();
  if (axis >= s0.size()) throw ContractError("concat: axis " + std::to_string(axis) + " for " + to_string(s0));
  Shape os = s0;
  os[axis] = 0;
  for (const auto& p : parts) {
    same_tape(parts.front(), p);
    const Shape& s = p.shape();
    if (s.size() != s0.size()) throw ContractError("concat: rank mismatch " + to_string(s0) + " vs " + to_string(s));
    for (std::size_t d = 0; d < s.size(); ++d) {
      if (d != axis && s[d] != s0[d]) throw ContractError("concat: shape mismatch " + to_string(s0) + " vs " + to_string(s));
    }
    os[axis] += s[axis];
  }
  const auto [outer, total, inner] = split_axis(os, axis);
  Tensor<T> out(os);
  std::vector<std::size_t> ids, extents;
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t e = p.shape()[axis];
    const Tensor<T>& pv = p.value();
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(pv.data().data() + o * e * inner, e * inner, out.data().data() + (o * total + offset) * inner);
    offset += e;
    ids.push_back(p.id());
    extents.push_back(e);
  }
  return tape.record(std::move(out), ids,
                     [ids, extents, outer = outer, total = total, inner = inner](Tape<T>& t, const Tensor<T>& g) {
                       std::size_t off = 0;
                       for (std::size_t k = 0; k < ids.size(); ++k) {
                         const std::size_t e = extents[k];
                         if (t.requires_grad(ids[k])) {
                           Tensor<T>& gp = t.grad_buffer(ids[k]);
                           for (std::size_t o = 0; o < outer; ++o)
                             for (std::size_t i = 0; i < e * inner; ++i)
                               gp[o * e * inner + i] += g[(o * total + off) * inner + i];
                         }
                         off += e;
                       }
                     });
}

template <typename T>
Var<T> slice(const Var<T>& x, std::size_t axis, std::size_t begin, std::size_t end) {
  const Shape& s = x.shape();
  if (axis >= s.size() || begin >= end || end > s[axis]) {
    throw ContractError("slice: [" + std::to_string(begin) + "," + std::to_string(end) + ") on axis " +
                        std::to_string(axis) + " of " + to_string(s));
  }
  const auto [outer, total, inner] = split_axis(s, axis);
  const std::size_t e = end - begin;
  Shape os = s;
  os[axis] = e;
  Tensor<T> out(os);
  const Tensor<T>& xv = x.value();
  for (std::size_t o = 0; o < outer; ++o)
    std::copy_n(xv.data().data() + (o * total + begin) * inner, e * inner, out.data().data() + o * e * inner);
  const std::size_t ix = x.id();
  return x.tape().record(std::move(out), {ix},
                         [ix, outer = outer, total = total, inner = inner, begin, e](Tape<T>& t, const Tensor<T>& g) {
                           Tensor<T>& gx = t.grad_buffer(ix);
                           for (std::size_t o = 0; o < outer; ++o)
                             for (std::size_t i = 0; i < e * inner; ++i)
                               gx[(o * total + begin) * inner + i] += g[o * e * inner + i];
                         });
}

template <typename T>
Var<T> sum(const Var<T>& x) {
  const Tensor<T>& xv = x.value();
  const T s = std::accumulate(xv.data().begin(), xv.data().end(), T{0});
  const std::size_t ix = x.id();
  return x.tape().record(Tensor<T>::scalar(s), {ix}, [ix](Tape<T>& t, const Tensor<T>& g) {
    Tensor<T>& gx = t.grad_buffer(ix);
    for (auto& v : gx.storage()) v += g[0];
  });
}

template <typename T>
Var<T> mean(const Var<T>& x) {
  const Tensor<T>& xv = x.value();
  const T n = static_cast<T>(xv.size());
  const T s = std::accumulate(xv.data().begin(), xv.data().end(), T{0}) / n;
  const std::size_t ix = x.id();
  return x.tape().record(Tensor<T>::scalar(s), {ix}, [ix, n](Tape<T>& t, const Tensor<T>& g) {
    Tensor<T>& gx = t.grad_buffer(ix);
    for (auto& v : gx.storage()) v += g[0] / n;
  });
}

template <typename T>
Var<T> sum_last(const Var<T>& x) {
  const Shape& s = x.shape();
  const std::size_t n = s.back();
  const std::size_t rows = x.size() / n;
  Shape os(s.begin(), s.end() - 1);
  if (os.empty()) os = {1};
  Tensor<T> out(os);
  const Tensor<T>& xv = x.value();
  for (std::size_t r = 0; r < rows; ++r) {
    T acc{0};
    for (std::size_t j = 0; j < n; ++j) acc += xv[r * n + j];
    out[r] = acc;
  }
  const std::size_t ix = x.id();
  return x.tape().record(std::move(out), {ix}, [ix, rows, n](Tape<T>& t, const Tensor<T>& g) {
    Tensor<T>& gx = t.grad_buffer(ix);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < n; ++j) gx[r * n + j] += g[r];
  });
}

#define FGD_INSTANTIATE_OPS(T)                                                                       \
  template Var<T> add(const Var<T>&, const Var<T>&);                                                 \
  template Var<T> sub(const Var<T>&, const Var<T>&);                                                 \
  template Var<T> mul(const Var<T>&, const Var<T>&);                                                 \
  template Var<T> scale(const Var<T>&, T);                                                           \
  template Var<T> add_scalar(const Var<T>&, T);                                                      \
  template Var<T> add_rowwise(const Var<T>&, const Var<T>&);                                         \
  template Var<T> mul_rowwise(const Var<T>&, const Var<T>&);                                         \
  template Var<T> matmul(const Var<T>&, const Var<T>&);                                              \
  template Var<T> matmul_nt(const Var<T>&, const Var<T>&);                                           \
  template Var<T> transpose(const Var<T>&);                                                          \
  template Var<T> conv2d(const Var<T>&, const Var<T>&, const Var<T>&, std::size_t, std::size_t);     \
  template Var<T> avg_pool2d(const Var<T>&, std::size_t);                                            \
  template Var<T> global_avg_pool(const Var<T>&);                                                    \
  template Var<T> tanh(const Var<T>&);                                                               \
  template Var<T> sigmoid(const Var<T>&);                                                            \
  template Var<T> softplus(const Var<T>&);                                                           \
  template Var<T> relu(const Var<T>&);                                                               \
  template Var<T> exp(const Var<T>&);                                                                \
  template Var<T> log(const Var<T>&);                                                                \
  template Var<T> sqrt(const Var<T>&);                                                               \
  template Var<T> softmax(const Var<T>&);                                                            \
  template Var<T> cross_entropy(const Var<T>&, std::size_t);                                         \
  template Var<T> reshape(const Var<T>&, Shape);                                                     \
  template Var<T> permute(const Var<T>&, const std::vector<std::size_t>&);                           \
  template Var<T> concat(const std::vector<Var<T>>&, std::size_t);                                   \
  template Var<T> slice(const Var<T>&, std::size_t, std::size_t, std::size_t);                       \
  template Var<T> sum(const Var<T>&);                                                                \
  template Var<T> mean(const Var<T>&);                                                               \
  template Var<T> sum_last(const Var<T>&);                                                           \
  template void detail::gemm(bool, bool, std::size_t, std::size_t, std::size_t, const T*, const T*, T*, bool);

FGD_INSTANTIATE_OPS(float)
FGD_INSTANTIATE_OPS(double)

#undef FGD_INSTANTIATE_OPS

}  // namespace fgd

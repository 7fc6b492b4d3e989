#pragma once

#include <vector>

#include "fgd/autograd.hpp"

// Differentiable primitives. Every op records one node on the tape of its
// first operand; all operands must live on the same tape.

namespace fgd {

// Elementwise, operands of identical shape.
template <typename T> Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> sub(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> mul(const Var<T>& a, const Var<T>& b);
/// c * a
template <typename T> Var<T> scale(const Var<T>& a, T c);
/// a + c
template <typename T> Var<T> add_scalar(const Var<T>& a, T c);

/// x[..., N] + b[N], broadcast over leading axes.
template <typename T> Var<T> add_rowwise(const Var<T>& x, const Var<T>& b);
/// x[..., N] * v[N], broadcast over leading axes.
template <typename T> Var<T> mul_rowwise(const Var<T>& x, const Var<T>& v);

/// a[m,k] * b[k,n]
template <typename T> Var<T> matmul(const Var<T>& a, const Var<T>& b);
/// a[m,k] * b[n,k]^T
template <typename T> Var<T> matmul_nt(const Var<T>& a, const Var<T>& b);
/// 2-D transpose.
template <typename T> Var<T> transpose(const Var<T>& a);

/// Cross-correlation: x[B,C,H,W], w[O,C,k,k], b[O] -> [B,O,H',W'].
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& b, std::size_t stride, std::size_t padding);
/// Non-overlapping k x k mean pooling; H and W must be multiples of k.
template <typename T> Var<T> avg_pool2d(const Var<T>& x, std::size_t k);
/// [B,C,H,W] -> [B,C]
template <typename T> Var<T> global_avg_pool(const Var<T>& x);

template <typename T> Var<T> tanh(const Var<T>& x);
template <typename T> Var<T> sigmoid(const Var<T>& x);
template <typename T> Var<T> softplus(const Var<T>& x);
template <typename T> Var<T> relu(const Var<T>& x);
template <typename T> Var<T> exp(const Var<T>& x);
template <typename T> Var<T> log(const Var<T>& x);
/// Gradient at exactly zero is taken as zero.
template <typename T> Var<T> sqrt(const Var<T>& x);

/// Softmax over the last axis.
template <typename T> Var<T> softmax(const Var<T>& x);
/// -log softmax(logits)[label], max-subtracted. Logits of any shape with K entries.
template <typename T> Var<T> cross_entropy(const Var<T>& logits, std::size_t label);

template <typename T> Var<T> reshape(const Var<T>& x, Shape shape);
template <typename T> Var<T> permute(const Var<T>& x, const std::vector<std::size_t>& axes);
template <typename T> Var<T> concat(const std::vector<Var<T>>& parts, std::size_t axis);
/// Half-open range [begin, end) along `axis`.
template <typename T> Var<T> slice(const Var<T>& x, std::size_t axis, std::size_t begin, std::size_t end);

/// Sum of all entries -> [1].
template <typename T> Var<T> sum(const Var<T>& x);
/// Mean of all entries -> [1].
template <typename T> Var<T> mean(const Var<T>& x);
/// Sum over the last axis; [N] -> [1], [..., N] -> [...].
template <typename T> Var<T> sum_last(const Var<T>& x);

namespace detail {

/// c[m,n] (+)= a * b with optional transposed operands stored row-major.
template <typename T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c,
          bool accumulate);

}  // namespace detail

}  // namespace fgd

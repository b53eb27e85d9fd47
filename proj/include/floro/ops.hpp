#pragma once

// Differentiable operations over Tensor<S>. Every kernel works on flat
// row-major storage; matrix products go through Eigen maps.

#include <floro/tensor.hpp>

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>

namespace floro {

template <typename S>
using RowMatrix = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

namespace detail {

template <typename S>
using ConstMap = Eigen::Map<const RowMatrix<S>>;
template <typename S>
using MutMap = Eigen::Map<RowMatrix<S>>;

inline void require_same_shape(const Shape& a, const Shape& b, const char* op) {
  if (a != b) throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a) + " vs " + to_string(b));
}

inline Index leading(const Shape& s, std::size_t trailing) {
  Index n = 1;
  for (std::size_t i = 0; i + trailing < s.size(); ++i) n *= s[i];
  return n;
}

inline std::vector<Index> strides(const Shape& s) {
  std::vector<Index> st(s.size(), 1);
  for (std::size_t i = s.size(); i-- > 1;) st[i - 1] = st[i] * s[i];
  return st;
}

template <typename S>
void accumulate(Node<S>& parent, const Eigen::Array<S, Eigen::Dynamic, 1>& g) {
  if (parent.requires_grad) parent.ensure_grad() += g;
}

}  // namespace detail

// ---------------------------------------------------------------- elementwise

template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  detail::require_same_shape(a.shape(), b.shape(), "add");
  return Tensor<S>::op_result(a.shape(), a.value() + b.value(), {a, b}, [](detail::Node<S>& n) {
    detail::accumulate(*n.parents[0], n.grad);
    detail::accumulate(*n.parents[1], n.grad);
  });
}

template <typename S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
  detail::require_same_shape(a.shape(), b.shape(), "sub");
  return Tensor<S>::op_result(a.shape(), a.value() - b.value(), {a, b}, [](detail::Node<S>& n) {
    detail::accumulate(*n.parents[0], n.grad);
    detail::accumulate<S>(*n.parents[1], -n.grad);
  });
}

template <typename S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
  detail::require_same_shape(a.shape(), b.shape(), "mul");
  return Tensor<S>::op_result(a.shape(), a.value() * b.value(), {a, b}, [](detail::Node<S>& n) {
    auto& pa = *n.parents[0];
    auto& pb = *n.parents[1];
    if (pa.requires_grad) pa.ensure_grad() += n.grad * pb.value;
    if (pb.requires_grad) pb.ensure_grad() += n.grad * pa.value;
  });
}

template <typename S>
Tensor<S> scale(const Tensor<S>& a, S factor) {
  return Tensor<S>::op_result(a.shape(), a.value() * factor, {a}, [factor](detail::Node<S>& n) {
    detail::accumulate<S>(*n.parents[0], n.grad * factor);
  });
}

template <typename S>
Tensor<S> add_scalar(const Tensor<S>& a, S offset) {
  return Tensor<S>::op_result(a.shape(), a.value() + offset, {a},
                              [](detail::Node<S>& n) { detail::accumulate(*n.parents[0], n.grad); });
}

template <typename S>
Tensor<S> operator+(const Tensor<S>& a, const Tensor<S>& b) { return add(a, b); }
template <typename S>
Tensor<S> operator-(const Tensor<S>& a, const Tensor<S>& b) { return sub(a, b); }
template <typename S>
Tensor<S> operator*(const Tensor<S>& a, const Tensor<S>& b) { return mul(a, b); }

/// a + b where b's shape equals the trailing dimensions of a (bias, positional tables).
template <typename S>
Tensor<S> add_broadcast(const Tensor<S>& a, const Tensor<S>& b) {
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  if (sb.size() > sa.size() || !std::equal(sb.begin(), sb.end(), sa.end() - static_cast<std::ptrdiff_t>(sb.size())))
    throw ShapeError("add_broadcast: shape mismatch " + to_string(sa) + " vs " + to_string(sb));
  const Index inner = b.numel();
  const Index outer = a.numel() / inner;
  typename Tensor<S>::Array out = a.value();
  for (Index o = 0; o < outer; ++o) out.segment(o * inner, inner) += b.value();
  return Tensor<S>::op_result(sa, std::move(out), {a, b}, [outer, inner](detail::Node<S>& n) {
    detail::accumulate(*n.parents[0], n.grad);
    auto& pb = *n.parents[1];
    if (pb.requires_grad) {
      auto& g = pb.ensure_grad();
      for (Index o = 0; o < outer; ++o) g += n.grad.segment(o * inner, inner);
    }
  });
}

/// Elementwise product with a constant array of the same size (masks, gates).
template <typename S>
Tensor<S> mul_constant(const Tensor<S>& a, const Eigen::Array<S, Eigen::Dynamic, 1>& c) {
  if (c.size() != a.numel()) throw ShapeError("mul_constant: size mismatch");
  return Tensor<S>::op_result(a.shape(), a.value() * c, {a}, [c](detail::Node<S>& n) {
    detail::accumulate<S>(*n.parents[0], n.grad * c);
  });
}

// ---------------------------------------------------------------- activations

template <typename S>
Tensor<S> gelu(const Tensor<S>& a) {
  const S inv_sqrt2 = S(1) / std::sqrt(S(2));
  typename Tensor<S>::Array out = a.value().unaryExpr([inv_sqrt2](S x) {
    return S(0.5) * x * (S(1) + std::erf(x * inv_sqrt2));
  });
  return Tensor<S>::op_result(a.shape(), std::move(out), {a}, [inv_sqrt2](detail::Node<S>& n) {
    auto& p = *n.parents[0];
    const S inv_sqrt_2pi = S(1) / std::sqrt(S(2) * std::numbers::pi_v<S>);
    typename Tensor<S>::Array d = p.value.unaryExpr([&](S x) {
      return S(0.5) * (S(1) + std::erf(x * inv_sqrt2)) + x * inv_sqrt_2pi * std::exp(S(-0.5) * x * x);
    });
    p.ensure_grad() += n.grad * d;
  });
}

template <typename S>
Tensor<S> softmax(const Tensor<S>& a) {
  const Index cols = a.shape().back();
  const Index rows = a.numel() / cols;
  detail::ConstMap<S> x(a.value().data(), rows, cols);
  RowMatrix<S> y = (x.colwise() - x.rowwise().maxCoeff()).array().exp().matrix();
  y.array().colwise() /= y.rowwise().sum().array();
  typename Tensor<S>::Array out = Eigen::Map<const typename Tensor<S>::Array>(y.data(), y.size());
  return Tensor<S>::op_result(a.shape(), std::move(out), {a}, [rows, cols](detail::Node<S>& n) {
    auto& p = *n.parents[0];
    detail::ConstMap<S> yv(n.value.data(), rows, cols);
    detail::ConstMap<S> gy(n.grad.data(), rows, cols);
    auto& g = p.ensure_grad();
    detail::MutMap<S> gx(g.data(), rows, cols);
    const Eigen::Matrix<S, Eigen::Dynamic, 1> dots = (yv.array() * gy.array()).rowwise().sum();
    gx.array() += yv.array() * (gy.colwise() - dots).array();
  });
}

/// Layer normalization over the last axis with affine scale and shift.
template <typename S>
Tensor<S> layer_norm(const Tensor<S>& a, const Tensor<S>& gamma, const Tensor<S>& beta, S eps = S(1e-6)) {
  const Index cols = a.shape().back();
  if (gamma.numel() != cols || beta.numel() != cols)
    throw ShapeError("layer_norm: affine parameters of size " + std::to_string(gamma.numel()) + " for width " +
                     std::to_string(cols));
  const Index rows = a.numel() / cols;
  detail::ConstMap<S> x(a.value().data(), rows, cols);
  Eigen::Array<S, Eigen::Dynamic, 1> mean = x.rowwise().mean().array();
  RowMatrix<S> centered = x.colwise() - mean.matrix();
  Eigen::Array<S, Eigen::Dynamic, 1> inv_std =
      ((centered.array().square().rowwise().sum() / S(cols)) + eps).rsqrt();
  RowMatrix<S> xhat = centered.array().colwise() * inv_std;
  typename Tensor<S>::Array out(a.numel());
  detail::MutMap<S> y(out.data(), rows, cols);
  y = (xhat.array().rowwise() * gamma.value().transpose()).rowwise() + beta.value().transpose();

  return Tensor<S>::op_result(
      a.shape(), std::move(out), {a, gamma, beta},
      [rows, cols, xhat = std::move(xhat), inv_std = std::move(inv_std)](detail::Node<S>& n) {
        auto& px = *n.parents[0];
        auto& pg = *n.parents[1];
        auto& pb = *n.parents[2];
        detail::ConstMap<S> gy(n.grad.data(), rows, cols);
        if (pg.requires_grad) pg.ensure_grad() += (gy.array() * xhat.array()).colwise().sum().transpose();
        if (pb.requires_grad) pb.ensure_grad() += gy.array().colwise().sum().transpose();
        if (px.requires_grad) {
          RowMatrix<S> gxhat = gy.array().rowwise() * pg.value.transpose();
          const Eigen::Array<S, Eigen::Dynamic, 1> m1 = gxhat.rowwise().mean().array();
          const Eigen::Array<S, Eigen::Dynamic, 1> m2 = (gxhat.array() * xhat.array()).rowwise().mean();
          auto& g = px.ensure_grad();
          detail::MutMap<S> gx(g.data(), rows, cols);
          gx.array() += ((gxhat.array().colwise() - m1) - xhat.array().colwise() * m2).colwise() * inv_std;
        }
      });
}

// ---------------------------------------------------------------- linear algebra

/// Matrix product. [..., K] x [K, N] -> [..., N], or batched [B, M, K] x [B, K, N] -> [B, M, N].
template <typename S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b) {
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  if (sa.size() >= 2 && sb.size() == 2) {
    const Index k = sa.back();
    if (sb[0] != k) throw ShapeError("matmul: shape mismatch " + to_string(sa) + " vs " + to_string(sb));
    const Index m = a.numel() / k;
    const Index nn = sb[1];
    Shape out_shape = sa;
    out_shape.back() = nn;
    typename Tensor<S>::Array out(m * nn);
    detail::MutMap<S>(out.data(), m, nn).noalias() =
        detail::ConstMap<S>(a.value().data(), m, k) * detail::ConstMap<S>(b.value().data(), k, nn);
    return Tensor<S>::op_result(std::move(out_shape), std::move(out), {a, b}, [m, k, nn](detail::Node<S>& n) {
      auto& pa = *n.parents[0];
      auto& pb = *n.parents[1];
      detail::ConstMap<S> gc(n.grad.data(), m, nn);
      if (pa.requires_grad)
        detail::MutMap<S>(pa.ensure_grad().data(), m, k).noalias() +=
            gc * detail::ConstMap<S>(pb.value.data(), k, nn).transpose();
      if (pb.requires_grad)
        detail::MutMap<S>(pb.ensure_grad().data(), k, nn).noalias() +=
            detail::ConstMap<S>(pa.value.data(), m, k).transpose() * gc;
    });
  }
  if (sa.size() == 3 && sb.size() == 3 && sa[0] == sb[0] && sa[2] == sb[1]) {
    const Index batch = sa[0], m = sa[1], k = sa[2], nn = sb[2];
    typename Tensor<S>::Array out(batch * m * nn);
    for (Index i = 0; i < batch; ++i)
      detail::MutMap<S>(out.data() + i * m * nn, m, nn).noalias() =
          detail::ConstMap<S>(a.value().data() + i * m * k, m, k) *
          detail::ConstMap<S>(b.value().data() + i * k * nn, k, nn);
    return Tensor<S>::op_result({batch, m, nn}, std::move(out), {a, b}, [batch, m, k, nn](detail::Node<S>& n) {
      auto& pa = *n.parents[0];
      auto& pb = *n.parents[1];
      for (Index i = 0; i < batch; ++i) {
        detail::ConstMap<S> gc(n.grad.data() + i * m * nn, m, nn);
        if (pa.requires_grad)
          detail::MutMap<S>(pa.ensure_grad().data() + i * m * k, m, k).noalias() +=
              gc * detail::ConstMap<S>(pb.value.data() + i * k * nn, k, nn).transpose();
        if (pb.requires_grad)
          detail::MutMap<S>(pb.ensure_grad().data() + i * k * nn, k, nn).noalias() +=
              detail::ConstMap<S>(pa.value.data() + i * m * k, m, k).transpose() * gc;
      }
    });
  }
  throw ShapeError("matmul: shape mismatch " + to_string(sa) + " vs " + to_string(sb));
}

// ---------------------------------------------------------------- layout

template <typename S>
Tensor<S> reshape(const Tensor<S>& a, Shape shape) {
  if (numel(shape) != a.numel())
    throw ShapeError("reshape: cannot view " + to_string(a.shape()) + " as " + to_string(shape));
  return Tensor<S>::op_result(std::move(shape), a.value(), {a},
                              [](detail::Node<S>& n) { detail::accumulate(*n.parents[0], n.grad); });
}

/// General axis permutation; out.shape[i] == a.shape[axes[i]].
template <typename S>
Tensor<S> permute(const Tensor<S>& a, std::vector<std::size_t> axes) {
  const auto& sa = a.shape();
  if (axes.size() != sa.size()) throw ShapeError("permute: axis count does not match rank of " + to_string(sa));
  std::vector<bool> used(sa.size(), false);
  for (auto ax : axes) {
    if (ax >= sa.size() || used[ax]) throw IndexError("permute: invalid axis list");
    used[ax] = true;
  }
  Shape out_shape(sa.size());
  for (std::size_t i = 0; i < axes.size(); ++i) out_shape[i] = sa[axes[i]];
  const auto in_strides = detail::strides(sa);
  const auto out_strides = detail::strides(out_shape);
  // source flat index for every destination flat index
  std::vector<Index> src(static_cast<std::size_t>(a.numel()));
  for (Index dst = 0; dst < a.numel(); ++dst) {
    Index rem = dst, s = 0;
    for (std::size_t i = 0; i < out_shape.size(); ++i) {
      const Index coord = rem / out_strides[i];
      rem %= out_strides[i];
      s += coord * in_strides[axes[i]];
    }
    src[static_cast<std::size_t>(dst)] = s;
  }
  typename Tensor<S>::Array out(a.numel());
  for (Index i = 0; i < a.numel(); ++i) out[i] = a.value()[src[static_cast<std::size_t>(i)]];
  return Tensor<S>::op_result(std::move(out_shape), std::move(out), {a}, [src = std::move(src)](detail::Node<S>& n) {
    auto& p = *n.parents[0];
    if (!p.requires_grad) return;
    auto& g = p.ensure_grad();
    for (std::size_t i = 0; i < src.size(); ++i) g[src[i]] += n.grad[static_cast<Index>(i)];
  });
}

/// Swaps the last two axes.
template <typename S>
Tensor<S> transpose(const Tensor<S>& a) {
  if (a.rank() < 2) throw ShapeError("transpose: rank < 2 for shape " + to_string(a.shape()));
  std::vector<std::size_t> axes(a.rank());
  std::iota(axes.begin(), axes.end(), std::size_t{0});
  std::swap(axes[a.rank() - 1], axes[a.rank() - 2]);
  return permute(a, std::move(axes));
}

template <typename S>
Tensor<S> concat(const std::vector<Tensor<S>>& parts, std::size_t axis) {
  if (parts.empty()) throw ContractError("concat: no inputs");
  Shape out_shape = parts.front().shape();
  if (axis >= out_shape.size()) throw IndexError("concat: axis out of range");
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    Shape s = p.shape();
    if (s.size() != out_shape.size()) throw ShapeError("concat: rank mismatch " + to_string(s));
    for (std::size_t i = 0; i < s.size(); ++i)
      if (i != axis && s[i] != parts.front().shape()[i])
        throw ShapeError("concat: shape mismatch " + to_string(parts.front().shape()) + " vs " + to_string(s));
    out_shape[axis] += s[axis];
  }
  Index outer = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= out_shape[i];
  Index inner = 1;
  for (std::size_t i = axis + 1; i < out_shape.size(); ++i) inner *= out_shape[i];
  const Index out_row = out_shape[axis] * inner;
  typename Tensor<S>::Array out(numel(out_shape));
  std::vector<Index> offsets;
  Index offset = 0;
  for (const auto& p : parts) {
    const Index row = p.shape()[axis] * inner;
    for (Index o = 0; o < outer; ++o) out.segment(o * out_row + offset, row) = p.value().segment(o * row, row);
    offsets.push_back(offset);
    offset += row;
  }
  return Tensor<S>::op_result(out_shape, std::move(out), parts,
                              [outer, out_row, offsets = std::move(offsets)](detail::Node<S>& n) {
                                for (std::size_t k = 0; k < n.parents.size(); ++k) {
                                  auto& p = *n.parents[k];
                                  if (!p.requires_grad) continue;
                                  auto& g = p.ensure_grad();
                                  const Index row = p.value.size() / outer;
                                  for (Index o = 0; o < outer; ++o)
                                    g.segment(o * row, row) += n.grad.segment(o * out_row + offsets[k], row);
                                }
                              });
}

/// Gathers entries along `axis` by index list (duplicates allowed).
template <typename S>
Tensor<S> index_select(const Tensor<S>& a, std::size_t axis, std::span<const Index> indices) {
  const auto& sa = a.shape();
  if (axis >= sa.size()) throw IndexError("index_select: axis out of range");
  if (indices.empty()) throw ShapeError("index_select: empty index list");
  for (Index i : indices)
    if (i < 0 || i >= sa[axis])
      throw IndexError("index_select: index " + std::to_string(i) + " out of range for extent " +
                       std::to_string(sa[axis]));
  Index outer = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= sa[i];
  Index inner = 1;
  for (std::size_t i = axis + 1; i < sa.size(); ++i) inner *= sa[i];
  Shape out_shape = sa;
  out_shape[axis] = static_cast<Index>(indices.size());
  const Index k = out_shape[axis];
  std::vector<Index> idx(indices.begin(), indices.end());
  typename Tensor<S>::Array out(numel(out_shape));
  for (Index o = 0; o < outer; ++o)
    for (Index j = 0; j < k; ++j)
      out.segment((o * k + j) * inner, inner) = a.value().segment((o * sa[axis] + idx[j]) * inner, inner);
  const Index extent = sa[axis];
  return Tensor<S>::op_result(std::move(out_shape), std::move(out), {a},
                              [outer, inner, k, extent, idx = std::move(idx)](detail::Node<S>& n) {
                                auto& p = *n.parents[0];
                                if (!p.requires_grad) return;
                                auto& g = p.ensure_grad();
                                for (Index o = 0; o < outer; ++o)
                                  for (Index j = 0; j < k; ++j)
                                    g.segment((o * extent + idx[j]) * inner, inner) +=
                                        n.grad.segment((o * k + j) * inner, inner);
                              });
}

/// Contiguous range [start, start + length) along `axis`.
template <typename S>
Tensor<S> slice(const Tensor<S>& a, std::size_t axis, Index start, Index length) {
  if (axis >= a.rank()) throw IndexError("slice: axis out of range");
  if (start < 0 || length <= 0 || start + length > a.shape()[axis])
    throw IndexError("slice: range [" + std::to_string(start) + ", " + std::to_string(start + length) +
                     ") out of bounds for extent " + std::to_string(a.shape()[axis]));
  std::vector<Index> idx(static_cast<std::size_t>(length));
  std::iota(idx.begin(), idx.end(), start);
  return index_select(a, axis, idx);
}

// ---------------------------------------------------------------- reductions

template <typename S>
Tensor<S> sum(const Tensor<S>& a) {
  typename Tensor<S>::Array out(1);
  out[0] = a.value().sum();
  return Tensor<S>::op_result({1}, std::move(out), {a}, [](detail::Node<S>& n) {
    auto& p = *n.parents[0];
    if (p.requires_grad) p.ensure_grad() += n.grad[0];
  });
}

template <typename S>
Tensor<S> mean(const Tensor<S>& a) {
  return scale(sum(a), S(1) / static_cast<S>(a.numel()));
}

/// Σ a_i w_i for a constant weight array; returns shape [1].
template <typename S>
Tensor<S> weighted_sum(const Tensor<S>& a, const Eigen::Array<S, Eigen::Dynamic, 1>& w) {
  if (w.size() != a.numel()) throw ShapeError("weighted_sum: weight count does not match " + to_string(a.shape()));
  typename Tensor<S>::Array out(1);
  out[0] = (a.value() * w).sum();
  return Tensor<S>::op_result({1}, std::move(out), {a}, [w](detail::Node<S>& n) {
    detail::accumulate<S>(*n.parents[0], w * n.grad[0]);
  });
}

/// Sum over the last axis; rank-1 input yields shape [1].
template <typename S>
Tensor<S> sum_last(const Tensor<S>& a) {
  const Index cols = a.shape().back();
  const Index rows = a.numel() / cols;
  Shape out_shape(a.shape().begin(), a.shape().end() - 1);
  if (out_shape.empty()) out_shape = {1};
  typename Tensor<S>::Array out = detail::ConstMap<S>(a.value().data(), rows, cols).rowwise().sum().array();
  return Tensor<S>::op_result(std::move(out_shape), std::move(out), {a}, [rows, cols](detail::Node<S>& n) {
    auto& p = *n.parents[0];
    if (!p.requires_grad) return;
    detail::MutMap<S>(p.ensure_grad().data(), rows, cols).colwise() += n.grad.matrix();
  });
}

/// Mean over one axis, which is removed from the shape.
template <typename S>
Tensor<S> mean_axis(const Tensor<S>& a, std::size_t axis) {
  const auto& sa = a.shape();
  if (axis >= sa.size()) throw IndexError("mean_axis: axis out of range");
  Index outer = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= sa[i];
  Index inner = 1;
  for (std::size_t i = axis + 1; i < sa.size(); ++i) inner *= sa[i];
  const Index extent = sa[axis];
  Shape out_shape;
  for (std::size_t i = 0; i < sa.size(); ++i)
    if (i != axis) out_shape.push_back(sa[i]);
  if (out_shape.empty()) out_shape = {1};
  typename Tensor<S>::Array out = Tensor<S>::Array::Zero(outer * inner);
  for (Index o = 0; o < outer; ++o)
    for (Index j = 0; j < extent; ++j) out.segment(o * inner, inner) += a.value().segment((o * extent + j) * inner, inner);
  out /= static_cast<S>(extent);
  return Tensor<S>::op_result(std::move(out_shape), std::move(out), {a}, [outer, inner, extent](detail::Node<S>& n) {
    auto& p = *n.parents[0];
    if (!p.requires_grad) return;
    auto& g = p.ensure_grad();
    const S f = S(1) / static_cast<S>(extent);
    for (Index o = 0; o < outer; ++o)
      for (Index j = 0; j < extent; ++j) g.segment((o * extent + j) * inner, inner) += n.grad.segment(o * inner, inner) * f;
  });
}

}  // namespace floro

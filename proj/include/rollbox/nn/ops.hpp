#ifndef ROLLBOX_NN_OPS_HPP_
#define ROLLBOX_NN_OPS_HPP_

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "rollbox/core/rng.hpp"
#include "rollbox/nn/tensor.hpp"

namespace rollbox::nn {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

namespace detail {

// dst = lhs * rhs, or dst += lhs * rhs. Products below Eigen's GEMM size
// threshold take a plain loop: Eigen's coefficient-based kernel mixes fused
// and unfused multiply-adds depending on pointer alignment, which would make
// results vary between otherwise identical runs.
template <class D, class L, class R>
inline void product(D&& dst, const L& lhs, const R& rhs, bool add) {
  if (rhs.rows() + dst.rows() + dst.cols() < 20) {
    for (Eigen::Index i = 0; i < dst.rows(); ++i) {
      for (Eigen::Index j = 0; j < dst.cols(); ++j) {
        double acc = 0.0;
        for (Eigen::Index p = 0; p < rhs.rows(); ++p) acc += lhs(i, p) * rhs(p, j);
        dst(i, j) = add ? dst(i, j) + acc : acc;
      }
    }
  } else if (add) {
    dst.noalias() += lhs * rhs;
  } else {
    dst.noalias() = lhs * rhs;
  }
}

inline void require_same(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw Error(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

inline void require_rank(const Tensor& a, std::size_t r, const char* op) {
  if (a.rank() != r) throw Error(std::string(op) + ": expected rank " + std::to_string(r) + ", got " + shape_str(a.shape()));
}

// Accumulates g into the gradient of `t` when it takes part in training.
template <typename F>
inline void accumulate(const std::shared_ptr<Node>& t, F&& fill) {
  if (!t->requires_grad) return;
  t->ensure_grad();
  fill(t->grad);
}

inline int last_dim(const Tensor& a) { return a.rank() == 0 ? 1 : a.shape().back(); }

}  // namespace detail

// --- elementwise ---------------------------------------------------------

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::require_same(a, b, "add");
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.data()[i] + b.data()[i];
  auto pa = a.ptr(), pb = b.ptr();
  return make_result(a.shape(), std::move(v), {a, b}, [pa, pb](Node& o) {
    detail::accumulate(pa, [&](auto& g) { for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i]; });
    detail::accumulate(pb, [&](auto& g) { for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i]; });
  });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::require_same(a, b, "sub");
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.data()[i] - b.data()[i];
  auto pa = a.ptr(), pb = b.ptr();
  return make_result(a.shape(), std::move(v), {a, b}, [pa, pb](Node& o) {
    detail::accumulate(pa, [&](auto& g) { for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i]; });
    detail::accumulate(pb, [&](auto& g) { for (std::size_t i = 0; i < g.size(); ++i) g[i] -= o.grad[i]; });
  });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::require_same(a, b, "mul");
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.data()[i] * b.data()[i];
  auto pa = a.ptr(), pb = b.ptr();
  return make_result(a.shape(), std::move(v), {a, b}, [pa, pb](Node& o) {
    detail::accumulate(pa, [&](auto& g) { for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * pb->value[i]; });
    detail::accumulate(pb, [&](auto& g) { for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * pa->value[i]; });
  });
}

inline Tensor scale(const Tensor& a, double c) {
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.data()[i] * c;
  auto pa = a.ptr();
  return make_result(a.shape(), std::move(v), {a}, [pa, c](Node& o) {
    detail::accumulate(pa, [&](auto& g) { for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * c; });
  });
}

inline Tensor add_scalar(const Tensor& a, double c) {
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.data()[i] + c;
  auto pa = a.ptr();
  return make_result(a.shape(), std::move(v), {a}, [pa](Node& o) {
    detail::accumulate(pa, [&](auto& g) { for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i]; });
  });
}

inline Tensor relu(const Tensor& a) {
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.data()[i] > 0.0 ? a.data()[i] : 0.0;
  auto pa = a.ptr();
  return make_result(a.shape(), std::move(v), {a}, [pa](Node& o) {
    detail::accumulate(pa, [&](auto& g) {
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (pa->value[i] > 0.0) g[i] += o.grad[i];
      }
    });
  });
}

inline Tensor square(const Tensor& a) { return mul(a, a); }

inline Tensor exp(const Tensor& a) {
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::exp(a.data()[i]);
  auto pa = a.ptr();
  return make_result(a.shape(), std::move(v), {a}, [pa](Node& o) {
    detail::accumulate(pa, [&](auto& g) { for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * o.value[i]; });
  });
}

// Elementwise minimum; ties send the gradient to `a`.
inline Tensor minimum(const Tensor& a, const Tensor& b) {
  detail::require_same(a, b, "minimum");
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::min(a.data()[i], b.data()[i]);
  auto pa = a.ptr(), pb = b.ptr();
  return make_result(a.shape(), std::move(v), {a, b}, [pa, pb](Node& o) {
    detail::accumulate(pa, [&](auto& g) {
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (pa->value[i] <= pb->value[i]) g[i] += o.grad[i];
      }
    });
    detail::accumulate(pb, [&](auto& g) {
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (pb->value[i] < pa->value[i]) g[i] += o.grad[i];
      }
    });
  });
}

inline Tensor clamp(const Tensor& a, double lo, double hi) {
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::clamp(a.data()[i], lo, hi);
  auto pa = a.ptr();
  return make_result(a.shape(), std::move(v), {a}, [pa, lo, hi](Node& o) {
    detail::accumulate(pa, [&](auto& g) {
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (pa->value[i] >= lo && pa->value[i] <= hi) g[i] += o.grad[i];
      }
    });
  });
}

// --- reductions and shape ------------------------------------------------

inline Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double x : a.values()) s += x;
  auto pa = a.ptr();
  return make_result({}, {s}, {a}, [pa](Node& o) {
    detail::accumulate(pa, [&](auto& g) { for (double& x : g) x += o.grad[0]; });
  });
}

inline Tensor mean(const Tensor& a) {
  if (a.size() == 0) throw Error("mean of an empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

// Sum over the last axis: [..., K] -> [...].
inline Tensor sum_last(const Tensor& a) {
  const int k = detail::last_dim(a);
  const std::size_t rows = a.size() / k;
  Shape s = a.shape();
  if (!s.empty()) s.pop_back();
  std::vector<double> v(rows, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (int j = 0; j < k; ++j) v[r] += a.data()[r * k + j];
  }
  auto pa = a.ptr();
  return make_result(s, std::move(v), {a}, [pa, k, rows](Node& o) {
    detail::accumulate(pa, [&](auto& g) {
      for (std::size_t r = 0; r < rows; ++r) {
        for (int j = 0; j < k; ++j) g[r * k + j] += o.grad[r];
      }
    });
  });
}

inline Tensor reshape(const Tensor& a, Shape shape) {
  if (numel(shape) != a.size()) throw Error("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  auto pa = a.ptr();
  return make_result(std::move(shape), a.values(), {a}, [pa](Node& o) {
    detail::accumulate(pa, [&](auto& g) { for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i]; });
  });
}

// [B, P] ++ [B, Q] -> [B, P+Q]
inline Tensor concat_last(const Tensor& a, const Tensor& b) {
  detail::require_rank(a, 2, "concat_last");
  detail::require_rank(b, 2, "concat_last");
  if (a.dim(0) != b.dim(0)) throw Error("concat_last: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  const int n = a.dim(0), p = a.dim(1), q = b.dim(1);
  std::vector<double> v(static_cast<std::size_t>(n) * (p + q));
  for (int r = 0; r < n; ++r) {
    std::copy_n(a.data() + r * p, p, v.data() + r * (p + q));
    std::copy_n(b.data() + r * q, q, v.data() + r * (p + q) + p);
  }
  auto pa = a.ptr(), pb = b.ptr();
  return make_result({n, p + q}, std::move(v), {a, b}, [pa, pb, n, p, q](Node& o) {
    detail::accumulate(pa, [&](auto& g) {
      for (int r = 0; r < n; ++r) {
        for (int j = 0; j < p; ++j) g[r * p + j] += o.grad[r * (p + q) + j];
      }
    });
    detail::accumulate(pb, [&](auto& g) {
      for (int r = 0; r < n; ++r) {
        for (int j = 0; j < q; ++j) g[r * q + j] += o.grad[r * (p + q) + p + j];
      }
    });
  });
}

// out[r] = a[r, idx[r]]
inline Tensor gather_last(const Tensor& a, const std::vector<int>& idx) {
  detail::require_rank(a, 2, "gather_last");
  const int n = a.dim(0), k = a.dim(1);
  if (static_cast<int>(idx.size()) != n) throw Error("gather_last: " + std::to_string(idx.size()) + " indices for shape " + shape_str(a.shape()));
  std::vector<double> v(n);
  for (int r = 0; r < n; ++r) {
    if (idx[r] < 0 || idx[r] >= k) throw Error("gather_last: index out of range");
    v[r] = a.data()[r * k + idx[r]];
  }
  auto pa = a.ptr();
  return make_result({n}, std::move(v), {a}, [pa, idx, k, n](Node& o) {
    detail::accumulate(pa, [&](auto& g) {
      for (int r = 0; r < n; ++r) g[r * k + idx[r]] += o.grad[r];
    });
  });
}

// --- softmax family ------------------------------------------------------

inline Tensor log_softmax(const Tensor& a) {
  const int k = detail::last_dim(a);
  const std::size_t rows = a.size() / k;
  std::vector<double> v(a.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = a.data() + r * k;
    const double m = *std::max_element(x, x + k);
    double s = 0.0;
    for (int j = 0; j < k; ++j) s += std::exp(x[j] - m);
    const double lse = m + std::log(s);
    for (int j = 0; j < k; ++j) v[r * k + j] = x[j] - lse;
  }
  auto pa = a.ptr();
  return make_result(a.shape(), std::move(v), {a}, [pa, k, rows](Node& o) {
    detail::accumulate(pa, [&](auto& g) {
      for (std::size_t r = 0; r < rows; ++r) {
        double gs = 0.0;
        for (int j = 0; j < k; ++j) gs += o.grad[r * k + j];
        for (int j = 0; j < k; ++j) g[r * k + j] += o.grad[r * k + j] - std::exp(o.value[r * k + j]) * gs;
      }
    });
  });
}

inline Tensor softmax(const Tensor& a) { return exp(log_softmax(a)); }

// --- linear algebra ------------------------------------------------------

// [M, K] x [K, N]
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  detail::require_rank(a, 2, "matmul");
  detail::require_rank(b, 2, "matmul");
  if (a.dim(1) != b.dim(0)) throw Error("matmul: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> v(static_cast<std::size_t>(m) * n);
  detail::product(MatMap(v.data(), m, n), ConstMatMap(a.data(), m, k), ConstMatMap(b.data(), k, n), false);
  auto pa = a.ptr(), pb = b.ptr();
  return make_result({m, n}, std::move(v), {a, b}, [pa, pb, m, k, n](Node& o) {
    ConstMatMap go(o.grad.data(), m, n);
    detail::accumulate(pa, [&](auto& g) { detail::product(MatMap(g.data(), m, k), go, ConstMatMap(pb->value.data(), k, n).transpose(), true); });
    detail::accumulate(pb, [&](auto& g) { detail::product(MatMap(g.data(), k, n), ConstMatMap(pa->value.data(), m, k).transpose(), go, true); });
  });
}

// [M, K] x [N, K]^T
inline Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  detail::require_rank(a, 2, "matmul_nt");
  detail::require_rank(b, 2, "matmul_nt");
  if (a.dim(1) != b.dim(1)) throw Error("matmul_nt: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  const int m = a.dim(0), k = a.dim(1), n = b.dim(0);
  std::vector<double> v(static_cast<std::size_t>(m) * n);
  detail::product(MatMap(v.data(), m, n), ConstMatMap(a.data(), m, k), ConstMatMap(b.data(), n, k).transpose(), false);
  auto pa = a.ptr(), pb = b.ptr();
  return make_result({m, n}, std::move(v), {a, b}, [pa, pb, m, k, n](Node& o) {
    ConstMatMap go(o.grad.data(), m, n);
    detail::accumulate(pa, [&](auto& g) { detail::product(MatMap(g.data(), m, k), go, ConstMatMap(pb->value.data(), n, k), true); });
    detail::accumulate(pb, [&](auto& g) { detail::product(MatMap(g.data(), n, k), go.transpose(), ConstMatMap(pa->value.data(), m, k), true); });
  });
}

// x [B, I] . w [I, O] + b [O]
inline Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  detail::require_rank(x, 2, "linear");
  detail::require_rank(w, 2, "linear");
  if (x.dim(1) != w.dim(0) || b.size() != static_cast<std::size_t>(w.dim(1))) {
    throw Error("linear: shape mismatch " + shape_str(x.shape()) + " vs " + shape_str(w.shape()));
  }
  const int n = x.dim(0), in = x.dim(1), out = w.dim(1);
  std::vector<double> v(static_cast<std::size_t>(n) * out);
  MatMap y(v.data(), n, out);
  detail::product(y, ConstMatMap(x.data(), n, in), ConstMatMap(w.data(), in, out), false);
  y.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(b.data(), out);
  auto px = x.ptr(), pw = w.ptr(), pb = b.ptr();
  return make_result({n, out}, std::move(v), {x, w, b}, [px, pw, pb, n, in, out](Node& o) {
    ConstMatMap go(o.grad.data(), n, out);
    detail::accumulate(px, [&](auto& g) { detail::product(MatMap(g.data(), n, in), go, ConstMatMap(pw->value.data(), in, out).transpose(), true); });
    detail::accumulate(pw, [&](auto& g) { detail::product(MatMap(g.data(), in, out), ConstMatMap(px->value.data(), n, in).transpose(), go, true); });
    detail::accumulate(pb, [&](auto& g) { Eigen::Map<Eigen::RowVectorXd>(g.data(), out) += go.colwise().sum(); });
  });
}

namespace detail {

struct ConvGeom {
  int h, wd, c, kernel, stride, oh, ow, kk;
  int run() const { return kernel * c; }
  const double* patch(const double* x, std::size_t row, int ky) const {
    const std::size_t bi = row / (static_cast<std::size_t>(oh) * ow);
    const int rem = static_cast<int>(row % (static_cast<std::size_t>(oh) * ow));
    const int oy = rem / ow, ox = rem % ow;
    return x + ((bi * h + static_cast<std::size_t>(oy * stride + ky)) * wd + static_cast<std::size_t>(ox) * stride) * c;
  }
};

// Receptive fields of output rows [first, first + count) as a row-major
// (count, kk) matrix.
inline void im2col(const ConvGeom& g, const double* x, std::size_t first, std::size_t count, double* cols) {
  const int run = g.run();
  for (std::size_t r = 0; r < count; ++r) {
    for (int ky = 0; ky < g.kernel; ++ky) std::memcpy(cols + r * g.kk + ky * run, g.patch(x, first + r, ky), sizeof(double) * run);
  }
}

inline void col2im_add(const ConvGeom& g, const double* cols, std::size_t first, std::size_t count, double* dx) {
  const int run = g.run();
  for (std::size_t r = 0; r < count; ++r) {
    for (int ky = 0; ky < g.kernel; ++ky) {
      double* dst = const_cast<double*>(g.patch(dx, first + r, ky));
      const double* src = cols + r * g.kk + ky * run;
      for (int j = 0; j < run; ++j) dst[j] += src[j];
    }
  }
}

// Rows per im2col block; keeps the patch matrix cache-sized.
inline std::size_t conv_block_rows(int kk) { return std::max<std::size_t>(64, (std::size_t{1} << 16) / static_cast<std::size_t>(kk)); }

}  // namespace detail

// 2-D convolution, NHWC, valid padding.
// x [B, H, W, C], w [k*k*C, O] with rows ordered (ky, kx, c), b [O].
// Patches are unrolled block by block, and again in the backward pass.
inline Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int kernel, int stride) {
  detail::require_rank(x, 4, "conv2d");
  const int n = x.dim(0), h = x.dim(1), wd = x.dim(2), c = x.dim(3);
  const int kk = kernel * kernel * c;
  if (w.rank() != 2 || w.dim(0) != kk) {
    throw Error("conv2d: shape mismatch " + shape_str(x.shape()) + " vs " + shape_str(w.shape()));
  }
  const int oc = w.dim(1);
  if (b.size() != static_cast<std::size_t>(oc)) throw Error("conv2d: bias size does not match " + shape_str(w.shape()));
  if (h < kernel || wd < kernel || stride < 1) throw Error("conv2d: input " + shape_str(x.shape()) + " too small for kernel");
  const int oh = (h - kernel) / stride + 1, ow = (wd - kernel) / stride + 1;
  const std::size_t rows = static_cast<std::size_t>(n) * oh * ow;
  const detail::ConvGeom geom{h, wd, c, kernel, stride, oh, ow, kk};
  const std::size_t block = detail::conv_block_rows(kk);

  std::vector<double> v(rows * oc);
  {
    std::vector<double> cols(std::min(rows, block) * kk);
    for (std::size_t r0 = 0; r0 < rows; r0 += block) {
      const std::size_t m = std::min(block, rows - r0);
      detail::im2col(geom, x.data(), r0, m, cols.data());
      MatMap y(v.data() + r0 * oc, static_cast<Eigen::Index>(m), oc);
      detail::product(y, ConstMatMap(cols.data(), static_cast<Eigen::Index>(m), kk), ConstMatMap(w.data(), kk, oc), false);
    }
  }
  MatMap(v.data(), static_cast<Eigen::Index>(rows), oc).rowwise() += Eigen::Map<const Eigen::RowVectorXd>(b.data(), oc);

  auto px = x.ptr(), pw = w.ptr(), pb = b.ptr();
  return make_result({n, oh, ow, oc}, std::move(v), {x, w, b}, [px, pw, pb, geom, rows, block, kk, oc](Node& o) {
    detail::accumulate(pb, [&](auto& g) {
      Eigen::Map<Eigen::RowVectorXd>(g.data(), oc) += ConstMatMap(o.grad.data(), static_cast<Eigen::Index>(rows), oc).colwise().sum();
    });
    if (!pw->requires_grad && !px->requires_grad) return;
    std::vector<double> cols(std::min(rows, block) * kk);
    for (std::size_t r0 = 0; r0 < rows; r0 += block) {
      const auto m = static_cast<Eigen::Index>(std::min(block, rows - r0));
      ConstMatMap go(o.grad.data() + r0 * oc, m, oc);
      detail::accumulate(pw, [&](auto& g) {
        detail::im2col(geom, px->value.data(), r0, static_cast<std::size_t>(m), cols.data());
        detail::product(MatMap(g.data(), kk, oc), ConstMatMap(cols.data(), m, kk).transpose(), go, true);
      });
      detail::accumulate(px, [&](auto& g) {
        MatMap dcols(cols.data(), m, kk);
        detail::product(dcols, go, ConstMatMap(pw->value.data(), kk, oc).transpose(), false);
        detail::col2im_add(geom, cols.data(), r0, static_cast<std::size_t>(m), g.data());
      });
    }
  });
}

// --- losses --------------------------------------------------------------

inline Tensor mse(const Tensor& a, const Tensor& b) { return mean(square(sub(a, b))); }

// Mean negative log-likelihood of `targets` under softmax(logits).
inline Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets) {
  return scale(mean(gather_last(log_softmax(logits), targets)), -1.0);
}

// --- sampling ------------------------------------------------------------

// Draws a class index from one row of probabilities by inverse CDF.
inline int sample_categorical(const double* probs, int k, Rng& rng) {
  const double u = rng.uniform();
  double acc = 0.0;
  for (int j = 0; j < k; ++j) {
    acc += probs[j];
    if (u < acc) return j;
  }
  for (int j = k - 1; j >= 0; --j) {
    if (probs[j] > 0.0) return j;
  }
  return k - 1;
}

}  // namespace rollbox::nn

#endif  // ROLLBOX_NN_OPS_HPP_

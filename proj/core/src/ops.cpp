#include "dlab/ad/ops.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>

namespace dlab::ad {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using CMatMap = Eigen::Map<const RowMat<T>>;

template <typename T>
T* parent_grad(Node<T>& self, std::size_t i) {
  auto& p = self.parents[i];
  if (!p || !p->requires_grad) return nullptr;
  p->ensure_grad();
  return p->grad.data();
}

template <typename T>
const std::vector<T>& parent_value(Node<T>& self, std::size_t i) {
  return self.parents[i]->value;
}

void require(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

template <typename T>
void require_same(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  require(a.shape() == b.shape(), std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                      " vs " + shape_str(b.shape()));
}

template <typename T>
void require_rank(const Tensor<T>& a, std::size_t rank, const char* op) {
  require(a.rank() == rank, std::string(op) + ": expected rank " + std::to_string(rank) +
                                ", got " + shape_str(a.shape()));
}

// rows index (n, oy, ox); columns index (c, ky, kx)
template <typename T>
void im2col(const T* src, std::size_t n_img, std::size_t c_in, std::size_t h, std::size_t w,
            std::size_t kh, std::size_t kw, std::size_t stride, std::size_t oh, std::size_t ow,
            T* cols) {
  const std::size_t ckk = c_in * kh * kw;
  for (std::size_t n = 0; n < n_img; ++n)
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox) {
        T* dst = cols + ((n * oh + oy) * ow + ox) * ckk;
        for (std::size_t c = 0; c < c_in; ++c) {
          const T* plane = src + (n * c_in + c) * h * w;
          for (std::size_t ky = 0; ky < kh; ++ky) {
            const T* row = plane + (oy * stride + ky) * w + ox * stride;
            for (std::size_t kx = 0; kx < kw; ++kx) *dst++ = row[kx];
          }
        }
      }
}

template <typename T>
void col2im(const T* cols, std::size_t n_img, std::size_t c_in, std::size_t h, std::size_t w,
            std::size_t kh, std::size_t kw, std::size_t stride, std::size_t oh, std::size_t ow,
            T* dst) {
  const std::size_t ckk = c_in * kh * kw;
  for (std::size_t n = 0; n < n_img; ++n)
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox) {
        const T* src = cols + ((n * oh + oy) * ow + ox) * ckk;
        for (std::size_t c = 0; c < c_in; ++c) {
          T* plane = dst + (n * c_in + c) * h * w;
          for (std::size_t ky = 0; ky < kh; ++ky) {
            T* row = plane + (oy * stride + ky) * w + ox * stride;
            for (std::size_t kx = 0; kx < kw; ++kx) row[kx] += *src++;
          }
        }
      }
}

// y = f(x) with dy/dx expressed through (x, y).
template <typename T, typename F, typename D>
Tensor<T> unary(const Tensor<T>& a, F f, D df) {
  std::vector<T> out(a.numel());
  auto av = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(av[i]);
  return Tensor<T>::from_op(a.shape(), std::move(out), {a}, [df](Node<T>& self) {
    T* ga = parent_grad(self, 0);
    if (!ga) return;
    const auto& x = parent_value(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      ga[i] += self.grad[i] * df(x[i], self.value[i]);
  });
}

}  // namespace

std::size_t conv_out_size(std::size_t in, std::size_t kernel, std::size_t stride) {
  require(stride > 0, "stride must be positive");
  require(in >= kernel, "conv input " + std::to_string(in) + " smaller than kernel " +
                            std::to_string(kernel));
  return (in - kernel) / stride + 1;
}

std::size_t deconv_out_size(std::size_t in, std::size_t kernel, std::size_t stride) {
  require(stride > 0, "stride must be positive");
  return (in - 1) * stride + kernel;
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same(a, b, "add");
  std::vector<T> out(a.numel());
  auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  return Tensor<T>::from_op(a.shape(), std::move(out), {a, b}, [](Node<T>& self) {
    const auto& g = self.grad;
    if (T* ga = parent_grad(self, 0))
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    if (T* gb = parent_grad(self, 1))
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
  });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  require_same(a, b, "sub");
  std::vector<T> out(a.numel());
  auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  return Tensor<T>::from_op(a.shape(), std::move(out), {a, b}, [](Node<T>& self) {
    const auto& g = self.grad;
    if (T* ga = parent_grad(self, 0))
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    if (T* gb = parent_grad(self, 1))
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
  });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same(a, b, "mul");
  std::vector<T> out(a.numel());
  auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return Tensor<T>::from_op(a.shape(), std::move(out), {a, b}, [](Node<T>& self) {
    const auto& g = self.grad;
    const auto& x = parent_value(self, 0);
    const auto& y = parent_value(self, 1);
    if (T* ga = parent_grad(self, 0))
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i];
    if (T* gb = parent_grad(self, 1))
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * x[i];
  });
}

template <typename T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
  require_same(a, b, "div");
  std::vector<T> out(a.numel());
  auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] / bv[i];
  return Tensor<T>::from_op(a.shape(), std::move(out), {a, b}, [](Node<T>& self) {
    const auto& g = self.grad;
    const auto& x = parent_value(self, 0);
    const auto& y = parent_value(self, 1);
    if (T* ga = parent_grad(self, 0))
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / y[i];
    if (T* gb = parent_grad(self, 1))
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i] * x[i] / (y[i] * y[i]);
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T s) {
  return unary(a, [s](T x) { return x * s; }, [s](T, T) { return s; });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T s) {
  return unary(a, [s](T x) { return x + s; }, [](T, T) { return T(1); });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
  return unary(a, [](T x) { return x > T(0) ? x : T(0); },
               [](T x, T) { return x > T(0) ? T(1) : T(0); });
}

template <typename T>
Tensor<T> tanh(const Tensor<T>& a) {
  return unary(a, [](T x) { return std::tanh(x); }, [](T, T y) { return T(1) - y * y; });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a) {
  return unary(a, [](T x) { return T(1) / (T(1) + std::exp(-x)); },
               [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Tensor<T> log(const Tensor<T>& a) {
  return unary(a, [](T x) { return std::log(x); }, [](T x, T) { return T(1) / x; });
}

template <typename T>
Tensor<T> abs(const Tensor<T>& a) {
  return unary(a, [](T x) { return std::abs(x); },
               [](T x, T) { return x > T(0) ? T(1) : (x < T(0) ? T(-1) : T(0)); });
}

template <typename T>
Tensor<T> square(const Tensor<T>& a) {
  return unary(a, [](T x) { return x * x; }, [](T x, T) { return T(2) * x; });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  T total = T(0);
  for (T v : a.values()) total += v;
  return Tensor<T>::from_op(Shape{1}, std::vector<T>{total}, {a}, [](Node<T>& self) {
    T* ga = parent_grad(self, 0);
    if (!ga) return;
    const T g = self.grad[0];
    const std::size_t n = self.parents[0]->value.size();
    for (std::size_t i = 0; i < n; ++i) ga[i] += g;
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a) {
  return scale(sum(a), T(1) / static_cast<T>(a.numel()));
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  require(shape_numel(shape) == a.numel(),
          "reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  std::vector<T> out(a.values().begin(), a.values().end());
  return Tensor<T>::from_op(std::move(shape), std::move(out), {a}, [](Node<T>& self) {
    T* ga = parent_grad(self, 0);
    if (!ga) return;
    for (std::size_t i = 0; i < self.grad.size(); ++i) ga[i] += self.grad[i];
  });
}

template <typename T>
Tensor<T> row_sum(const Tensor<T>& a) {
  require_rank(a, 2, "row_sum");
  const std::size_t m = a.dim(0), k = a.dim(1);
  std::vector<T> out(m, T(0));
  auto av = a.values();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < k; ++j) out[i] += av[i * k + j];
  return Tensor<T>::from_op(Shape{m, 1}, std::move(out), {a}, [m, k](Node<T>& self) {
    T* ga = parent_grad(self, 0);
    if (!ga) return;
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < k; ++j) ga[i * k + j] += self.grad[i];
  });
}

template <typename T>
Tensor<T> sum_dim1(const Tensor<T>& a) {
  require_rank(a, 3, "sum_dim1");
  const std::size_t b = a.dim(0), r = a.dim(1), k = a.dim(2);
  std::vector<T> out(b * k, T(0));
  auto av = a.values();
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j < r; ++j)
      for (std::size_t c = 0; c < k; ++c) out[i * k + c] += av[(i * r + j) * k + c];
  return Tensor<T>::from_op(Shape{b, k}, std::move(out), {a}, [b, r, k](Node<T>& self) {
    T* ga = parent_grad(self, 0);
    if (!ga) return;
    for (std::size_t i = 0; i < b; ++i)
      for (std::size_t j = 0; j < r; ++j)
        for (std::size_t c = 0; c < k; ++c) ga[(i * r + j) * k + c] += self.grad[i * k + c];
  });
}

template <typename T>
Tensor<T> broadcast_cols(const Tensor<T>& a, std::size_t k) {
  require(a.rank() == 2 && a.dim(1) == 1,
          "broadcast_cols: expected [M,1], got " + shape_str(a.shape()));
  const std::size_t m = a.dim(0);
  std::vector<T> out(m * k);
  auto av = a.values();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < k; ++j) out[i * k + j] = av[i];
  return Tensor<T>::from_op(Shape{m, k}, std::move(out), {a}, [m, k](Node<T>& self) {
    T* ga = parent_grad(self, 0);
    if (!ga) return;
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < k; ++j) ga[i] += self.grad[i * k + j];
  });
}

template <typename T>
Tensor<T> repeat_rows(const Tensor<T>& a, std::size_t r) {
  require_rank(a, 2, "repeat_rows");
  require(r > 0, "repeat_rows: repeat count must be positive");
  const std::size_t m = a.dim(0), k = a.dim(1);
  std::vector<T> out(m * r * k);
  auto av = a.values();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t t = 0; t < r; ++t)
      std::copy_n(av.data() + i * k, k, out.data() + (i * r + t) * k);
  return Tensor<T>::from_op(Shape{m * r, k}, std::move(out), {a}, [m, r, k](Node<T>& self) {
    T* ga = parent_grad(self, 0);
    if (!ga) return;
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t t = 0; t < r; ++t)
        for (std::size_t j = 0; j < k; ++j) ga[i * k + j] += self.grad[(i * r + t) * k + j];
  });
}

template <typename T>
Tensor<T> slice_cols(const Tensor<T>& a, std::size_t begin, std::size_t end) {
  require_rank(a, 2, "slice_cols");
  const std::size_t m = a.dim(0), k = a.dim(1);
  require(begin < end && end <= k, "slice_cols: bad range [" + std::to_string(begin) + "," +
                                       std::to_string(end) + ") for " + shape_str(a.shape()));
  const std::size_t w = end - begin;
  std::vector<T> out(m * w);
  auto av = a.values();
  for (std::size_t i = 0; i < m; ++i)
    std::copy_n(av.data() + i * k + begin, w, out.data() + i * w);
  return Tensor<T>::from_op(Shape{m, w}, std::move(out), {a}, [m, k, w, begin](Node<T>& self) {
    T* ga = parent_grad(self, 0);
    if (!ga) return;
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < w; ++j) ga[i * k + begin + j] += self.grad[i * w + j];
  });
}

template <typename T>
Tensor<T> slice_rows(const Tensor<T>& a, std::size_t begin, std::size_t end) {
  require(a.rank() >= 1, "slice_rows: rank 0");
  const std::size_t m = a.dim(0);
  require(begin < end && end <= m, "slice_rows: bad range [" + std::to_string(begin) + "," +
                                       std::to_string(end) + ") for " + shape_str(a.shape()));
  const std::size_t row = a.numel() / m;
  Shape shape = a.shape();
  shape[0] = end - begin;
  std::vector<T> out(a.values().begin() + begin * row, a.values().begin() + end * row);
  return Tensor<T>::from_op(std::move(shape), std::move(out), {a}, [begin, row](Node<T>& self) {
    T* ga = parent_grad(self, 0);
    if (!ga) return;
    for (std::size_t i = 0; i < self.grad.size(); ++i) ga[begin * row + i] += self.grad[i];
  });
}

template <typename T>
Tensor<T> concat_cols(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank(a, 2, "concat_cols");
  require_rank(b, 2, "concat_cols");
  require(a.dim(0) == b.dim(0), "concat_cols: row mismatch " + shape_str(a.shape()) + " vs " +
                                    shape_str(b.shape()));
  const std::size_t m = a.dim(0), p = a.dim(1), q = b.dim(1);
  std::vector<T> out(m * (p + q));
  auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < m; ++i) {
    std::copy_n(av.data() + i * p, p, out.data() + i * (p + q));
    std::copy_n(bv.data() + i * q, q, out.data() + i * (p + q) + p);
  }
  return Tensor<T>::from_op(Shape{m, p + q}, std::move(out), {a, b}, [m, p, q](Node<T>& self) {
    if (T* ga = parent_grad(self, 0))
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < p; ++j) ga[i * p + j] += self.grad[i * (p + q) + j];
    if (T* gb = parent_grad(self, 1))
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < q; ++j) gb[i * q + j] += self.grad[i * (p + q) + p + j];
  });
}

template <typename T>
Tensor<T> concat_rows(const std::vector<Tensor<T>>& parts) {
  require(!parts.empty(), "concat_rows: no inputs");
  Shape shape = parts.front().shape();
  const std::size_t row = parts.front().numel() / shape[0];
  std::size_t rows = 0;
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    require(p.rank() == shape.size() && p.numel() / p.dim(0) == row,
            "concat_rows: incompatible " + shape_str(p.shape()) + " vs " + shape_str(shape));
    offsets.push_back(rows * row);
    rows += p.dim(0);
  }
  shape[0] = rows;
  std::vector<T> out;
  out.reserve(rows * row);
  for (const auto& p : parts) out.insert(out.end(), p.values().begin(), p.values().end());
  return Tensor<T>::from_op(std::move(shape), std::move(out), parts,
                            [offsets](Node<T>& self) {
                              for (std::size_t i = 0; i < offsets.size(); ++i) {
                                T* g = parent_grad(self, i);
                                if (!g) continue;
                                const std::size_t n = self.parents[i]->value.size();
                                for (std::size_t j = 0; j < n; ++j) g[j] += self.grad[offsets[i] + j];
                              }
                            });
}

template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& a) {
  require_rank(a, 2, "softmax_rows");
  const std::size_t m = a.dim(0), k = a.dim(1);
  std::vector<T> out(m * k);
  auto av = a.values();
  for (std::size_t i = 0; i < m; ++i) {
    const T* x = av.data() + i * k;
    T* y = out.data() + i * k;
    const T mx = *std::max_element(x, x + k);
    T z = T(0);
    for (std::size_t j = 0; j < k; ++j) z += (y[j] = std::exp(x[j] - mx));
    for (std::size_t j = 0; j < k; ++j) y[j] /= z;
  }
  return Tensor<T>::from_op(a.shape(), std::move(out), {a}, [m, k](Node<T>& self) {
    T* ga = parent_grad(self, 0);
    if (!ga) return;
    for (std::size_t i = 0; i < m; ++i) {
      const T* y = self.value.data() + i * k;
      const T* g = self.grad.data() + i * k;
      T dot = T(0);
      for (std::size_t j = 0; j < k; ++j) dot += g[j] * y[j];
      for (std::size_t j = 0; j < k; ++j) ga[i * k + j] += y[j] * (g[j] - dot);
    }
  });
}

template <typename T>
Tensor<T> log_softmax_rows(const Tensor<T>& a) {
  require_rank(a, 2, "log_softmax_rows");
  const std::size_t m = a.dim(0), k = a.dim(1);
  std::vector<T> out(m * k);
  auto av = a.values();
  for (std::size_t i = 0; i < m; ++i) {
    const T* x = av.data() + i * k;
    const T mx = *std::max_element(x, x + k);
    T z = T(0);
    for (std::size_t j = 0; j < k; ++j) z += std::exp(x[j] - mx);
    const T lse = mx + std::log(z);
    for (std::size_t j = 0; j < k; ++j) out[i * k + j] = x[j] - lse;
  }
  return Tensor<T>::from_op(a.shape(), std::move(out), {a}, [m, k](Node<T>& self) {
    T* ga = parent_grad(self, 0);
    if (!ga) return;
    for (std::size_t i = 0; i < m; ++i) {
      const T* y = self.value.data() + i * k;
      const T* g = self.grad.data() + i * k;
      T gsum = T(0);
      for (std::size_t j = 0; j < k; ++j) gsum += g[j];
      for (std::size_t j = 0; j < k; ++j) ga[i * k + j] += g[j] - std::exp(y[j]) * gsum;
    }
  });
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  require_rank(x, 2, "linear");
  require_rank(w, 2, "linear");
  require(x.dim(1) == w.dim(1), "linear: input " + shape_str(x.shape()) +
                                    " incompatible with weight " + shape_str(w.shape()));
  const bool has_bias = b.defined();
  if (has_bias)
    require(b.rank() == 1 && b.dim(0) == w.dim(0),
            "linear: bias " + shape_str(b.shape()) + " vs weight " + shape_str(w.shape()));
  const std::size_t n = x.dim(0), in = x.dim(1), out_dim = w.dim(0);
  std::vector<T> out(n * out_dim);
  MatMap<T> y(out.data(), n, out_dim);
  CMatMap<T> xm(x.values().data(), n, in);
  CMatMap<T> wm(w.values().data(), out_dim, in);
  y.noalias() = xm * wm.transpose();
  if (has_bias)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < out_dim; ++j) out[i * out_dim + j] += b.values()[j];
  std::vector<Tensor<T>> parents{x, w};
  if (has_bias) parents.push_back(b);
  return Tensor<T>::from_op(
      Shape{n, out_dim}, std::move(out), parents, [n, in, out_dim, has_bias](Node<T>& self) {
        CMatMap<T> gy(self.grad.data(), n, out_dim);
        if (T* gx = parent_grad(self, 0)) {
          CMatMap<T> wm(parent_value(self, 1).data(), out_dim, in);
          MatMap<T>(gx, n, in).noalias() += gy * wm;
        }
        if (T* gw = parent_grad(self, 1)) {
          CMatMap<T> xm(parent_value(self, 0).data(), n, in);
          MatMap<T>(gw, out_dim, in).noalias() += gy.transpose() * xm;
        }
        if (has_bias)
          if (T* gb = parent_grad(self, 2))
            for (std::size_t i = 0; i < n; ++i)
              for (std::size_t j = 0; j < out_dim; ++j) gb[j] += self.grad[i * out_dim + j];
      });
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, std::size_t stride) {
  require_rank(x, 4, "conv2d");
  require_rank(w, 4, "conv2d");
  require(x.dim(1) == w.dim(1), "conv2d: input " + shape_str(x.shape()) +
                                    " incompatible with filters " + shape_str(w.shape()));
  require(x.dim(2) >= w.dim(2) && x.dim(3) >= w.dim(3),
          "conv2d: input " + shape_str(x.shape()) + " smaller than filters " +
              shape_str(w.shape()));
  require(b.defined() && b.rank() == 1 && b.dim(0) == w.dim(0),
          "conv2d: bias must be [" + std::to_string(w.dim(0)) + "]");
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const std::size_t o = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  const std::size_t oh = conv_out_size(h, kh, stride), ow = conv_out_size(wd, kw, stride);
  const std::size_t p = oh * ow, ckk = c * kh * kw;

  std::vector<T> cols(n * p * ckk);
  im2col(x.values().data(), n, c, h, wd, kh, kw, stride, oh, ow, cols.data());
  std::vector<T> rows(n * p * o);
  MatMap<T>(rows.data(), n * p, o).noalias() =
      CMatMap<T>(cols.data(), n * p, ckk) * CMatMap<T>(w.values().data(), o, ckk).transpose();
  std::vector<T> out(n * o * p);
  auto bv = b.values();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t q = 0; q < p; ++q)
      for (std::size_t f = 0; f < o; ++f)
        out[(i * o + f) * p + q] = rows[(i * p + q) * o + f] + bv[f];

  return Tensor<T>::from_op(
      Shape{n, o, oh, ow}, std::move(out), {x, w, b},
      [cols = std::move(cols), n, c, h, wd, o, kh, kw, stride, oh, ow, p, ckk](Node<T>& self) {
        std::vector<T> grows(n * p * o);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t f = 0; f < o; ++f)
            for (std::size_t q = 0; q < p; ++q)
              grows[(i * p + q) * o + f] = self.grad[(i * o + f) * p + q];
        CMatMap<T> gr(grows.data(), n * p, o);
        if (T* gw = parent_grad(self, 1))
          MatMap<T>(gw, o, ckk).noalias() += gr.transpose() * CMatMap<T>(cols.data(), n * p, ckk);
        if (T* gb = parent_grad(self, 2))
          for (std::size_t r = 0; r < n * p; ++r)
            for (std::size_t f = 0; f < o; ++f) gb[f] += grows[r * o + f];
        if (T* gx = parent_grad(self, 0)) {
          std::vector<T> gcols(n * p * ckk);
          MatMap<T>(gcols.data(), n * p, ckk).noalias() =
              gr * CMatMap<T>(parent_value(self, 1).data(), o, ckk);
          col2im(gcols.data(), n, c, h, wd, kh, kw, stride, oh, ow, gx);
        }
      });
}

template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                           std::size_t stride) {
  require_rank(x, 4, "conv_transpose2d");
  require_rank(w, 4, "conv_transpose2d");
  require(x.dim(1) == w.dim(0), "conv_transpose2d: input " + shape_str(x.shape()) +
                                    " incompatible with filters " + shape_str(w.shape()));
  require(b.defined() && b.rank() == 1 && b.dim(0) == w.dim(1),
          "conv_transpose2d: bias must be [" + std::to_string(w.dim(1)) + "]");
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const std::size_t o = w.dim(1), kh = w.dim(2), kw = w.dim(3);
  const std::size_t oh = deconv_out_size(h, kh, stride), ow = deconv_out_size(wd, kw, stride);
  const std::size_t hw = h * wd, okk = o * kh * kw, op = oh * ow;

  std::vector<T> xrows(n * hw * c);
  auto xv = x.values();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t q = 0; q < hw; ++q) xrows[(i * hw + q) * c + ch] = xv[(i * c + ch) * hw + q];
  std::vector<T> cols(n * hw * okk);
  MatMap<T>(cols.data(), n * hw, okk).noalias() =
      CMatMap<T>(xrows.data(), n * hw, c) * CMatMap<T>(w.values().data(), c, okk);
  std::vector<T> out(n * o * op, T(0));
  col2im(cols.data(), n, o, oh, ow, kh, kw, stride, h, wd, out.data());
  auto bv = b.values();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t f = 0; f < o; ++f)
      for (std::size_t q = 0; q < op; ++q) out[(i * o + f) * op + q] += bv[f];

  return Tensor<T>::from_op(
      Shape{n, o, oh, ow}, std::move(out), {x, w, b},
      [xrows = std::move(xrows), n, c, h, wd, o, kh, kw, stride, oh, ow, hw, okk, op](
          Node<T>& self) {
        std::vector<T> gcols(n * hw * okk);
        im2col(self.grad.data(), n, o, oh, ow, kh, kw, stride, h, wd, gcols.data());
        CMatMap<T> gc(gcols.data(), n * hw, okk);
        if (T* gw = parent_grad(self, 1))
          MatMap<T>(gw, c, okk).noalias() += CMatMap<T>(xrows.data(), n * hw, c).transpose() * gc;
        if (T* gb = parent_grad(self, 2))
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t f = 0; f < o; ++f)
              for (std::size_t q = 0; q < op; ++q) gb[f] += self.grad[(i * o + f) * op + q];
        if (T* gx = parent_grad(self, 0)) {
          std::vector<T> gxrows(n * hw * c);
          MatMap<T>(gxrows.data(), n * hw, c).noalias() =
              gc * CMatMap<T>(parent_value(self, 1).data(), c, okk).transpose();
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t ch = 0; ch < c; ++ch)
              for (std::size_t q = 0; q < hw; ++q)
                gx[(i * c + ch) * hw + q] += gxrows[(i * hw + q) * c + ch];
        }
      });
}

#define DLAB_INSTANTIATE_OPS(T)                                                             \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                               \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                               \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                               \
  template Tensor<T> div(const Tensor<T>&, const Tensor<T>&);                               \
  template Tensor<T> scale(const Tensor<T>&, T);                                            \
  template Tensor<T> add_scalar(const Tensor<T>&, T);                                       \
  template Tensor<T> relu(const Tensor<T>&);                                                \
  template Tensor<T> tanh(const Tensor<T>&);                                                \
  template Tensor<T> sigmoid(const Tensor<T>&);                                             \
  template Tensor<T> log(const Tensor<T>&);                                                 \
  template Tensor<T> abs(const Tensor<T>&);                                                 \
  template Tensor<T> square(const Tensor<T>&);                                              \
  template Tensor<T> sum(const Tensor<T>&);                                                 \
  template Tensor<T> mean(const Tensor<T>&);                                                \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                      \
  template Tensor<T> row_sum(const Tensor<T>&);                                             \
  template Tensor<T> sum_dim1(const Tensor<T>&);                                            \
  template Tensor<T> broadcast_cols(const Tensor<T>&, std::size_t);                         \
  template Tensor<T> repeat_rows(const Tensor<T>&, std::size_t);                            \
  template Tensor<T> slice_cols(const Tensor<T>&, std::size_t, std::size_t);                \
  template Tensor<T> slice_rows(const Tensor<T>&, std::size_t, std::size_t);                \
  template Tensor<T> concat_cols(const Tensor<T>&, const Tensor<T>&);                       \
  template Tensor<T> concat_rows(const std::vector<Tensor<T>>&);                            \
  template Tensor<T> softmax_rows(const Tensor<T>&);                                        \
  template Tensor<T> log_softmax_rows(const Tensor<T>&);                                    \
  template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);          \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,           \
                            std::size_t);                                                   \
  template Tensor<T> conv_transpose2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, \
                                      std::size_t);

DLAB_INSTANTIATE_OPS(float)
DLAB_INSTANTIATE_OPS(double)

#undef DLAB_INSTANTIATE_OPS

}  // namespace dlab::ad

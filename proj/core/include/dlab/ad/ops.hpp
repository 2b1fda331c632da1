#pragma once

#include <cstddef>
#include <vector>

#include "dlab/ad/tensor.hpp"

// Differentiable operations. Binary elementwise ops require identical
// shapes; there is no implicit broadcasting.
namespace dlab::ad {

template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> scale(const Tensor<T>& a, T s);
template <typename T> Tensor<T> add_scalar(const Tensor<T>& a, T s);

template <typename T> Tensor<T> relu(const Tensor<T>& a);
template <typename T> Tensor<T> tanh(const Tensor<T>& a);
template <typename T> Tensor<T> sigmoid(const Tensor<T>& a);
template <typename T> Tensor<T> log(const Tensor<T>& a);
// d|x|/dx is taken as 0 at x = 0.
template <typename T> Tensor<T> abs(const Tensor<T>& a);
template <typename T> Tensor<T> square(const Tensor<T>& a);

template <typename T> Tensor<T> sum(const Tensor<T>& a);
template <typename T> Tensor<T> mean(const Tensor<T>& a);
template <typename T> Tensor<T> reshape(const Tensor<T>& a, Shape shape);

// [M,K] -> [M,1]
template <typename T> Tensor<T> row_sum(const Tensor<T>& a);
// [B,R,K] -> [B,K]
template <typename T> Tensor<T> sum_dim1(const Tensor<T>& a);
// [M,1] -> [M,K]
template <typename T> Tensor<T> broadcast_cols(const Tensor<T>& a, std::size_t k);
// [M,K] -> [M*r,K], each row repeated r times consecutively.
template <typename T> Tensor<T> repeat_rows(const Tensor<T>& a, std::size_t r);
template <typename T> Tensor<T> slice_cols(const Tensor<T>& a, std::size_t begin, std::size_t end);
template <typename T> Tensor<T> slice_rows(const Tensor<T>& a, std::size_t begin, std::size_t end);
template <typename T> Tensor<T> concat_cols(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> concat_rows(const std::vector<Tensor<T>>& parts);

// Row-wise softmax / log-softmax over the last dim of a [M,K] tensor.
template <typename T> Tensor<T> softmax_rows(const Tensor<T>& a);
template <typename T> Tensor<T> log_softmax_rows(const Tensor<T>& a);

// x:[N,in] w:[out,in] b:[out] (b may be undefined) -> [N,out]
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b);

// Valid (unpadded) convolution. x:[N,C,H,W] w:[O,C,kh,kw] b:[O]
// -> [N,O,(H-kh)/s+1,(W-kw)/s+1]
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, std::size_t stride);

// Adjoint of conv2d in its input. x:[N,C,H,W] w:[C,O,kh,kw] b:[O]
// -> [N,O,(H-1)s+kh,(W-1)s+kw]
template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                           std::size_t stride);

std::size_t conv_out_size(std::size_t in, std::size_t kernel, std::size_t stride);
std::size_t deconv_out_size(std::size_t in, std::size_t kernel, std::size_t stride);

}  // namespace dlab::ad

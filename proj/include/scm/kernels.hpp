#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "scm/tensor.hpp"

namespace scm {

using IndexList = std::vector<std::size_t>;

// Execution policy. Kernels run through OpenMP unless a SerialExecution scope
// is active on the calling thread. Both paths use the same per-element
// reduction order, so their results are bit-identical.
bool serial_execution() noexcept;

class SerialExecution {
 public:
  SerialExecution() noexcept;
  ~SerialExecution();
  SerialExecution(const SerialExecution&) = delete;
  SerialExecution& operator=(const SerialExecution&) = delete;

 private:
  bool previous_;
};

namespace kernels {

// c[m,n] = a[m,k] * b[k,n], all row-major. c is overwritten.
namespace serial {
void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
            std::size_t k, std::size_t n);
void softmax_rows(std::span<double> x, std::size_t rows, std::size_t n);
void gelu(std::span<double> x);
}  // namespace serial

namespace parallel {
void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
            std::size_t k, std::size_t n);
void softmax_rows(std::span<double> x, std::size_t rows, std::size_t n);
void gelu(std::span<double> x);
}  // namespace parallel

// Dispatch on the thread's execution policy.
void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
            std::size_t k, std::size_t n);
void softmax_rows(std::span<double> x, std::size_t rows, std::size_t n);
void gelu(std::span<double> x);

double gelu(double x) noexcept;

}  // namespace kernels

/// a[m,k] * b[k,n]. Charges 2mnk FLOPs to the active counters.
Tensor matmul(const Tensor& a, const Tensor& b);

/// Product of every row of `a` (viewed as [size/k, k]) with b[k,n]; keeps the
/// leading axes of `a` and replaces the last one with n.
Tensor matmul_rows(const Tensor& a, const Tensor& b);

/// Max-subtracted softmax along the last axis. Charges one FLOP per exp.
Tensor softmax_last(const Tensor& x);

/// Cosine of the flattened tensors. Throws DegenerateInputError on a
/// zero-norm operand.
double cosine(const Tensor& a, const Tensor& b);

/// Indices of the k largest scores, ascending. Ties go to the lower index.
IndexList topk_indices(std::span<const double> scores, std::size_t k);
IndexList topk_indices(const Tensor& scores, std::size_t k);

/// x has shape [..., H, W, C]; returns [..., K, C] holding the flattened
/// (h, w) positions listed in `indices` (strictly increasing, < H*W).
Tensor gather_tokens(const Tensor& x, const IndexList& indices);

/// Inverse of gather_tokens: positions in `indices` come from `computed`
/// ([..., K, C]), every other position from `cached` ([..., H, W, C]).
Tensor scatter_refill(const Tensor& computed, const Tensor& cached, const IndexList& indices);

/// 10*log10(peak^2 / MSE) with peak = max(max|a|, 1). Infinity when a == b.
double psnr(const Tensor& a, const Tensor& b);

/// Complement of a strictly increasing index list within [0, n).
IndexList complement(const IndexList& indices, std::size_t n);

}  // namespace scm

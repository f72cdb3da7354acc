#include "scm/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "scm/cost.hpp"
#include "scm/error.hpp"

namespace scm {

namespace {
thread_local bool t_serial = false;
}  // namespace

bool serial_execution() noexcept { return t_serial; }
SerialExecution::SerialExecution() noexcept : previous_(t_serial) { t_serial = true; }
SerialExecution::~SerialExecution() { t_serial = previous_; }

namespace kernels {

namespace {

// One output row. The accumulation order over k is fixed (ascending), which
// is what makes the serial and parallel paths agree bit for bit.
inline void matmul_row(const double* __restrict arow, const double* __restrict b, double* __restrict crow,
                       std::size_t k, std::size_t n) {
  std::fill(crow, crow + n, 0.0);
  for (std::size_t p = 0; p < k; ++p) {
    const double aip = arow[p];
    const double* brow = b + p * n;
    for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
  }
}

inline void softmax_row(double* x, std::size_t n) {
  double mx = x[0];
  for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, x[j]);
  double sum = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    x[j] = std::exp(x[j] - mx);
    sum += x[j];
  }
  const double inv = 1.0 / sum;
  for (std::size_t j = 0; j < n; ++j) x[j] *= inv;
}

}  // namespace

double gelu(double x) noexcept { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

namespace serial {

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
            std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) matmul_row(a.data() + i * k, b.data(), c.data() + i * n, k, n);
}

void softmax_rows(std::span<double> x, std::size_t rows, std::size_t n) {
  for (std::size_t r = 0; r < rows; ++r) softmax_row(x.data() + r * n, n);
}

void gelu(std::span<double> x) {
  for (auto& v : x) v = kernels::gelu(v);
}

}  // namespace serial

namespace parallel {

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
            std::size_t k, std::size_t n) {
  const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < rows; ++i) {
    matmul_row(a.data() + i * k, b.data(), c.data() + i * n, k, n);
  }
}

void softmax_rows(std::span<double> x, std::size_t rows, std::size_t n) {
  const auto r = static_cast<std::ptrdiff_t>(rows);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < r; ++i) softmax_row(x.data() + i * n, n);
}

void gelu(std::span<double> x) {
  const auto n = static_cast<std::ptrdiff_t>(x.size());
  double* p = x.data();
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) p[i] = kernels::gelu(p[i]);
}

}  // namespace parallel

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
            std::size_t k, std::size_t n) {
  if (serial_execution()) {
    serial::matmul(a, b, c, m, k, n);
  } else {
    parallel::matmul(a, b, c, m, k, n);
  }
}

void softmax_rows(std::span<double> x, std::size_t rows, std::size_t n) {
  if (serial_execution()) {
    serial::softmax_rows(x, rows, n);
  } else {
    parallel::softmax_rows(x, rows, n);
  }
}

void gelu(std::span<double> x) {
  if (serial_execution()) {
    serial::gelu(x);
  } else {
    parallel::gelu(x);
  }
}

}  // namespace kernels

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2) throw DimensionError("matmul expects two matrices");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul inner axes disagree: " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
  }
  Tensor c({m, n});
  kernels::matmul(a.values(), b.values(), c.values(), m, k, n);
  count_flops(2ull * m * n * k);
  return c;
}

Tensor matmul_rows(const Tensor& a, const Tensor& b) {
  if (b.rank() != 2) throw DimensionError("matmul_rows expects a matrix on the right");
  const std::size_t k = a.shape().back();
  if (b.dim(0) != k) {
    throw DimensionError("matmul_rows inner axes disagree: " + shape_string(a.shape()) + " x " +
                         shape_string(b.shape()));
  }
  const std::size_t n = b.dim(1);
  const std::size_t m = a.size() / k;
  Shape out_shape = a.shape();
  out_shape.back() = n;
  Tensor c(out_shape);
  kernels::matmul(a.values(), b.values(), c.values(), m, k, n);
  count_flops(2ull * m * n * k);
  return c;
}

Tensor softmax_last(const Tensor& x) {
  Tensor y = x;
  const std::size_t n = x.shape().back();
  kernels::softmax_rows(y.values(), x.size() / n, n);
  count_flops(x.size());
  return y;
}

double cosine(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("cosine: " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) throw DegenerateInputError("cosine of a zero-norm tensor");
  const double c = dot / (std::sqrt(na) * std::sqrt(nb));
  return std::clamp(c, -1.0, 1.0);
}

IndexList topk_indices(std::span<const double> scores, std::size_t k) {
  const std::size_t n = scores.size();
  if (k < 1 || k > n) {
    throw ParameterError("topk: k=" + std::to_string(k) + " outside [1, " + std::to_string(n) + "]");
  }
  IndexList order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto better = [&](std::size_t i, std::size_t j) {
    return scores[i] > scores[j] || (scores[i] == scores[j] && i < j);
  };
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(), better);
  order.resize(k);
  std::sort(order.begin(), order.end());
  return order;
}

IndexList topk_indices(const Tensor& scores, std::size_t k) { return topk_indices(scores.values(), k); }

namespace {

struct SpatialLayout {
  std::size_t outer;     // product of leading axes
  std::size_t positions; // H*W
  std::size_t channels;  // C
};

SpatialLayout spatial_layout(const Tensor& x) {
  if (x.rank() < 3) throw ShapeError("expected [..., H, W, C], got " + shape_string(x.shape()));
  const auto& s = x.shape();
  const std::size_t c = s[s.size() - 1];
  const std::size_t l = s[s.size() - 2] * s[s.size() - 3];
  return {x.size() / (l * c), l, c};
}

void check_indices(const IndexList& indices, std::size_t positions) {
  if (indices.empty()) throw IndexError("empty index list");
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= positions) {
      throw IndexError("index " + std::to_string(indices[i]) + " out of range [0, " + std::to_string(positions) + ")");
    }
    if (i && indices[i] <= indices[i - 1]) throw IndexError("indices must be strictly increasing");
  }
}

}  // namespace

Tensor gather_tokens(const Tensor& x, const IndexList& indices) {
  const auto lay = spatial_layout(x);
  check_indices(indices, lay.positions);
  const std::size_t k = indices.size();
  Shape out_shape(x.shape().begin(), x.shape().end() - 3);
  out_shape.push_back(k);
  out_shape.push_back(lay.channels);
  Tensor out(out_shape);
  for (std::size_t o = 0; o < lay.outer; ++o) {
    const double* src = x.data() + o * lay.positions * lay.channels;
    double* dst = out.data() + o * k * lay.channels;
    for (std::size_t j = 0; j < k; ++j) {
      std::copy_n(src + indices[j] * lay.channels, lay.channels, dst + j * lay.channels);
    }
  }
  return out;
}

Tensor scatter_refill(const Tensor& computed, const Tensor& cached, const IndexList& indices) {
  const auto lay = spatial_layout(cached);
  check_indices(indices, lay.positions);
  const std::size_t k = indices.size();
  Shape expect(cached.shape().begin(), cached.shape().end() - 3);
  expect.push_back(k);
  expect.push_back(lay.channels);
  if (computed.shape() != expect) {
    throw ShapeError("scatter_refill: computed " + shape_string(computed.shape()) + " does not cover " +
                     std::to_string(k) + " positions of " + shape_string(cached.shape()));
  }
  Tensor out = cached;
  for (std::size_t o = 0; o < lay.outer; ++o) {
    const double* src = computed.data() + o * k * lay.channels;
    double* dst = out.data() + o * lay.positions * lay.channels;
    for (std::size_t j = 0; j < k; ++j) {
      std::copy_n(src + j * lay.channels, lay.channels, dst + indices[j] * lay.channels);
    }
  }
  return out;
}

double psnr(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw ShapeError("psnr: " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  double se = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    se += d * d;
  }
  if (se == 0.0) return std::numeric_limits<double>::infinity();
  const double mse = se / static_cast<double>(a.size());
  const double peak = std::max(max_abs(a), 1.0);
  return 10.0 * std::log10(peak * peak / mse);
}

IndexList complement(const IndexList& indices, std::size_t n) {
  IndexList out;
  out.reserve(n - std::min(n, indices.size()));
  std::size_t j = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (j < indices.size() && indices[j] == i) {
      ++j;
    } else {
      out.push_back(i);
    }
  }
  return out;
}

}  // namespace scm

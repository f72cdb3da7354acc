#pragma once

#include <cstddef>

#include "scm/tensor.hpp"

namespace scm {

struct LatentDims {
  std::size_t frames = 1;
  std::size_t views = 1;
  std::size_t height = 1;
  std::size_t width = 1;
  std::size_t channels = 1;

  std::size_t positions() const noexcept { return height * width; }
  std::size_t tokens() const noexcept { return frames * views * height * width; }
  std::size_t elements() const noexcept { return tokens() * channels; }
  Shape shape() const { return {frames, views, height, width, channels}; }

  friend bool operator==(const LatentDims&, const LatentDims&) = default;
};

/// Latent Z with layout [F, V, H, W, C].
class LatentTensor {
 public:
  LatentTensor() = default;
  explicit LatentTensor(Tensor data);
  explicit LatentTensor(const LatentDims& dims, double fill = 0.0);

  LatentDims dims() const;
  const Tensor& tensor() const noexcept { return data_; }
  Tensor& tensor() noexcept { return data_; }

  friend bool operator==(const LatentTensor&, const LatentTensor&) = default;

 private:
  Tensor data_;
};

/// Conditioning priors: one context token per attended-axis position, plus
/// the per-view trajectory embedding added to camera-block queries.
struct PriorSet {
  Tensor spatial;         // k_s [F, V, 1, C]
  Tensor camera;          // k_c [F, H, W, C]
  Tensor motion;          // k_m [V, H, W, C]
  Tensor view_embedding;  // [V, C]; empty when the trajectory is not used

  void validate(const LatentDims& dims) const;
};

}  // namespace scm

#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "scm/attention.hpp"
#include "scm/kernels.hpp"
#include "scm/rng.hpp"
#include "scm/rolling_cache.hpp"

namespace scm {

/// Selected spatial positions (flattened h*W + w) for the pruned camera
/// (one list per frame) and motion (one list per view) blocks.
struct TokenIndexSet {
  std::vector<IndexList> camera;           // I_c, F lists of length k
  std::vector<IndexList> motion;           // I_m, V lists of length k
  std::vector<IndexList> camera_pruned;    // complement of I_c
  std::vector<IndexList> motion_pruned;    // complement of I_m
  std::size_t k = 0;
  double ratio = 1.0;
};

/// Number of kept positions. Token reading: ceil(ratio*H*W). Per-axis
/// reading: ceil(ratio*H) * ceil(ratio*W).
std::size_t kept_tokens(std::size_t height, std::size_t width, double ratio, bool per_axis = false);

TokenIndexSet identify_tokens(const SemanticMap& q_s, double ratio, bool per_axis = false);

/// Ablation: k distinct uniformly drawn positions per list, sorted.
TokenIndexSet random_tokens(const LatentDims& dims, double ratio, bool per_axis, Rng& rng);

// The refill tensor is the cached attention for cache refill, or zeros for
// the zero-refill ablation.
BlockOutput pruned_camera_forward(const LatentTensor& z_s, const Tensor& k_c, const BlockParams& p, std::size_t heads,
                                  const TokenIndexSet& idx, const Tensor& refill,
                                  const Tensor& view_embedding = {});
BlockOutput pruned_motion_forward(const LatentTensor& z_c, const Tensor& k_m, const BlockParams& p, std::size_t heads,
                                  const TokenIndexSet& idx, const Tensor& refill);

enum class IndexPolicy { Semantic, Random };
enum class RefillPolicy { Cache, Zero };

struct PruneOptions {
  double ratio = 0.2;
  bool per_axis = false;
  IndexPolicy policy = IndexPolicy::Semantic;
  RefillPolicy refill = RefillPolicy::Cache;
};

struct PrunedChainResult {
  LatentTensor out;
  TokenIndexSet indices;
  std::array<double, 3> similarity{};  // spatial, camera, motion
};

/// Dense spatial block, then camera and motion on the selected tokens with
/// the rest refilled from the cache. Logs similarities against the cached
/// entries and replaces them with this step's attention outputs.
/// `rng` is only drawn from under IndexPolicy::Random.
PrunedChainResult pruned_chain_forward(const LatentTensor& z, const PriorSet& priors, const BlockWeights& w,
                                       const PruneOptions& options, RollingCache& cache, std::size_t layer,
                                       std::size_t step, Rng* rng = nullptr);

}  // namespace scm

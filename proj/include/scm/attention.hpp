#pragma once

#include <array>
#include <cstdint>
#include <optional>

#include "scm/latent.hpp"
#include "scm/tensor.hpp"

namespace scm {

enum class BlockKind : std::uint8_t { Spatial = 0, Camera = 1, Motion = 2 };

const char* block_name(BlockKind kind) noexcept;
inline constexpr std::array<BlockKind, 3> kBlockOrder{BlockKind::Spatial, BlockKind::Camera, BlockKind::Motion};

// Row-vector convention throughout: q = x * query.
struct ProjectionWeights {
  Tensor query;   // [C, C]
  Tensor key;     // [C, C]
  Tensor value;   // [C, C]
  Tensor output;  // [C, C]
};

struct FfnWeights {
  Tensor up;    // [C, 2C]
  Tensor down;  // [2C, C]
};

struct BlockParams {
  ProjectionWeights attention;
  FfnWeights ffn;
};

/// Parameters of one SCM chain (spatial, camera, motion blocks).
struct BlockWeights {
  BlockParams spatial;
  BlockParams camera;
  BlockParams motion;
  std::size_t heads = 2;

  const BlockParams& block(BlockKind kind) const noexcept;
  std::size_t channels() const noexcept { return spatial.attention.query.dim(0); }
};

struct SemanticMap {
  Tensor weights;  // Q_s [F, V, H, W], each entry in (0, 1)
};

struct BlockOutput {
  LatentTensor out;
  Tensor attention;  // pre-FFN attention result, latent shape
  std::optional<SemanticMap> semantic;
};

struct AxisAttentionResult {
  Tensor out;           // [B, n, C]
  Tensor prior_weight;  // [B, n]
};

/// Multi-head attention of each length-n sequence over its own tokens plus
/// one appended prior token (n + 1 keys). `query_offset` ([n, C]), when
/// given, is added to the query inputs only.
AxisAttentionResult axis_attention(const Tensor& sequences, const Tensor& prior_tokens,
                                   const ProjectionWeights& w, std::size_t heads,
                                   const Tensor* query_offset = nullptr);

/// Exact FLOPs charged by one axis_attention call.
std::uint64_t axis_attention_flops(std::size_t batch, std::size_t n, std::size_t channels, std::size_t heads);

/// Two-layer C -> 2C -> C map with exact (erf) GELU in between.
Tensor ffn(const Tensor& x, const FfnWeights& w);

// out = FFN(z + a). Shared by the dense, pruned and reuse paths.
LatentTensor block_from_attention(const LatentTensor& z, const Tensor& attention, const FfnWeights& w);

BlockOutput spatial_forward(const LatentTensor& z, const Tensor& k_s, const BlockParams& p, std::size_t heads);
BlockOutput camera_forward(const LatentTensor& z, const Tensor& k_c, const BlockParams& p, std::size_t heads,
                           const Tensor& view_embedding = {});
BlockOutput motion_forward(const LatentTensor& z, const Tensor& k_m, const BlockParams& p, std::size_t heads);

struct ChainOutput {
  LatentTensor out;
  std::array<BlockOutput, 3> blocks;  // spatial, camera, motion
};

/// motion(camera(spatial(z))), keeping every block's attention for caching.
ChainOutput chain_forward(const LatentTensor& z, const PriorSet& priors, const BlockWeights& w);

/// The chain with every attention replaced by a supplied tensor.
LatentTensor chain_from_attention(const LatentTensor& z, const std::array<const Tensor*, 3>& attention,
                                  const BlockWeights& w);

// Axis layouts. Camera sequences run along V for each (f, h, w); motion
// sequences along F for each (v, h, w).
Tensor to_camera_sequences(const Tensor& z);            // [F,V,H,W,C] -> [F*H*W, V, C]
Tensor from_camera_sequences(const Tensor& s, const LatentDims& d);
Tensor to_motion_sequences(const Tensor& z);            // [F,V,H,W,C] -> [V*H*W, F, C]
Tensor from_motion_sequences(const Tensor& s, const LatentDims& d);

}  // namespace scm

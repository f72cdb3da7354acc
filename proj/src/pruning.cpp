#include "scm/pruning.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "scm/error.hpp"

namespace scm {

namespace {

std::size_t ceil_fraction(double ratio, std::size_t n) {
  // The epsilon absorbs representation error, e.g. 0.6 * 5 = 3.0000000000000004.
  const double raw = std::ceil(ratio * static_cast<double>(n) - 1e-9);
  return std::clamp<std::size_t>(static_cast<std::size_t>(std::max(raw, 1.0)), 1, n);
}

void check_ratio(double ratio) {
  if (!(ratio > 0.0 && ratio <= 1.0)) throw ParameterError("top-k ratio must lie in (0, 1], got " + std::to_string(ratio));
}

TokenIndexSet with_complements(TokenIndexSet s, std::size_t positions) {
  for (const auto& l : s.camera) s.camera_pruned.push_back(complement(l, positions));
  for (const auto& l : s.motion) s.motion_pruned.push_back(complement(l, positions));
  return s;
}

// Sub-tensor [V, H, W, C] of frame f.
Tensor frame_slice(const Tensor& z, std::size_t f) {
  const std::size_t stride = z.size() / z.dim(0);
  Shape s(z.shape().begin() + 1, z.shape().end());
  return Tensor(std::move(s), std::vector<double>(z.data() + f * stride, z.data() + (f + 1) * stride));
}

// Sub-tensor [F, H, W, C] of view v.
Tensor view_slice(const Tensor& z, std::size_t v) {
  const std::size_t frames = z.dim(0), views = z.dim(1);
  const std::size_t block = z.size() / (frames * views);
  Tensor out({frames, z.dim(2), z.dim(3), z.dim(4)});
  for (std::size_t f = 0; f < frames; ++f) {
    std::copy_n(z.data() + (f * views + v) * block, block, out.data() + f * block);
  }
  return out;
}

void check_refill(const Tensor& refill, const LatentDims& d) {
  if (refill.shape() != d.shape()) {
    throw ShapeError("refill tensor " + shape_string(refill.shape()) + " does not match latent " +
                     shape_string(d.shape()));
  }
}

}  // namespace

std::size_t kept_tokens(std::size_t height, std::size_t width, double ratio, bool per_axis) {
  check_ratio(ratio);
  if (per_axis) return ceil_fraction(ratio, height) * ceil_fraction(ratio, width);
  return ceil_fraction(ratio, height * width);
}

TokenIndexSet identify_tokens(const SemanticMap& q_s, double ratio, bool per_axis) {
  const Tensor& q = q_s.weights;
  if (q.rank() != 4) throw ShapeError("semantic map must be [F,V,H,W]");
  const std::size_t frames = q.dim(0), views = q.dim(1), l = q.dim(2) * q.dim(3);
  TokenIndexSet s;
  s.ratio = ratio;
  s.k = kept_tokens(q.dim(2), q.dim(3), ratio, per_axis);

  std::vector<double> mean(l);
  for (std::size_t f = 0; f < frames; ++f) {
    std::fill(mean.begin(), mean.end(), 0.0);
    for (std::size_t v = 0; v < views; ++v) {
      const double* row = q.data() + (f * views + v) * l;
      for (std::size_t p = 0; p < l; ++p) mean[p] += row[p];
    }
    for (auto& m : mean) m /= static_cast<double>(views);
    s.camera.push_back(topk_indices(mean, s.k));
  }
  for (std::size_t v = 0; v < views; ++v) {
    std::fill(mean.begin(), mean.end(), 0.0);
    for (std::size_t f = 0; f < frames; ++f) {
      const double* row = q.data() + (f * views + v) * l;
      for (std::size_t p = 0; p < l; ++p) mean[p] += row[p];
    }
    for (auto& m : mean) m /= static_cast<double>(frames);
    s.motion.push_back(topk_indices(mean, s.k));
  }
  return with_complements(std::move(s), l);
}

TokenIndexSet random_tokens(const LatentDims& d, double ratio, bool per_axis, Rng& rng) {
  TokenIndexSet s;
  s.ratio = ratio;
  s.k = kept_tokens(d.height, d.width, ratio, per_axis);
  const std::size_t l = d.positions();
  auto draw = [&] {
    IndexList pool(l);
    std::iota(pool.begin(), pool.end(), std::size_t{0});
    for (std::size_t i = 0; i < s.k; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng.uniform_index(l - i));
      std::swap(pool[i], pool[j]);
    }
    pool.resize(s.k);
    std::sort(pool.begin(), pool.end());
    return pool;
  };
  for (std::size_t f = 0; f < d.frames; ++f) s.camera.push_back(draw());
  for (std::size_t v = 0; v < d.views; ++v) s.motion.push_back(draw());
  return with_complements(std::move(s), l);
}

BlockOutput pruned_camera_forward(const LatentTensor& z_s, const Tensor& k_c, const BlockParams& p, std::size_t heads,
                                  const TokenIndexSet& idx, const Tensor& refill, const Tensor& view_embedding) {
  const LatentDims d = z_s.dims();
  check_refill(refill, d);
  if (idx.camera.size() != d.frames) throw ShapeError("camera index set has wrong frame count");
  const std::size_t k = idx.k, c = d.channels, views = d.views;

  Tensor sequences({d.frames * k, views, c});
  Tensor priors({d.frames * k, 1, c});
  for (std::size_t f = 0; f < d.frames; ++f) {
    const Tensor g = gather_tokens(frame_slice(z_s.tensor(), f), idx.camera[f]);  // [V, K, C]
    for (std::size_t v = 0; v < views; ++v)
      for (std::size_t j = 0; j < k; ++j) {
        std::copy_n(g.data() + (v * k + j) * c, c, sequences.data() + ((f * k + j) * views + v) * c);
      }
    const Tensor pk = gather_tokens(frame_slice(k_c, f), idx.camera[f]);  // [K, C]
    std::copy_n(pk.data(), k * c, priors.data() + f * k * c);
  }

  auto r = axis_attention(sequences, priors, p.attention, heads, view_embedding.empty() ? nullptr : &view_embedding);

  BlockOutput out;
  out.attention = Tensor(d.shape());
  const std::size_t frame_stride = views * d.positions() * c;
  for (std::size_t f = 0; f < d.frames; ++f) {
    Tensor computed({views, k, c});
    for (std::size_t v = 0; v < views; ++v)
      for (std::size_t j = 0; j < k; ++j) {
        std::copy_n(r.out.data() + ((f * k + j) * views + v) * c, c, computed.data() + (v * k + j) * c);
      }
    const Tensor full = scatter_refill(computed, frame_slice(refill, f), idx.camera[f]);
    std::copy_n(full.data(), frame_stride, out.attention.data() + f * frame_stride);
  }
  out.out = block_from_attention(z_s, out.attention, p.ffn);
  return out;
}

BlockOutput pruned_motion_forward(const LatentTensor& z_c, const Tensor& k_m, const BlockParams& p, std::size_t heads,
                                  const TokenIndexSet& idx, const Tensor& refill) {
  const LatentDims d = z_c.dims();
  check_refill(refill, d);
  if (idx.motion.size() != d.views) throw ShapeError("motion index set has wrong view count");
  const std::size_t k = idx.k, c = d.channels, frames = d.frames;

  Tensor sequences({d.views * k, frames, c});
  Tensor priors({d.views * k, 1, c});
  for (std::size_t v = 0; v < d.views; ++v) {
    const Tensor g = gather_tokens(view_slice(z_c.tensor(), v), idx.motion[v]);  // [F, K, C]
    for (std::size_t f = 0; f < frames; ++f)
      for (std::size_t j = 0; j < k; ++j) {
        std::copy_n(g.data() + (f * k + j) * c, c, sequences.data() + ((v * k + j) * frames + f) * c);
      }
    const Tensor pk = gather_tokens(frame_slice(k_m, v), idx.motion[v]);  // [K, C]
    std::copy_n(pk.data(), k * c, priors.data() + v * k * c);
  }

  auto r = axis_attention(sequences, priors, p.attention, heads);

  BlockOutput out;
  out.attention = Tensor(d.shape());
  const std::size_t block = d.positions() * c;
  for (std::size_t v = 0; v < d.views; ++v) {
    Tensor computed({frames, k, c});
    for (std::size_t f = 0; f < frames; ++f)
      for (std::size_t j = 0; j < k; ++j) {
        std::copy_n(r.out.data() + ((v * k + j) * frames + f) * c, c, computed.data() + (f * k + j) * c);
      }
    const Tensor full = scatter_refill(computed, view_slice(refill, v), idx.motion[v]);
    for (std::size_t f = 0; f < frames; ++f) {
      std::copy_n(full.data() + f * block, block, out.attention.data() + (f * d.views + v) * block);
    }
  }
  out.out = block_from_attention(z_c, out.attention, p.ffn);
  return out;
}

PrunedChainResult pruned_chain_forward(const LatentTensor& z, const PriorSet& priors, const BlockWeights& w,
                                       const PruneOptions& options, RollingCache& cache, std::size_t layer,
                                       std::size_t step, Rng* rng) {
  if (!cache.full(layer)) {
    throw ProtocolError("pruned step " + std::to_string(step) + " on layer " + std::to_string(layer) +
                        " needs a full cache entry set");
  }
  const LatentDims d = z.dims();
  priors.validate(d);

  BlockOutput spatial = spatial_forward(z, priors.spatial, w.spatial, w.heads);

  PrunedChainResult result;
  if (options.policy == IndexPolicy::Semantic) {
    result.indices = identify_tokens(*spatial.semantic, options.ratio, options.per_axis);
  } else {
    if (!rng) throw ParameterError("random index policy needs an Rng");
    result.indices = random_tokens(d, options.ratio, options.per_axis, *rng);
  }

  const Tensor zeros = options.refill == RefillPolicy::Zero ? Tensor(d.shape()) : Tensor{};
  const Tensor& refill_c = options.refill == RefillPolicy::Zero ? zeros : cache.peek(layer, BlockKind::Camera).value;
  BlockOutput camera =
      pruned_camera_forward(spatial.out, priors.camera, w.camera, w.heads, result.indices, refill_c,
                            priors.view_embedding);
  const Tensor& refill_m = options.refill == RefillPolicy::Zero ? zeros : cache.peek(layer, BlockKind::Motion).value;
  BlockOutput motion = pruned_motion_forward(camera.out, priors.motion, w.motion, w.heads, result.indices, refill_m);

  result.similarity[0] = cache.record_similarity(layer, BlockKind::Spatial, spatial.attention, step);
  result.similarity[1] = cache.record_similarity(layer, BlockKind::Camera, camera.attention, step);
  result.similarity[2] = cache.record_similarity(layer, BlockKind::Motion, motion.attention, step);

  cache.release(layer);
  cache.store(layer, std::move(spatial.attention), std::move(camera.attention), std::move(motion.attention), step);
  result.out = std::move(motion.out);
  return result;
}

}  // namespace scm

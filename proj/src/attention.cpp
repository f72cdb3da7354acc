#include "scm/attention.hpp"

#include <cmath>
#include <vector>

#include "scm/cost.hpp"
#include "scm/error.hpp"
#include "scm/kernels.hpp"

namespace scm {

const char* block_name(BlockKind kind) noexcept {
  switch (kind) {
    case BlockKind::Spatial: return "spatial";
    case BlockKind::Camera: return "camera";
    case BlockKind::Motion: return "motion";
  }
  return "?";
}

const BlockParams& BlockWeights::block(BlockKind kind) const noexcept {
  switch (kind) {
    case BlockKind::Spatial: return spatial;
    case BlockKind::Camera: return camera;
    case BlockKind::Motion: return motion;
  }
  return spatial;
}

std::uint64_t axis_attention_flops(std::size_t batch, std::size_t n, std::size_t c, std::size_t heads) {
  const std::uint64_t b = batch, nn = n, cc = c;
  const std::uint64_t keys = nn + 1;
  return 8 * b * nn * cc * cc      // q, k, v, output projections of the tokens
         + 4 * b * cc * cc         // k, v projections of the prior token
         + 4 * b * nn * keys * cc  // scores and weighted values, summed over heads
         + b * heads * nn * keys;  // softmax exponentials
}

namespace {

struct SequenceView {
  const double* q;        // [n, C]
  const double* k;        // [n, C]
  const double* v;        // [n, C]
  const double* prior_k;  // [C]
  const double* prior_v;  // [C]
  double* head_out;       // [n, C]
  double* prior_weight;   // [n]
};

// One sequence, all heads. Scratch holds the [n, n+1] weight matrix.
void attend_sequence(const SequenceView& s, std::size_t n, std::size_t c, std::size_t heads,
                     std::vector<double>& scratch) {
  const std::size_t dh = c / heads;
  const std::size_t keys = n + 1;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  scratch.resize(n * keys);
  for (std::size_t i = 0; i < n; ++i) s.prior_weight[i] = 0.0;
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t off = h * dh;
    for (std::size_t i = 0; i < n; ++i) {
      const double* qi = s.q + i * c + off;
      double* row = scratch.data() + i * keys;
      for (std::size_t j = 0; j < n; ++j) {
        const double* kj = s.k + j * c + off;
        double acc = 0.0;
        for (std::size_t d = 0; d < dh; ++d) acc += qi[d] * kj[d];
        row[j] = acc * scale;
      }
      double acc = 0.0;
      for (std::size_t d = 0; d < dh; ++d) acc += qi[d] * s.prior_k[off + d];
      row[n] = acc * scale;
    }
    kernels::serial::softmax_rows(scratch, n, keys);
    for (std::size_t i = 0; i < n; ++i) {
      const double* row = scratch.data() + i * keys;
      double* oi = s.head_out + i * c + off;
      for (std::size_t d = 0; d < dh; ++d) oi[d] = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        const double p = row[j];
        const double* vj = s.v + j * c + off;
        for (std::size_t d = 0; d < dh; ++d) oi[d] += p * vj[d];
      }
      const double pp = row[n];
      for (std::size_t d = 0; d < dh; ++d) oi[d] += pp * s.prior_v[off + d];
      s.prior_weight[i] += pp;
    }
  }
  const double inv_heads = 1.0 / static_cast<double>(heads);
  for (std::size_t i = 0; i < n; ++i) s.prior_weight[i] *= inv_heads;
}

SequenceView view_of(std::size_t b, std::size_t n, std::size_t c, const Tensor& q, const Tensor& k, const Tensor& v,
                     const Tensor& pk, const Tensor& pv, Tensor& head_out, Tensor& prior_weight) {
  const std::size_t base = b * n * c;
  return {q.data() + base,  k.data() + base,        v.data() + base, pk.data() + b * c,
          pv.data() + b * c, head_out.data() + base, prior_weight.data() + b * n};
}

}  // namespace

AxisAttentionResult axis_attention(const Tensor& sequences, const Tensor& prior_tokens, const ProjectionWeights& w,
                                   std::size_t heads, const Tensor* query_offset) {
  if (sequences.rank() != 3) throw ShapeError("axis_attention: sequences must be [B,n,C]");
  const std::size_t batch = sequences.dim(0), n = sequences.dim(1), c = sequences.dim(2);
  if (heads == 0 || c % heads != 0) {
    throw ConfigError("channels " + std::to_string(c) + " not divisible by head count " + std::to_string(heads));
  }
  if (prior_tokens.shape() != Shape{batch, 1, c}) {
    throw ShapeError("axis_attention: prior tokens " + shape_string(prior_tokens.shape()) + ", expected " +
                     shape_string({batch, 1, c}));
  }
  FlopKindScope kind(FlopKind::Attention);
  // Working set of a batched implementation: q, k, v, head outputs, prior
  // k/v and the full [B, heads, n, n+1] weight tensor.
  LiveBuffer working(4ull * batch * n * c + 2ull * batch * c + 1ull * batch * heads * n * (n + 1));

  Tensor q;
  if (query_offset) {
    if (query_offset->shape() != Shape{n, c}) throw ShapeError("axis_attention: query offset must be [n,C]");
    Tensor shifted = sequences;
    for (std::size_t b = 0; b < batch; ++b) {
      double* dst = shifted.data() + b * n * c;
      for (std::size_t e = 0; e < n * c; ++e) dst[e] += (*query_offset)[e];
    }
    q = matmul_rows(shifted, w.query);
  } else {
    q = matmul_rows(sequences, w.query);
  }
  const Tensor k = matmul_rows(sequences, w.key);
  const Tensor v = matmul_rows(sequences, w.value);
  const Tensor pk = matmul_rows(prior_tokens, w.key);
  const Tensor pv = matmul_rows(prior_tokens, w.value);

  Tensor head_out({batch, n, c});
  AxisAttentionResult result{Tensor{}, Tensor({batch, n})};
  if (serial_execution()) {
    std::vector<double> scratch;
    for (std::size_t b = 0; b < batch; ++b) {
      attend_sequence(view_of(b, n, c, q, k, v, pk, pv, head_out, result.prior_weight), n, c, heads, scratch);
    }
  } else {
    const auto nb = static_cast<std::ptrdiff_t>(batch);
#pragma omp parallel
    {
      std::vector<double> scratch;
#pragma omp for schedule(static)
      for (std::ptrdiff_t b = 0; b < nb; ++b) {
        attend_sequence(view_of(static_cast<std::size_t>(b), n, c, q, k, v, pk, pv, head_out, result.prior_weight),
                        n, c, heads, scratch);
      }
    }
  }
  count_flops(4ull * batch * n * (n + 1) * c + 1ull * batch * heads * n * (n + 1));
  result.out = matmul_rows(head_out, w.output);
  return result;
}

Tensor ffn(const Tensor& x, const FfnWeights& w) {
  FlopKindScope kind(FlopKind::Ffn);
  LiveBuffer hidden_buffer(x.size() / x.shape().back() * w.up.dim(1));
  Tensor hidden = matmul_rows(x, w.up);
  kernels::gelu(hidden.values());
  return matmul_rows(hidden, w.down);
}

LatentTensor block_from_attention(const LatentTensor& z, const Tensor& attention, const FfnWeights& w) {
  if (attention.shape() != z.tensor().shape()) {
    throw ShapeError("attention " + shape_string(attention.shape()) + " does not match latent " +
                     shape_string(z.tensor().shape()));
  }
  Tensor sum = z.tensor();
  for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += attention[i];
  return LatentTensor(ffn(sum, w));
}

Tensor to_camera_sequences(const Tensor& z) {
  const std::size_t f = z.dim(0), v = z.dim(1), l = z.dim(2) * z.dim(3), c = z.dim(4);
  Tensor s({f * l, v, c});
  for (std::size_t fi = 0; fi < f; ++fi)
    for (std::size_t vi = 0; vi < v; ++vi)
      for (std::size_t p = 0; p < l; ++p) {
        const double* src = z.data() + ((fi * v + vi) * l + p) * c;
        double* dst = s.data() + ((fi * l + p) * v + vi) * c;
        std::copy_n(src, c, dst);
      }
  return s;
}

Tensor from_camera_sequences(const Tensor& s, const LatentDims& d) {
  const std::size_t l = d.positions(), c = d.channels;
  Tensor z(d.shape());
  for (std::size_t fi = 0; fi < d.frames; ++fi)
    for (std::size_t vi = 0; vi < d.views; ++vi)
      for (std::size_t p = 0; p < l; ++p) {
        const double* src = s.data() + ((fi * l + p) * d.views + vi) * c;
        double* dst = z.data() + ((fi * d.views + vi) * l + p) * c;
        std::copy_n(src, c, dst);
      }
  return z;
}

Tensor to_motion_sequences(const Tensor& z) {
  const std::size_t f = z.dim(0), v = z.dim(1), l = z.dim(2) * z.dim(3), c = z.dim(4);
  Tensor s({v * l, f, c});
  for (std::size_t fi = 0; fi < f; ++fi)
    for (std::size_t vi = 0; vi < v; ++vi)
      for (std::size_t p = 0; p < l; ++p) {
        const double* src = z.data() + ((fi * v + vi) * l + p) * c;
        double* dst = s.data() + ((vi * l + p) * f + fi) * c;
        std::copy_n(src, c, dst);
      }
  return s;
}

Tensor from_motion_sequences(const Tensor& s, const LatentDims& d) {
  const std::size_t l = d.positions(), c = d.channels;
  Tensor z(d.shape());
  for (std::size_t fi = 0; fi < d.frames; ++fi)
    for (std::size_t vi = 0; vi < d.views; ++vi)
      for (std::size_t p = 0; p < l; ++p) {
        const double* src = s.data() + ((vi * l + p) * d.frames + fi) * c;
        double* dst = z.data() + ((fi * d.views + vi) * l + p) * c;
        std::copy_n(src, c, dst);
      }
  return z;
}

BlockOutput spatial_forward(const LatentTensor& z, const Tensor& k_s, const BlockParams& p, std::size_t heads) {
  const LatentDims d = z.dims();
  if (k_s.shape() != Shape{d.frames, d.views, 1, d.channels}) {
    throw ShapeError("spatial prior " + shape_string(k_s.shape()) + " does not match latent");
  }
  const std::size_t batch = d.frames * d.views;
  auto r = axis_attention(z.tensor().reshaped({batch, d.positions(), d.channels}),
                          k_s.reshaped({batch, 1, d.channels}), p.attention, heads);
  BlockOutput out;
  out.attention = std::move(r.out).reshaped(d.shape());
  out.semantic = SemanticMap{std::move(r.prior_weight).reshaped({d.frames, d.views, d.height, d.width})};
  out.out = block_from_attention(z, out.attention, p.ffn);
  return out;
}

BlockOutput camera_forward(const LatentTensor& z, const Tensor& k_c, const BlockParams& p, std::size_t heads,
                           const Tensor& view_embedding) {
  const LatentDims d = z.dims();
  if (k_c.shape() != Shape{d.frames, d.height, d.width, d.channels}) {
    throw ShapeError("camera prior " + shape_string(k_c.shape()) + " does not match latent");
  }
  const std::size_t batch = d.frames * d.positions();
  auto r = axis_attention(to_camera_sequences(z.tensor()), k_c.reshaped({batch, 1, d.channels}), p.attention, heads,
                          view_embedding.empty() ? nullptr : &view_embedding);
  BlockOutput out;
  out.attention = from_camera_sequences(r.out, d);
  out.out = block_from_attention(z, out.attention, p.ffn);
  return out;
}

BlockOutput motion_forward(const LatentTensor& z, const Tensor& k_m, const BlockParams& p, std::size_t heads) {
  const LatentDims d = z.dims();
  if (k_m.shape() != Shape{d.views, d.height, d.width, d.channels}) {
    throw ShapeError("motion prior " + shape_string(k_m.shape()) + " does not match latent");
  }
  const std::size_t batch = d.views * d.positions();
  auto r = axis_attention(to_motion_sequences(z.tensor()), k_m.reshaped({batch, 1, d.channels}), p.attention, heads);
  BlockOutput out;
  out.attention = from_motion_sequences(r.out, d);
  out.out = block_from_attention(z, out.attention, p.ffn);
  return out;
}

ChainOutput chain_forward(const LatentTensor& z, const PriorSet& priors, const BlockWeights& w) {
  priors.validate(z.dims());
  ChainOutput r;
  r.blocks[0] = spatial_forward(z, priors.spatial, w.spatial, w.heads);
  r.blocks[1] = camera_forward(r.blocks[0].out, priors.camera, w.camera, w.heads, priors.view_embedding);
  r.blocks[2] = motion_forward(r.blocks[1].out, priors.motion, w.motion, w.heads);
  r.out = r.blocks[2].out;
  return r;
}

LatentTensor chain_from_attention(const LatentTensor& z, const std::array<const Tensor*, 3>& attention,
                                  const BlockWeights& w) {
  LatentTensor x = block_from_attention(z, *attention[0], w.spatial.ffn);
  x = block_from_attention(x, *attention[1], w.camera.ffn);
  return block_from_attention(x, *attention[2], w.motion.ffn);
}

}  // namespace scm

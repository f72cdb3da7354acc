#pragma once

// Loop-level reference implementations. They share no code with the library
// kernels and favour obviousness over speed.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "scm/attention.hpp"
#include "scm/latent.hpp"
#include "scm/pruning.hpp"
#include "scm/rng.hpp"

namespace oracle {

using scm::Tensor;
using Vec = std::vector<double>;

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor c({m, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a.at({i, p}) * b.at({p, j});
      c.at({i, j}) = s;
    }
  return c;
}

// x[1,C] * w[C,D] for a single row vector.
inline Vec project(const Vec& x, const Tensor& w) {
  Vec y(w.dim(1), 0.0);
  for (std::size_t j = 0; j < w.dim(1); ++j)
    for (std::size_t p = 0; p < x.size(); ++p) y[j] += x[p] * w.at({p, j});
  return y;
}

inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

inline Vec ffn(const Vec& x, const scm::FfnWeights& w) {
  Vec h = project(x, w.up);
  for (auto& v : h) v = gelu(v);
  return project(h, w.down);
}

struct SeqResult {
  std::vector<Vec> out;
  Vec prior_weight;
};

// One sequence of n tokens attending over itself plus the prior token.
inline SeqResult attend(const std::vector<Vec>& seq, const Vec& prior, const scm::ProjectionWeights& w,
                        std::size_t heads, const std::vector<Vec>* query_offset = nullptr) {
  const std::size_t n = seq.size(), c = prior.size(), dh = c / heads;
  std::vector<Vec> q(n), k(n + 1), v(n + 1);
  for (std::size_t i = 0; i < n; ++i) {
    Vec xq = seq[i];
    if (query_offset)
      for (std::size_t d = 0; d < c; ++d) xq[d] += (*query_offset)[i][d];
    q[i] = project(xq, w.query);
    k[i] = project(seq[i], w.key);
    v[i] = project(seq[i], w.value);
  }
  k[n] = project(prior, w.key);
  v[n] = project(prior, w.value);

  SeqResult r;
  r.prior_weight.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    Vec o(c, 0.0);
    for (std::size_t h = 0; h < heads; ++h) {
      Vec s(n + 1);
      double mx = -INFINITY;
      for (std::size_t j = 0; j <= n; ++j) {
        double dot = 0.0;
        for (std::size_t d = h * dh; d < (h + 1) * dh; ++d) dot += q[i][d] * k[j][d];
        s[j] = dot / std::sqrt(static_cast<double>(dh));
        mx = std::max(mx, s[j]);
      }
      double z = 0.0;
      for (auto& e : s) z += (e = std::exp(e - mx));
      for (auto& e : s) e /= z;
      r.prior_weight[i] += s[n] / static_cast<double>(heads);
      for (std::size_t j = 0; j <= n; ++j)
        for (std::size_t d = h * dh; d < (h + 1) * dh; ++d) o[d] += s[j] * v[j][d];
    }
    r.out.push_back(project(o, w.output));
  }
  return r;
}

inline Vec token(const Tensor& z, std::size_t f, std::size_t v, std::size_t h, std::size_t w) {
  const std::size_t c = z.dim(4);
  Vec t(c);
  for (std::size_t d = 0; d < c; ++d) t[d] = z.at({f, v, h, w, d});
  return t;
}

inline void put(Tensor& z, std::size_t f, std::size_t v, std::size_t h, std::size_t w, const Vec& t) {
  for (std::size_t d = 0; d < t.size(); ++d) z.at({f, v, h, w, d}) = t[d];
}

inline Vec row(const Tensor& t, std::initializer_list<std::size_t> lead) {
  const std::size_t c = t.shape().back();
  std::vector<std::size_t> idx(lead);
  Vec out(c);
  for (std::size_t d = 0; d < c; ++d) {
    std::vector<std::size_t> full = idx;
    full.push_back(d);
    std::size_t off = 0;
    for (std::size_t a = 0; a < full.size(); ++a) off = off * t.dim(a) + full[a];
    out[d] = t[off];
  }
  return out;
}

struct Block {
  Tensor out;
  Tensor attention;
  Tensor semantic;  // spatial only
};

inline Block finish(const Tensor& z, Tensor a, const scm::FfnWeights& w) {
  const auto& s = z.shape();
  Tensor out(s);
  for (std::size_t f = 0; f < s[0]; ++f)
    for (std::size_t v = 0; v < s[1]; ++v)
      for (std::size_t h = 0; h < s[2]; ++h)
        for (std::size_t x = 0; x < s[3]; ++x) {
          Vec t = token(z, f, v, h, x), at = token(a, f, v, h, x);
          for (std::size_t d = 0; d < t.size(); ++d) t[d] += at[d];
          put(out, f, v, h, x, ffn(t, w));
        }
  return {out, std::move(a), {}};
}

inline Block spatial(const Tensor& z, const Tensor& k_s, const scm::BlockParams& p, std::size_t heads) {
  const auto& s = z.shape();
  Tensor a(s), sem({s[0], s[1], s[2], s[3]});
  for (std::size_t f = 0; f < s[0]; ++f)
    for (std::size_t v = 0; v < s[1]; ++v) {
      std::vector<Vec> seq;
      for (std::size_t h = 0; h < s[2]; ++h)
        for (std::size_t x = 0; x < s[3]; ++x) seq.push_back(token(z, f, v, h, x));
      auto r = attend(seq, row(k_s, {f, v, 0}), p.attention, heads);
      for (std::size_t i = 0; i < seq.size(); ++i) {
        put(a, f, v, i / s[3], i % s[3], r.out[i]);
        sem.at({f, v, i / s[3], i % s[3]}) = r.prior_weight[i];
      }
    }
  Block b = finish(z, std::move(a), p.ffn);
  b.semantic = std::move(sem);
  return b;
}

// Camera attention at one (f, h, w) position, along V.
inline std::vector<Vec> camera_at(const Tensor& z, const Tensor& k_c, const scm::BlockParams& p, std::size_t heads,
                                  const Tensor& view_embedding, std::size_t f, std::size_t h, std::size_t x) {
  const std::size_t views = z.dim(1);
  std::vector<Vec> seq, off;
  for (std::size_t v = 0; v < views; ++v) {
    seq.push_back(token(z, f, v, h, x));
    if (!view_embedding.empty()) off.push_back(row(view_embedding, {v}));
  }
  return attend(seq, row(k_c, {f, h, x}), p.attention, heads, view_embedding.empty() ? nullptr : &off).out;
}

inline std::vector<Vec> motion_at(const Tensor& z, const Tensor& k_m, const scm::BlockParams& p, std::size_t heads,
                                  std::size_t v, std::size_t h, std::size_t x) {
  std::vector<Vec> seq;
  for (std::size_t f = 0; f < z.dim(0); ++f) seq.push_back(token(z, f, v, h, x));
  return attend(seq, row(k_m, {v, h, x}), p.attention, heads).out;
}

inline Block camera(const Tensor& z, const Tensor& k_c, const scm::BlockParams& p, std::size_t heads,
                    const Tensor& view_embedding = {}) {
  const auto& s = z.shape();
  Tensor a(s);
  for (std::size_t f = 0; f < s[0]; ++f)
    for (std::size_t h = 0; h < s[2]; ++h)
      for (std::size_t x = 0; x < s[3]; ++x) {
        auto o = camera_at(z, k_c, p, heads, view_embedding, f, h, x);
        for (std::size_t v = 0; v < s[1]; ++v) put(a, f, v, h, x, o[v]);
      }
  return finish(z, std::move(a), p.ffn);
}

inline Block motion(const Tensor& z, const Tensor& k_m, const scm::BlockParams& p, std::size_t heads) {
  const auto& s = z.shape();
  Tensor a(s);
  for (std::size_t v = 0; v < s[1]; ++v)
    for (std::size_t h = 0; h < s[2]; ++h)
      for (std::size_t x = 0; x < s[3]; ++x) {
        auto o = motion_at(z, k_m, p, heads, v, h, x);
        for (std::size_t f = 0; f < s[0]; ++f) put(a, f, v, h, x, o[f]);
      }
  return finish(z, std::move(a), p.ffn);
}

// Overwrites every position outside the kept lists with `cached`. Lists are
// per frame when `per_frame`, else per view.
inline Tensor mask_refill(const Tensor& dense, const std::vector<scm::IndexList>& keep, const Tensor& cached,
                          bool per_frame) {
  Tensor a = dense;
  const auto& s = dense.shape();
  for (std::size_t f = 0; f < s[0]; ++f)
    for (std::size_t v = 0; v < s[1]; ++v) {
      const scm::IndexList& list = keep[per_frame ? f : v];
      for (std::size_t pos = 0; pos < s[2] * s[3]; ++pos) {
        if (std::find(list.begin(), list.end(), pos) != list.end()) continue;
        put(a, f, v, pos / s[3], pos % s[3], token(cached, f, v, pos / s[3], pos % s[3]));
      }
    }
  return a;
}

}  // namespace oracle

namespace fixture {

inline scm::BlockParams random_block(scm::Rng& rng, std::size_t c, double scale = 0.5) {
  auto m = [&](std::size_t r, std::size_t k) { return scm::rand_uniform(rng, {r, k}, -scale, scale); };
  return {{m(c, c), m(c, c), m(c, c), m(c, c)}, {m(c, 2 * c), m(2 * c, c)}};
}

inline scm::BlockWeights random_weights(scm::Rng& rng, std::size_t c, std::size_t heads, double scale = 0.5) {
  scm::BlockWeights w;
  w.spatial = random_block(rng, c, scale);
  w.camera = random_block(rng, c, scale);
  w.motion = random_block(rng, c, scale);
  w.heads = heads;
  return w;
}

inline scm::PriorSet random_priors(scm::Rng& rng, const scm::LatentDims& d, bool embedding = true) {
  scm::PriorSet p;
  p.spatial = scm::randn(rng, {d.frames, d.views, 1, d.channels});
  p.camera = scm::randn(rng, {d.frames, d.height, d.width, d.channels});
  p.motion = scm::randn(rng, {d.views, d.height, d.width, d.channels});
  if (embedding) p.view_embedding = scm::randn(rng, {d.views, d.channels});
  return p;
}

inline scm::LatentTensor random_latent(scm::Rng& rng, const scm::LatentDims& d) {
  return scm::LatentTensor(scm::randn(rng, d.shape()));
}

}  // namespace fixture

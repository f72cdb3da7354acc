#include "scm/denoiser.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>

#include "scm/error.hpp"
#include "scm/kernels.hpp"

namespace scm {

DiffusionSchedule DiffusionSchedule::cosine(std::size_t steps) {
  if (steps == 0) throw ParameterError("schedule needs at least one step");
  DiffusionSchedule s;
  s.steps = steps;
  for (std::size_t t = 0; t <= steps; ++t) {
    const double phase = 0.5 * std::numbers::pi * static_cast<double>(t) / static_cast<double>(steps);
    s.alpha.push_back(t == 0 ? 1.0 : std::cos(phase));
    s.beta.push_back(t == 0 ? 0.0 : std::sin(phase));
  }
  return s;
}

CameraTrajectory CameraTrajectory::orbit(std::size_t views, double elevation_deg) {
  CameraTrajectory tr;
  for (std::size_t v = 0; v < views; ++v) {
    tr.elevation_deg.push_back(elevation_deg);
    tr.azimuth_deg.push_back(360.0 * static_cast<double>(v) / static_cast<double>(views));
  }
  return tr;
}

Tensor view_embedding(const CameraTrajectory& tr, std::size_t channels) {
  const std::size_t views = tr.azimuth_deg.size();
  if (tr.elevation_deg.size() != views || views == 0) throw ParameterError("trajectory needs one (e, a) per view");
  const std::size_t half = channels / 2;
  Tensor e({views, channels});
  constexpr double kDeg = std::numbers::pi / 180.0;
  for (std::size_t v = 0; v < views; ++v) {
    for (std::size_t c = 0; c < channels; ++c) {
      const bool elev = c < half;
      const double theta = (elev ? tr.elevation_deg[v] : tr.azimuth_deg[v]) * kDeg;
      const std::size_t j = elev ? c : c - half;
      const double freq = static_cast<double>(j / 2 + 1);
      e.at({v, c}) = (j % 2 == 0) ? std::sin(freq * theta) : std::cos(freq * theta);
    }
  }
  return e;
}

PriorSet synth_priors(const LatentDims& d, const CameraTrajectory& trajectory, Rng& rng) {
  if (trajectory.azimuth_deg.size() != d.views) throw ParameterError("trajectory length must equal the view count");
  PriorSet p;
  p.spatial = randn(rng, {d.frames, d.views, 1, d.channels});
  p.camera = randn(rng, {d.frames, d.height, d.width, d.channels});
  p.motion = randn(rng, {d.views, d.height, d.width, d.channels});
  p.view_embedding = view_embedding(trajectory, d.channels);
  return p;
}

LatentTensor plant_semantic_region(const LatentDims& d, const PriorSet& priors, const IndexList& cells,
                                   double amplitude, double background, Rng& rng) {
  priors.validate(d);
  Tensor z = randn(rng, d.shape());
  for (auto& v : z.values()) v *= background;
  const std::size_t l = d.positions(), c = d.channels;
  for (std::size_t f = 0; f < d.frames; ++f)
    for (std::size_t v = 0; v < d.views; ++v) {
      const double* k = priors.spatial.data() + (f * d.views + v) * c;
      for (auto cell : cells) {
        if (cell >= l) throw IndexError("planted cell out of range");
        double* dst = z.data() + ((f * d.views + v) * l + cell) * c;
        for (std::size_t ch = 0; ch < c; ++ch) dst[ch] += amplitude * k[ch];
      }
    }
  return LatentTensor(std::move(z));
}

ToyModel build_toy_model(const LatentDims& dims, std::size_t heads, std::size_t layers, std::uint64_t seed) {
  if (dims.frames == 0 || dims.views == 0 || dims.height == 0 || dims.width == 0 || dims.channels == 0) {
    throw ParameterError("all latent dims must be >= 1");
  }
  if (heads == 0 || dims.channels % heads != 0) {
    throw ParameterError("channels " + std::to_string(dims.channels) + " not divisible by heads " +
                         std::to_string(heads));
  }
  if (layers == 0) throw ParameterError("model needs at least one layer");
  const std::size_t c = dims.channels;
  const double a = 1.0 / std::sqrt(static_cast<double>(c));
  Rng rng(seed);
  auto draw = [&](std::size_t rows, std::size_t cols) { return rand_uniform(rng, {rows, cols}, -a, a); };
  auto block = [&] {
    BlockParams p;
    p.attention = {draw(c, c), draw(c, c), draw(c, c), draw(c, c)};
    p.ffn = {draw(c, 2 * c), draw(2 * c, c)};
    return p;
  };

  ToyModel m;
  m.dims = dims;
  m.heads = heads;
  m.seed = seed;
  for (std::size_t l = 0; l < layers; ++l) {
    LayerWeights lw;
    lw.mixing = draw(c, c);
    for (std::size_t i = 0; i < c; ++i) lw.mixing.at({i, i}) += 1.0;
    lw.chain.spatial = block();
    lw.chain.camera = block();
    lw.chain.motion = block();
    lw.chain.heads = heads;
    m.layers.push_back(std::move(lw));
  }
  return m;
}

namespace {

// 3-point average with reflect padding along one axis of [outer, n, inner].
void average3(const double* src, double* dst, std::size_t outer, std::size_t n, std::size_t inner) {
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t lo = i == 0 ? (n > 1 ? 1 : 0) : i - 1;
      const std::size_t hi = i + 1 == n ? (n > 1 ? n - 2 : 0) : i + 1;
      const double* a = src + (o * n + lo) * inner;
      const double* b = src + (o * n + i) * inner;
      const double* c = src + (o * n + hi) * inner;
      double* d = dst + (o * n + i) * inner;
      for (std::size_t e = 0; e < inner; ++e) d[e] = (a[e] + b[e] + c[e]) / 3.0;
    }
  }
}

}  // namespace

LatentTensor mix(const LatentTensor& h, const Tensor& mixing) {
  FlopKindScope kind(FlopKind::Other);
  const LatentDims d = h.dims();
  Tensor x = matmul_rows(h.tensor(), mixing);
  Tensor y(d.shape());
  const std::size_t fv = d.frames * d.views;
  average3(x.data(), y.data(), fv, d.height, d.width * d.channels);
  average3(y.data(), x.data(), fv * d.height, d.width, d.channels);
  count_flops(6ull * d.elements());
  return LatentTensor(std::move(x));
}

LatentTensor forward_noise(const LatentTensor& z0, std::size_t t, const DiffusionSchedule& schedule, Rng& rng) {
  if (t > schedule.steps) throw ParameterError("t=" + std::to_string(t) + " beyond schedule length");
  const Tensor eps = randn(rng, z0.tensor().shape());
  Tensor out = z0.tensor();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = schedule.alpha[t] * out[i] + schedule.beta[t] * eps[i];
  return LatentTensor(std::move(out));
}

LatentTensor ddim_update(const LatentTensor& z_t, const LatentTensor& x0_hat, std::size_t t,
                         const DiffusionSchedule& schedule) {
  if (t == 0 || t > schedule.steps) throw ParameterError("ddim_update needs 1 <= t <= T");
  const double a_prev = schedule.alpha[t - 1];
  const double a_t = schedule.alpha[t];
  const double ratio = schedule.beta[t - 1] / schedule.beta[t];
  Tensor out = z_t.tensor();
  const Tensor& x0 = x0_hat.tensor();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a_prev * x0[i] + ratio * (out[i] - a_t * x0[i]);
  return LatentTensor(std::move(out));
}

namespace {

LatentTensor add(const LatentTensor& a, const LatentTensor& b) {
  Tensor out = a.tensor();
  const Tensor& bt = b.tensor();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bt[i];
  return LatentTensor(std::move(out));
}

// Chain contribution of one layer under the step's mode.
LatentTensor run_chain(const LayerWeights& lw, std::size_t layer, const LatentTensor& u, const PriorSet& priors,
                       StepContext& ctx) {
  RollingCache* cache = ctx.cache;
  switch (ctx.mode.kind) {
    case StepKind::Dense: {
      ChainOutput r = chain_forward(u, priors, lw.chain);
      if (cache) {
        if (cache->full(layer)) {
          for (std::size_t i = 0; i < 3; ++i) {
            cache->record_similarity(layer, kBlockOrder[i], r.blocks[i].attention, ctx.step);
          }
          cache->release(layer);
        }
        cache->store(layer, std::move(r.blocks[0].attention), std::move(r.blocks[1].attention),
                     std::move(r.blocks[2].attention), ctx.step);
      }
      return std::move(r.out);
    }
    case StepKind::Prune: {
      if (!cache) throw ProtocolError("prune step without a rolling cache");
      return pruned_chain_forward(u, priors, lw.chain, ctx.prune, *cache, layer, ctx.step, ctx.rng).out;
    }
    case StepKind::Reuse: {
      if (!cache) throw ProtocolError("reuse step without a rolling cache");
      CacheEntry s = cache->retrieve_entry(layer, BlockKind::Spatial);
      CacheEntry c = cache->retrieve_entry(layer, BlockKind::Camera);
      CacheEntry m = cache->retrieve_entry(layer, BlockKind::Motion);
      LatentTensor out = chain_from_attention(u, {&s.value, &c.value, &m.value}, lw.chain);
      // The reused tensors are this step's attention; they stay available
      // for the next compute step's refill and similarity check.
      cache->store(layer, std::move(s.value), std::move(c.value), std::move(m.value), s.step_written);
      return out;
    }
  }
  throw ProtocolError("unknown step kind");
}

}  // namespace

LatentTensor predict_clean(const ToyModel& model, const LatentTensor& z_t, const PriorSet& priors,
                           StepContext& ctx) {
  if (z_t.dims() != model.dims) throw ShapeError("latent dims do not match the model");
  priors.validate(model.dims);
  LatentTensor h = z_t;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const LayerWeights& lw = model.layers[l];
    LatentTensor u = mix(h, lw.mixing);
    h = apply_bypass(l, ctx.mode, std::move(u), [&](LatentTensor x) {
      try {
        return add(x, run_chain(lw, l, x, priors, ctx));
      } catch (const ProtocolError& e) {
        throw ProtocolError("step " + std::to_string(ctx.step) + ", layer " + std::to_string(l) + ": " + e.what());
      }
    });
  }
  double ss = 0.0;
  for (double v : h.tensor().values()) ss += v * v;
  if (ss > 0.0) {
    const double inv = 1.0 / std::sqrt(ss / static_cast<double>(h.tensor().size()));
    for (auto& v : h.tensor().values()) v *= inv;
  }
  return h;
}

LatentTensor denoise_step(const ToyModel& model, const LatentTensor& z_t, std::size_t t, const PriorSet& priors,
                          const DiffusionSchedule& schedule, StepContext& ctx) {
  const LatentTensor x0 = predict_clean(model, z_t, priors, ctx);
  return ddim_update(z_t, x0, t, schedule);
}

SampleResult sample(const ToyModel& model, const PriorSet& priors, const DiffusionSchedule& schedule,
                    const SamplerConfig& config, Rng& rng) {
  using Clock = std::chrono::steady_clock;
  SampleResult result;
  CostScope scope(result.totals);
  std::optional<RollingCache> cache;
  if (config.use_cache) cache.emplace(model.layers.size(), &result.totals);
  BypassScheduler scheduler(config.scheduler, model.layers.size());

  LatentTensor z(randn(rng, model.dims.shape()));
  std::optional<std::size_t> last_compute;

  const auto run_start = Clock::now();
  for (std::size_t step = 0; step < schedule.steps; ++step) {
    const std::size_t t = schedule.steps - step;
    StepRecord rec;
    rec.step = step;
    rec.t = t;
    if (cache) {
      if (last_compute) rec.asr = compute_asr(*cache, *last_compute, config.scheduler.delta_t);
      rec.mode = scheduler.select_mode(step, rec.asr);
      // Bypass never lifts, so bypassed layers' entries are dead.
      for (std::size_t l : rec.mode.bypass) {
        if (cache->full(l)) cache->release(l);
      }
    }
    const CostCounters before = result.totals;
    const std::size_t logged = cache ? cache->similarity_log().size() : 0;
    const auto t0 = Clock::now();

    StepContext ctx{rec.mode, step, cache ? &*cache : nullptr, config.prune, &rng};
    z = denoise_step(model, z, t, priors, schedule, ctx);

    rec.wall_us = std::chrono::duration<double, std::micro>(Clock::now() - t0).count();
    rec.flops_attention = result.totals.flops_attention - before.flops_attention;
    rec.flops_ffn = result.totals.flops_ffn - before.flops_ffn;
    rec.flops_other = result.totals.flops_other - before.flops_other;
    if (cache && cache->similarity_log().size() > logged) last_compute = step;
    result.steps.push_back(std::move(rec));
  }
  result.wall_us = std::chrono::duration<double, std::micro>(Clock::now() - run_start).count();

  result.z_final = std::move(z);
  result.asr_trace = scheduler.asr_history();
  result.bypass_start = scheduler.bypass_start();
  if (cache) result.similarity_log = cache->similarity_log();
  return result;
}

namespace {

constexpr char kMagic[8] = {'S', 'C', 'M', 'L', 'A', 'T', '0', '1'};

template <class T>
T to_little(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(v);
    std::reverse(bytes.begin(), bytes.end());
    return std::bit_cast<T>(bytes);
  }
  return v;
}

template <class T>
void put(std::ostream& os, T v) {
  v = to_little(v);
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!is) throw IoError("truncated latent file");
  return to_little(v);
}

}  // namespace

void write_latent(const std::filesystem::path& path, const LatentTensor& z) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os.write(kMagic, sizeof kMagic);
  for (auto n : z.tensor().shape()) put<std::uint64_t>(os, n);
  for (double v : z.tensor().values()) put<std::uint64_t>(os, std::bit_cast<std::uint64_t>(v));
  if (!os) throw IoError("write failed: " + path.string());
}

LatentTensor read_latent(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  char magic[8];
  is.read(magic, sizeof magic);
  if (!is || std::memcmp(magic, kMagic, sizeof kMagic) != 0) throw IoError(path.string() + " is not a latent file");
  Shape shape;
  for (int i = 0; i < 5; ++i) shape.push_back(static_cast<std::size_t>(get<std::uint64_t>(is)));
  Tensor t(shape);
  for (auto& v : t.values()) v = std::bit_cast<double>(get<std::uint64_t>(is));
  return LatentTensor(std::move(t));
}

}  // namespace scm

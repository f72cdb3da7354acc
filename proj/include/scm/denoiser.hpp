#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "scm/attention.hpp"
#include "scm/cost.hpp"
#include "scm/latent.hpp"
#include "scm/pruning.hpp"
#include "scm/rng.hpp"
#include "scm/rolling_cache.hpp"
#include "scm/scheduler.hpp"

namespace scm {

/// Variance-preserving schedule alpha_t = cos(pi t / 2T), beta_t = sin(pi t / 2T).
struct DiffusionSchedule {
  std::size_t steps = 0;  // T
  std::vector<double> alpha;
  std::vector<double> beta;

  static DiffusionSchedule cosine(std::size_t steps);
};

struct CameraTrajectory {
  std::vector<double> elevation_deg;
  std::vector<double> azimuth_deg;

  /// Evenly spaced azimuths over [0, 360) at a fixed elevation.
  static CameraTrajectory orbit(std::size_t views, double elevation_deg = 30.0);
};

/// Sinusoidal embedding [V, C]: the first C/2 channels encode elevation, the
/// rest azimuth, at integer frequencies so azimuth wraps at 360 degrees.
Tensor view_embedding(const CameraTrajectory& trajectory, std::size_t channels);

PriorSet synth_priors(const LatentDims& dims, const CameraTrajectory& trajectory, Rng& rng);

/// Latent of low-amplitude noise whose `cells` (flattened h*W + w) carry a
/// scaled copy of the spatial prior k_s[f, v], so that spatial tokens there
/// attend strongly to the prior.
LatentTensor plant_semantic_region(const LatentDims& dims, const PriorSet& priors, const IndexList& cells,
                                   double amplitude, double background, Rng& rng);

struct LayerWeights {
  Tensor mixing;  // [C, C]
  BlockWeights chain;
};

struct ToyModel {
  LatentDims dims;
  std::size_t heads = 2;
  std::uint64_t seed = 0;
  std::vector<LayerWeights> layers;
};

/// Weights drawn uniformly from [-1/sqrt(C), 1/sqrt(C)]; the mixing matrix
/// is identity plus such a draw.
ToyModel build_toy_model(const LatentDims& dims, std::size_t heads, std::size_t layers, std::uint64_t seed);

/// Channel map followed by 3-point reflect-padded averaging along H then W.
LatentTensor mix(const LatentTensor& h, const Tensor& mixing);

/// alpha_t z0 + beta_t eps.
LatentTensor forward_noise(const LatentTensor& z0, std::size_t t, const DiffusionSchedule& schedule, Rng& rng);

/// z_{t-1} = alpha_{t-1} x0 + (beta_{t-1} / beta_t) (z_t - alpha_t x0), t >= 1.
LatentTensor ddim_update(const LatentTensor& z_t, const LatentTensor& x0_hat, std::size_t t,
                         const DiffusionSchedule& schedule);

struct StepContext {
  StepMode mode;
  std::size_t step = 0;
  RollingCache* cache = nullptr;  // null: plain dense inference, no cache traffic
  PruneOptions prune;
  Rng* rng = nullptr;  // random index ablation only
};

/// Clean-latent prediction. Each layer runs mixing, then (unless bypassed)
/// adds its chain output computed per the step mode. The result is scaled to
/// unit RMS.
LatentTensor predict_clean(const ToyModel& model, const LatentTensor& z_t, const PriorSet& priors,
                           StepContext& ctx);

LatentTensor denoise_step(const ToyModel& model, const LatentTensor& z_t, std::size_t t, const PriorSet& priors,
                          const DiffusionSchedule& schedule, StepContext& ctx);

struct SamplerConfig {
  bool use_cache = true;  // false: dense inference with no cache at all
  SchedulerConfig scheduler;
  PruneOptions prune;
};

struct StepRecord {
  std::size_t step = 0;
  std::size_t t = 0;
  StepMode mode;
  std::optional<double> asr;
  std::uint64_t flops_attention = 0;
  std::uint64_t flops_ffn = 0;
  std::uint64_t flops_other = 0;
  double wall_us = 0.0;
};

struct SampleResult {
  LatentTensor z_final;
  std::vector<StepRecord> steps;
  std::vector<std::pair<std::size_t, double>> asr_trace;
  std::vector<SimilarityRecord> similarity_log;
  std::optional<std::size_t> bypass_start;
  CostCounters totals;
  double wall_us = 0.0;
};

/// Reverse loop t = T..1 from a standard-normal latent drawn from `rng`.
SampleResult sample(const ToyModel& model, const PriorSet& priors, const DiffusionSchedule& schedule,
                    const SamplerConfig& config, Rng& rng);

// Flat binary latent: magic "SCMLAT01", five little-endian u64 dims
// (F, V, H, W, C), then the values as little-endian IEEE-754 doubles.
void write_latent(const std::filesystem::path& path, const LatentTensor& z);
LatentTensor read_latent(const std::filesystem::path& path);

}  // namespace scm

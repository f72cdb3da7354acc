#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "scm/rolling_cache.hpp"

namespace scm {

enum class StepKind { Dense, Prune, Reuse };

const char* step_kind_name(StepKind kind) noexcept;

struct StepMode {
  StepKind kind = StepKind::Dense;
  std::vector<std::size_t> bypass;  // layers whose chain is skipped; never first or last

  bool bypassed(std::size_t layer) const noexcept;
  friend bool operator==(const StepMode&, const StepMode&) = default;
};

struct SchedulerConfig {
  std::size_t warmup = 2;   // initial dense steps
  double alpha = 0.9;       // bypass threshold on V_ASR
  std::size_t delta_t = 3;  // ASR window depth in steps
  bool prune = true;        // compute steps after warmup prune camera/motion
  bool reuse = true;        // odd steps after warmup reuse cached attention
  bool bypass = true;       // adaptive chain bypass enabled
};

/// Mean of the logged cosines with step in [step - delta_t, step]. Empty when
/// the window holds no records.
std::optional<double> compute_asr(std::span<const SimilarityRecord> log, std::size_t step, std::size_t delta_t);
std::optional<double> compute_asr(const RollingCache& cache, std::size_t step, std::size_t delta_t);

/// Per-step mode selection: `warmup` dense steps, then alternating compute
/// (even) and reuse (odd) steps. Once a V_ASR at or above alpha is seen the
/// intermediate layers are bypassed for every later step.
class BypassScheduler {
 public:
  BypassScheduler(SchedulerConfig config, std::size_t layers);

  /// `asr` is V_ASR over the window ending at the latest compute step, or
  /// nullopt when no similarity has been logged yet.
  StepMode select_mode(std::size_t step, std::optional<double> asr);

  bool bypass_active() const noexcept { return bypass_active_; }
  std::optional<std::size_t> bypass_start() const noexcept { return bypass_start_; }
  const SchedulerConfig& config() const noexcept { return config_; }
  const std::vector<std::pair<std::size_t, double>>& asr_history() const noexcept { return asr_history_; }
  const std::vector<std::pair<std::size_t, StepMode>>& mode_trace() const noexcept { return mode_trace_; }

 private:
  SchedulerConfig config_;
  std::size_t layers_;
  bool bypass_active_ = false;
  std::optional<std::size_t> bypass_start_;
  std::vector<std::pair<std::size_t, double>> asr_history_;
  std::vector<std::pair<std::size_t, StepMode>> mode_trace_;
};

/// Layers {1, ..., L-2}; empty for L <= 2.
std::vector<std::size_t> intermediate_layers(std::size_t layers);

/// Runs `chain` on z unless the layer is bypassed, in which case z passes
/// through untouched.
template <class Z, class Chain>
Z apply_bypass(std::size_t layer, const StepMode& mode, Z z, Chain&& chain) {
  if (mode.bypassed(layer)) return z;
  return std::forward<Chain>(chain)(std::move(z));
}

}  // namespace scm

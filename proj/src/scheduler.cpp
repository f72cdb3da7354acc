#include "scm/scheduler.hpp"

#include <algorithm>

namespace scm {

const char* step_kind_name(StepKind kind) noexcept {
  switch (kind) {
    case StepKind::Dense: return "dense";
    case StepKind::Prune: return "prune";
    case StepKind::Reuse: return "reuse";
  }
  return "?";
}

bool StepMode::bypassed(std::size_t layer) const noexcept {
  return std::binary_search(bypass.begin(), bypass.end(), layer);
}

std::optional<double> compute_asr(std::span<const SimilarityRecord> log, std::size_t step, std::size_t delta_t) {
  const std::size_t first = step >= delta_t ? step - delta_t : 0;
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& r : log) {
    if (r.step < first || r.step > step) continue;
    sum += r.cosine;
    ++count;
  }
  if (count == 0) return std::nullopt;
  return sum / static_cast<double>(count);
}

std::optional<double> compute_asr(const RollingCache& cache, std::size_t step, std::size_t delta_t) {
  return compute_asr(cache.similarity_log(), step, delta_t);
}

std::vector<std::size_t> intermediate_layers(std::size_t layers) {
  std::vector<std::size_t> out;
  for (std::size_t l = 1; l + 1 < layers; ++l) out.push_back(l);
  return out;
}

BypassScheduler::BypassScheduler(SchedulerConfig config, std::size_t layers) : config_(config), layers_(layers) {}

StepMode BypassScheduler::select_mode(std::size_t step, std::optional<double> asr) {
  if (asr) {
    asr_history_.emplace_back(step, *asr);
    if (config_.bypass && !bypass_active_ && *asr >= config_.alpha) {
      bypass_active_ = true;
      bypass_start_ = step;
    }
  }
  StepMode mode;
  if (step < config_.warmup) {
    mode.kind = StepKind::Dense;
  } else if (step % 2 == 1) {
    // With reuse off the would-be reuse step recomputes densely.
    mode.kind = config_.reuse ? StepKind::Reuse : StepKind::Dense;
  } else {
    mode.kind = config_.prune ? StepKind::Prune : StepKind::Dense;
  }
  if (bypass_active_) mode.bypass = intermediate_layers(layers_);
  mode_trace_.emplace_back(step, mode);
  return mode;
}

}  // namespace scm

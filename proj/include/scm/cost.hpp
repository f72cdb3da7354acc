#pragma once

#include <cstdint>

namespace scm {

enum class FlopKind { Attention, Ffn, Other };

/// Hardware-independent cost model. FLOPs are exact multiply-add counts of
/// matmuls (2mnk) plus one per softmax exponential; memory is tracked in
/// elements of the tensors that the pipeline registers as live.
struct CostCounters {
  std::uint64_t flops_attention = 0;
  std::uint64_t flops_ffn = 0;
  std::uint64_t flops_other = 0;
  std::uint64_t live_elements = 0;
  std::uint64_t peak_live_elements = 0;

  void add_flops(FlopKind kind, std::uint64_t n) noexcept;
  void acquire(std::uint64_t elements) noexcept;
  void release(std::uint64_t elements);

  std::uint64_t chain_flops() const noexcept { return flops_attention + flops_ffn; }
  std::uint64_t total_flops() const noexcept { return flops_attention + flops_ffn + flops_other; }
};

// The counters that kernels on this thread charge to. Kernels called with no
// active scope are not metered.
CostCounters* active_counters() noexcept;
FlopKind active_flop_kind() noexcept;

void count_flops(std::uint64_t n) noexcept;

/// Makes `counters` active on this thread for the lifetime of the scope.
class CostScope {
 public:
  explicit CostScope(CostCounters& counters) noexcept;
  ~CostScope();
  CostScope(const CostScope&) = delete;
  CostScope& operator=(const CostScope&) = delete;

 private:
  CostCounters* previous_;
};

/// Routes FLOPs counted inside the scope to `kind`.
class FlopKindScope {
 public:
  explicit FlopKindScope(FlopKind kind) noexcept;
  ~FlopKindScope();
  FlopKindScope(const FlopKindScope&) = delete;
  FlopKindScope& operator=(const FlopKindScope&) = delete;

 private:
  FlopKind previous_;
};

/// A transient buffer of `elements` charged to the active counters while alive.
class LiveBuffer {
 public:
  explicit LiveBuffer(std::uint64_t elements) noexcept;
  ~LiveBuffer();
  LiveBuffer(const LiveBuffer&) = delete;
  LiveBuffer& operator=(const LiveBuffer&) = delete;

 private:
  CostCounters* counters_;
  std::uint64_t elements_;
};

}  // namespace scm

#include "scm/cost.hpp"

#include <algorithm>

#include "scm/error.hpp"

namespace scm {

namespace {
thread_local CostCounters* t_counters = nullptr;
thread_local FlopKind t_kind = FlopKind::Other;
}  // namespace

void CostCounters::add_flops(FlopKind kind, std::uint64_t n) noexcept {
  switch (kind) {
    case FlopKind::Attention: flops_attention += n; break;
    case FlopKind::Ffn: flops_ffn += n; break;
    case FlopKind::Other: flops_other += n; break;
  }
}

void CostCounters::acquire(std::uint64_t elements) noexcept {
  live_elements += elements;
  peak_live_elements = std::max(peak_live_elements, live_elements);
}

void CostCounters::release(std::uint64_t elements) {
  if (elements > live_elements) throw ProtocolError("CostCounters: releasing more elements than are live");
  live_elements -= elements;
}

CostCounters* active_counters() noexcept { return t_counters; }
FlopKind active_flop_kind() noexcept { return t_kind; }

void count_flops(std::uint64_t n) noexcept {
  if (t_counters) t_counters->add_flops(t_kind, n);
}

CostScope::CostScope(CostCounters& counters) noexcept : previous_(t_counters) { t_counters = &counters; }
CostScope::~CostScope() { t_counters = previous_; }

FlopKindScope::FlopKindScope(FlopKind kind) noexcept : previous_(t_kind) { t_kind = kind; }
FlopKindScope::~FlopKindScope() { t_kind = previous_; }

LiveBuffer::LiveBuffer(std::uint64_t elements) noexcept : counters_(t_counters), elements_(elements) {
  if (counters_) counters_->acquire(elements_);
}

LiveBuffer::~LiveBuffer() {
  if (counters_) counters_->live_elements -= std::min(elements_, counters_->live_elements);
}

}  // namespace scm

#include "scm/rolling_cache.hpp"

#include <iomanip>
#include <ostream>

#include "scm/error.hpp"
#include "scm/kernels.hpp"

namespace scm {

namespace {

std::string where(std::size_t layer) { return "rolling cache layer " + std::to_string(layer) + ": "; }

}  // namespace

RollingCache::RollingCache(std::size_t layers, CostCounters* counters) : queues_(layers), counters_(counters) {}

std::deque<CacheEntry>& RollingCache::queue(std::size_t layer) {
  if (layer >= queues_.size()) throw ProtocolError(where(layer) + "no such layer");
  return queues_[layer];
}

const std::deque<CacheEntry>& RollingCache::queue(std::size_t layer) const {
  if (layer >= queues_.size()) throw ProtocolError(where(layer) + "no such layer");
  return queues_[layer];
}

std::size_t RollingCache::size(std::size_t layer) const { return queue(layer).size(); }

void RollingCache::store(std::size_t layer, Tensor a_s, Tensor a_c, Tensor a_m, std::size_t step) {
  auto& q = queue(layer);
  if (!q.empty()) {
    throw ProtocolError(where(layer) + "store into a queue still holding " + std::to_string(q.size()) + " entries");
  }
  if (a_s.shape() != a_c.shape() || a_s.shape() != a_m.shape()) {
    throw ShapeError(where(layer) + "attention outputs disagree in shape");
  }
  const std::size_t elements = a_s.size() + a_c.size() + a_m.size();
  q.push_back({BlockKind::Spatial, std::move(a_s), step});
  q.push_back({BlockKind::Camera, std::move(a_c), step});
  q.push_back({BlockKind::Motion, std::move(a_m), step});
  if (counters_) counters_->acquire(elements);
}

CacheEntry RollingCache::retrieve_entry(std::size_t layer, BlockKind kind) {
  auto& q = queue(layer);
  if (q.empty()) throw ProtocolError(where(layer) + "retrieve " + block_name(kind) + " from an empty queue");
  if (q.front().kind != kind) {
    throw ProtocolError(where(layer) + "retrieve " + block_name(kind) + " but head is " + block_name(q.front().kind));
  }
  CacheEntry e = std::move(q.front());
  q.pop_front();
  if (counters_) counters_->release(e.value.size());
  return e;
}

Tensor RollingCache::retrieve(std::size_t layer, BlockKind kind) { return retrieve_entry(layer, kind).value; }

const CacheEntry& RollingCache::peek(std::size_t layer, BlockKind kind) const {
  for (const auto& e : queue(layer)) {
    if (e.kind == kind) return e;
  }
  throw ProtocolError(where(layer) + "no cached " + block_name(kind) + " entry to peek");
}

void RollingCache::release(std::size_t layer) {
  for (auto kind : kBlockOrder) retrieve_entry(layer, kind);
}

double RollingCache::record_similarity(std::size_t layer, BlockKind kind, const Tensor& fresh, std::size_t step) {
  const CacheEntry& cached = peek(layer, kind);
  SimilarityRecord r{step, layer, kind, 0.0, false};
  try {
    r.cosine = cosine(cached.value, fresh);
  } catch (const DegenerateInputError&) {
    r.degenerate = true;
  }
  log_.push_back(r);
  return r.cosine;
}

void RollingCache::write_similarity_csv(std::ostream& os) const { scm::write_similarity_csv(os, log_); }

void write_similarity_csv(std::ostream& os, std::span<const SimilarityRecord> log) {
  const auto precision = os.precision(17);
  os << "step,layer,kind,cosine\n";
  for (const auto& r : log) {
    os << r.step << ',' << r.layer << ',' << block_name(r.kind) << ',' << r.cosine << '\n';
  }
  os.precision(precision);
}

}  // namespace scm

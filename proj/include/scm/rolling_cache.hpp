#pragma once

#include <cstddef>
#include <deque>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "scm/attention.hpp"
#include "scm/cost.hpp"
#include "scm/tensor.hpp"

namespace scm {

struct CacheEntry {
  BlockKind kind;
  Tensor value;
  std::size_t step_written;
};

struct SimilarityRecord {
  std::size_t step;
  std::size_t layer;
  BlockKind kind;
  double cosine;
  bool degenerate;  // a zero-norm operand; cosine logged as 0
};

/// Per-layer FIFO of the previous compute step's spatial, camera and motion
/// attention outputs. Entries are inserted in [s, c, m] order and released in
/// the same order. Misuse raises ProtocolError.
class RollingCache {
 public:
  explicit RollingCache(std::size_t layers, CostCounters* counters = nullptr);

  std::size_t layers() const noexcept { return queues_.size(); }
  std::size_t size(std::size_t layer) const;
  bool full(std::size_t layer) const { return size(layer) == 3; }

  void store(std::size_t layer, Tensor a_s, Tensor a_c, Tensor a_m, std::size_t step);

  /// Pops the head entry; it must be of `kind`.
  Tensor retrieve(std::size_t layer, BlockKind kind);
  CacheEntry retrieve_entry(std::size_t layer, BlockKind kind);

  /// Reads an entry of `kind` without popping it.
  const CacheEntry& peek(std::size_t layer, BlockKind kind) const;

  /// Pops all three entries in FIFO order.
  void release(std::size_t layer);

  /// Cosine between the cached entry of `kind` and `fresh`; appended to the log.
  double record_similarity(std::size_t layer, BlockKind kind, const Tensor& fresh, std::size_t step);

  const std::vector<SimilarityRecord>& similarity_log() const noexcept { return log_; }
  void append_record(const SimilarityRecord& r) { log_.push_back(r); }

  void write_similarity_csv(std::ostream& os) const;

 private:
  std::deque<CacheEntry>& queue(std::size_t layer);
  const std::deque<CacheEntry>& queue(std::size_t layer) const;

  std::vector<std::deque<CacheEntry>> queues_;
  std::vector<SimilarityRecord> log_;
  CostCounters* counters_;
};

void write_similarity_csv(std::ostream& os, std::span<const SimilarityRecord> log);

}  // namespace scm

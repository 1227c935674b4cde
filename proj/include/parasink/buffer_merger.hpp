#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <vector>

#include "parasink/codec.hpp"
#include "parasink/container.hpp"
#include "parasink/executor.hpp"

namespace parasink {

struct MergerConfig {
  std::size_t buffer_count = 1;
  std::uint64_t merge_threshold_bytes = std::uint64_t{64} << 20;
  std::optional<std::uint64_t> merge_threshold_events;

  void validate() const;
};

/// In-memory file image: a column store plus the baskets it has cut since the last merge.
class MemoryFileBuffer {
 public:
  MemoryFileBuffer(std::size_t id, std::vector<std::string> columns, FlushPolicy policy);

  std::size_t id() const noexcept { return id_; }
  std::uint64_t events_stored() const noexcept { return events_stored_; }
  std::uint64_t bytes_stored() const noexcept { return bytes_stored_; }
  /// Pending column bytes plus compressed baskets held.
  std::uint64_t resident_bytes() const noexcept { return store_.pending_bytes() + compressed_bytes_; }
  const std::vector<CompressedBasket>& baskets() const noexcept { return baskets_; }
  const ColumnStore& store() const noexcept { return store_; }

 private:
  friend class BufferMerger;
  friend class MergeQueue;

  std::size_t id_;
  ColumnStore store_;
  std::vector<CompressedBasket> baskets_;
  std::uint64_t events_stored_ = 0;
  std::uint64_t bytes_stored_ = 0;
  std::uint64_t compressed_bytes_ = 0;
};

enum class BufferPolicy {
  FullestFirst,  ///< most events stored, lowest id on ties
  RoundRobin,    ///< next id after the last one handed out (comparison baseline)
};

/// Bounded pool of idle buffers. acquire() blocks until one is idle.
class MergeQueue {
 public:
  explicit MergeQueue(std::vector<std::unique_ptr<MemoryFileBuffer>> buffers,
                      BufferPolicy policy = BufferPolicy::FullestFirst);

  std::unique_ptr<MemoryFileBuffer> acquire();
  /// Non-blocking variant; empty when nothing is idle.
  std::unique_ptr<MemoryFileBuffer> try_acquire();
  void release(std::unique_ptr<MemoryFileBuffer> buffer);

  /// Later acquires throw LifecycleError.
  void close();
  bool closed() const;

  std::size_t capacity() const noexcept { return capacity_; }
  std::size_t idle_count() const;

 private:
  std::unique_ptr<MemoryFileBuffer> pop_locked();

  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::vector<std::unique_ptr<MemoryFileBuffer>> idle_;
  std::size_t capacity_;
  BufferPolicy policy_;
  std::size_t last_id_;
  bool closed_ = false;
};

enum class MergeDecision { Keep, MergeDue };

struct MergeStats {
  /// events_stored of each buffer (by id) when finalize merged it.
  std::vector<std::uint64_t> tail_events_per_buffer;
  std::uint64_t merges = 0;
  std::uint64_t merge_due_signals = 0;
  std::chrono::nanoseconds merge_time_total{0};
  std::uint64_t peak_resident_bytes = 0;
  std::uint64_t max_concurrent_merges = 0;
};

/// Parallel writer front end: writers check out a buffer, write events into it, and merge full
/// buffers into the final container on their own thread. One merge is appended at a time.
class BufferMerger {
 public:
  BufferMerger(std::vector<std::string> columns, FlushPolicy flush, MergerConfig config, std::ostream& sink,
               BufferPolicy policy = BufferPolicy::FullestFirst);

  std::unique_ptr<MemoryFileBuffer> acquire() { return queue_.acquire(); }
  void release(std::unique_ptr<MemoryFileBuffer> buffer) { queue_.release(std::move(buffer)); }

  /// Appends the event; cut baskets are compressed on `pool` (sequential when null).
  /// A schema mismatch or bad level leaves the buffer unchanged.
  MergeDecision write_event(MemoryFileBuffer& buffer, std::uint64_t event_id, std::span<const ProductRef> products,
                            int level, Executor* pool, bool isolation = true);
  MergeDecision write_event(MemoryFileBuffer& buffer, const Event& event, int level, Executor* pool,
                            bool isolation = true);

  /// Flushes and compresses the buffer's remaining columns, appends its baskets to the final file,
  /// resets it and puts it back in the queue. On a sink failure the buffer is dropped and the
  /// SinkError propagates.
  void merge(std::unique_ptr<MemoryFileBuffer> buffer, int level, Executor* pool, bool isolation = true);

  /// Merges every buffer, writes the trailer. Throws LifecycleError when called twice.
  MergeStats finalize(int level, Executor* pool, bool isolation = true);

  const MergerConfig& config() const noexcept { return config_; }
  MergeQueue& queue() noexcept { return queue_; }
  std::uint64_t peak_resident_bytes() const noexcept { return peak_resident_.load(); }
  std::uint64_t merges() const noexcept { return merges_.load(); }
  std::uint64_t merge_due_signals() const noexcept { return merge_due_.load(); }
  std::uint64_t exclusivity_violations() const noexcept { return violations_.load(); }

 private:
  void account(std::int64_t delta);
  void merge_locked_out(MemoryFileBuffer& buffer, int level, Executor* pool, bool isolation);

  MergerConfig config_;
  MergeQueue queue_;
  ContainerWriter writer_;
  std::mutex append_mu_;
  std::atomic<int> appenders_{0};
  std::atomic<std::uint64_t> violations_{0};
  std::atomic<std::uint64_t> max_concurrent_merges_{0};
  std::atomic<std::uint64_t> merges_{0};
  std::atomic<std::uint64_t> merge_due_{0};
  std::atomic<std::int64_t> merge_ns_{0};
  std::atomic<std::int64_t> resident_{0};
  std::atomic<std::uint64_t> peak_resident_{0};
  std::atomic<std::size_t> lost_{0};
  bool finalized_ = false;
};

}  // namespace parasink

#include "parasink/buffer_merger.hpp"

#include <algorithm>

#include "parasink/errors.hpp"
#include "parasink/imt.hpp"

namespace parasink {

void MergerConfig::validate() const {
  if (buffer_count < 1) throw ValidationError("buffer_count: must be >= 1");
  if (merge_threshold_bytes == 0) throw ValidationError("merge_threshold_bytes: must be positive");
  if (merge_threshold_events && *merge_threshold_events == 0) {
    throw ValidationError("merge_threshold_events: must be positive");
  }
}

MemoryFileBuffer::MemoryFileBuffer(std::size_t id, std::vector<std::string> columns, FlushPolicy policy)
    : id_(id), store_(std::move(columns), policy) {}

// ---------------------------------------------------------------------------

MergeQueue::MergeQueue(std::vector<std::unique_ptr<MemoryFileBuffer>> buffers, BufferPolicy policy)
    : idle_(std::move(buffers)), capacity_(idle_.size()), policy_(policy), last_id_(idle_.size()) {
  if (capacity_ == 0) throw ValidationError("buffer_count: must be >= 1");
}

std::unique_ptr<MemoryFileBuffer> MergeQueue::pop_locked() {
  if (idle_.empty()) return nullptr;
  std::size_t best = 0;
  if (policy_ == BufferPolicy::FullestFirst) {
    for (std::size_t i = 1; i < idle_.size(); ++i) {
      const auto& a = *idle_[i];
      const auto& b = *idle_[best];
      if (a.events_stored() > b.events_stored() || (a.events_stored() == b.events_stored() && a.id() < b.id())) {
        best = i;
      }
    }
  } else {
    // Cyclic distance from the last id handed out.
    auto distance = [&](std::size_t id) { return (id + capacity_ - last_id_ - 1) % capacity_; };
    for (std::size_t i = 1; i < idle_.size(); ++i) {
      if (distance(idle_[i]->id()) < distance(idle_[best]->id())) best = i;
    }
  }
  auto out = std::move(idle_[best]);
  idle_.erase(idle_.begin() + static_cast<std::ptrdiff_t>(best));
  last_id_ = out->id();
  return out;
}

std::unique_ptr<MemoryFileBuffer> MergeQueue::acquire() {
  std::unique_lock lk(mu_);
  cv_.wait(lk, [&] { return closed_ || !idle_.empty(); });
  if (closed_) throw LifecycleError("acquire after finalize");
  return pop_locked();
}

std::unique_ptr<MemoryFileBuffer> MergeQueue::try_acquire() {
  std::lock_guard lk(mu_);
  if (closed_) throw LifecycleError("acquire after finalize");
  return pop_locked();
}

void MergeQueue::release(std::unique_ptr<MemoryFileBuffer> buffer) {
  if (!buffer) return;
  {
    std::lock_guard lk(mu_);
    idle_.push_back(std::move(buffer));
  }
  cv_.notify_one();
}

void MergeQueue::close() {
  {
    std::lock_guard lk(mu_);
    closed_ = true;
  }
  cv_.notify_all();
}

bool MergeQueue::closed() const {
  std::lock_guard lk(mu_);
  return closed_;
}

std::size_t MergeQueue::idle_count() const {
  std::lock_guard lk(mu_);
  return idle_.size();
}

// ---------------------------------------------------------------------------

namespace {

std::vector<std::unique_ptr<MemoryFileBuffer>> make_buffers(const std::vector<std::string>& columns,
                                                            const FlushPolicy& flush, const MergerConfig& config) {
  config.validate();
  std::vector<std::unique_ptr<MemoryFileBuffer>> buffers;
  for (std::size_t i = 0; i < config.buffer_count; ++i) {
    buffers.push_back(std::make_unique<MemoryFileBuffer>(i, columns, flush));
  }
  return buffers;
}

}  // namespace

BufferMerger::BufferMerger(std::vector<std::string> columns, FlushPolicy flush, MergerConfig config,
                           std::ostream& sink, BufferPolicy policy)
    : config_(config), queue_(make_buffers(columns, flush, config), policy), writer_(sink) {}

void BufferMerger::account(std::int64_t delta) {
  const auto now = resident_.fetch_add(delta) + delta;
  if (now <= 0) return;
  auto peak = peak_resident_.load();
  while (static_cast<std::uint64_t>(now) > peak && !peak_resident_.compare_exchange_weak(peak, now)) {
  }
}

MergeDecision BufferMerger::write_event(MemoryFileBuffer& buffer, std::uint64_t event_id,
                                        std::span<const ProductRef> products, int level, Executor* pool,
                                        bool isolation) {
  if (level < 0 || level > codec::kMaxLevel) throw UsageError("codec level out of range: " + std::to_string(level));
  const auto before = buffer.resident_bytes();

  auto cut = buffer.store_.append_event(event_id, products);
  std::uint64_t raw = 0;
  for (const auto& p : products) raw += p.bytes.size();
  ++buffer.events_stored_;
  buffer.bytes_stored_ += raw;

  if (!cut.empty()) {
    auto compressed = compress_all(CompressionJob{std::move(cut), level, isolation}, pool);
    for (auto& cb : compressed) {
      buffer.compressed_bytes_ += cb.payload.size();
      buffer.baskets_.push_back(std::move(cb));
    }
  }
  account(static_cast<std::int64_t>(buffer.resident_bytes()) - static_cast<std::int64_t>(before));

  const bool due = buffer.bytes_stored_ >= config_.merge_threshold_bytes ||
                   (config_.merge_threshold_events && buffer.events_stored_ >= *config_.merge_threshold_events);
  if (due) merge_due_.fetch_add(1);
  return due ? MergeDecision::MergeDue : MergeDecision::Keep;
}

MergeDecision BufferMerger::write_event(MemoryFileBuffer& buffer, const Event& event, int level, Executor* pool,
                                        bool isolation) {
  std::vector<ProductRef> refs;
  refs.reserve(event.products.size());
  for (const auto& p : event.products) refs.push_back(ProductRef{p.name, p.payload});
  return write_event(buffer, event.id, refs, level, pool, isolation);
}

void BufferMerger::merge_locked_out(MemoryFileBuffer& buffer, int level, Executor* pool, bool isolation) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto before = buffer.resident_bytes();

  auto rest = buffer.store_.flush_all();
  if (!rest.empty()) {
    auto compressed = compress_all(CompressionJob{std::move(rest), level, isolation}, pool);
    for (auto& cb : compressed) {
      buffer.compressed_bytes_ += cb.payload.size();
      buffer.baskets_.push_back(std::move(cb));
    }
    account(static_cast<std::int64_t>(buffer.resident_bytes()) - static_cast<std::int64_t>(before));
  }

  {
    std::lock_guard lk(append_mu_);
    const auto inside = appenders_.fetch_add(1) + 1;
    if (inside != 1) violations_.fetch_add(1);
    auto seen = max_concurrent_merges_.load();
    while (static_cast<std::uint64_t>(inside) > seen &&
           !max_concurrent_merges_.compare_exchange_weak(seen, static_cast<std::uint64_t>(inside))) {
    }
    try {
      const auto base = writer_.event_count();
      for (auto& cb : buffer.baskets_) {
        cb.header.first_entry += base;
        writer_.append(cb);
      }
      writer_.add_events(buffer.store_.entries());
    } catch (...) {
      appenders_.fetch_sub(1);
      throw;
    }
    appenders_.fetch_sub(1);
  }

  account(-static_cast<std::int64_t>(buffer.resident_bytes()));
  buffer.store_.reset();
  buffer.baskets_.clear();
  buffer.events_stored_ = 0;
  buffer.bytes_stored_ = 0;
  buffer.compressed_bytes_ = 0;

  merges_.fetch_add(1);
  merge_ns_.fetch_add(
      std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now() - t0).count());
}

void BufferMerger::merge(std::unique_ptr<MemoryFileBuffer> buffer, int level, Executor* pool, bool isolation) {
  try {
    merge_locked_out(*buffer, level, pool, isolation);
  } catch (...) {
    account(-static_cast<std::int64_t>(buffer->resident_bytes()));
    lost_.fetch_add(1);
    throw;
  }
  queue_.release(std::move(buffer));
}

MergeStats BufferMerger::finalize(int level, Executor* pool, bool isolation) {
  if (finalized_) throw LifecycleError("finalize called twice");
  finalized_ = true;

  std::vector<std::unique_ptr<MemoryFileBuffer>> all;
  const auto expected = queue_.capacity() - lost_.load();
  while (all.size() < expected) {
    auto b = queue_.try_acquire();
    if (!b) throw LifecycleError("finalize while writers still hold buffers");
    all.push_back(std::move(b));
  }
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a->id() < b->id(); });

  MergeStats stats;
  stats.tail_events_per_buffer.assign(queue_.capacity(), 0);
  for (auto& b : all) {
    stats.tail_events_per_buffer[b->id()] = b->events_stored();
    merge_locked_out(*b, level, pool, isolation);
  }
  for (auto& b : all) queue_.release(std::move(b));
  queue_.close();
  writer_.close();

  stats.merges = merges_.load();
  stats.merge_due_signals = merge_due_.load();
  stats.merge_time_total = std::chrono::nanoseconds(merge_ns_.load());
  stats.peak_resident_bytes = peak_resident_.load();
  stats.max_concurrent_merges = max_concurrent_merges_.load();
  return stats;
}

}  // namespace parasink

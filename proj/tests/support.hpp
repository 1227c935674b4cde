#pragma once

// Fixtures and probes shared by the unit suites and the acceptance binary.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <future>
#include <random>
#include <sstream>
#include <streambuf>
#include <thread>
#include <vector>

#include "parasink/bench.hpp"
#include "parasink/buffer_merger.hpp"
#include "parasink/codec.hpp"
#include "parasink/executor.hpp"
#include "parasink/imt.hpp"

namespace parasink::testing {

/// Stream buffer that accepts `limit` bytes and then reports failure.
class FailingBuf : public std::streambuf {
 public:
  explicit FailingBuf(std::size_t limit) : limit_(limit) {}

 protected:
  std::streamsize xsputn(const char*, std::streamsize n) override {
    if (written_ + static_cast<std::size_t>(n) > limit_) return 0;
    written_ += static_cast<std::size_t>(n);
    return n;
  }
  int_type overflow(int_type ch) override { return xsputn(nullptr, 1) == 1 ? ch : traits_type::eof(); }

 private:
  std::size_t limit_;
  std::size_t written_ = 0;
};

inline std::size_t host_threads() { return std::max(1u, std::thread::hardware_concurrency()); }

/// Random basket with `entries` entries and mixed low/high entropy content.
inline Basket random_basket(std::mt19937_64& rng, std::size_t max_bytes, const std::string& name = "col") {
  std::uniform_int_distribution<std::size_t> len(0, max_bytes);
  std::uniform_int_distribution<int> entries(1, 8);
  Basket b;
  b.column_name = name;
  b.first_entry = rng() % 1000;
  const auto n = entries(rng);
  for (int e = 0; e < n; ++e) {
    const auto l = len(rng) / static_cast<std::size_t>(n);
    const bool patterned = rng() % 2 == 0;
    for (std::size_t i = 0; i < l; ++i) {
      b.raw_bytes.push_back(patterned ? static_cast<std::uint8_t>(i % 13) : static_cast<std::uint8_t>(rng()));
    }
    b.entry_offsets.push_back(b.raw_bytes.size());
  }
  b.entry_count = b.entry_offsets.size();
  return b;
}

/// Small profile: three products per tier, a few hundred bytes each.
inline BenchSetup small_setup(std::uint64_t events, std::uint64_t seed, std::uint64_t cpu_work = 20'000) {
  BenchSetup setup;
  auto& w = setup.workload;
  w.events_total = events;
  w.seed = seed;
  w.cpu_work_per_event = cpu_work;
  int k = 0;
  for (auto tier : {Tier::Reco, Tier::Aod, Tier::MiniAod}) {
    for (int i = 0; i < 3; ++i) {
      w.schemas.push_back(ProductSchema{std::string(to_string(tier)) + "_p" + std::to_string(i), tier,
                                        {static_cast<std::uint64_t>(96 + 64 * (k++ % 4)), 0.4}, 0.6});
    }
  }
  setup.producers = default_producers(w, cpu_work);
  setup.flush = FlushPolicy{std::uint64_t{2048}, std::nullopt};
  setup.codec_level = 1;
  setup.merger[Tier::Reco] = MergerConfig{2, 8192, std::nullopt};
  setup.merger[Tier::Aod] = MergerConfig{2, 4096, std::nullopt};
  setup.merger[Tier::MiniAod] = MergerConfig{1, 2048, std::nullopt};
  setup.sample_period = std::chrono::milliseconds(5);
  return setup;
}

/// One trial of the stolen-work probe. A feeder thread keeps injecting short foreign tasks into the
/// shared queue while a module task on `pool` runs compress_all over `baskets`. Returns how many
/// foreign tasks the module's thread executed between the start and the end of the job.
inline std::size_t isolation_probe_trial(Executor& pool, const std::vector<Basket>& baskets, bool isolation,
                                         std::chrono::microseconds feed_interval = std::chrono::microseconds(300)) {
  pool.clear_provenance();
  std::atomic<bool> stop_feeding{false};
  std::atomic<int> foreign_left{0};
  std::promise<std::tuple<std::size_t, std::int64_t, std::int64_t>> window;
  auto result = window.get_future();

  std::thread feeder([&] {
    while (!stop_feeding.load()) {
      Task foreign;
      foreign.kind = TaskKind::Foreign;
      foreign.scope = pool.new_scope();
      foreign.fn = [&foreign_left] {
        volatile auto sink = burn_cpu(100'000);
        (void)sink;
        foreign_left.fetch_sub(1);
      };
      foreign_left.fetch_add(1);
      pool.inject(std::move(foreign));
      std::this_thread::sleep_for(feed_interval);
    }
  });

  Task output;
  output.kind = TaskKind::ModuleRun;
  output.module = 0;
  output.fn = [&] {
    const auto slot = pool.current_thread_slot();
    const auto start = pool.now_ns();
    (void)compress_all(CompressionJob{baskets, 6, isolation}, &pool);
    window.set_value({slot, start, pool.now_ns()});
  };
  pool.submit(std::move(output));
  const auto [slot, start, end] = result.get();
  stop_feeding = true;
  feeder.join();
  while (foreign_left.load() > 0) std::this_thread::sleep_for(std::chrono::microseconds(100));
  // Let the pool close the output task's record.
  std::this_thread::sleep_for(std::chrono::milliseconds(1));

  std::size_t foreign_on_caller = 0;
  for (const auto& r : pool.provenance()) {
    if (r.kind == TaskKind::Foreign && r.thread == slot && r.start_ns >= start && r.start_ns <= end) {
      ++foreign_on_caller;
    }
  }
  return foreign_on_caller;
}

inline std::vector<Basket> probe_baskets(std::size_t count = 16, std::size_t bytes = 16 * 1024) {
  std::mt19937_64 rng(7);
  std::vector<Basket> baskets;
  for (std::size_t i = 0; i < count; ++i) {
    Basket b;
    b.column_name = "c" + std::to_string(i);
    for (std::size_t k = 0; k < bytes; ++k) {
      b.raw_bytes.push_back(k % 2 ? static_cast<std::uint8_t>(rng()) : static_cast<std::uint8_t>(k % 64));
    }
    b.entry_offsets = {b.raw_bytes.size()};
    b.entry_count = 1;
    baskets.push_back(std::move(b));
  }
  return baskets;
}

struct FullestFirstModelResult {
  std::size_t sequences = 0;
  std::size_t acquires_checked = 0;
  std::size_t mismatches = 0;
};

/// Enumerates every sequence of `steps` operations over `n_buffers` buffers. An operation is an
/// acquire (only when a buffer is idle) or, for a checked-out buffer, one of: release unchanged,
/// write one event then release, merge (which empties and releases it). Each sequence is replayed
/// against a real BufferMerger and every acquire is compared with the model's choice: the idle
/// buffer with the most events, lowest id on ties.
inline FullestFirstModelResult check_fullest_first_exhaustively(std::size_t n_buffers = 3, std::size_t steps = 6) {
  enum class Op { Acquire, Release, WriteRelease, Merge };
  struct Step {
    Op op;
    std::size_t buffer;
  };
  struct ModelState {
    std::vector<std::uint64_t> events;
    std::vector<bool> out;
  };

  FullestFirstModelResult result;
  std::vector<Step> seq;

  auto replay = [&](const std::vector<Step>& steps_taken) {
    std::ostringstream sink;
    BufferMerger merger({"x"}, FlushPolicy{std::uint64_t{1} << 20, std::nullopt},
                        MergerConfig{n_buffers, std::uint64_t{1} << 30, std::nullopt}, sink);
    ModelState model{std::vector<std::uint64_t>(n_buffers, 0), std::vector<bool>(n_buffers, false)};
    std::vector<std::unique_ptr<MemoryFileBuffer>> held(n_buffers);
    const Bytes payload{1, 2, 3};
    std::uint64_t next_id = 0;
    for (const auto& s : steps_taken) {
      switch (s.op) {
        case Op::Acquire: {
          std::size_t expect = n_buffers;
          for (std::size_t b = 0; b < n_buffers; ++b) {
            if (model.out[b]) continue;
            if (expect == n_buffers || model.events[b] > model.events[expect]) expect = b;
          }
          auto got = merger.queue().try_acquire();
          ++result.acquires_checked;
          if (!got || got->id() != expect || got->events_stored() != model.events[expect]) ++result.mismatches;
          if (!got) return;
          model.out[got->id()] = true;
          held[got->id()] = std::move(got);
          break;
        }
        case Op::Release:
          model.out[s.buffer] = false;
          merger.release(std::move(held[s.buffer]));
          break;
        case Op::WriteRelease: {
          ProductRef ref{"x", payload};
          merger.write_event(*held[s.buffer], next_id++, std::span<const ProductRef>(&ref, 1), 0, nullptr);
          ++model.events[s.buffer];
          model.out[s.buffer] = false;
          merger.release(std::move(held[s.buffer]));
          break;
        }
        case Op::Merge:
          merger.merge(std::move(held[s.buffer]), 0, nullptr);
          model.events[s.buffer] = 0;
          model.out[s.buffer] = false;
          break;
      }
    }
    for (auto& h : held) {
      if (h) merger.release(std::move(h));
    }
  };

  std::function<void(ModelState&)> extend = [&](ModelState& state) {
    if (seq.size() == steps) {
      ++result.sequences;
      replay(seq);
      return;
    }
    if (std::find(state.out.begin(), state.out.end(), false) != state.out.end()) {
      std::size_t pick = n_buffers;
      for (std::size_t b = 0; b < n_buffers; ++b) {
        if (!state.out[b] && (pick == n_buffers || state.events[b] > state.events[pick])) pick = b;
      }
      auto next = state;
      next.out[pick] = true;
      seq.push_back({Op::Acquire, pick});
      extend(next);
      seq.pop_back();
    }
    for (std::size_t b = 0; b < n_buffers; ++b) {
      if (!state.out[b]) continue;
      for (auto op : {Op::Release, Op::WriteRelease, Op::Merge}) {
        auto next = state;
        next.out[b] = false;
        if (op == Op::WriteRelease) ++next.events[b];
        if (op == Op::Merge) next.events[b] = 0;
        seq.push_back({op, b});
        extend(next);
        seq.pop_back();
      }
    }
  };

  ModelState start{std::vector<std::uint64_t>(n_buffers, 0), std::vector<bool>(n_buffers, false)};
  extend(start);
  return result;
}

}  // namespace parasink::testing

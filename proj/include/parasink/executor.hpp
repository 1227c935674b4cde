#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <exception>
#include <functional>
#include <limits>
#include <memory>
#include <mutex>
#include <optional>
#include <thread>
#include <vector>

namespace parasink {

using ScopeId = std::uint64_t;

inline constexpr std::uint64_t kNoEvent = std::numeric_limits<std::uint64_t>::max();
inline constexpr int kNoModule = -1;

enum class TaskKind : std::uint8_t {
  Source,     ///< stream bookkeeping: fetch next event
  ModuleRun,  ///< one module processing one event
  Subtask,    ///< child of a TaskGroup (IMT compression and friends)
  EndJob,     ///< end-of-run work attributed to a module (final merges)
  Foreign,    ///< injected by tests to probe stealing
};

struct Task {
  std::function<void()> fn;
  ScopeId scope = 0;
  TaskKind kind = TaskKind::Subtask;
  /// Module the task runs as (ModuleRun/EndJob) or was submitted from (Subtask).
  int module = kNoModule;
  std::uint64_t event = kNoEvent;
  /// Runs after the task's provenance record is closed and its frame has left the occupancy
  /// counters. Used to hand a concurrency permit on without overlapping the recorded interval.
  std::function<void()> then;
};

/// One task execution as seen by the thread that ran it.
struct ProvenanceRecord {
  std::uint64_t task_id = 0;
  ScopeId scope = 0;
  TaskKind kind = TaskKind::Subtask;
  int module = kNoModule;
  std::uint64_t event = kNoEvent;
  std::size_t thread = 0;
  /// Innermost module frame already active on this thread when the task started.
  int nested_in = kNoModule;
  std::int64_t start_ns = 0;
  std::int64_t end_ns = 0;
};

struct OccupancySnapshot {
  /// Module frames currently executing (a frame suspended by a nested module run is not counted).
  std::vector<int> running_by_module;
  /// Threads with at least one task frame.
  int busy_threads = 0;
};

/// Work-stealing pool. Each worker owns a deque (LIFO for its owner, FIFO for thieves); threads that
/// are not workers submit into a shared injection queue. Tasks carry a scope; a thread waiting in
/// isolated mode only picks up tasks of the scope it waits on. Idle threads steal before they look at the
/// shared queue.
class Executor {
 public:
  explicit Executor(std::size_t n_threads);
  ~Executor();
  Executor(const Executor&) = delete;
  Executor& operator=(const Executor&) = delete;

  std::size_t size() const noexcept { return workers_.size(); }

  ScopeId new_scope() { return next_scope_.fetch_add(1, std::memory_order_relaxed); }

  /// Pushes onto the calling worker's deque, or the injection queue from other threads.
  void submit(Task task);
  /// Always uses the injection queue.
  void inject(Task task);

  /// Executes tasks on the calling thread until `done()` holds. With `isolated`, only tasks of
  /// `scope` are taken; otherwise any queued task may run here.
  void wait_until(ScopeId scope, bool isolated, const std::function<bool()>& done);

  /// Wakes threads blocked in wait_until so they re-check their predicate.
  void notify_waiters();

  /// Module running on the calling thread, or kNoModule.
  int current_module() const;
  /// Slot id of the calling thread in provenance records (registers non-worker threads).
  std::size_t current_thread_slot();

  /// Size of the per-module occupancy table; call before tasks reference modules.
  void set_module_count(std::size_t n);
  OccupancySnapshot occupancy() const;

  /// Nanoseconds since the executor was created.
  std::int64_t now_ns() const;

  /// All records from all threads, sorted by start time. Call after quiescence.
  std::vector<ProvenanceRecord> provenance() const;
  void clear_provenance();

  /// First exception escaping a raw task (TaskGroup tasks never escape).
  std::exception_ptr unhandled_error() const;

 private:
  struct ThreadState {
    std::size_t slot = 0;
    bool worker = false;
    mutable std::mutex deque_mu;
    std::deque<Task> deque;
    mutable std::mutex log_mu;
    std::vector<ProvenanceRecord> log;
    /// Module ids of active frames, kNoModule for non-module frames.
    std::vector<int> frames;
  };

  ThreadState& self();
  ThreadState* self_if_registered() const;
  void worker_loop(ThreadState& ts);
  std::optional<Task> find_task(ThreadState& ts, std::optional<ScopeId> scope);
  static std::optional<Task> take_from(std::deque<Task>& q, std::optional<ScopeId> scope, bool from_back);
  void execute(ThreadState& ts, Task task);
  void enter_frame(ThreadState& ts, int module, bool module_frame);
  void leave_frame(ThreadState& ts, bool module_frame);
  void push_ready();

  const std::uint64_t serial_;
  const std::chrono::steady_clock::time_point epoch_;
  std::vector<std::unique_ptr<ThreadState>> workers_;
  std::vector<std::thread> threads_;

  mutable std::mutex externals_mu_;
  std::vector<std::unique_ptr<ThreadState>> externals_;

  std::mutex global_mu_;
  std::deque<Task> global_;

  std::atomic<std::int64_t> queued_{0};
  std::atomic<bool> stop_{false};
  std::mutex sleep_mu_;
  std::condition_variable sleep_cv_;
  std::mutex wait_mu_;
  std::condition_variable wait_cv_;

  std::atomic<std::uint64_t> next_task_{1};
  std::atomic<ScopeId> next_scope_{1};

  mutable std::mutex occupancy_mu_;
  std::vector<int> running_by_module_;
  int busy_threads_ = 0;

  mutable std::mutex error_mu_;
  std::exception_ptr unhandled_;
};

/// Set of tasks sharing one scope. wait() helps execute them and rethrows the first failure;
/// once a task fails, tasks that have not started are skipped.
class TaskGroup {
 public:
  explicit TaskGroup(Executor& executor);
  ~TaskGroup();
  TaskGroup(const TaskGroup&) = delete;
  TaskGroup& operator=(const TaskGroup&) = delete;

  void run(std::function<void()> fn);
  void wait(bool isolated);

  ScopeId scope() const noexcept { return scope_; }

 private:
  struct State {
    std::atomic<std::size_t> outstanding{0};
    std::atomic<bool> failed{false};
    std::mutex mu;
    std::exception_ptr error;
  };

  Executor& executor_;
  ScopeId scope_;
  int origin_module_;
  std::shared_ptr<State> state_;
};

/// Runs fn(0..n-1) as one TaskGroup and waits. n == 0 is a no-op.
void parallel_for(Executor& executor, std::size_t n, const std::function<void(std::size_t)>& fn, bool isolated);

}  // namespace parasink

#include "parasink/executor.hpp"

#include <algorithm>

namespace parasink {

namespace {

std::atomic<std::uint64_t> g_executor_serial{1};

struct TlsEntry {
  std::uint64_t serial;
  void* state;
};

thread_local std::vector<TlsEntry> t_states;

void* tls_lookup(std::uint64_t serial) {
  for (const auto& e : t_states) {
    if (e.serial == serial) return e.state;
  }
  return nullptr;
}

int innermost_module(const std::vector<int>& frames) {
  for (auto it = frames.rbegin(); it != frames.rend(); ++it) {
    if (*it != kNoModule) return *it;
  }
  return kNoModule;
}

}  // namespace

Executor::Executor(std::size_t n_threads)
    : serial_(g_executor_serial.fetch_add(1)), epoch_(std::chrono::steady_clock::now()) {
  if (n_threads == 0) n_threads = 1;
  workers_.reserve(n_threads);
  for (std::size_t i = 0; i < n_threads; ++i) {
    auto ts = std::make_unique<ThreadState>();
    ts->slot = i;
    ts->worker = true;
    workers_.push_back(std::move(ts));
  }
  threads_.reserve(n_threads);
  for (std::size_t i = 0; i < n_threads; ++i) {
    threads_.emplace_back([this, i] {
      t_states.push_back({serial_, workers_[i].get()});
      worker_loop(*workers_[i]);
      std::erase_if(t_states, [this](const TlsEntry& e) { return e.serial == serial_; });
    });
  }
}

Executor::~Executor() {
  {
    std::lock_guard lk(sleep_mu_);
    stop_ = true;
  }
  sleep_cv_.notify_all();
  for (auto& t : threads_) t.join();
}

Executor::ThreadState* Executor::self_if_registered() const {
  return static_cast<ThreadState*>(tls_lookup(serial_));
}

Executor::ThreadState& Executor::self() {
  if (auto* ts = self_if_registered()) return *ts;
  std::lock_guard lk(externals_mu_);
  auto ts = std::make_unique<ThreadState>();
  ts->slot = workers_.size() + externals_.size();
  auto* raw = ts.get();
  externals_.push_back(std::move(ts));
  t_states.push_back({serial_, raw});
  return *raw;
}

std::size_t Executor::current_thread_slot() { return self().slot; }

int Executor::current_module() const {
  auto* ts = self_if_registered();
  return ts ? innermost_module(ts->frames) : kNoModule;
}

void Executor::push_ready() {
  { std::lock_guard lk(sleep_mu_); }
  sleep_cv_.notify_one();
  notify_waiters();
}

void Executor::submit(Task task) {
  auto* ts = self_if_registered();
  if (ts == nullptr || !ts->worker) {
    inject(std::move(task));
    return;
  }
  queued_.fetch_add(1);
  {
    std::lock_guard lk(ts->deque_mu);
    ts->deque.push_back(std::move(task));
  }
  push_ready();
}

void Executor::inject(Task task) {
  queued_.fetch_add(1);
  {
    std::lock_guard lk(global_mu_);
    global_.push_back(std::move(task));
  }
  push_ready();
}

void Executor::notify_waiters() {
  { std::lock_guard lk(wait_mu_); }
  wait_cv_.notify_all();
}

std::optional<Task> Executor::take_from(std::deque<Task>& q, std::optional<ScopeId> scope, bool from_back) {
  if (q.empty()) return std::nullopt;
  if (!scope) {
    Task t = from_back ? std::move(q.back()) : std::move(q.front());
    from_back ? q.pop_back() : q.pop_front();
    return t;
  }
  if (from_back) {
    for (auto it = q.rbegin(); it != q.rend(); ++it) {
      if (it->scope == *scope) {
        Task t = std::move(*it);
        q.erase(std::next(it).base());
        return t;
      }
    }
  } else {
    for (auto it = q.begin(); it != q.end(); ++it) {
      if (it->scope == *scope) {
        Task t = std::move(*it);
        q.erase(it);
        return t;
      }
    }
  }
  return std::nullopt;
}

std::optional<Task> Executor::find_task(ThreadState& ts, std::optional<ScopeId> scope) {
  if (queued_.load() <= 0) return std::nullopt;
  std::optional<Task> found;
  if (ts.worker) {
    std::lock_guard lk(ts.deque_mu);
    found = take_from(ts.deque, scope, true);
  }
  // Stealing comes before the shared queue, which holds the least urgent work.
  if (!found) {
    const auto n = workers_.size();
    for (std::size_t k = 1; k <= n && !found; ++k) {
      auto& victim = *workers_[(ts.slot + k) % n];
      if (&victim == &ts) continue;
      std::lock_guard lk(victim.deque_mu);
      found = take_from(victim.deque, scope, false);
    }
  }
  if (!found) {
    std::lock_guard lk(global_mu_);
    found = take_from(global_, scope, false);
  }
  if (found) queued_.fetch_sub(1);
  return found;
}

void Executor::enter_frame(ThreadState& ts, int module, bool module_frame) {
  std::lock_guard lk(occupancy_mu_);
  if (ts.frames.empty()) ++busy_threads_;
  if (module_frame) {
    const auto outer = innermost_module(ts.frames);
    if (outer >= 0 && static_cast<std::size_t>(outer) < running_by_module_.size()) --running_by_module_[outer];
    if (module >= 0 && static_cast<std::size_t>(module) < running_by_module_.size()) ++running_by_module_[module];
  }
  ts.frames.push_back(module_frame ? module : kNoModule);
}

void Executor::leave_frame(ThreadState& ts, bool module_frame) {
  std::lock_guard lk(occupancy_mu_);
  const auto module = ts.frames.back();
  ts.frames.pop_back();
  if (module_frame) {
    if (module >= 0 && static_cast<std::size_t>(module) < running_by_module_.size()) --running_by_module_[module];
    const auto outer = innermost_module(ts.frames);
    if (outer >= 0 && static_cast<std::size_t>(outer) < running_by_module_.size()) ++running_by_module_[outer];
  }
  if (ts.frames.empty()) --busy_threads_;
}

void Executor::execute(ThreadState& ts, Task task) {
  ProvenanceRecord rec;
  rec.task_id = next_task_.fetch_add(1, std::memory_order_relaxed);
  rec.scope = task.scope;
  rec.kind = task.kind;
  rec.module = task.module;
  rec.event = task.event;
  rec.thread = ts.slot;
  rec.nested_in = innermost_module(ts.frames);

  const bool module_frame = (task.kind == TaskKind::ModuleRun || task.kind == TaskKind::EndJob) && task.module >= 0;
  rec.start_ns = now_ns();
  enter_frame(ts, task.module, module_frame);
  try {
    task.fn();
  } catch (...) {
    std::lock_guard lk(error_mu_);
    if (!unhandled_) unhandled_ = std::current_exception();
  }
  leave_frame(ts, module_frame);
  rec.end_ns = now_ns();

  {
    std::lock_guard lk(ts.log_mu);
    ts.log.push_back(rec);
  }
  if (task.then) {
    try {
      task.then();
    } catch (...) {
      std::lock_guard lk(error_mu_);
      if (!unhandled_) unhandled_ = std::current_exception();
    }
  }
}

void Executor::worker_loop(ThreadState& ts) {
  for (;;) {
    if (auto task = find_task(ts, std::nullopt)) {
      execute(ts, std::move(*task));
      continue;
    }
    std::unique_lock lk(sleep_mu_);
    sleep_cv_.wait(lk, [&] { return stop_.load() || queued_.load() > 0; });
    if (stop_.load() && queued_.load() <= 0) return;
  }
}

void Executor::wait_until(ScopeId scope, bool isolated, const std::function<bool()>& done) {
  auto& ts = self();
  const auto filter = isolated ? std::optional<ScopeId>(scope) : std::nullopt;
  while (!done()) {
    if (auto task = find_task(ts, filter)) {
      execute(ts, std::move(*task));
      continue;
    }
    std::unique_lock lk(wait_mu_);
    wait_cv_.wait_for(lk, std::chrono::microseconds(200), done);
  }
}

void Executor::set_module_count(std::size_t n) {
  std::lock_guard lk(occupancy_mu_);
  running_by_module_.assign(n, 0);
}

OccupancySnapshot Executor::occupancy() const {
  std::lock_guard lk(occupancy_mu_);
  return OccupancySnapshot{running_by_module_, busy_threads_};
}

std::int64_t Executor::now_ns() const {
  return std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now() - epoch_).count();
}

std::vector<ProvenanceRecord> Executor::provenance() const {
  std::vector<ProvenanceRecord> all;
  auto collect = [&](const ThreadState& ts) {
    std::lock_guard lk(ts.log_mu);
    all.insert(all.end(), ts.log.begin(), ts.log.end());
  };
  for (const auto& w : workers_) collect(*w);
  {
    std::lock_guard lk(externals_mu_);
    for (const auto& e : externals_) collect(*e);
  }
  std::sort(all.begin(), all.end(), [](const ProvenanceRecord& a, const ProvenanceRecord& b) {
    return a.start_ns != b.start_ns ? a.start_ns < b.start_ns : a.task_id < b.task_id;
  });
  return all;
}

void Executor::clear_provenance() {
  auto clear = [](ThreadState& ts) {
    std::lock_guard lk(ts.log_mu);
    ts.log.clear();
  };
  for (auto& w : workers_) clear(*w);
  std::lock_guard lk(externals_mu_);
  for (auto& e : externals_) clear(*e);
}

std::exception_ptr Executor::unhandled_error() const {
  std::lock_guard lk(error_mu_);
  return unhandled_;
}

TaskGroup::TaskGroup(Executor& executor)
    : executor_(executor),
      scope_(executor.new_scope()),
      origin_module_(executor.current_module()),
      state_(std::make_shared<State>()) {}

TaskGroup::~TaskGroup() {
  if (state_->outstanding.load() != 0) {
    try {
      executor_.wait_until(scope_, true, [s = state_] { return s->outstanding.load() == 0; });
    } catch (...) {
    }
  }
}

void TaskGroup::run(std::function<void()> fn) {
  state_->outstanding.fetch_add(1);
  Task task;
  task.scope = scope_;
  task.kind = TaskKind::Subtask;
  task.module = origin_module_;
  task.fn = [state = state_, ex = &executor_, fn = std::move(fn)] {
    if (!state->failed.load()) {
      try {
        fn();
      } catch (...) {
        std::lock_guard lk(state->mu);
        if (!state->error) state->error = std::current_exception();
        state->failed = true;
      }
    }
    if (state->outstanding.fetch_sub(1) == 1) ex->notify_waiters();
  };
  executor_.submit(std::move(task));
}

void TaskGroup::wait(bool isolated) {
  executor_.wait_until(scope_, isolated, [s = state_.get()] { return s->outstanding.load() == 0; });
  std::lock_guard lk(state_->mu);
  if (state_->error) {
    auto error = state_->error;
    state_->error = nullptr;
    state_->failed = false;
    std::rethrow_exception(error);
  }
}

void parallel_for(Executor& executor, std::size_t n, const std::function<void(std::size_t)>& fn, bool isolated) {
  if (n == 0) return;
  TaskGroup group(executor);
  for (std::size_t i = 0; i < n; ++i) group.run([&fn, i] { fn(i); });
  group.wait(isolated);
}

}  // namespace parasink

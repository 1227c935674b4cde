#include "parasink/scheduler.hpp"

#include <algorithm>
#include <condition_variable>
#include <map>
#include <ostream>

#include "parasink/errors.hpp"

namespace parasink {

std::optional<std::size_t> Dag::find(std::string_view name) const {
  for (std::size_t i = 0; i < modules.size(); ++i) {
    if (modules[i].name == name) return i;
  }
  return std::nullopt;
}

Dag build_schedule(std::vector<ModuleSpec> modules, const std::set<std::string>& source_products) {
  Dag dag;
  const auto n = modules.size();
  std::map<std::string, std::size_t> by_name;
  std::map<std::string, std::size_t> producer_of;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& m = modules[i];
    if (m.name.empty()) throw ConfigurationError("module with empty name");
    if (!by_name.emplace(m.name, i).second) throw ConfigurationError("duplicate module name '" + m.name + "'");
    if (m.concurrency_limit && *m.concurrency_limit == 0) {
      throw ConfigurationError("module '" + m.name + "': concurrency_limit must be positive");
    }
    if (m.kind == ModuleKind::Output && !m.produces.empty()) {
      throw ConfigurationError("output module '" + m.name + "' must not produce products");
    }
    for (const auto& p : m.produces) {
      auto [it, inserted] = producer_of.emplace(p, i);
      if (!inserted) {
        throw ConfigurationError("product '" + p + "' produced by both '" + modules[it->second].name + "' and '" +
                                 m.name + "'");
      }
    }
  }

  dag.prerequisites.resize(n);
  dag.dependents.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::set<std::size_t> prereqs;
    for (const auto& p : modules[i].consumes) {
      if (auto it = producer_of.find(p); it != producer_of.end()) {
        if (it->second == i) throw ConfigurationError("cycle: " + modules[i].name + " -> " + modules[i].name);
        prereqs.insert(it->second);
      } else if (!source_products.contains(p)) {
        throw ConfigurationError("no producer for product '" + p + "' consumed by '" + modules[i].name + "'");
      }
    }
    dag.prerequisites[i].assign(prereqs.begin(), prereqs.end());
    for (auto p : prereqs) dag.dependents[p].push_back(i);
  }

  // Depth-first search with colours; a grey hit closes a cycle.
  std::vector<int> colour(n, 0);
  std::vector<std::size_t> path;
  std::vector<std::size_t> postorder;
  std::function<void(std::size_t)> visit = [&](std::size_t u) {
    colour[u] = 1;
    path.push_back(u);
    for (auto v : dag.prerequisites[u]) {
      if (colour[v] == 1) {
        auto from = std::find(path.begin(), path.end(), v);
        std::string text;
        for (auto it = from; it != path.end(); ++it) text += modules[*it].name + " -> ";
        throw ConfigurationError("cycle: " + text + modules[v].name);
      }
      if (colour[v] == 0) visit(v);
    }
    path.pop_back();
    colour[u] = 2;
    postorder.push_back(u);
  };
  for (std::size_t i = 0; i < n; ++i) {
    if (colour[i] == 0) visit(i);
  }
  dag.topo_order = std::move(postorder);

  for (const auto& p : source_products) {
    if (!producer_of.contains(p)) dag.source_products.insert(p);
  }
  dag.modules = std::move(modules);
  return dag;
}

std::vector<ModuleSpec> modules_from_config(const KeyValueConfig& config, const WorkloadProfile& profile) {
  auto expand = [&](const std::string& text) {
    std::set<std::string> out;
    for (const auto& item : split_list(text)) {
      if (item.rfind("tier:", 0) == 0) {
        for (auto& name : profile.product_names(parse_tier(item.substr(5)))) out.insert(std::move(name));
      } else {
        out.insert(item);
      }
    }
    return out;
  };

  std::vector<ModuleSpec> modules;
  const auto n = config.list_size("modules");
  for (std::size_t i = 0; i < n; ++i) {
    const auto key = "modules[" + std::to_string(i) + "].";
    ModuleSpec m;
    m.name = config.get_string(key + "name");
    const auto kind = config.get(key + "kind").value_or("producer");
    if (kind == "producer") {
      m.kind = ModuleKind::Producer;
    } else if (kind == "output") {
      m.kind = ModuleKind::Output;
    } else {
      throw ConfigurationError(key + "kind: expected producer or output, got '" + kind + "'");
    }
    if (auto v = config.get(key + "consumes")) m.consumes = expand(*v);
    if (auto v = config.get(key + "produces")) m.produces = expand(*v);
    if (auto v = config.get(key + "concurrency_limit"); v && *v != "unlimited") {
      m.concurrency_limit = config.get_uint(key + "concurrency_limit");
    }
    if (config.contains(key + "cost")) m.cost = config.get_uint(key + "cost");
    modules.push_back(std::move(m));
  }
  return modules;
}

ModuleBody default_producer_body() {
  return [](Event& event, ModuleContext& ctx) {
    for (auto idx : ctx.produced_products) ctx.generator.fill_product(event, idx);
    volatile std::uint64_t sink = burn_cpu(ctx.spec.cost, event.id);
    (void)sink;
  };
}

std::size_t max_overlap(std::span<const ProvenanceRecord> records, int module) {
  std::vector<std::pair<std::int64_t, int>> edges;
  for (const auto& r : records) {
    if (r.kind != TaskKind::ModuleRun || r.module != module) continue;
    edges.emplace_back(r.start_ns, +1);
    edges.emplace_back(r.end_ns, -1);
  }
  // Ends sort before starts at the same instant.
  std::sort(edges.begin(), edges.end());
  int open = 0;
  int peak = 0;
  for (const auto& [t, d] : edges) {
    open += d;
    peak = std::max(peak, open);
  }
  return static_cast<std::size_t>(peak);
}

namespace {

struct Permit {
  std::mutex mu;
  std::optional<std::size_t> limit;
  std::atomic<int> in_use{0};
  std::deque<std::size_t> waiting;
};

struct Stream {
  Event event;
  std::unique_ptr<std::atomic<int>[]> remaining;
  std::atomic<int> modules_left{0};
};

class Run {
 public:
  Run(const EventGenerator& generator, const Dag& dag, const std::map<std::string, ModuleImpl>& impls,
      const RunOptions& options)
      : generator_(generator), dag_(dag), options_(options), executor_(std::max<std::size_t>(options.n_threads, 1)) {
    const auto n = dag.modules.size();
    executor_.set_module_count(n);
    bodies_.resize(n);
    end_jobs_.resize(n);
    produced_.resize(n);

    std::map<std::string, std::size_t> product_index;
    for (std::size_t i = 0; i < generator.product_count(); ++i) product_index[generator.profile().schemas[i].name] = i;

    for (std::size_t m = 0; m < n; ++m) {
      const auto& spec = dag.modules[m];
      if (auto it = impls.find(spec.name); it != impls.end()) {
        bodies_[m] = it->second.body;
        end_jobs_[m] = it->second.end_job;
      }
      if (!bodies_[m]) {
        if (spec.kind == ModuleKind::Output) {
          throw ConfigurationError("output module '" + spec.name + "' has no implementation");
        }
        bodies_[m] = default_producer_body();
      }
      for (const auto& p : spec.produces) {
        if (auto it = product_index.find(p); it != product_index.end()) produced_[m].push_back(it->second);
      }
      permits_.push_back(std::make_unique<Permit>());
      permits_.back()->limit = spec.concurrency_limit;
    }
    for (const auto& p : dag.source_products) {
      if (auto it = product_index.find(p); it != product_index.end()) source_.push_back(it->second);
    }
    // Schema products nobody produces are source products as well.
    for (std::size_t i = 0; i < generator.product_count(); ++i) {
      const auto& name = generator.profile().schemas[i].name;
      const bool produced = std::any_of(dag.modules.begin(), dag.modules.end(),
                                        [&](const ModuleSpec& s) { return s.produces.contains(name); });
      if (!produced && std::find(source_.begin(), source_.end(), i) == source_.end()) source_.push_back(i);
    }

    const auto n_streams = options.n_streams == 0 ? executor_.size() : options.n_streams;
    for (std::size_t s = 0; s < n_streams; ++s) {
      auto stream = std::make_unique<Stream>();
      stream->event = generator.make_skeleton(0);
      stream->remaining = std::make_unique<std::atomic<int>[]>(n);
      streams_.push_back(std::move(stream));
    }
  }

  RunReport execute() {
    const auto n = dag_.modules.size();
    const auto t0 = std::chrono::steady_clock::now();
    if (options_.on_start) options_.on_start(executor_);

    std::optional<StallSampler> sampler;
    if (options_.monitor) {
      sampler.emplace(
          [this](double t_ms) {
            std::vector<int> permits;
            permits.reserve(permits_.size());
            for (const auto& p : permits_) permits.push_back(p->in_use.load());
            return make_sample(t_ms, executor_.occupancy(), std::move(permits), executor_.size());
          },
          options_.sample_period);
    }
    run_start_ns_ = executor_.now_ns();
    if (sampler) sampler->start();

    active_streams_ = streams_.size();
    for (std::size_t s = 0; s < streams_.size(); ++s) executor_.inject(stream_task(s));
    {
      std::unique_lock lk(done_mu_);
      done_cv_.wait(lk, [&] { return active_streams_.load() == 0; });
    }

    if (!aborted_.load()) run_end_jobs();

    std::vector<StallSample> samples;
    if (sampler) samples = sampler->stop();
    const auto wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    if (failure_) throw *failure_;
    if (auto e = executor_.unhandled_error()) std::rethrow_exception(e);

    RunReport report;
    report.wall_time_s = wall;
    report.events_processed = events_done_.load();
    report.n_threads = executor_.size();
    report.n_streams = streams_.size();
    report.run_start_ns = run_start_ns_;
    report.provenance = executor_.provenance();
    for (std::size_t m = 0; m < n; ++m) {
      const auto& spec = dag_.modules[m];
      report.module_names.push_back(spec.name);
      report.kinds.push_back(spec.kind);
      report.limits.push_back(spec.concurrency_limit);
      report.max_overlap.push_back(max_overlap(report.provenance, static_cast<int>(m)));
    }
    report.busy_time_s.assign(n, 0.0);
    for (const auto& r : report.provenance) {
      if ((r.kind == TaskKind::ModuleRun || r.kind == TaskKind::EndJob) && r.module >= 0) {
        report.busy_time_s[r.module] += static_cast<double>(r.end_ns - r.start_ns) * 1e-9;
      }
    }
    {
      std::lock_guard lk(flush_mu_);
      report.flushes = flushes_;
    }
    report.stall = aggregate(report.module_names, report.limits, executor_.size(), std::move(samples));
    return report;
  }

 private:
  ModuleContext context(std::size_t m) {
    return ModuleContext{executor_,
                         generator_,
                         m,
                         dag_.modules[m],
                         options_.imt,
                         options_.isolation,
                         produced_[m],
                         [this, m](std::int64_t start, std::int64_t end) {
                           std::lock_guard lk(flush_mu_);
                           flushes_.push_back(FlushInterval{static_cast<int>(m),
                                                            static_cast<double>(start - run_start_ns_) * 1e-6,
                                                            static_cast<double>(end - run_start_ns_) * 1e-6});
                         }};
  }

  Task stream_task(std::size_t s) {
    Task t;
    t.kind = TaskKind::Source;
    t.scope = executor_.new_scope();
    t.fn = [this, s] { start_event(s); };
    return t;
  }

  void start_event(std::size_t s) {
    auto& stream = *streams_[s];
    const auto id = aborted_.load() ? generator_.events_total() : next_event_.fetch_add(1);
    if (id >= generator_.events_total()) {
      if (active_streams_.fetch_sub(1) == 1) {
        { std::lock_guard lk(done_mu_); }
        done_cv_.notify_all();
      }
      return;
    }
    stream.event.id = id;
    for (auto idx : source_) generator_.fill_product(stream.event, idx);

    const auto n = dag_.modules.size();
    stream.modules_left = static_cast<int>(n);
    for (std::size_t m = 0; m < n; ++m) stream.remaining[m] = static_cast<int>(dag_.prerequisites[m].size());
    if (n == 0) {
      finish_event(s);
      return;
    }
    for (std::size_t m = 0; m < n; ++m) {
      if (dag_.prerequisites[m].empty()) dispatch(m, s);
    }
  }

  void finish_event(std::size_t s) {
    events_done_.fetch_add(1);
    executor_.submit(stream_task(s));
  }

  Task module_task(std::size_t m, std::size_t s) {
    Task t;
    t.kind = TaskKind::ModuleRun;
    t.module = static_cast<int>(m);
    t.scope = executor_.new_scope();
    t.event = streams_[s]->event.id;
    t.fn = [this, m, s] {
      if (aborted_.load()) return;
      auto& event = streams_[s]->event;
      auto ctx = context(m);
      try {
        bodies_[m](event, ctx);
      } catch (const std::exception& e) {
        fail(dag_.modules[m].name, event.id, e.what());
      } catch (...) {
        fail(dag_.modules[m].name, event.id, "unknown exception");
      }
    };
    t.then = [this, m, s] { complete(m, s); };
    return t;
  }

  void dispatch(std::size_t m, std::size_t s) {
    auto& permit = *permits_[m];
    {
      std::lock_guard lk(permit.mu);
      if (permit.limit && static_cast<std::size_t>(permit.in_use.load()) >= *permit.limit) {
        permit.waiting.push_back(s);
        return;
      }
      permit.in_use.fetch_add(1);
    }
    executor_.submit(module_task(m, s));
  }

  void complete(std::size_t m, std::size_t s) {
    auto& permit = *permits_[m];
    std::optional<std::size_t> next;
    {
      std::lock_guard lk(permit.mu);
      if (!permit.waiting.empty()) {
        next = permit.waiting.front();
        permit.waiting.pop_front();
      } else {
        permit.in_use.fetch_sub(1);
      }
    }
    if (next) executor_.submit(module_task(m, *next));

    auto& stream = *streams_[s];
    for (auto d : dag_.dependents[m]) {
      if (stream.remaining[d].fetch_sub(1) == 1) dispatch(d, s);
    }
    if (stream.modules_left.fetch_sub(1) == 1) finish_event(s);
  }

  void fail(const std::string& module, std::uint64_t event, const std::string& what) {
    std::lock_guard lk(failure_mu_);
    if (!failure_) failure_.emplace(module, event, what);
    aborted_ = true;
  }

  void run_end_jobs() {
    std::atomic<std::size_t> pending{0};
    for (std::size_t m = 0; m < dag_.modules.size(); ++m) {
      if (!end_jobs_[m]) continue;
      pending.fetch_add(1);
      Task t;
      t.kind = TaskKind::EndJob;
      t.module = static_cast<int>(m);
      t.scope = executor_.new_scope();
      t.fn = [this, m] {
        auto ctx = context(m);
        try {
          end_jobs_[m](ctx);
        } catch (const std::exception& e) {
          fail(dag_.modules[m].name, kNoEvent, e.what());
        }
      };
      t.then = [this, &pending] {
        if (pending.fetch_sub(1) == 1) {
          { std::lock_guard lk(done_mu_); }
          done_cv_.notify_all();
        }
      };
      executor_.inject(std::move(t));
    }
    std::unique_lock lk(done_mu_);
    done_cv_.wait(lk, [&] { return pending.load() == 0; });
  }

  const EventGenerator& generator_;
  const Dag& dag_;
  const RunOptions& options_;
  Executor executor_;
  std::vector<ModuleBody> bodies_;
  std::vector<EndJobBody> end_jobs_;
  std::vector<std::vector<std::size_t>> produced_;
  std::vector<std::size_t> source_;
  std::vector<std::unique_ptr<Permit>> permits_;
  std::vector<std::unique_ptr<Stream>> streams_;

  std::atomic<std::uint64_t> next_event_{0};
  std::atomic<std::uint64_t> events_done_{0};
  std::atomic<std::size_t> active_streams_{0};
  std::mutex done_mu_;
  std::condition_variable done_cv_;

  std::atomic<bool> aborted_{false};
  std::mutex failure_mu_;
  std::optional<ModuleFailure> failure_;

  std::mutex flush_mu_;
  std::vector<FlushInterval> flushes_;
  std::int64_t run_start_ns_ = 0;
};

}  // namespace

RunReport run(const EventGenerator& generator, const Dag& dag, const std::map<std::string, ModuleImpl>& impls,
              const RunOptions& options) {
  if (options.n_threads == 0) throw ConfigurationError("n_threads must be >= 1");
  Run state(generator, dag, impls, options);
  return state.execute();
}

void emit_run_csv(const RunReport& report, std::ostream& out) {
  out << "module,kind,limit,max_overlap,busy_time_s\n";
  for (std::size_t m = 0; m < report.module_names.size(); ++m) {
    out << report.module_names[m] << ',' << (report.kinds[m] == ModuleKind::Output ? "output" : "producer") << ',';
    if (report.limits[m]) {
      out << *report.limits[m];
    } else {
      out << "unlimited";
    }
    out << ',' << report.max_overlap[m] << ',' << report.busy_time_s[m] << '\n';
  }
}

}  // namespace parasink

#pragma once

#include <chrono>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "parasink/config.hpp"
#include "parasink/event_model.hpp"
#include "parasink/executor.hpp"
#include "parasink/stall_monitor.hpp"

namespace parasink {

enum class ModuleKind { Producer, Output };

struct ModuleSpec {
  std::string name;
  std::set<std::string> consumes;
  std::set<std::string> produces;
  ModuleKind kind = ModuleKind::Producer;
  /// nullopt means unlimited.
  std::optional<std::size_t> concurrency_limit;
  /// Busy-loop work units per event (producers).
  std::uint64_t cost = 0;
};

struct Dag {
  std::vector<ModuleSpec> modules;
  std::vector<std::vector<std::size_t>> prerequisites;
  std::vector<std::vector<std::size_t>> dependents;
  std::vector<std::size_t> topo_order;
  /// Products not made by any module; they come from the event source.
  std::set<std::string> source_products;

  std::optional<std::size_t> find(std::string_view name) const;
};

/// Validates names, producers and acyclicity and derives the dependency structure.
/// Throws ConfigurationError naming the missing product or the cycle.
Dag build_schedule(std::vector<ModuleSpec> modules, const std::set<std::string>& source_products);

/// Reads `modules[i].{name,kind,consumes,produces,concurrency_limit,cost}`; list values are
/// comma-separated and `tier:<TIER>` expands to that tier's products of `profile`.
std::vector<ModuleSpec> modules_from_config(const KeyValueConfig& config, const WorkloadProfile& profile);

/// What a module body can see while it runs.
struct ModuleContext {
  Executor& executor;
  const EventGenerator& generator;
  std::size_t module_index;
  const ModuleSpec& spec;
  bool imt = false;
  bool isolation = true;
  /// Indices into Event::products of the schema products this module produces.
  std::span<const std::size_t> produced_products;
  /// Pool for IMT work; null when IMT is off.
  Executor* imt_pool() const { return imt ? &executor : nullptr; }
  /// Records a compress-and-flush interval (executor clock, ns).
  std::function<void(std::int64_t start_ns, std::int64_t end_ns)> log_flush;
};

using ModuleBody = std::function<void(Event&, ModuleContext&)>;
using EndJobBody = std::function<void(ModuleContext&)>;

struct ModuleImpl {
  ModuleBody body;
  /// Runs once after the last event, as a task attributed to the module.
  EndJobBody end_job;
};

struct RunOptions {
  std::size_t n_threads = 1;
  /// 0 means n_threads.
  std::size_t n_streams = 0;
  bool imt = false;
  bool isolation = true;
  bool monitor = true;
  std::chrono::milliseconds sample_period{50};
  /// Called after the executor exists and before the first event is dispatched.
  std::function<void(Executor&)> on_start;
};

struct RunReport {
  double wall_time_s = 0.0;
  std::uint64_t events_processed = 0;
  std::size_t n_threads = 0;
  std::size_t n_streams = 0;
  std::vector<std::string> module_names;
  std::vector<ModuleKind> kinds;
  std::vector<std::optional<std::size_t>> limits;
  std::vector<double> busy_time_s;
  std::vector<std::size_t> max_overlap;
  StallReport stall;
  std::vector<FlushInterval> flushes;
  std::vector<ProvenanceRecord> provenance;
  /// Executor-clock time of the first dispatch, for converting provenance to run time.
  std::int64_t run_start_ns = 0;
};

/// Producer body: fills the module's products from the generator and burns its cost.
ModuleBody default_producer_body();

/// Runs every event through every module. Products not produced by modules are filled by the
/// stream before its modules start. Output modules need an entry in `impls`; producers default to
/// default_producer_body(). Throws ModuleFailure for the first module that throws.
RunReport run(const EventGenerator& generator, const Dag& dag, const std::map<std::string, ModuleImpl>& impls,
              const RunOptions& options);

/// Maximum number of simultaneously open intervals among ModuleRun records of `module`.
std::size_t max_overlap(std::span<const ProvenanceRecord> records, int module);

/// `module,kind,limit,max_overlap,busy_time_s` rows.
void emit_run_csv(const RunReport& report, std::ostream& out);

}  // namespace parasink

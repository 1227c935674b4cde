#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "parasink/buffer_merger.hpp"
#include "parasink/codec.hpp"
#include "parasink/config.hpp"
#include "parasink/event_model.hpp"
#include "parasink/scheduler.hpp"

namespace parasink {

enum class OutputMode {
  SingleThreaded = 1,
  SingleThreadedImt = 2,
  ParallelMergerImt = 3,
  Dummy = 4,
};

struct ProcessingConfig {
  int id = 1;
  OutputMode mode = OutputMode::SingleThreaded;
  bool imt = false;

  /// The four standard configurations, id 1..4.
  static ProcessingConfig standard(int id);
};

struct OutputScenario {
  std::string name;
  std::vector<Tier> tiers;

  /// "reco-aod-mini" or "aod-mini".
  static OutputScenario parse(const std::string& name);
};

/// Everything a run needs besides scenario, configuration and thread count.
struct BenchSetup {
  WorkloadProfile workload;
  /// Producer modules; output modules are derived from the scenario.
  std::vector<ModuleSpec> producers;
  FlushPolicy flush;
  int codec_level = 6;
  /// Merger settings per tier for configuration 3.
  std::map<Tier, MergerConfig> merger;
  std::chrono::milliseconds sample_period{50};
  bool isolation = true;
};

/// Desk-scale analogue of a reconstruction job: RECO 400 x 2 KiB, AOD 200 x 1 KiB,
/// MINIAOD 50 x 512 B products, compressibility 0.7, level 6, merger buffers 6/6/3.
BenchSetup reco_analogue(std::uint64_t events_total = 400, std::uint64_t seed = 1);

/// Three chained producers (reco -> aod -> mini) splitting `cpu_work` 50/30/20.
std::vector<ModuleSpec> default_producers(const WorkloadProfile& workload, std::uint64_t cpu_work);

/// Reads a profile file: workload keys, optional `modules[i]`, and `flush.basket_target_bytes`,
/// `flush.every_n_events`, `codec_level`, `sample_period_ms`,
/// `outputs.<TIER>.{buffers,merge_threshold_bytes,merge_threshold_events}`. Missing sections
/// fall back to reco_analogue().
BenchSetup setup_from_config(const KeyValueConfig& config);

struct ScalingRow {
  std::size_t n_threads = 0;
  int config_id = 0;
  std::string scenario;
  double wall_time_s = 0.0;
  double events_per_s = 0.0;
  double stall_fraction = 0.0;
  double thread_stall_fraction = 0.0;
  std::uint64_t peak_buffer_bytes = 0;
  std::string status = "ok";
};

struct FileVerification {
  std::filesystem::path file;
  std::uint64_t event_count = 0;
  std::vector<std::uint64_t> missing;
  std::vector<std::uint64_t> duplicates;
  std::vector<std::string> problems;

  bool ok() const { return missing.empty() && duplicates.empty() && problems.empty(); }
};

struct VerifyReport {
  std::vector<FileVerification> files;
  std::vector<std::string> problems;

  bool ok() const;
  std::string describe() const;
};

/// Per file: readable container, every basket decompresses with a valid checksum, every column's
/// baskets tile [0, event_count), and the event ids equal {0..expected-1} as a multiset.
VerifyReport verify_outputs(std::span<const std::filesystem::path> files, std::uint64_t expected);

/// Event ids recovered from a container, in entry order.
std::vector<std::uint64_t> recover_event_ids(const Container& container);

bool files_identical(const std::filesystem::path& a, const std::filesystem::path& b);

/// Container files (*.psnk) in a directory, sorted by name.
std::vector<std::filesystem::path> find_outputs(const std::filesystem::path& dir);

struct RunOutcome {
  ScalingRow row;
  RunReport report;
  std::vector<std::filesystem::path> files;
  std::optional<VerifyReport> verification;
  std::map<Tier, MergeStats> merge_stats;
};

struct RunConfigOptions {
  bool monitor = true;
  /// 0 means one stream per thread.
  std::size_t n_streams = 0;
  /// Write stall CSV/SVG and the module CSV into the output directory.
  bool write_artifacts = true;
};

/// Runs one (scenario, configuration, threads) point. Produces `<TIER>.psnk` per tier in
/// `out_dir` (nothing for the dummy output) and verifies them before returning.
RunOutcome run_config(const BenchSetup& setup, const OutputScenario& scenario, const ProcessingConfig& config,
                      std::size_t n_threads, const std::filesystem::path& out_dir, const RunConfigOptions& options = {});

/// Output module limits the scheduler enforces for a configuration.
std::optional<std::size_t> output_limit(const BenchSetup& setup, const ProcessingConfig& config, Tier tier);

/// One row per (config, threads). Failures are recorded in the row's status.
std::vector<ScalingRow> sweep(const BenchSetup& setup, const OutputScenario& scenario,
                              const std::vector<ProcessingConfig>& configs, const std::vector<std::size_t>& threads,
                              const std::filesystem::path& out_dir);

void emit_scaling_csv(std::span<const ScalingRow> rows, std::ostream& out);
std::vector<ScalingRow> parse_scaling_csv(std::istream& in);
/// Throughput against threads, one polyline per configuration.
void emit_scaling_svg(std::span<const ScalingRow> rows, std::ostream& out);

}  // namespace parasink

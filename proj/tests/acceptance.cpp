// Acceptance checks 1-9. Prints one PASS/FAIL line per criterion and exits nonzero if any fails.
// Tolerances are fixed below; the only knobs are the work directory and which criteria to run.

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "parasink/bench.hpp"
#include "parasink/container.hpp"
#include "parasink/imt.hpp"
#include "support.hpp"

using namespace parasink;
namespace fs = std::filesystem;

namespace {

// Pinned parameters.
constexpr int kCompletenessRuns = 200;
constexpr double kCompletenessBudgetS = 600.0;
constexpr int kByteSeeds = 20;
constexpr int kImtJobs = 1000;
constexpr int kIsolationTrials = 100;
constexpr std::uint64_t kRecoEvents = 200;
constexpr double kReductionRatio = 0.75;
constexpr double kRunBudgetS = 120.0;
constexpr double kOrderingMargin = 0.05;
constexpr double kLowThreadSpread = 0.10;
constexpr double kGapCorrelation = 0.5;
constexpr std::size_t kLimitCheckThreads = 16;
constexpr std::uint64_t kMasterSeed = 20181008;

struct Verdict {
  int id;
  bool pass;
  std::string text;
};

std::size_t max_host_threads() { return std::max<std::size_t>(testing::host_threads(), 8); }

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

/// Limit bookkeeping shared by every run (criterion 9).
struct LimitLedger {
  std::size_t runs = 0;
  std::vector<std::string> violations;

  void record(const RunReport& r, const std::string& label) {
    ++runs;
    for (std::size_t m = 0; m < r.module_names.size(); ++m) {
      if (r.limits[m] && r.max_overlap[m] > *r.limits[m]) {
        violations.push_back(label + ": " + r.module_names[m] + " overlap " + std::to_string(r.max_overlap[m]) +
                             " > limit " + std::to_string(*r.limits[m]));
      }
    }
  }
};

class Acceptance {
 public:
  explicit Acceptance(fs::path work) : work_(std::move(work)) { fs::create_directories(work_); }

  Verdict completeness() {
    std::mt19937_64 rng(kMasterSeed);
    const auto max_threads = max_host_threads();
    int exact = 0;
    std::string first_failure;
    const auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < kCompletenessRuns; ++i) {
      auto setup = testing::small_setup(10 + rng() % 51, rng(), 5'000 + rng() % 40'000);
      setup.flush = rng() % 2 ? FlushPolicy{256 + rng() % 4096, std::nullopt}
                              : FlushPolicy{std::nullopt, 1 + rng() % 8};
      for (auto& [tier, m] : setup.merger) {
        m.buffer_count = 1 + rng() % 8;
        m.merge_threshold_bytes = 512 + rng() % 16'384;
        if (rng() % 2) m.merge_threshold_events = 1 + rng() % 12;
      }
      const auto config = ProcessingConfig::standard(1 + static_cast<int>(rng() % 3));
      const auto threads = 1 + rng() % max_threads;
      RunConfigOptions opts;
      opts.monitor = false;
      opts.write_artifacts = false;
      const auto dir = work_ / "completeness";
      try {
        const auto out = run_config(setup, OutputScenario::parse("reco-aod-mini"), config, threads, dir, opts);
        limits_.record(out.report, "completeness run " + std::to_string(i));
        bool ok = out.verification && out.verification->ok();
        // Multiset comparison against the generated ids, file by file.
        for (const auto& f : out.files) {
          auto ids = recover_event_ids(read_container_file(f));
          std::sort(ids.begin(), ids.end());
          for (std::uint64_t k = 0; ok && k < ids.size(); ++k) ok = ids[k] == k;
          ok = ok && ids.size() == setup.workload.events_total;
        }
        if (ok) {
          ++exact;
        } else if (first_failure.empty()) {
          first_failure = "run " + std::to_string(i) + " config " + std::to_string(config.id) + " threads " +
                          std::to_string(threads) + ": " + (out.verification ? out.verification->describe() : "");
        }
      } catch (const std::exception& e) {
        if (first_failure.empty()) first_failure = "run " + std::to_string(i) + ": " + e.what();
      }
    }
    const auto elapsed = seconds_since(t0);
    const bool pass = exact == kCompletenessRuns && elapsed < kCompletenessBudgetS;
    std::string text = std::to_string(exact) + "/" + std::to_string(kCompletenessRuns) +
                       " randomized runs recover the input id multiset exactly; " + fmt("%.1f", elapsed) +
                       " s (budget " + fmt("%.0f", kCompletenessBudgetS) + " s)";
    if (!first_failure.empty()) text += "; first failure: " + first_failure;
    return {1, pass, text};
  }

  Verdict byte_equivalence() {
    int identical = 0;
    std::string first_failure;
    for (int seed = 1; seed <= kByteSeeds; ++seed) {
      auto setup = testing::small_setup(48, static_cast<std::uint64_t>(seed));
      setup.codec_level = 6;
      setup.flush = FlushPolicy{std::uint64_t{2048}, std::uint64_t{4}};
      // Merges land on flush boundaries: the event threshold is a multiple of the flush cadence
      // and the byte threshold is out of reach.
      for (auto& [tier, m] : setup.merger) m = MergerConfig{1, std::uint64_t{1} << 40, std::uint64_t{8}};
      RunConfigOptions opts;
      opts.n_streams = 1;
      opts.monitor = false;
      opts.write_artifacts = false;
      const auto base = work_ / "bytes";
      const auto scenario = OutputScenario::parse("reco-aod-mini");
      const auto a = run_config(setup, scenario, ProcessingConfig::standard(1), 4, base / "c1", opts);
      const auto b = run_config(setup, scenario, ProcessingConfig::standard(3), 4, base / "c3", opts);
      limits_.record(a.report, "bytes c1");
      limits_.record(b.report, "bytes c3");
      bool same = a.files.size() == b.files.size() && !a.files.empty();
      for (std::size_t i = 0; same && i < a.files.size(); ++i) same = files_identical(a.files[i], b.files[i]);
      if (same) {
        ++identical;
      } else if (first_failure.empty()) {
        first_failure = "seed " + std::to_string(seed);
      }
    }
    std::string text = std::to_string(identical) + "/" + std::to_string(kByteSeeds) +
                       " seeds give byte-identical files for config 3 (1 buffer per tier) and config 1";
    if (!first_failure.empty()) text += "; first mismatch: " + first_failure;
    return {2, identical == kByteSeeds, text};
  }

  Verdict imt_equivalence() {
    std::mt19937_64 rng(kMasterSeed + 3);
    const auto max_threads = max_host_threads();
    std::vector<std::unique_ptr<Executor>> pools;
    for (std::size_t n = 1; n <= max_threads; ++n) pools.push_back(std::make_unique<Executor>(n));
    int equal = 0;
    std::set<std::size_t> sizes_used;
    for (int j = 0; j < kImtJobs; ++j) {
      CompressionJob job;
      const auto n = rng() % 33;
      for (std::size_t i = 0; i < n; ++i) job.baskets.push_back(testing::random_basket(rng, 8192, "c" + std::to_string(i)));
      job.level = static_cast<int>(rng() % 10);
      job.isolation = rng() % 2 == 0;
      const auto p = rng() % pools.size();
      sizes_used.insert(p + 1);
      std::vector<CompressedBasket> oracle;
      for (const auto& b : job.baskets) oracle.push_back(compress_basket(b, job.level));
      if (compress_all(job, pools[p].get()) == oracle) ++equal;
    }
    return {3, equal == kImtJobs,
            std::to_string(equal) + "/" + std::to_string(kImtJobs) + " random jobs equal the sequential map over pool sizes 1.." +
                std::to_string(max_threads) + " (" + std::to_string(sizes_used.size()) + " sizes exercised)"};
  }

  Verdict isolation() {
    Executor pool(4);
    pool.set_module_count(1);
    const auto baskets = testing::probe_baskets();
    std::size_t on_foreign = 0, on_trials = 0, off_trials = 0;
    for (int t = 0; t < kIsolationTrials; ++t) {
      const auto n = testing::isolation_probe_trial(pool, baskets, true);
      on_foreign += n;
      on_trials += n > 0;
    }
    for (int t = 0; t < kIsolationTrials; ++t) off_trials += testing::isolation_probe_trial(pool, baskets, false) > 0;
    const bool pass = on_foreign == 0 && off_trials >= 1;
    return {4, pass,
            "isolation on: " + std::to_string(on_foreign) + " foreign tasks on the waiting thread in " +
                std::to_string(kIsolationTrials) + " trials; isolation off: " + std::to_string(off_trials) + "/" +
                std::to_string(kIsolationTrials) + " trials show one"};
  }

  Verdict fullest_first() {
    const auto r = testing::check_fullest_first_exhaustively(3, 6);
    return {5, r.mismatches == 0 && r.acquires_checked > 0,
            std::to_string(r.sequences) + " interleavings, " + std::to_string(r.acquires_checked) + " acquires, " +
                std::to_string(r.mismatches) + " mismatches"};
  }

  /// Reco-analogue point, cached; artifacts land in work/c<config>_t<threads>.
  const RunOutcome& reco_point(int config, std::size_t threads) {
    const auto key = std::make_pair(config, threads);
    if (auto it = reco_runs_.find(key); it != reco_runs_.end()) return it->second;
    const auto setup = reco_analogue(kRecoEvents, kMasterSeed);
    const auto dir = work_ / ("c" + std::to_string(config) + "_t" + std::to_string(threads));
    auto out = run_config(setup, OutputScenario::parse("reco-aod-mini"), ProcessingConfig::standard(config), threads, dir);
    limits_.record(out.report, "reco c" + std::to_string(config) + " t" + std::to_string(threads));
    if (out.verification && !out.verification->ok()) reco_failures_.push_back(out.verification->describe());
    std::cerr << "  reco-analogue config " << config << " threads " << threads << ": " << fmt("%.2f", out.row.wall_time_s)
              << " s, " << fmt("%.2f", out.row.events_per_s) << " events/s, stall " << fmt("%.3f", out.row.stall_fraction)
              << '\n';
    return reco_runs_.emplace(key, std::move(out)).first->second;
  }

  Verdict reduction() {
    const auto t = max_host_threads();
    const auto& c1 = reco_point(1, t);
    const auto& c3 = reco_point(3, t);
    const double ratio = c3.row.wall_time_s / c1.row.wall_time_s;
    const bool budget = c1.row.wall_time_s <= kRunBudgetS && c3.row.wall_time_s <= kRunBudgetS;
    return {6, ratio <= kReductionRatio && budget && reco_failures_.empty(),
            "at " + std::to_string(t) + " threads: config 3 " + fmt("%.2f", c3.row.wall_time_s) + " s vs config 1 " +
                fmt("%.2f", c1.row.wall_time_s) + " s, ratio " + fmt("%.3f", ratio) + " (needs <= " +
                fmt("%.2f", kReductionRatio) + "; hardware threads " + std::to_string(testing::host_threads()) + ")"};
  }

  Verdict scaling_shape() {
    const auto t = max_host_threads();
    double tp[5] = {};
    for (int c = 1; c <= 4; ++c) tp[c] = reco_point(c, t).row.events_per_s;
    const bool ordered = tp[4] >= (1 - kOrderingMargin) * tp[3] && tp[3] >= (1 - kOrderingMargin) * tp[2] &&
                         tp[2] >= (1 - kOrderingMargin) * tp[1];
    std::string text = "at " + std::to_string(t) + " threads events/s dummy " + fmt("%.2f", tp[4]) + ", c3 " +
                       fmt("%.2f", tp[3]) + ", c2 " + fmt("%.2f", tp[2]) + ", c1 " + fmt("%.2f", tp[1]) +
                       (ordered ? " (ordered within 5%)" : " (NOT ordered within 5%)");
    bool low_ok = true;
    for (std::size_t lt : {std::size_t{1}, std::size_t{2}}) {
      double lo = 1e300, hi = 0;
      for (int c = 1; c <= 3; ++c) {
        const auto v = reco_point(c, lt).row.events_per_s;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
      const double spread = (hi - lo) / hi;
      low_ok = low_ok && spread <= kLowThreadSpread;
      text += "; " + std::to_string(lt) + " thread(s) spread " + fmt("%.3f", spread) + " (<= 0.10)";
    }
    return {7, ordered && low_ok, text};
  }

  Verdict stall_reduction() {
    const auto t = max_host_threads();
    const auto& c1 = reco_point(1, t);
    const auto& c3 = reco_point(3, t);
    const double s1 = c1.report.stall.stall_fraction;
    const double s3 = c3.report.stall.stall_fraction;
    const double corr = gap_flush_correlation(c1.report.stall, c1.report.flushes);
    return {8, s3 < s1 && corr > kGapCorrelation,
            "at " + std::to_string(t) + " threads stall fraction config 3 " + fmt("%.3f", s3) + " vs config 1 " +
                fmt("%.3f", s1) + "; config 1 gap/flush correlation " + fmt("%.3f", corr) + " (needs > 0.5, " +
                std::to_string(c1.report.stall.samples.size()) + " samples, " +
                std::to_string(c1.report.flushes.size()) + " flushes)"};
  }

  Verdict limit_safety() {
    const auto t = std::max(kLimitCheckThreads, max_host_threads());
    const auto& run = reco_point(3, t);
    std::string observed;
    bool limits_ok = true;
    for (std::size_t m = 0; m < run.report.module_names.size(); ++m) {
      if (run.report.kinds[m] != ModuleKind::Output) continue;
      const auto limit = run.report.limits[m];
      limits_ok = limits_ok && limit && run.report.max_overlap[m] <= *limit;
      observed += " " + run.report.module_names[m] + " " + std::to_string(run.report.max_overlap[m]) + "/" +
                  (limit ? std::to_string(*limit) : "inf");
    }
    std::string text = std::to_string(limits_.runs) + " runs, " + std::to_string(limits_.violations.size()) +
                       " limit violations; config 3 at " + std::to_string(t) + " threads overlap/limit:" + observed;
    if (!limits_.violations.empty()) text += "; first: " + limits_.violations.front();
    return {9, limits_.violations.empty() && limits_ok, text};
  }

 private:
  fs::path work_;
  LimitLedger limits_;
  std::map<std::pair<int, std::size_t>, RunOutcome> reco_runs_;
  std::vector<std::string> reco_failures_;
};

std::set<int> parse_only(const std::string& text) {
  std::set<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    int v = 0;
    std::from_chars(item.data(), item.data() + item.size(), v);
    out.insert(v);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  fs::path work = fs::temp_directory_path() / "parasink_acceptance";
  std::set<int> only{1, 2, 3, 4, 5, 6, 7, 8, 9};
  for (int i = 1; i + 1 < argc; i += 2) {
    const std::string flag = argv[i];
    if (flag == "--work-dir") {
      work = argv[i + 1];
    } else if (flag == "--only") {
      only = parse_only(argv[i + 1]);
    } else {
      std::cerr << "usage: acceptance [--work-dir DIR] [--only 1,2,...]\n";
      return 3;
    }
  }

  std::cout << "hardware threads " << testing::host_threads() << ", high-thread runs use " << max_host_threads()
            << " threads\n";
  Acceptance a(work);
  using Check = Verdict (Acceptance::*)();
  // Criterion 9 goes last so it sees every run made by the others.
  const std::vector<std::pair<int, Check>> checks{
      {1, &Acceptance::completeness},  {2, &Acceptance::byte_equivalence}, {3, &Acceptance::imt_equivalence},
      {4, &Acceptance::isolation},     {5, &Acceptance::fullest_first},    {6, &Acceptance::reduction},
      {7, &Acceptance::scaling_shape}, {8, &Acceptance::stall_reduction},  {9, &Acceptance::limit_safety}};

  bool all = true;
  for (const auto& [id, check] : checks) {
    if (!only.contains(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = (a.*check)();
    } catch (const std::exception& e) {
      v = {id, false, std::string("threw: ") + e.what()};
    }
    all = all && v.pass;
    std::cout << (v.pass ? "PASS" : "FAIL") << " criterion " << v.id << ": " << v.text << " ["
              << fmt("%.1f", seconds_since(t0)) << " s]" << std::endl;
  }
  return all ? 0 : 1;
}

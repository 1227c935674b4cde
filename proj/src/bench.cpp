#include "parasink/bench.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <sstream>

#include "parasink/container.hpp"
#include "parasink/errors.hpp"
#include "parasink/output_modules.hpp"

namespace parasink {

namespace fs = std::filesystem;

ProcessingConfig ProcessingConfig::standard(int id) {
  switch (id) {
    case 1: return {1, OutputMode::SingleThreaded, false};
    case 2: return {2, OutputMode::SingleThreadedImt, true};
    case 3: return {3, OutputMode::ParallelMergerImt, true};
    case 4: return {4, OutputMode::Dummy, false};
    default: throw ConfigurationError("config must be 1..4, got " + std::to_string(id));
  }
}

OutputScenario OutputScenario::parse(const std::string& name) {
  if (name == "reco-aod-mini") return {name, {Tier::Reco, Tier::Aod, Tier::MiniAod}};
  if (name == "aod-mini") return {name, {Tier::Aod, Tier::MiniAod}};
  throw ConfigurationError("unknown scenario '" + name + "' (expected reco-aod-mini or aod-mini)");
}

std::vector<ModuleSpec> default_producers(const WorkloadProfile& workload, std::uint64_t cpu_work) {
  auto names = [&](Tier t) {
    auto v = workload.product_names(t);
    return std::set<std::string>(v.begin(), v.end());
  };
  ModuleSpec reco{"reco_producer", {}, names(Tier::Reco), ModuleKind::Producer, std::nullopt, cpu_work / 2};
  ModuleSpec aod{"aod_producer", names(Tier::Reco), names(Tier::Aod), ModuleKind::Producer, std::nullopt,
                 cpu_work * 3 / 10};
  ModuleSpec mini{"mini_producer", names(Tier::Aod), names(Tier::MiniAod), ModuleKind::Producer, std::nullopt,
                  cpu_work - cpu_work / 2 - cpu_work * 3 / 10};
  return {reco, aod, mini};
}

BenchSetup reco_analogue(std::uint64_t events_total, std::uint64_t seed) {
  BenchSetup setup;
  auto& w = setup.workload;
  w.events_total = events_total;
  w.seed = seed;
  // Busy-loop units per event; sized for processing ~4x the single-threaded output cost.
  w.cpu_work_per_event = 22'000'000;
  auto add = [&](const char* stem, Tier tier, std::size_t count, std::uint64_t mean) {
    for (std::size_t k = 0; k < count; ++k) {
      w.schemas.push_back(ProductSchema{std::string(stem) + "_" + std::to_string(k), tier, {mean, 0.5}, 0.7});
    }
  };
  add("reco", Tier::Reco, 400, 2048);
  add("aod", Tier::Aod, 200, 1024);
  add("mini", Tier::MiniAod, 50, 512);

  setup.producers = default_producers(w, w.cpu_work_per_event);
  setup.flush = FlushPolicy{std::uint64_t{1} << 20, 20};
  setup.codec_level = 6;
  setup.merger[Tier::Reco] = MergerConfig{6, std::uint64_t{8} << 20, std::nullopt};
  setup.merger[Tier::Aod] = MergerConfig{6, std::uint64_t{4} << 20, std::nullopt};
  setup.merger[Tier::MiniAod] = MergerConfig{3, std::uint64_t{1} << 20, std::nullopt};
  return setup;
}

BenchSetup setup_from_config(const KeyValueConfig& config) {
  auto setup = reco_analogue();
  if (config.list_size("schemas") > 0) {
    setup.workload = profile_from_config(config);
  } else {
    if (config.contains("events_total")) setup.workload.events_total = config.get_uint("events_total");
    if (config.contains("seed")) setup.workload.seed = config.get_uint("seed");
    if (config.contains("cpu_work_per_event")) {
      setup.workload.cpu_work_per_event = config.get_uint("cpu_work_per_event");
    }
  }
  if (config.list_size("modules") > 0) {
    setup.producers.clear();
    for (auto& m : modules_from_config(config, setup.workload)) {
      if (m.kind == ModuleKind::Producer) setup.producers.push_back(std::move(m));
    }
  } else {
    setup.producers = default_producers(setup.workload, setup.workload.cpu_work_per_event);
  }
  if (config.contains("flush.basket_target_bytes") || config.contains("flush.every_n_events")) {
    setup.flush = FlushPolicy{};
    if (config.contains("flush.basket_target_bytes")) {
      setup.flush.basket_target_bytes = config.get_uint("flush.basket_target_bytes");
    }
    if (config.contains("flush.every_n_events")) setup.flush.flush_every_n_events = config.get_uint("flush.every_n_events");
  }
  setup.flush.validate();
  if (config.contains("codec_level")) {
    setup.codec_level = static_cast<int>(config.get_uint("codec_level"));
    if (setup.codec_level > codec::kMaxLevel) throw ValidationError("codec_level: must be 0..9");
  }
  if (config.contains("sample_period_ms")) {
    setup.sample_period = std::chrono::milliseconds(config.get_uint("sample_period_ms"));
  }
  for (auto tier : {Tier::Reco, Tier::Aod, Tier::MiniAod}) {
    const auto key = "outputs." + std::string(to_string(tier)) + ".";
    auto& m = setup.merger[tier];
    if (config.contains(key + "buffers")) m.buffer_count = config.get_uint(key + "buffers");
    if (config.contains(key + "merge_threshold_bytes")) m.merge_threshold_bytes = config.get_uint(key + "merge_threshold_bytes");
    if (config.contains(key + "merge_threshold_events")) {
      m.merge_threshold_events = config.get_uint(key + "merge_threshold_events");
    }
    m.validate();
  }
  return setup;
}

// ---------------------------------------------------------------------------
// Verification
// ---------------------------------------------------------------------------

bool VerifyReport::ok() const {
  return problems.empty() && std::all_of(files.begin(), files.end(), [](const auto& f) { return f.ok(); });
}

std::string VerifyReport::describe() const {
  std::ostringstream out;
  for (const auto& p : problems) out << p << '\n';
  auto list = [&](const char* label, const std::vector<std::uint64_t>& ids) {
    if (ids.empty()) return;
    out << "  " << label << " (" << ids.size() << "):";
    for (std::size_t i = 0; i < ids.size() && i < 32; ++i) out << ' ' << ids[i];
    if (ids.size() > 32) out << " ...";
    out << '\n';
  };
  for (const auto& f : files) {
    out << f.file.string() << ": " << (f.ok() ? "ok" : "FAILED") << ", " << f.event_count << " events\n";
    for (const auto& p : f.problems) out << "  " << p << '\n';
    list("missing", f.missing);
    list("duplicate", f.duplicates);
  }
  return out.str();
}

std::vector<std::uint64_t> recover_event_ids(const Container& container) {
  std::vector<const CompressedBasket*> id_baskets;
  for (const auto& cb : container.baskets) {
    if (cb.header.column_name == kEventIdColumn) id_baskets.push_back(&cb);
  }
  std::sort(id_baskets.begin(), id_baskets.end(),
            [](const auto* a, const auto* b) { return a->header.first_entry < b->header.first_entry; });
  std::vector<std::uint64_t> ids;
  for (const auto* cb : id_baskets) {
    const auto basket = decompress_basket(*cb);
    ByteReader in(basket.raw_bytes);
    while (in.remaining() >= sizeof(std::uint64_t)) ids.push_back(in.get<std::uint64_t>());
  }
  return ids;
}

VerifyReport verify_outputs(std::span<const fs::path> files, std::uint64_t expected) {
  VerifyReport report;
  for (const auto& path : files) {
    FileVerification fv;
    fv.file = path;
    try {
      // A zero-length file holds no events; it passes only when none are expected.
      if (fs::exists(path) && fs::file_size(path) == 0 && expected == 0) {
        report.files.push_back(std::move(fv));
        continue;
      }
      const auto container = read_container_file(path);
      fv.event_count = container.trailer.event_count;
      if (fv.event_count != expected) {
        fv.problems.push_back("trailer reports " + std::to_string(fv.event_count) + " events, expected " +
                              std::to_string(expected));
      }
      for (std::size_t i = 0; i < container.baskets.size(); ++i) {
        try {
          (void)decompress_basket(container.baskets[i]);
        } catch (const Error& e) {
          fv.problems.push_back("column " + container.baskets[i].header.column_name + " basket " + std::to_string(i) +
                                ": " + e.what());
        }
      }
      for (const auto& col : container.trailer.columns) {
        auto locs = col.baskets;
        std::sort(locs.begin(), locs.end(),
                  [](const auto& a, const auto& b) { return a.first_entry < b.first_entry; });
        std::uint64_t next = 0;
        for (const auto& loc : locs) {
          if (loc.first_entry != next) {
            fv.problems.push_back("column " + col.column_name + ": entries [" + std::to_string(next) + ", " +
                                  std::to_string(loc.first_entry) + ") " +
                                  (loc.first_entry > next ? "missing" : "overlap"));
          }
          next = loc.first_entry + loc.entry_count;
        }
        if (next != container.trailer.event_count) {
          fv.problems.push_back("column " + col.column_name + ": covers " + std::to_string(next) + " of " +
                                std::to_string(container.trailer.event_count) + " entries");
        }
      }
      if (!container.trailer.find(kEventIdColumn) && expected > 0) {
        fv.problems.push_back("column " + std::string(kEventIdColumn) + ": absent");
      }

      std::vector<std::uint32_t> seen(expected, 0);
      std::vector<std::uint64_t> strays;
      std::vector<std::uint64_t> ids;
      try {
        ids = recover_event_ids(container);
      } catch (const Error& e) {
        fv.problems.push_back(std::string("event ids unreadable: ") + e.what());
      }
      for (auto id : ids) {
        if (id < expected) {
          if (++seen[id] == 2) fv.duplicates.push_back(id);
        } else {
          strays.push_back(id);
        }
      }
      for (std::uint64_t id = 0; id < expected; ++id) {
        if (seen[id] == 0) fv.missing.push_back(id);
      }
      if (!strays.empty()) {
        fv.problems.push_back(std::to_string(strays.size()) + " event ids outside [0, " + std::to_string(expected) +
                              "), first " + std::to_string(strays.front()));
      }
    } catch (const Error& e) {
      fv.problems.push_back(e.what());
    }
    report.files.push_back(std::move(fv));
  }
  return report;
}

bool files_identical(const fs::path& a, const fs::path& b) {
  std::ifstream fa(a, std::ios::binary);
  std::ifstream fb(b, std::ios::binary);
  if (!fa || !fb) return false;
  return std::equal(std::istreambuf_iterator<char>(fa), std::istreambuf_iterator<char>(),
                    std::istreambuf_iterator<char>(fb), std::istreambuf_iterator<char>());
}

std::vector<fs::path> find_outputs(const fs::path& dir) {
  std::vector<fs::path> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".psnk") out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

// ---------------------------------------------------------------------------
// Runs
// ---------------------------------------------------------------------------

std::optional<std::size_t> output_limit(const BenchSetup& setup, const ProcessingConfig& config, Tier tier) {
  switch (config.mode) {
    case OutputMode::SingleThreaded:
    case OutputMode::SingleThreadedImt:
      return 1;
    case OutputMode::ParallelMergerImt:
      return setup.merger.at(tier).buffer_count;
    case OutputMode::Dummy:
      return std::nullopt;
  }
  return 1;
}

RunOutcome run_config(const BenchSetup& setup, const OutputScenario& scenario, const ProcessingConfig& config,
                      std::size_t n_threads, const fs::path& out_dir, const RunConfigOptions& options) {
  fs::create_directories(out_dir);
  const EventGenerator generator(setup.workload);

  std::vector<ModuleSpec> modules = setup.producers;
  std::map<std::string, ModuleImpl> impls;
  std::vector<std::shared_ptr<OutputModule>> outputs;
  std::map<Tier, std::shared_ptr<ParallelOutput>> parallel;
  RunOutcome outcome;

  for (auto tier : scenario.tiers) {
    const auto tier_name = std::string(to_string(tier));
    const auto path = out_dir / (tier_name + ".psnk");
    fs::remove(path);
    auto columns = setup.workload.product_names(tier);

    ModuleSpec spec;
    spec.name = "out_" + tier_name;
    spec.kind = ModuleKind::Output;
    spec.consumes = std::set<std::string>(columns.begin(), columns.end());
    spec.concurrency_limit = output_limit(setup, config, tier);
    modules.push_back(spec);

    std::shared_ptr<OutputModule> module;
    switch (config.mode) {
      case OutputMode::SingleThreaded:
      case OutputMode::SingleThreadedImt:
        module = std::make_shared<StandardOutput>(path, std::move(columns), setup.flush, setup.codec_level);
        break;
      case OutputMode::ParallelMergerImt: {
        auto p = std::make_shared<ParallelOutput>(path, std::move(columns), setup.flush, setup.codec_level,
                                                  setup.merger.at(tier));
        parallel[tier] = p;
        module = p;
        break;
      }
      case OutputMode::Dummy:
        module = std::make_shared<DummyOutput>();
        break;
    }
    if (config.mode != OutputMode::Dummy) outcome.files.push_back(path);
    outputs.push_back(module);
    impls[spec.name] = as_module_impl(module);
  }

  auto names = setup.workload.product_names();
  const auto dag = build_schedule(modules, std::set<std::string>(names.begin(), names.end()));

  RunOptions run_options;
  run_options.n_threads = n_threads;
  run_options.n_streams = options.n_streams;
  run_options.imt = config.imt;
  run_options.isolation = setup.isolation;
  run_options.monitor = options.monitor;
  run_options.sample_period = setup.sample_period;
  outcome.report = run(generator, dag, impls, run_options);

  for (const auto& [tier, p] : parallel) {
    if (p->stats()) outcome.merge_stats[tier] = *p->stats();
  }

  auto& row = outcome.row;
  row.n_threads = n_threads;
  row.config_id = config.id;
  row.scenario = scenario.name;
  row.wall_time_s = outcome.report.wall_time_s;
  row.events_per_s = row.wall_time_s > 0 ? static_cast<double>(setup.workload.events_total) / row.wall_time_s : 0.0;
  row.stall_fraction = outcome.report.stall.stall_fraction;
  row.thread_stall_fraction = outcome.report.stall.thread_stall_fraction;
  for (const auto& o : outputs) row.peak_buffer_bytes += o->peak_buffer_bytes();

  if (!outcome.files.empty()) {
    outcome.verification = verify_outputs(outcome.files, setup.workload.events_total);
    if (!outcome.verification->ok()) row.status = "verification failed";
  }

  if (options.write_artifacts) {
    std::ofstream csv(out_dir / "stall.csv");
    emit_stall_csv(outcome.report.stall, csv);
    std::ofstream svg(out_dir / "stall.svg");
    emit_stall_svg(outcome.report.stall, svg);
    std::ofstream mods(out_dir / "modules.csv");
    emit_run_csv(outcome.report, mods);
  }
  return outcome;
}

std::vector<ScalingRow> sweep(const BenchSetup& setup, const OutputScenario& scenario,
                              const std::vector<ProcessingConfig>& configs, const std::vector<std::size_t>& threads,
                              const fs::path& out_dir) {
  std::vector<ScalingRow> rows;
  for (const auto& config : configs) {
    for (auto n : threads) {
      const auto dir = out_dir / ("c" + std::to_string(config.id) + "_t" + std::to_string(n));
      try {
        rows.push_back(run_config(setup, scenario, config, n, dir).row);
      } catch (const std::exception& e) {
        ScalingRow row;
        row.n_threads = n;
        row.config_id = config.id;
        row.scenario = scenario.name;
        row.status = std::string("error: ") + e.what();
        rows.push_back(std::move(row));
      }
    }
  }
  fs::create_directories(out_dir);
  std::ofstream csv(out_dir / "scaling.csv");
  emit_scaling_csv(rows, csv);
  std::ofstream svg(out_dir / "scaling.svg");
  emit_scaling_svg(rows, svg);
  return rows;
}

// ---------------------------------------------------------------------------
// Scaling table
// ---------------------------------------------------------------------------

void emit_scaling_csv(std::span<const ScalingRow> rows, std::ostream& out) {
  out << "n_threads,config,scenario,wall_time_s,events_per_s,stall_fraction,thread_stall_fraction,peak_buffer_bytes,"
         "status\n";
  char buf[256];
  for (const auto& r : rows) {
    auto status = r.status;
    std::replace(status.begin(), status.end(), ',', ';');
    std::replace(status.begin(), status.end(), '\n', ' ');
    std::snprintf(buf, sizeof buf, "%zu,%d,%s,%.6f,%.6f,%.6f,%.6f,%llu,", r.n_threads, r.config_id,
                  r.scenario.c_str(), r.wall_time_s, r.events_per_s, r.stall_fraction, r.thread_stall_fraction,
                  static_cast<unsigned long long>(r.peak_buffer_bytes));
    out << buf << status << '\n';
  }
}

std::vector<ScalingRow> parse_scaling_csv(std::istream& in) {
  std::vector<ScalingRow> rows;
  std::string line;
  if (!std::getline(in, line)) return rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::size_t start = 0;
    for (int i = 0; i < 8; ++i) {
      const auto comma = line.find(',', start);
      if (comma == std::string::npos) throw FormatError("scaling CSV row has too few fields: " + line);
      cells.push_back(line.substr(start, comma - start));
      start = comma + 1;
    }
    cells.push_back(line.substr(start));
    ScalingRow r;
    try {
      r.n_threads = std::stoull(cells[0]);
      r.config_id = std::stoi(cells[1]);
      r.scenario = cells[2];
      r.wall_time_s = std::stod(cells[3]);
      r.events_per_s = std::stod(cells[4]);
      r.stall_fraction = std::stod(cells[5]);
      r.thread_stall_fraction = std::stod(cells[6]);
      r.peak_buffer_bytes = std::stoull(cells[7]);
    } catch (const std::exception&) {
      throw FormatError("scaling CSV row has a malformed number: " + line);
    }
    r.status = cells[8];
    rows.push_back(std::move(r));
  }
  return rows;
}

void emit_scaling_svg(std::span<const ScalingRow> rows, std::ostream& out) {
  constexpr double kLeft = 70, kRight = 780, kTop = 20, kBottom = 440;
  std::size_t max_threads = 1;
  double max_rate = 0.0;
  std::vector<int> configs;
  for (const auto& r : rows) {
    if (r.status != "ok") continue;
    max_threads = std::max(max_threads, r.n_threads);
    max_rate = std::max(max_rate, r.events_per_s);
    if (std::find(configs.begin(), configs.end(), r.config_id) == configs.end()) configs.push_back(r.config_id);
  }
  if (max_rate <= 0.0) max_rate = 1.0;
  std::sort(configs.begin(), configs.end());
  auto x = [&](double n) { return kLeft + (kRight - kLeft) * (n - 1.0) / std::max<double>(max_threads - 1.0, 1.0); };
  auto y = [&](double v) { return kBottom - (kBottom - kTop) * v / (max_rate * 1.05); };
  static constexpr const char* kColours[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#7f7f7f", "#9467bd", "#8c564b"};

  char buf[160];
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 800 500\" width=\"800\" height=\"500\">\n";
  out << "<rect x=\"0\" y=\"0\" width=\"800\" height=\"500\" fill=\"white\"/>\n";
  std::snprintf(buf, sizeof buf, "<path d=\"M%.1f,%.1f V%.1f H%.1f\" fill=\"none\" stroke=\"black\"/>\n", kLeft, kTop,
                kBottom, kRight);
  out << buf;
  out << "<text x=\"425\" y=\"480\" font-size=\"14\" text-anchor=\"middle\">threads</text>\n";
  out << "<text x=\"15\" y=\"230\" font-size=\"14\" transform=\"rotate(-90 15 230)\" "
         "text-anchor=\"middle\">events/s</text>\n";
  std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"%.1f\" font-size=\"12\" text-anchor=\"end\">%.2f</text>\n",
                kLeft - 5, y(max_rate) + 4, max_rate);
  out << buf;
  std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"458\" font-size=\"12\" text-anchor=\"end\">%zu</text>\n", kRight,
                max_threads);
  out << buf;
  for (std::size_t c = 0; c < configs.size(); ++c) {
    std::vector<const ScalingRow*> pts;
    for (const auto& r : rows) {
      if (r.config_id == configs[c] && r.status == "ok") pts.push_back(&r);
    }
    std::sort(pts.begin(), pts.end(), [](const auto* a, const auto* b) { return a->n_threads < b->n_threads; });
    const auto* colour = kColours[c % std::size(kColours)];
    out << "<polyline fill=\"none\" stroke-width=\"2\" stroke=\"" << colour << "\" points=\"";
    for (const auto* p : pts) {
      std::snprintf(buf, sizeof buf, "%.1f,%.1f ", x(static_cast<double>(p->n_threads)), y(p->events_per_s));
      out << buf;
    }
    out << "\"/>\n";
    std::snprintf(buf, sizeof buf,
                  "<text x=\"%.1f\" y=\"%.1f\" font-size=\"12\" fill=\"%s\">config %d</text>\n", kLeft + 10,
                  kTop + 15 + 16.0 * static_cast<double>(c), colour, configs[c]);
    out << buf;
  }
  out << "</svg>\n";
}

}  // namespace parasink

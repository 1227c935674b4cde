#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "parasink/bench.hpp"
#include "parasink/config.hpp"
#include "parasink/errors.hpp"

using namespace parasink;
namespace fs = std::filesystem;

namespace {

constexpr int kOk = 0;
constexpr int kRuntimeError = 1;
constexpr int kVerifyFailed = 2;
constexpr int kConfigError = 3;

struct Common {
  std::string scenario = "reco-aod-mini";
  std::string profile;
  std::string out;
  std::optional<std::uint64_t> events;
};

BenchSetup load_setup(const Common& c) {
  auto setup = c.profile.empty() ? reco_analogue() : setup_from_config(KeyValueConfig::load(c.profile));
  if (c.events) setup.workload.events_total = *c.events;
  if (const char* seed = std::getenv("PARASINK_SEED")) {
    KeyValueConfig env;
    env.set("PARASINK_SEED", seed);
    setup.workload.seed = env.get_uint("PARASINK_SEED");
  }
  setup.workload.validate();
  return setup;
}

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--scenario", c.scenario, "reco-aod-mini or aod-mini")->capture_default_str();
  cmd->add_option("--profile", c.profile, "key = value workload profile (default: built-in reco analogue)");
  cmd->add_option("--out", c.out, "output directory")->required();
  cmd->add_option("--events", c.events, "override events_total");
}

void print_row(const ScalingRow& r) {
  std::cout << "config " << r.config_id << "  threads " << r.n_threads << "  wall " << r.wall_time_s << " s  "
            << r.events_per_s << " events/s  stall " << r.stall_fraction << "  status " << r.status << '\n';
}

int run_cmd(const Common& c, int config_id, std::size_t threads) {
  const auto setup = load_setup(c);
  const auto scenario = OutputScenario::parse(c.scenario);
  const auto config = ProcessingConfig::standard(config_id);
  const auto outcome = run_config(setup, scenario, config, threads, c.out);
  print_row(outcome.row);
  for (const auto& f : outcome.files) std::cout << "wrote " << f.string() << '\n';
  if (outcome.verification && !outcome.verification->ok()) {
    std::cerr << outcome.verification->describe();
    return kVerifyFailed;
  }
  return kOk;
}

int sweep_cmd(const Common& c, const std::vector<int>& config_ids, const std::vector<std::size_t>& threads) {
  const auto setup = load_setup(c);
  const auto scenario = OutputScenario::parse(c.scenario);
  std::vector<ProcessingConfig> configs;
  for (int id : config_ids) configs.push_back(ProcessingConfig::standard(id));
  for (auto t : threads) {
    if (t == 0) throw ConfigurationError("thread counts must be >= 1");
  }
  const auto rows = sweep(setup, scenario, configs, threads, c.out);
  int rc = kOk;
  for (const auto& r : rows) {
    print_row(r);
    if (r.status != "ok") rc = kVerifyFailed;
  }
  std::cout << "wrote " << (fs::path(c.out) / "scaling.csv").string() << '\n';
  return rc;
}

int verify_cmd(const std::string& dir, std::uint64_t expect) {
  if (!fs::is_directory(dir)) throw ConfigurationError("not a directory: " + dir);
  const auto files = find_outputs(dir);
  const auto report = verify_outputs(files, expect);
  std::cout << report.describe();
  if (files.empty() && expect > 0) {
    std::cout << "no container files in " << dir << '\n';
    return kVerifyFailed;
  }
  return report.ok() ? kOk : kVerifyFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"parasink: parallel output benchmark"};
  app.require_subcommand(1);

  Common run_opts;
  int config_id = 1;
  std::size_t threads = 1;
  auto* run = app.add_subcommand("run", "run one configuration");
  add_common(run, run_opts);
  run->add_option("--config", config_id, "1 standard, 2 standard+IMT, 3 merger+IMT, 4 dummy")->required();
  run->add_option("--threads", threads, "worker threads")->capture_default_str();

  Common sweep_opts;
  std::vector<std::size_t> thread_list{1, 2, 4, 8};
  std::vector<int> config_list{1, 2, 3, 4};
  auto* sw = app.add_subcommand("sweep", "run configurations across thread counts");
  add_common(sw, sweep_opts);
  sw->add_option("--threads", thread_list, "thread counts")->delimiter(',')->capture_default_str();
  sw->add_option("--configs", config_list, "configurations")->delimiter(',')->capture_default_str();

  std::string verify_dir;
  std::uint64_t expect = 0;
  auto* verify = app.add_subcommand("verify", "check container files in a directory");
  verify->add_option("--dir", verify_dir, "directory holding *.psnk files")->required();
  verify->add_option("--expect", expect, "expected event count")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfigError;
  }

  try {
    if (*run) return run_cmd(run_opts, config_id, threads);
    if (*sw) return sweep_cmd(sweep_opts, config_list, thread_list);
    return verify_cmd(verify_dir, expect);
  } catch (const ConfigurationError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kConfigError;
  } catch (const ValidationError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeError;
  }
}

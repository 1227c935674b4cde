#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "parasink/bench.hpp"
#include "parasink/config.hpp"
#include "parasink/container.hpp"
#include "parasink/errors.hpp"
#include "support.hpp"

using namespace parasink;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("parasink_bench_" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

void write_file(const fs::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary);
  out << bytes;
}

/// Container with one product column "p" and the id column holding `ids`.
std::string container_with_ids(const std::vector<std::uint64_t>& ids) {
  ColumnStore store({"p"}, FlushPolicy{std::nullopt, std::uint64_t{2}});
  std::vector<CompressedBasket> baskets;
  const Bytes payload{1, 2, 3};
  for (auto id : ids) {
    const ProductRef ref{"p", payload};
    for (const auto& b : store.append_event(id, std::span(&ref, 1))) baskets.push_back(compress_basket(b, 1));
  }
  for (const auto& b : store.flush_all()) baskets.push_back(compress_basket(b, 1));
  std::ostringstream out;
  write_container(out, baskets, ids.size());
  return out.str();
}

}  // namespace

TEST_CASE("configuration and scenario names") {
  CHECK(ProcessingConfig::standard(1).mode == OutputMode::SingleThreaded);
  CHECK_FALSE(ProcessingConfig::standard(1).imt);
  CHECK(ProcessingConfig::standard(2).imt);
  CHECK(ProcessingConfig::standard(3).mode == OutputMode::ParallelMergerImt);
  CHECK(ProcessingConfig::standard(4).mode == OutputMode::Dummy);
  CHECK_THROWS_AS(ProcessingConfig::standard(5), ConfigurationError);
  CHECK(OutputScenario::parse("reco-aod-mini").tiers.size() == 3);
  CHECK(OutputScenario::parse("aod-mini").tiers == std::vector<Tier>{Tier::Aod, Tier::MiniAod});
  CHECK_THROWS_AS(OutputScenario::parse("raw"), ConfigurationError);
}

TEST_CASE("reco analogue profile matches its declared shape") {
  const auto s = reco_analogue(10, 1);
  CHECK(s.workload.product_names(Tier::Reco).size() == 400);
  CHECK(s.workload.product_names(Tier::Aod).size() == 200);
  CHECK(s.workload.product_names(Tier::MiniAod).size() == 50);
  CHECK(s.workload.schemas.front().size.mean_bytes == 2048);
  CHECK(s.workload.schemas.back().size.mean_bytes == 512);
  CHECK(s.workload.schemas.front().compressibility == doctest::Approx(0.7));
  CHECK(s.codec_level == 6);
  CHECK(s.merger.at(Tier::Reco).buffer_count == 6);
  CHECK(s.merger.at(Tier::Aod).buffer_count == 6);
  CHECK(s.merger.at(Tier::MiniAod).buffer_count == 3);
  CHECK(output_limit(s, ProcessingConfig::standard(1), Tier::Reco) == std::optional<std::size_t>{1});
  CHECK(output_limit(s, ProcessingConfig::standard(3), Tier::MiniAod) == std::optional<std::size_t>{3});
  CHECK_FALSE(output_limit(s, ProcessingConfig::standard(4), Tier::Aod).has_value());
}

TEST_CASE("setup from a profile file") {
  std::istringstream in(R"(events_total = 12
seed = 4
cpu_work_per_event = 1000
schemas[0].name = r
schemas[0].tier = RECO
schemas[0].mean_bytes = 100
schemas[0].count = 2
schemas[1].name = a
schemas[1].tier = AOD
schemas[1].mean_bytes = 50
schemas[2].name = m
schemas[2].tier = MINIAOD
schemas[2].mean_bytes = 20
flush.every_n_events = 3
codec_level = 1
outputs.AOD.buffers = 2
outputs.AOD.merge_threshold_events = 6
)");
  const auto s = setup_from_config(KeyValueConfig::parse(in));
  CHECK(s.workload.events_total == 12);
  CHECK(s.workload.schemas.size() == 4);
  CHECK(s.flush.flush_every_n_events == std::optional<std::uint64_t>{3});
  CHECK_FALSE(s.flush.basket_target_bytes.has_value());
  CHECK(s.codec_level == 1);
  CHECK(s.merger.at(Tier::Aod).buffer_count == 2);
  CHECK(s.merger.at(Tier::Aod).merge_threshold_events == std::optional<std::uint64_t>{6});
  CHECK(s.producers.size() == 3);

  std::istringstream bad("outputs.RECO.buffers = 0\n");
  CHECK_THROWS_AS(setup_from_config(KeyValueConfig::parse(bad)), ValidationError);
}

TEST_CASE("every configuration writes complete files") {
  TempDir tmp("all");
  const auto setup = testing::small_setup(40, 2);
  const auto scenario = OutputScenario::parse("reco-aod-mini");
  for (int id = 1; id <= 4; ++id) {
    const auto dir = tmp.path / ("c" + std::to_string(id));
    const auto outcome = run_config(setup, scenario, ProcessingConfig::standard(id), 3, dir);
    CHECK(outcome.row.status == "ok");
    CHECK(outcome.report.events_processed == 40);
    if (id == 4) {
      CHECK(find_outputs(dir).empty());
      CHECK_FALSE(outcome.verification.has_value());
    } else {
      CHECK(find_outputs(dir).size() == 3);
      REQUIRE(outcome.verification.has_value());
      CHECK_MESSAGE(outcome.verification->ok(), outcome.verification->describe());
    }
    CHECK(fs::exists(dir / "stall.csv"));
    CHECK(fs::exists(dir / "stall.svg"));
    for (std::size_t m = 0; m < outcome.report.module_names.size(); ++m) {
      if (outcome.report.limits[m]) CHECK(outcome.report.max_overlap[m] <= *outcome.report.limits[m]);
    }
  }
}

TEST_CASE("single thread: same event multiset from every writing configuration") {
  TempDir tmp("one");
  const auto setup = testing::small_setup(25, 8);
  const auto scenario = OutputScenario::parse("aod-mini");
  std::vector<std::vector<std::uint64_t>> sets;
  for (int id = 1; id <= 3; ++id) {
    const auto outcome = run_config(setup, scenario, ProcessingConfig::standard(id), 1, tmp.path / std::to_string(id));
    auto ids = recover_event_ids(read_container_file(outcome.files.front()));
    std::sort(ids.begin(), ids.end());
    sets.push_back(ids);
  }
  CHECK(sets[0].size() == 25);
  CHECK(sets[0] == sets[1]);
  CHECK(sets[0] == sets[2]);
}

TEST_CASE("one merger buffer with aligned merges reproduces the standard file bytes") {
  TempDir tmp("bytes");
  auto setup = testing::small_setup(48, 21);
  setup.flush = FlushPolicy{std::uint64_t{2048}, std::uint64_t{4}};
  for (auto& [tier, m] : setup.merger) m = MergerConfig{1, std::uint64_t{1} << 40, std::uint64_t{8}};
  const auto scenario = OutputScenario::parse("reco-aod-mini");
  RunConfigOptions opts;
  opts.n_streams = 1;
  const auto a = run_config(setup, scenario, ProcessingConfig::standard(1), 4, tmp.path / "c1", opts);
  const auto b = run_config(setup, scenario, ProcessingConfig::standard(3), 4, tmp.path / "c3", opts);
  REQUIRE(a.files.size() == 3);
  for (std::size_t i = 0; i < a.files.size(); ++i) CHECK(files_identical(a.files[i], b.files[i]));
}

TEST_CASE("verification") {
  TempDir tmp("verify");
  SUBCASE("empty file and empty container pass when nothing is expected") {
    write_file(tmp.path / "zero.psnk", "");
    write_file(tmp.path / "empty.psnk", container_with_ids({}));
    const auto files = find_outputs(tmp.path);
    CHECK(verify_outputs(files, 0).ok());
    CHECK_FALSE(verify_outputs(files, 1).ok());
  }
  SUBCASE("dropped basket names the column") {
    const auto good = container_with_ids({0, 1, 2, 3, 4, 5});
    auto c = read_container(Bytes(good.begin(), good.end()));
    auto it = std::find_if(c.baskets.begin(), c.baskets.end(),
                           [](const auto& b) { return b.header.column_name == "p" && b.header.first_entry == 2; });
    REQUIRE(it != c.baskets.end());
    c.baskets.erase(it);
    std::ostringstream out;
    write_container(out, c.baskets, 6);
    write_file(tmp.path / "dropped.psnk", out.str());
    const std::vector<fs::path> files{tmp.path / "dropped.psnk"};
    const auto report = verify_outputs(files, 6);
    CHECK_FALSE(report.ok());
    CHECK(report.describe().find("column p") != std::string::npos);
  }
  SUBCASE("missing and duplicate ids are listed") {
    write_file(tmp.path / "dup.psnk", container_with_ids({0, 1, 1, 3}));
    const std::vector<fs::path> files{tmp.path / "dup.psnk"};
    const auto report = verify_outputs(files, 4);
    REQUIRE(report.files.size() == 1);
    CHECK(report.files[0].missing == std::vector<std::uint64_t>{2});
    CHECK(report.files[0].duplicates == std::vector<std::uint64_t>{1});
  }
  SUBCASE("garbage is reported, not thrown") {
    write_file(tmp.path / "junk.psnk", "not a container at all, clearly");
    const std::vector<fs::path> files{tmp.path / "junk.psnk"};
    CHECK_FALSE(verify_outputs(files, 3).ok());
  }
}

TEST_CASE("scaling table round-trips through CSV and renders") {
  std::vector<ScalingRow> rows;
  for (int c = 1; c <= 4; ++c) {
    for (std::size_t t : {1, 2, 4}) {
      ScalingRow r;
      r.n_threads = t;
      r.config_id = c;
      r.scenario = "aod-mini";
      r.wall_time_s = 1.5 / static_cast<double>(t);
      r.events_per_s = 100.0 * static_cast<double>(t);
      r.stall_fraction = 0.125;
      r.peak_buffer_bytes = 1000 * t;
      rows.push_back(r);
    }
  }
  rows.back().status = "error: a, b";
  std::stringstream csv;
  emit_scaling_csv(rows, csv);
  const auto back = parse_scaling_csv(csv);
  REQUIRE(back.size() == rows.size());
  CHECK(back[3].n_threads == 1);
  CHECK(back[3].config_id == 2);
  CHECK(back[3].events_per_s == doctest::Approx(100.0));
  CHECK(back[3].peak_buffer_bytes == 1000);
  CHECK(back.back().status == "error: a; b");
  std::ostringstream svg;
  emit_scaling_svg(back, svg);
  CHECK(svg.str().find("<polyline") != std::string::npos);
}

TEST_CASE("sweep writes one row per point") {
  TempDir tmp("sweep");
  const auto setup = testing::small_setup(12, 3);
  const std::vector<ProcessingConfig> configs{ProcessingConfig::standard(1), ProcessingConfig::standard(4)};
  const auto rows = sweep(setup, OutputScenario::parse("aod-mini"), configs, {1, 2}, tmp.path);
  CHECK(rows.size() == 4);
  for (const auto& r : rows) CHECK(r.status == "ok");
  std::ifstream in(tmp.path / "scaling.csv");
  CHECK(parse_scaling_csv(in).size() == 4);
  CHECK(fs::exists(tmp.path / "scaling.svg"));
}

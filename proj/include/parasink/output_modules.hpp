#pragma once

#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "parasink/buffer_merger.hpp"
#include "parasink/codec.hpp"
#include "parasink/container.hpp"
#include "parasink/scheduler.hpp"

namespace parasink {

/// An output module body plus its end-of-job hook.
class OutputModule {
 public:
  virtual ~OutputModule() = default;
  virtual void write(const Event& event, ModuleContext& ctx) = 0;
  virtual void end_job(ModuleContext& ctx) = 0;
  /// Peak bytes held in memory by the writer.
  virtual std::uint64_t peak_buffer_bytes() const = 0;
};

/// Adapts an OutputModule to the scheduler's ModuleImpl.
ModuleImpl as_module_impl(std::shared_ptr<OutputModule> module);

/// Single writer: one column store, baskets compressed as they are cut (in parallel when the
/// context has IMT on) and appended straight to the file. Must run with concurrency 1.
class StandardOutput final : public OutputModule {
 public:
  StandardOutput(std::filesystem::path path, std::vector<std::string> columns, FlushPolicy flush, int level);

  void write(const Event& event, ModuleContext& ctx) override;
  void end_job(ModuleContext& ctx) override;
  std::uint64_t peak_buffer_bytes() const override { return peak_; }

 private:
  std::vector<std::string> columns_;
  int level_;
  std::ofstream file_;
  ColumnStore store_;
  ContainerWriter writer_;
  std::uint64_t peak_ = 0;
};

/// Writers share a BufferMerger; each event goes to the fullest idle buffer and a writer whose
/// buffer crosses the merge threshold merges it on its own thread.
class ParallelOutput final : public OutputModule {
 public:
  ParallelOutput(std::filesystem::path path, std::vector<std::string> columns, FlushPolicy flush, int level,
                 MergerConfig config, BufferPolicy policy = BufferPolicy::FullestFirst);

  void write(const Event& event, ModuleContext& ctx) override;
  void end_job(ModuleContext& ctx) override;
  std::uint64_t peak_buffer_bytes() const override { return merger_->peak_resident_bytes(); }

  const std::optional<MergeStats>& stats() const noexcept { return stats_; }

 private:
  std::vector<std::string> columns_;
  int level_;
  std::ofstream file_;
  std::unique_ptr<BufferMerger> merger_;
  std::optional<MergeStats> stats_;
};

/// Perfectly scalable baseline: touches nothing.
class DummyOutput final : public OutputModule {
 public:
  void write(const Event&, ModuleContext&) override {}
  void end_job(ModuleContext&) override {}
  std::uint64_t peak_buffer_bytes() const override { return 0; }
};

}  // namespace parasink

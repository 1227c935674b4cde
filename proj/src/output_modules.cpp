#include "parasink/output_modules.hpp"

#include "parasink/errors.hpp"
#include "parasink/imt.hpp"

namespace parasink {

namespace {

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw SinkError("cannot open output file " + path.string());
  return out;
}

}  // namespace

ModuleImpl as_module_impl(std::shared_ptr<OutputModule> module) {
  ModuleImpl impl;
  impl.body = [module](Event& event, ModuleContext& ctx) { module->write(event, ctx); };
  impl.end_job = [module](ModuleContext& ctx) { module->end_job(ctx); };
  return impl;
}

StandardOutput::StandardOutput(std::filesystem::path path, std::vector<std::string> columns, FlushPolicy flush,
                               int level)
    : columns_(columns), level_(level), file_(open_output(path)), store_(std::move(columns), flush), writer_(file_) {}

void StandardOutput::write(const Event& event, ModuleContext& ctx) {
  const auto refs = select_products(event, columns_);
  auto cut = store_.append_event(event.id, refs);
  peak_ = std::max(peak_, store_.pending_bytes());
  if (cut.empty()) return;

  const auto t0 = ctx.executor.now_ns();
  std::uint64_t cut_bytes = 0;
  for (const auto& b : cut) cut_bytes += b.raw_bytes.size();
  peak_ = std::max(peak_, store_.pending_bytes() + cut_bytes);
  const auto compressed = compress_all(CompressionJob{std::move(cut), level_, ctx.isolation}, ctx.imt_pool());
  for (const auto& cb : compressed) writer_.append(cb);
  if (ctx.log_flush) ctx.log_flush(t0, ctx.executor.now_ns());
}

void StandardOutput::end_job(ModuleContext& ctx) {
  const auto t0 = ctx.executor.now_ns();
  auto rest = store_.flush_all();
  const auto compressed = compress_all(CompressionJob{std::move(rest), level_, ctx.isolation}, ctx.imt_pool());
  for (const auto& cb : compressed) writer_.append(cb);
  writer_.add_events(store_.entries());
  writer_.close();
  file_.close();
  if (ctx.log_flush) ctx.log_flush(t0, ctx.executor.now_ns());
}

ParallelOutput::ParallelOutput(std::filesystem::path path, std::vector<std::string> columns, FlushPolicy flush,
                               int level, MergerConfig config, BufferPolicy policy)
    : columns_(columns), level_(level), file_(open_output(path)) {
  merger_ = std::make_unique<BufferMerger>(std::move(columns), flush, config, file_, policy);
}

void ParallelOutput::write(const Event& event, ModuleContext& ctx) {
  const auto refs = select_products(event, columns_);
  auto buffer = merger_->acquire();
  const auto baskets_before = buffer->baskets().size();
  const auto t0 = ctx.executor.now_ns();
  MergeDecision decision;
  try {
    decision = merger_->write_event(*buffer, event.id, refs, level_, ctx.imt_pool(), ctx.isolation);
  } catch (...) {
    merger_->release(std::move(buffer));
    throw;
  }
  const bool flushed = buffer->baskets().size() != baskets_before;
  if (decision == MergeDecision::MergeDue) {
    merger_->merge(std::move(buffer), level_, ctx.imt_pool(), ctx.isolation);
  } else {
    merger_->release(std::move(buffer));
  }
  if ((flushed || decision == MergeDecision::MergeDue) && ctx.log_flush) ctx.log_flush(t0, ctx.executor.now_ns());
}

void ParallelOutput::end_job(ModuleContext& ctx) {
  const auto t0 = ctx.executor.now_ns();
  stats_ = merger_->finalize(level_, ctx.imt_pool(), ctx.isolation);
  file_.close();
  if (ctx.log_flush) ctx.log_flush(t0, ctx.executor.now_ns());
}

}  // namespace parasink

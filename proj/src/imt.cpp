#include "parasink/imt.hpp"

#include "parasink/errors.hpp"

namespace parasink {

std::vector<CompressedBasket> compress_all(const CompressionJob& job, Executor* pool) {
  std::vector<CompressedBasket> out(job.baskets.size());
  if (pool == nullptr || job.baskets.size() <= 1) {
    for (std::size_t i = 0; i < job.baskets.size(); ++i) out[i] = compress_basket(job.baskets[i], job.level);
    return out;
  }
  parallel_for(
      *pool, job.baskets.size(), [&](std::size_t i) { out[i] = compress_basket(job.baskets[i], job.level); },
      job.isolation);
  return out;
}

void ImtRuntime::set_imt(bool enabled, std::size_t pool_size) {
  if (used_) throw UsageError("IMT reconfigured after first use");
  if (pool_size == 0) throw UsageError("IMT pool size must be positive");
  pool_ = enabled ? std::make_unique<Executor>(pool_size) : nullptr;
}

std::vector<CompressedBasket> ImtRuntime::compress_all(const CompressionJob& job) {
  used_ = true;
  return parasink::compress_all(job, pool_.get());
}

}  // namespace parasink

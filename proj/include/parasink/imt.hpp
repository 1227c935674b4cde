#pragma once

#include <memory>
#include <vector>

#include "parasink/codec.hpp"
#include "parasink/executor.hpp"

namespace parasink {

struct CompressionJob {
  std::vector<Basket> baskets;
  int level = 6;
  bool isolation = true;
};

/// Compresses every basket of the job. With a pool, one task per basket runs in a fresh scope and
/// the caller helps until all finish; without one, the loop runs on the caller. Output order
/// matches input order. The first failure is rethrown after the remaining tasks drain.
std::vector<CompressedBasket> compress_all(const CompressionJob& job, Executor* pool);

/// Process-style IMT switch: configure once, then compress. Disabled means sequential.
class ImtRuntime {
 public:
  ImtRuntime() = default;

  /// Throws UsageError once compress_all has been called, or for pool_size == 0.
  void set_imt(bool enabled, std::size_t pool_size);

  bool enabled() const noexcept { return pool_ != nullptr; }
  Executor* pool() noexcept { return pool_.get(); }

  std::vector<CompressedBasket> compress_all(const CompressionJob& job);

 private:
  std::unique_ptr<Executor> pool_;
  bool used_ = false;
};

}  // namespace parasink

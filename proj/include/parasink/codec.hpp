#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "parasink/bytes.hpp"
#include "parasink/event_model.hpp"

namespace parasink {

// ---------------------------------------------------------------------------
// Codec
// ---------------------------------------------------------------------------

namespace codec {

inline constexpr int kMaxLevel = 9;

/// Deflate at `level`; level 0 returns the input unchanged. Throws UsageError outside 0..kMaxLevel.
Bytes compress(ByteView raw, int level);

/// Inverse of compress. `raw_len` is the expected output size.
Bytes decompress(ByteView payload, std::size_t raw_len, int level);

std::uint32_t crc32(ByteView bytes);

}  // namespace codec

// ---------------------------------------------------------------------------
// Baskets
// ---------------------------------------------------------------------------

/// One column's bytes for a contiguous span of entries.
struct Basket {
  std::string column_name;
  std::uint64_t first_entry = 0;
  std::uint64_t entry_count = 0;
  Bytes raw_bytes;
  /// End offset of each entry within raw_bytes; size() == entry_count.
  std::vector<std::uint64_t> entry_offsets;

  friend bool operator==(const Basket&, const Basket&) = default;
};

struct BasketHeader {
  std::string column_name;
  std::uint64_t first_entry = 0;
  std::uint64_t entry_count = 0;
  std::uint64_t raw_len = 0;
  std::uint64_t compressed_len = 0;
  std::uint32_t checksum = 0;
  std::uint8_t codec_level = 0;
  std::vector<std::uint64_t> entry_offsets;

  friend bool operator==(const BasketHeader&, const BasketHeader&) = default;
};

struct CompressedBasket {
  BasketHeader header;
  Bytes payload;

  friend bool operator==(const CompressedBasket&, const CompressedBasket&) = default;
};

CompressedBasket compress_basket(const Basket& basket, int level);

/// Throws CorruptionError on checksum/stream damage and FormatError on inconsistent headers.
Basket decompress_basket(const CompressedBasket& cb);

/// Splits a basket back into per-entry payloads.
std::vector<ByteView> split_entries(const Basket& basket);

// ---------------------------------------------------------------------------
// Column store
// ---------------------------------------------------------------------------

struct FlushPolicy {
  std::optional<std::uint64_t> basket_target_bytes;
  std::optional<std::uint64_t> flush_every_n_events;

  void validate() const;
};

/// Name of the column that records each entry's event id (8 bytes, little-endian).
inline constexpr std::string_view kEventIdColumn = "@event_id";

struct ColumnBuffer {
  std::string column_name;
  Bytes pending_bytes;
  std::vector<std::uint64_t> entry_offsets;
  std::uint64_t first_entry = 0;
};

/// Borrowed product for appends that select a subset of an event's products.
struct ProductRef {
  std::string_view name;
  ByteView bytes;
};

/// Per-column buffers for one writer. Not internally synchronized.
class ColumnStore {
 public:
  /// Columns are the given product names plus the event-id column, in that order.
  ColumnStore(std::vector<std::string> product_columns, FlushPolicy policy);

  /// Appends one event. Products must cover exactly the store's product columns.
  /// Returns the baskets cut by this append, in column order.
  std::vector<Basket> append_event(std::uint64_t event_id, std::span<const ProductRef> products);
  std::vector<Basket> append_event(const Event& event);

  /// Cuts every non-empty column.
  std::vector<Basket> flush_all();

  /// Drops all pending data and restarts entry numbering at 0.
  void reset();

  const std::vector<ColumnBuffer>& columns() const noexcept { return columns_; }
  const FlushPolicy& policy() const noexcept { return policy_; }
  std::uint64_t entries() const noexcept { return entries_; }
  std::uint64_t pending_bytes() const noexcept { return pending_total_; }

 private:
  Basket cut(ColumnBuffer& column);

  std::vector<ColumnBuffer> columns_;
  FlushPolicy policy_;
  std::uint64_t entries_ = 0;
  std::uint64_t events_since_flush_ = 0;
  std::uint64_t pending_total_ = 0;
};

/// Product refs of `event` restricted to `names`, in `names` order.
std::vector<ProductRef> select_products(const Event& event, std::span<const std::string> names);

}  // namespace parasink

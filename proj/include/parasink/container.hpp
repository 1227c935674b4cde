#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include "parasink/codec.hpp"

namespace parasink {

/// Container layout (little-endian):
///
///   magic "PSNK0001"
///   record*    u64 record_len | basket header | payload
///   index      u64 event_count | u32 n_columns | per column:
///                u16 name_len name | u32 n_baskets | per basket: u64 offset, u64 first_entry, u64 entry_count
///   footer     u64 index_offset | magic
inline constexpr std::array<char, 8> kContainerMagic = {'P', 'S', 'N', 'K', '0', '0', '0', '1'};

struct BasketLocation {
  std::uint64_t file_offset = 0;
  std::uint64_t first_entry = 0;
  std::uint64_t entry_count = 0;

  friend bool operator==(const BasketLocation&, const BasketLocation&) = default;
};

struct ColumnIndex {
  std::string column_name;
  std::vector<BasketLocation> baskets;

  friend bool operator==(const ColumnIndex&, const ColumnIndex&) = default;
};

struct Trailer {
  std::uint64_t event_count = 0;
  /// Columns in order of first appearance.
  std::vector<ColumnIndex> columns;

  const ColumnIndex* find(std::string_view column) const;

  friend bool operator==(const Trailer&, const Trailer&) = default;
};

struct Container {
  std::vector<CompressedBasket> baskets;
  Trailer trailer;
};

Bytes encode_basket_record(const CompressedBasket& cb);

/// Append-only writer. Baskets go out as they arrive; close() writes the index and footer.
class ContainerWriter {
 public:
  explicit ContainerWriter(std::ostream& sink);
  ContainerWriter(const ContainerWriter&) = delete;
  ContainerWriter& operator=(const ContainerWriter&) = delete;

  void append(const CompressedBasket& cb);
  void add_events(std::uint64_t n) { trailer_.event_count += n; }
  std::uint64_t event_count() const noexcept { return trailer_.event_count; }
  std::uint64_t bytes_written() const noexcept { return offset_; }
  const Trailer& trailer() const noexcept { return trailer_; }

  /// Writes the index and footer. Further appends are a LifecycleError.
  void close();
  bool closed() const noexcept { return closed_; }

 private:
  void write(ByteView bytes);

  std::ostream& sink_;
  Trailer trailer_;
  std::uint64_t offset_ = 0;
  bool closed_ = false;
};

/// One-shot write of a complete container; the index is derived from the baskets.
Trailer write_container(std::ostream& sink, std::span<const CompressedBasket> baskets, std::uint64_t event_count);

/// Throws FormatError on bad magic, truncation, or an index that disagrees with the records.
Container read_container(ByteView file);
Container read_container(std::istream& source);
Container read_container_file(const std::filesystem::path& path);

}  // namespace parasink

#include "parasink/codec.hpp"

#include <zlib.h>

#include <algorithm>

#include "parasink/errors.hpp"

namespace parasink {

namespace codec {

Bytes compress(ByteView raw, int level) {
  if (level < 0 || level > kMaxLevel) throw UsageError("codec level out of range: " + std::to_string(level));
  if (level == 0) return Bytes(raw.begin(), raw.end());

  uLongf bound = compressBound(static_cast<uLong>(raw.size()));
  Bytes out(bound);
  const int rc = compress2(out.data(), &bound, raw.data(), static_cast<uLong>(raw.size()), level);
  if (rc != Z_OK) throw Error("deflate failed with code " + std::to_string(rc));
  out.resize(bound);
  return out;
}

Bytes decompress(ByteView payload, std::size_t raw_len, int level) {
  if (level == 0) {
    if (payload.size() != raw_len) throw FormatError("stored basket length does not match raw_len");
    return Bytes(payload.begin(), payload.end());
  }
  Bytes out(raw_len);
  uLongf produced = static_cast<uLongf>(raw_len);
  // zlib refuses a null destination even for empty output.
  std::uint8_t scratch = 0;
  auto* dest = raw_len == 0 ? &scratch : out.data();
  const int rc = uncompress(dest, &produced, payload.data(), static_cast<uLong>(payload.size()));
  switch (rc) {
    case Z_OK:
      break;
    case Z_DATA_ERROR:
      throw CorruptionError("deflate stream is corrupt");
    case Z_BUF_ERROR:
      // Either the output did not fit in raw_len or the input ended early.
      throw FormatError("basket payload inconsistent with raw_len or truncated");
    default:
      throw Error("inflate failed with code " + std::to_string(rc));
  }
  if (produced != raw_len) throw FormatError("decompressed size differs from raw_len");
  return out;
}

std::uint32_t crc32(ByteView bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in bounded chunks.
  constexpr std::size_t kChunk = 1u << 30;
  for (std::size_t at = 0; at < bytes.size(); at += kChunk) {
    const auto n = std::min(kChunk, bytes.size() - at);
    crc = ::crc32(crc, bytes.data() + at, static_cast<uInt>(n));
  }
  return static_cast<std::uint32_t>(crc);
}

}  // namespace codec

CompressedBasket compress_basket(const Basket& basket, int level) {
  CompressedBasket cb;
  cb.payload = codec::compress(basket.raw_bytes, level);
  auto& h = cb.header;
  h.column_name = basket.column_name;
  h.first_entry = basket.first_entry;
  h.entry_count = basket.entry_count;
  h.raw_len = basket.raw_bytes.size();
  h.compressed_len = cb.payload.size();
  h.checksum = codec::crc32(basket.raw_bytes);
  h.codec_level = static_cast<std::uint8_t>(level);
  h.entry_offsets = basket.entry_offsets;
  return cb;
}

Basket decompress_basket(const CompressedBasket& cb) {
  const auto& h = cb.header;
  if (h.compressed_len != cb.payload.size()) throw FormatError("basket payload truncated: " + h.column_name);
  if (h.codec_level > codec::kMaxLevel) throw FormatError("unknown codec level in basket " + h.column_name);
  if (h.entry_offsets.size() != h.entry_count) throw FormatError("entry offsets do not match entry_count");
  if (!std::is_sorted(h.entry_offsets.begin(), h.entry_offsets.end()) ||
      (!h.entry_offsets.empty() && h.entry_offsets.back() != h.raw_len)) {
    throw FormatError("entry offsets inconsistent with raw_len in basket " + h.column_name);
  }

  Basket b;
  b.raw_bytes = codec::decompress(cb.payload, h.raw_len, h.codec_level);
  if (codec::crc32(b.raw_bytes) != h.checksum) throw CorruptionError("checksum mismatch in basket " + h.column_name);
  b.column_name = h.column_name;
  b.first_entry = h.first_entry;
  b.entry_count = h.entry_count;
  b.entry_offsets = h.entry_offsets;
  return b;
}

std::vector<ByteView> split_entries(const Basket& basket) {
  std::vector<ByteView> entries;
  entries.reserve(basket.entry_offsets.size());
  std::uint64_t begin = 0;
  const ByteView all(basket.raw_bytes);
  for (auto end : basket.entry_offsets) {
    entries.push_back(all.subspan(begin, end - begin));
    begin = end;
  }
  return entries;
}

void FlushPolicy::validate() const {
  if (!basket_target_bytes && !flush_every_n_events) {
    throw ValidationError("flush policy: set basket_target_bytes or flush_every_n_events");
  }
  if (basket_target_bytes && *basket_target_bytes == 0) throw ValidationError("basket_target_bytes: must be positive");
  if (flush_every_n_events && *flush_every_n_events == 0) {
    throw ValidationError("flush_every_n_events: must be positive");
  }
}

ColumnStore::ColumnStore(std::vector<std::string> product_columns, FlushPolicy policy) : policy_(policy) {
  policy_.validate();
  product_columns.emplace_back(kEventIdColumn);
  columns_.reserve(product_columns.size());
  for (auto& name : product_columns) {
    for (const auto& c : columns_) {
      if (c.column_name == name) throw SchemaMismatchError("duplicate column '" + name + "'");
    }
    columns_.push_back(ColumnBuffer{std::move(name), {}, {}, 0});
  }
}

std::vector<Basket> ColumnStore::append_event(std::uint64_t event_id, std::span<const ProductRef> products) {
  const auto n_products = columns_.size() - 1;
  if (products.size() != n_products) {
    throw SchemaMismatchError("event " + std::to_string(event_id) + " has " + std::to_string(products.size()) +
                              " products, store has " + std::to_string(n_products) + " columns");
  }

  // Resolve every product before touching any buffer so a mismatch leaves the store unchanged.
  std::vector<std::size_t> slot(n_products);
  for (std::size_t i = 0; i < n_products; ++i) {
    if (products[i].name == columns_[i].column_name) {
      slot[i] = i;
      continue;
    }
    auto it = std::find_if(columns_.begin(), columns_.end() - 1,
                           [&](const ColumnBuffer& c) { return c.column_name == products[i].name; });
    if (it == columns_.end() - 1) {
      throw SchemaMismatchError("unknown product '" + std::string(products[i].name) + "' in event " +
                                std::to_string(event_id));
    }
    slot[i] = static_cast<std::size_t>(it - columns_.begin());
  }
  {
    std::vector<bool> hit(n_products, false);
    for (auto s : slot) {
      if (hit[s]) throw SchemaMismatchError("product '" + columns_[s].column_name + "' given twice");
      hit[s] = true;
    }
  }

  for (std::size_t i = 0; i < n_products; ++i) {
    auto& col = columns_[slot[i]];
    put_bytes(col.pending_bytes, products[i].bytes);
    col.entry_offsets.push_back(col.pending_bytes.size());
    pending_total_ += products[i].bytes.size();
  }
  auto& ids = columns_.back();
  put_le<std::uint64_t>(ids.pending_bytes, event_id);
  ids.entry_offsets.push_back(ids.pending_bytes.size());
  pending_total_ += sizeof(std::uint64_t);

  ++entries_;
  ++events_since_flush_;

  std::vector<Basket> out;
  if (policy_.flush_every_n_events && events_since_flush_ >= *policy_.flush_every_n_events) {
    return flush_all();
  }
  if (policy_.basket_target_bytes) {
    for (auto& col : columns_) {
      if (col.pending_bytes.size() >= *policy_.basket_target_bytes) out.push_back(cut(col));
    }
  }
  return out;
}

std::vector<Basket> ColumnStore::append_event(const Event& event) {
  std::vector<ProductRef> refs;
  refs.reserve(event.products.size());
  for (const auto& p : event.products) refs.push_back(ProductRef{p.name, p.payload});
  return append_event(event.id, refs);
}

std::vector<Basket> ColumnStore::flush_all() {
  std::vector<Basket> out;
  for (auto& col : columns_) {
    if (!col.entry_offsets.empty()) out.push_back(cut(col));
  }
  events_since_flush_ = 0;
  return out;
}

void ColumnStore::reset() {
  for (auto& col : columns_) {
    col.pending_bytes.clear();
    col.entry_offsets.clear();
    col.first_entry = 0;
  }
  entries_ = 0;
  events_since_flush_ = 0;
  pending_total_ = 0;
}

Basket ColumnStore::cut(ColumnBuffer& col) {
  Basket b;
  b.column_name = col.column_name;
  b.first_entry = col.first_entry;
  b.entry_count = col.entry_offsets.size();
  pending_total_ -= col.pending_bytes.size();
  b.raw_bytes = std::move(col.pending_bytes);
  b.entry_offsets = std::move(col.entry_offsets);
  col.pending_bytes = {};
  col.entry_offsets = {};
  col.first_entry = entries_;
  return b;
}

std::vector<ProductRef> select_products(const Event& event, std::span<const std::string> names) {
  std::vector<ProductRef> refs;
  refs.reserve(names.size());
  std::size_t hint = 0;
  for (const auto& name : names) {
    const Product* found = nullptr;
    // Names usually appear in event order; scan forward from the last hit first.
    for (std::size_t k = 0; k < event.products.size(); ++k) {
      const auto& p = event.products[(hint + k) % event.products.size()];
      if (p.name == name) {
        found = &p;
        hint = (hint + k + 1) % event.products.size();
        break;
      }
    }
    if (!found) throw SchemaMismatchError("event " + std::to_string(event.id) + " lacks product '" + name + "'");
    refs.push_back(ProductRef{found->name, found->payload});
  }
  return refs;
}

}  // namespace parasink

#include "parasink/container.hpp"

#include <algorithm>
#include <fstream>
#include <iterator>
#include <ostream>

#include "parasink/errors.hpp"

namespace parasink {

namespace {

constexpr std::size_t kFooterSize = 16;

ByteView magic_view() {
  return {reinterpret_cast<const std::uint8_t*>(kContainerMagic.data()), kContainerMagic.size()};
}

bool is_magic(ByteView bytes) { return std::ranges::equal(bytes, magic_view()); }

void encode_header(Bytes& out, const BasketHeader& h) {
  put_string16(out, h.column_name);
  put_le(out, h.first_entry);
  put_le(out, h.entry_count);
  put_le(out, h.raw_len);
  put_le(out, h.compressed_len);
  put_le(out, h.checksum);
  put_le(out, h.codec_level);
  for (auto off : h.entry_offsets) put_le(out, off);
}

CompressedBasket decode_record(ByteReader& in) {
  const auto record_len = in.get<std::uint64_t>();
  if (record_len > in.remaining()) throw FormatError("basket record runs past end of data");
  const auto end = in.position() + record_len;

  CompressedBasket cb;
  auto& h = cb.header;
  h.column_name = in.get_string16();
  h.first_entry = in.get<std::uint64_t>();
  h.entry_count = in.get<std::uint64_t>();
  h.raw_len = in.get<std::uint64_t>();
  h.compressed_len = in.get<std::uint64_t>();
  h.checksum = in.get<std::uint32_t>();
  h.codec_level = in.get<std::uint8_t>();
  if (h.entry_count > in.remaining() / sizeof(std::uint64_t)) throw FormatError("entry count exceeds record size");
  h.entry_offsets.resize(h.entry_count);
  for (auto& off : h.entry_offsets) off = in.get<std::uint64_t>();
  if (in.position() + h.compressed_len != end) throw FormatError("record length disagrees with compressed_len");
  auto payload = in.take(h.compressed_len);
  cb.payload.assign(payload.begin(), payload.end());
  return cb;
}

Bytes encode_index(const Trailer& t) {
  Bytes out;
  put_le(out, t.event_count);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.columns.size()));
  for (const auto& col : t.columns) {
    put_string16(out, col.column_name);
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(col.baskets.size()));
    for (const auto& loc : col.baskets) {
      put_le(out, loc.file_offset);
      put_le(out, loc.first_entry);
      put_le(out, loc.entry_count);
    }
  }
  return out;
}

}  // namespace

const ColumnIndex* Trailer::find(std::string_view column) const {
  for (const auto& c : columns) {
    if (c.column_name == column) return &c;
  }
  return nullptr;
}

Bytes encode_basket_record(const CompressedBasket& cb) {
  if (cb.header.compressed_len != cb.payload.size()) throw FormatError("compressed_len != payload size");
  Bytes body;
  encode_header(body, cb.header);
  put_bytes(body, cb.payload);
  Bytes out;
  out.reserve(body.size() + 8);
  put_le<std::uint64_t>(out, body.size());
  put_bytes(out, body);
  return out;
}

ContainerWriter::ContainerWriter(std::ostream& sink) : sink_(sink) { write(magic_view()); }

void ContainerWriter::write(ByteView bytes) {
  sink_.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!sink_) throw SinkError("write to output sink failed");
  offset_ += bytes.size();
}

void ContainerWriter::append(const CompressedBasket& cb) {
  if (closed_) throw LifecycleError("append to a closed container");
  const auto record = encode_basket_record(cb);
  const auto at = offset_;
  write(record);

  auto it = std::find_if(trailer_.columns.begin(), trailer_.columns.end(),
                         [&](const ColumnIndex& c) { return c.column_name == cb.header.column_name; });
  if (it == trailer_.columns.end()) {
    trailer_.columns.push_back(ColumnIndex{cb.header.column_name, {}});
    it = std::prev(trailer_.columns.end());
  }
  it->baskets.push_back(BasketLocation{at, cb.header.first_entry, cb.header.entry_count});
}

void ContainerWriter::close() {
  if (closed_) throw LifecycleError("container closed twice");
  const auto index_offset = offset_;
  write(encode_index(trailer_));
  Bytes footer;
  put_le<std::uint64_t>(footer, index_offset);
  put_bytes(footer, magic_view());
  write(footer);
  sink_.flush();
  if (!sink_) throw SinkError("flush of output sink failed");
  closed_ = true;
}

Trailer write_container(std::ostream& sink, std::span<const CompressedBasket> baskets, std::uint64_t event_count) {
  ContainerWriter writer(sink);
  for (const auto& cb : baskets) writer.append(cb);
  writer.add_events(event_count);
  writer.close();
  return writer.trailer();
}

Container read_container(ByteView file) {
  if (file.size() < kContainerMagic.size() + kFooterSize) throw FormatError("file too short for a container");
  if (!is_magic(file.first(kContainerMagic.size()))) throw FormatError("bad magic");
  if (!is_magic(file.last(kContainerMagic.size()))) throw FormatError("bad footer magic (truncated file?)");

  ByteReader footer(file.last(kFooterSize));
  const auto index_offset = footer.get<std::uint64_t>();
  const auto index_end = file.size() - kFooterSize;
  if (index_offset < kContainerMagic.size() || index_offset > index_end) throw FormatError("index offset out of range");

  Container out;
  ByteReader records(file.first(index_offset));
  records.seek(kContainerMagic.size());
  std::vector<std::uint64_t> offsets;
  while (records.remaining() > 0) {
    offsets.push_back(records.position());
    out.baskets.push_back(decode_record(records));
  }

  ByteReader index(file.subspan(index_offset, index_end - index_offset));
  auto& t = out.trailer;
  t.event_count = index.get<std::uint64_t>();
  const auto n_columns = index.get<std::uint32_t>();
  std::size_t located = 0;
  for (std::uint32_t c = 0; c < n_columns; ++c) {
    ColumnIndex col;
    col.column_name = index.get_string16();
    const auto n = index.get<std::uint32_t>();
    for (std::uint32_t k = 0; k < n; ++k) {
      BasketLocation loc;
      loc.file_offset = index.get<std::uint64_t>();
      loc.first_entry = index.get<std::uint64_t>();
      loc.entry_count = index.get<std::uint64_t>();
      auto at = std::lower_bound(offsets.begin(), offsets.end(), loc.file_offset);
      if (at == offsets.end() || *at != loc.file_offset) {
        throw FormatError("index offset does not point at a basket record (column " + col.column_name + ")");
      }
      const auto& h = out.baskets[static_cast<std::size_t>(at - offsets.begin())].header;
      if (h.column_name != col.column_name || h.first_entry != loc.first_entry || h.entry_count != loc.entry_count) {
        throw FormatError("index entry disagrees with basket record (column " + col.column_name + ")");
      }
      if (loc.first_entry + loc.entry_count > t.event_count) {
        throw FormatError("basket entries beyond the event count (column " + col.column_name + ")");
      }
      col.baskets.push_back(loc);
      ++located;
    }
    t.columns.push_back(std::move(col));
  }
  if (index.remaining() != 0) throw FormatError("trailing bytes after index");
  if (located != out.baskets.size()) throw FormatError("index does not cover every basket record");
  return out;
}

Container read_container(std::istream& source) {
  Bytes data{std::istreambuf_iterator<char>(source), std::istreambuf_iterator<char>()};
  return read_container(ByteView(data));
}

Container read_container_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open container " + path.string());
  return read_container(in);
}

}  // namespace parasink

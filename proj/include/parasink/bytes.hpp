#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "parasink/errors.hpp"

namespace parasink {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

static_assert(std::endian::native == std::endian::little,
              "on-disk integers are written with memcpy and assume a little-endian host");

template <typename T>
void put_le(Bytes& out, T value) {
  const auto at = out.size();
  out.resize(at + sizeof(T));
  std::memcpy(out.data() + at, &value, sizeof(T));
}

inline void put_bytes(Bytes& out, ByteView bytes) { out.insert(out.end(), bytes.begin(), bytes.end()); }

inline void put_string16(Bytes& out, std::string_view s) {
  if (s.size() > 0xFFFF) throw FormatError("name longer than 65535 bytes: " + std::string(s.substr(0, 32)));
  put_le<std::uint16_t>(out, static_cast<std::uint16_t>(s.size()));
  out.insert(out.end(), s.begin(), s.end());
}

/// Bounds-checked little-endian cursor; every overrun is a FormatError.
class ByteReader {
 public:
  explicit ByteReader(ByteView data) : data_(data) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T value;
    std::memcpy(&value, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }

  ByteView take(std::size_t n) {
    need(n);
    auto view = data_.subspan(pos_, n);
    pos_ += n;
    return view;
  }

  std::string get_string16() {
    const auto n = get<std::uint16_t>();
    auto view = take(n);
    return {reinterpret_cast<const char*>(view.data()), view.size()};
  }

  std::size_t position() const noexcept { return pos_; }
  std::size_t remaining() const noexcept { return data_.size() - pos_; }
  void seek(std::size_t pos) {
    if (pos > data_.size()) throw FormatError("seek past end of data");
    pos_ = pos;
  }

 private:
  void need(std::size_t n) const {
    if (n > data_.size() - pos_) throw FormatError("truncated data");
  }

  ByteView data_;
  std::size_t pos_ = 0;
};

}  // namespace parasink

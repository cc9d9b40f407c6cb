#ifndef ROLLBOX_CORE_CHECKSUM_HPP_
#define ROLLBOX_CORE_CHECKSUM_HPP_

#include <zlib.h>

#include <cstdint>
#include <span>
#include <string_view>

namespace rollbox {

inline std::uint32_t crc32_of(std::span<const std::uint8_t> bytes,
                              std::uint32_t crc = 0) {
  uLong c = crc;
  // zlib takes a uInt length; feed large buffers in chunks.
  while (!bytes.empty()) {
    const std::size_t n = bytes.size() > (1u << 30) ? (1u << 30) : bytes.size();
    c = ::crc32(c, bytes.data(), static_cast<uInt>(n));
    bytes = bytes.subspan(n);
  }
  return static_cast<std::uint32_t>(c);
}

inline std::uint32_t crc32_of(std::string_view text, std::uint32_t crc = 0) {
  return crc32_of(std::span<const std::uint8_t>(
                      reinterpret_cast<const std::uint8_t*>(text.data()),
                      text.size()),
                  crc);
}

}  // namespace rollbox

#endif  // ROLLBOX_CORE_CHECKSUM_HPP_

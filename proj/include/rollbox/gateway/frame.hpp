#ifndef ROLLBOX_GATEWAY_FRAME_HPP_
#define ROLLBOX_GATEWAY_FRAME_HPP_

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <boost/archive/iterators/base64_from_binary.hpp>
#include <boost/archive/iterators/binary_from_base64.hpp>
#include <boost/archive/iterators/transform_width.hpp>

#include "rollbox/core/error.hpp"

namespace rollbox::gateway {

inline constexpr std::uint32_t kMaxFrame = 16u << 20;

class FrameError : public Error {
 public:
  using Error::Error;
};

inline std::string encode_frame(std::string_view payload) {
  if (payload.size() > kMaxFrame) throw FrameError("frame of " + std::to_string(payload.size()) + " bytes exceeds the limit");
  const auto n = static_cast<std::uint32_t>(payload.size());
  std::string out;
  out.reserve(4 + payload.size());
  out.push_back(static_cast<char>((n >> 24) & 0xff));
  out.push_back(static_cast<char>((n >> 16) & 0xff));
  out.push_back(static_cast<char>((n >> 8) & 0xff));
  out.push_back(static_cast<char>(n & 0xff));
  out.append(payload);
  return out;
}

inline std::uint32_t decode_length(const unsigned char* b) {
  return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) | std::uint32_t{b[3]};
}

// Incremental decoder for a byte stream of frames.
class FrameDecoder {
 public:
  void feed(std::string_view bytes) { buf_.append(bytes); }

  // Next complete payload, if any. A declared length over the limit leaves
  // the stream unrecoverable and throws.
  std::optional<std::string> next() {
    if (buf_.size() < 4) return std::nullopt;
    const std::uint32_t n = decode_length(reinterpret_cast<const unsigned char*>(buf_.data()));
    if (n > kMaxFrame) throw FrameError("declared frame length " + std::to_string(n) + " exceeds the limit");
    if (buf_.size() < 4 + static_cast<std::size_t>(n)) return std::nullopt;
    std::string payload = buf_.substr(4, n);
    buf_.erase(0, 4 + static_cast<std::size_t>(n));
    return payload;
  }

  std::size_t buffered() const { return buf_.size(); }

 private:
  std::string buf_;
};

inline std::string base64_encode(const std::vector<std::uint8_t>& data) {
  using namespace boost::archive::iterators;
  using It = base64_from_binary<transform_width<const std::uint8_t*, 6, 8>>;
  std::string out(It(data.data()), It(data.data() + data.size()));
  out.append((3 - data.size() % 3) % 3, '=');
  return out;
}

inline std::vector<std::uint8_t> base64_decode(std::string_view text) {
  using namespace boost::archive::iterators;
  using It = transform_width<binary_from_base64<const char*>, 8, 6>;
  std::size_t pad = 0;
  while (!text.empty() && text.back() == '=') {
    text.remove_suffix(1);
    ++pad;
  }
  if (pad > 2 || (text.size() + pad) % 4 != 0) throw Error("malformed base64");
  std::vector<std::uint8_t> out;
  try {
    for (It it(text.data()), end(text.data() + text.size()); it != end; ++it) out.push_back(static_cast<std::uint8_t>(*it));
  } catch (const std::exception&) {
    throw Error("malformed base64");
  }
  out.resize((text.size() + pad) / 4 * 3 - pad);
  return out;
}

}  // namespace rollbox::gateway

#endif  // ROLLBOX_GATEWAY_FRAME_HPP_

#ifndef ROLLBOX_TESTS_TRANSCRIPT_HPP_
#define ROLLBOX_TESTS_TRANSCRIPT_HPP_

#include <zlib.h>

#include <string>
#include <vector>

#include "rollbox/gateway/protocol.hpp"

namespace rollbox::testing {

using gateway::Connection;
using gateway::Hub;
using gateway::encode_frame;
using nlohmann::json;

struct Driver {
  Hub& hub;
  Connection conn{hub};
  std::int64_t seq = 0;
  std::vector<std::string> replies;

  json send(const std::string& type, const json& payload = json::object()) {
    const json req = {{"type", type}, {"seq", ++seq}, {"payload", payload}};
    replies.push_back(conn.on_payload(req.dump()));
    return json::parse(replies.back());
  }
};

inline json hello(Driver& d) { return d.send("hello", {{"version", "1"}}); }

// The scripted transcript behind the golden file.
inline std::vector<std::string> golden_session() {
  Hub hub;
  Driver d{hub};
  hello(d);
  d.send("configure", {{"skip_frame", true}});
  d.send("add_change_puzzle", {{"mode", 1}, {"task", 1}, {"seed", 17}, {"table_half_extent", 1.0}, {"obstacles", false}});
  d.send("reset");
  bool done = false;
  for (int k = 0; k < 100; ++k) {
    if (done) {
      d.send("reset");
      done = false;
      continue;
    }
    if (k % 10 == 0) d.send("state_snapshot");
    done = d.send("step", {{"action", (k * 3) % 8}})["payload"]["done"].get<bool>();
  }
  d.send("bye");
  return d.replies;
}

inline json transcript_digest(const std::vector<std::string>& replies) {
  json out = json::array();
  for (const auto& r : replies) {
    const std::string frame = encode_frame(r);
    out.push_back({{"bytes", frame.size()},
                   {"crc32", crc32(0L, reinterpret_cast<const Bytef*>(frame.data()), static_cast<uInt>(frame.size()))}});
  }
  return out;
}

}  // namespace rollbox::testing

#endif  // ROLLBOX_TESTS_TRANSCRIPT_HPP_

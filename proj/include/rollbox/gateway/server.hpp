#ifndef ROLLBOX_GATEWAY_SERVER_HPP_
#define ROLLBOX_GATEWAY_SERVER_HPP_

#include <sys/socket.h>

#include <atomic>
#include <condition_variable>
#include <list>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

#include <boost/asio.hpp>

#include "rollbox/gateway/protocol.hpp"

namespace rollbox::gateway {

namespace asio = boost::asio;
using tcp = asio::ip::tcp;

namespace detail {

// Reads one frame. nullopt on a clean close before the header.
inline std::optional<std::string> read_frame(tcp::socket& sock) {
  unsigned char header[4];
  boost::system::error_code ec;
  asio::read(sock, asio::buffer(header), ec);
  if (ec) return std::nullopt;
  const std::uint32_t n = decode_length(header);
  if (n > kMaxFrame) throw FrameError("declared frame length " + std::to_string(n) + " exceeds the limit");
  std::string payload(n, '\0');
  if (n > 0) {
    asio::read(sock, asio::buffer(payload.data(), n), ec);
    if (ec) return std::nullopt;
  }
  return payload;
}

inline bool write_frame(tcp::socket& sock, const std::string& payload) {
  boost::system::error_code ec;
  asio::write(sock, asio::buffer(encode_frame(payload)), ec);
  return !ec;
}

}  // namespace detail

// Blocking TCP server, one thread per connection.
class Server {
 public:
  Server(const std::string& address, unsigned short port, std::chrono::milliseconds idle = kIdleTimeout)
      : hub_(idle), acceptor_(io_, tcp::endpoint(asio::ip::make_address(address), port)) {}

  ~Server() { stop(); }

  unsigned short port() const { return acceptor_.local_endpoint().port(); }
  Hub& hub() { return hub_; }

  // Accepts until stop(). Runs on the calling thread.
  void run() {
    std::thread reaper([this] { reap_loop(); });
    while (!stopping_) {
      tcp::socket sock(io_);
      boost::system::error_code ec;
      acceptor_.accept(sock, ec);
      if (ec) {
        if (stopping_) break;
        continue;
      }
      auto conn = std::make_shared<Live>(std::move(sock), hub_);
      {
        std::lock_guard<std::mutex> lock(mu_);
        live_.push_back(conn);
      }
      std::thread([this, conn] { serve(conn); }).detach();
    }
    {
      std::lock_guard<std::mutex> lock(mu_);
      reap_cv_.notify_all();
    }
    reaper.join();
    boost::system::error_code ec;
    acceptor_.close(ec);
    // Wait for handlers to notice their sockets closing.
    std::unique_lock<std::mutex> lock(mu_);
    for (auto& c : live_) ::shutdown(c->sock.native_handle(), SHUT_RDWR);
    done_cv_.wait(lock, [this] { return live_.empty(); });
  }

  void stop() {
    if (stopping_.exchange(true)) return;
    ::shutdown(acceptor_.native_handle(), SHUT_RDWR);
    std::lock_guard<std::mutex> lock(mu_);
    reap_cv_.notify_all();
  }

 private:
  struct Live {
    Live(tcp::socket s, Hub& hub) : sock(std::move(s)), conn(hub) {}
    tcp::socket sock;
    Connection conn;
  };

  void serve(const std::shared_ptr<Live>& live) {
    try {
      while (true) {
        std::optional<std::string> payload;
        try {
          payload = detail::read_frame(live->sock);
        } catch (const FrameError& e) {
          detail::write_frame(live->sock, live->conn.on_frame_error(e.what()));
          break;
        }
        if (!payload) break;
        if (!detail::write_frame(live->sock, live->conn.on_payload(*payload))) break;
        if (live->conn.closed()) break;
      }
    } catch (const std::exception&) {
      // A broken connection must never take the server down.
    }
    boost::system::error_code ec;
    live->sock.shutdown(tcp::socket::shutdown_both, ec);
    live->sock.close(ec);
    std::lock_guard<std::mutex> lock(mu_);
    live_.remove(live);
    done_cv_.notify_all();
  }

  // Idle sessions are dropped and their sockets shut so blocked readers wake.
  void reap_loop() {
    const auto period = std::max(std::chrono::milliseconds(10), hub_.idle_timeout() / 4);
    std::unique_lock<std::mutex> lock(mu_);
    while (!stopping_) {
      reap_cv_.wait_for(lock, period);
      if (stopping_) break;
      lock.unlock();
      const auto gone = hub_.reap();
      lock.lock();
      for (const auto& id : gone) {
        for (auto& c : live_) {
          if (c->conn.session() && c->conn.session()->id() == id) ::shutdown(c->sock.native_handle(), SHUT_RDWR);
        }
      }
    }
  }

  Hub hub_;
  asio::io_context io_;
  tcp::acceptor acceptor_;
  std::atomic<bool> stopping_{false};
  std::mutex mu_;
  std::condition_variable reap_cv_, done_cv_;
  std::list<std::shared_ptr<Live>> live_;
};

// Minimal blocking client: one request, one reply.
class Client {
 public:
  Client(const std::string& host, unsigned short port) : sock_(io_) {
    tcp::resolver resolver(io_);
    asio::connect(sock_, resolver.resolve(host, std::to_string(port)));
  }

  json request(const std::string& type, const json& payload = json::object()) {
    json req = {{"type", type}, {"seq", ++seq_}, {"payload", payload}};
    return json::parse(raw(req.dump()));
  }

  // Sends an arbitrary payload and returns the reply text.
  std::string raw(const std::string& payload) {
    if (!detail::write_frame(sock_, payload)) throw Error("connection lost");
    return read();
  }

  void send_bytes(const std::string& bytes) { asio::write(sock_, asio::buffer(bytes)); }

  std::string read() {
    auto reply = detail::read_frame(sock_);
    if (!reply) throw Error("connection closed by server");
    return *reply;
  }

 private:
  asio::io_context io_;
  tcp::socket sock_;
  std::int64_t seq_ = 0;
};

}  // namespace rollbox::gateway

#endif  // ROLLBOX_GATEWAY_SERVER_HPP_

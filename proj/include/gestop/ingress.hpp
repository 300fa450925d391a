#pragma once

// TCP ingress for keypoint frames: newline-delimited wire records from one
// producer connection at a time. Decoded frames go into a bounded queue;
// when it is full the connection stops being read until space frees up.

#include <array>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <istream>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

#include <boost/asio.hpp>
#include <spdlog/spdlog.h>

#include "gestop/core.hpp"
#include "gestop/error.hpp"
#include "gestop/queue.hpp"
#include "gestop/wire.hpp"

namespace gestop {

inline constexpr std::uint16_t kDefaultIngressPort = 5556;
inline constexpr std::size_t kIngressQueueCapacity = 256;
inline constexpr std::size_t kMaxRecordBytes = 1 << 16;

struct IngressFrame {
  KeypointFrame frame;
  std::chrono::steady_clock::time_point received;
};

using FrameQueue = BoundedQueue<IngressFrame>;

class IngressServer {
 public:
  /// Binds immediately (port 0 picks a free port). Throws BindFailure.
  IngressServer(std::uint16_t port, FrameQueue& queue, const std::string& address = "127.0.0.1")
      : queue_(queue), acceptor_(io_) {
    namespace asio = boost::asio;
    try {
      asio::ip::tcp::endpoint ep(asio::ip::make_address(address), port);
      acceptor_.open(ep.protocol());
      acceptor_.set_option(asio::socket_base::reuse_address(true));
      acceptor_.bind(ep);
      acceptor_.listen();
    } catch (const boost::system::system_error& e) {
      throw Error(ErrorCode::BindFailure, address + ":" + std::to_string(port) + ": " + e.what());
    }
    port_ = acceptor_.local_endpoint().port();
    accept_next();
    thread_ = std::thread([this] { io_.run(); });
  }

  IngressServer(const IngressServer&) = delete;
  IngressServer& operator=(const IngressServer&) = delete;

  ~IngressServer() { stop(); }

  void stop() {
    std::call_once(stopped_, [this] {
      boost::asio::post(io_, [this] {
        boost::system::error_code ec;
        acceptor_.close(ec);
        if (auto s = active_.lock()) s->close();
        io_.stop();
      });
      if (thread_.joinable()) thread_.join();
    });
  }

  std::uint16_t port() const { return port_; }
  std::size_t frames() const { return frames_.load(); }
  std::size_t malformed() const { return malformed_.load(); }
  std::size_t rejected() const { return rejected_.load(); }
  std::size_t sessions_closed() const { return sessions_closed_.load(); }
  bool connected() const { return connected_.load(); }

  /// Called on the ingress thread when a producer disconnects.
  void on_disconnect(std::function<void()> fn) {
    std::lock_guard lock(callback_mu_);
    on_disconnect_ = std::move(fn);
  }

 private:
  class Session : public std::enable_shared_from_this<Session> {
   public:
    Session(IngressServer& server, boost::asio::ip::tcp::socket socket)
        : server_(server), socket_(std::move(socket)), buffer_(kMaxRecordBytes), retry_(socket_.get_executor()) {}

    void start() { read_next(); }

    void close() {
      boost::system::error_code ec;
      socket_.shutdown(boost::asio::ip::tcp::socket::shutdown_both, ec);
      socket_.close(ec);
      retry_.cancel();
    }

   private:
    void read_next() {
      boost::asio::async_read_until(
          socket_, buffer_, '\n',
          [self = shared_from_this()](const boost::system::error_code& ec, std::size_t) {
            self->on_read(ec);
          });
    }

    void on_read(const boost::system::error_code& ec) {
      if (ec) {
        if (ec == boost::asio::error::eof && buffer_.size() > 0) {
          // Final record without a trailing newline.
          std::string tail(boost::asio::buffers_begin(buffer_.data()), boost::asio::buffers_end(buffer_.data()));
          buffer_.consume(buffer_.size());
          if (auto frame = decode(tail)) {
            server_.queue_.push({*frame, std::chrono::steady_clock::now()});
            ++server_.frames_;
          }
        } else if (ec == boost::asio::error::not_found) {
          spdlog::warn("ingress: record longer than {} bytes, dropping connection", kMaxRecordBytes);
          ++server_.malformed_;
        }
        finish();
        return;
      }
      std::string line;
      std::istream in(&buffer_);
      std::getline(in, line);
      auto frame = decode(line);
      if (!frame) {
        read_next();
        return;
      }
      pending_ = IngressFrame{*frame, std::chrono::steady_clock::now()};
      deliver();
    }

    void deliver() {
      if (server_.queue_.try_push(pending_)) {
        ++server_.frames_;
        read_next();
        return;
      }
      if (server_.queue_.closed()) {
        finish();
        return;
      }
      // Queue full: stop reading until the consumer catches up.
      retry_.expires_after(std::chrono::milliseconds(1));
      retry_.async_wait([self = shared_from_this()](const boost::system::error_code& ec) {
        if (!ec) self->deliver();
      });
    }

    std::optional<KeypointFrame> decode(std::string_view line) {
      line = detail::trim_eol(line);
      if (line.empty()) return std::nullopt;
      try {
        auto frame = decode_frame(line);
        if (!warned_outside_ && outside_view(frame)) {
          warned_outside_ = true;
          spdlog::warn("ingress: landmarks outside [0,1] (hand partly out of view)");
        }
        return frame;
      } catch (const Error& e) {
        ++server_.malformed_;
        spdlog::warn("ingress: skipping malformed record: {}", e.what());
        return std::nullopt;
      }
    }

    void finish() {
      close();
      server_.connected_ = false;
      ++server_.sessions_closed_;
      std::function<void()> cb;
      {
        std::lock_guard lock(server_.callback_mu_);
        cb = server_.on_disconnect_;
      }
      if (cb) cb();
    }

    IngressServer& server_;
    boost::asio::ip::tcp::socket socket_;
    boost::asio::streambuf buffer_;
    boost::asio::steady_timer retry_;
    IngressFrame pending_;
    bool warned_outside_ = false;
  };

  void accept_next() {
    acceptor_.async_accept([this](const boost::system::error_code& ec, boost::asio::ip::tcp::socket socket) {
      if (ec) return;  // acceptor closed
      if (connected_) {
        ++rejected_;
        spdlog::warn("ingress: rejecting second producer connection");
        auto sock = std::make_shared<boost::asio::ip::tcp::socket>(std::move(socket));
        boost::asio::async_write(*sock, boost::asio::buffer(kBusyReply),
                                 [sock](const boost::system::error_code&, std::size_t) {
                                   boost::system::error_code ignored;
                                   sock->shutdown(boost::asio::ip::tcp::socket::shutdown_send, ignored);
                                   // Closing with unread input would reset the
                                   // connection and lose the reply.
                                   discard_until_eof(sock);
                                 });
      } else {
        connected_ = true;
        auto session = std::make_shared<Session>(*this, std::move(socket));
        active_ = session;
        session->start();
      }
      accept_next();
    });
  }

  static void discard_until_eof(std::shared_ptr<boost::asio::ip::tcp::socket> sock) {
    auto buf = std::make_shared<std::array<char, 4096>>();
    sock->async_read_some(boost::asio::buffer(*buf), [sock, buf](const boost::system::error_code& ec, std::size_t) {
      if (ec) {
        boost::system::error_code ignored;
        sock->close(ignored);
        return;
      }
      discard_until_eof(sock);
    });
  }

  static constexpr std::string_view kBusyReply = "ERR busy\n";

  FrameQueue& queue_;
  boost::asio::io_context io_;
  boost::asio::ip::tcp::acceptor acceptor_;
  std::thread thread_;
  std::once_flag stopped_;
  std::uint16_t port_ = 0;
  std::weak_ptr<Session> active_;
  std::atomic<bool> connected_{false};
  std::atomic<std::size_t> frames_{0};
  std::atomic<std::size_t> malformed_{0};
  std::atomic<std::size_t> rejected_{0};
  std::atomic<std::size_t> sessions_closed_{0};
  std::mutex callback_mu_;
  std::function<void()> on_disconnect_;
};

/// Producer side: connects to an ingress port and streams frames, paced by
/// their timestamps unless speed is max. Throws ConnectionFailure.
inline std::size_t send_frames(const std::string& host, std::uint16_t port,
                               const std::vector<KeypointFrame>& frames, ReplaySpeed speed) {
  namespace asio = boost::asio;
  asio::io_context io;
  asio::ip::tcp::socket socket(io);
  try {
    asio::ip::tcp::resolver resolver(io);
    asio::connect(socket, resolver.resolve(host, std::to_string(port)));
  } catch (const boost::system::system_error& e) {
    throw Error(ErrorCode::ConnectionFailure, host + ":" + std::to_string(port) + ": " + e.what());
  }
  socket.set_option(asio::ip::tcp::no_delay(true));
  std::string batch;
  auto flush = [&] {
    if (batch.empty()) return;
    boost::system::error_code ec;
    asio::write(socket, asio::buffer(batch), ec);
    if (ec) throw Error(ErrorCode::ConnectionFailure, "send failed: " + ec.message());
    batch.clear();
  };
  ReplayFile file;
  file.frames = frames;
  replay(file, speed, [&](const KeypointFrame& f) {
    batch += encode_frame(f);
    if (speed.multiplier || batch.size() > (1 << 15)) flush();
  });
  flush();
  boost::system::error_code ec;
  socket.shutdown(asio::ip::tcp::socket::shutdown_send, ec);
  // Wait for the server to close its side so every byte is consumed.
  std::string reply;
  char chunk[64];
  while (!ec) {
    const auto n = socket.read_some(asio::buffer(chunk), ec);
    reply.append(chunk, n);
  }
  if (reply.rfind("ERR", 0) == 0) {
    throw Error(ErrorCode::ConnectionFailure, "ingress refused the connection: " +
                                                  std::string(detail::trim(reply)));
  }
  return frames.size();
}

}  // namespace gestop

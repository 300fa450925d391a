#pragma once

// HTTP + WebSocket server for the dashboard. Plain requests go to a handler
// function; an upgrade on /events subscribes the connection to the event
// broadcast and streams each message as a text frame.

#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <list>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <sys/socket.h>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "gestop/error.hpp"
#include "gestop/queue.hpp"

namespace gestop {

inline constexpr std::uint16_t kDefaultControlPort = 8765;

struct HttpRequest {
  std::string method;
  std::string target;
  std::string body;
};

struct HttpResponse {
  unsigned status = 200;
  std::string body;
  std::string content_type = "application/json";
};

using HttpHandler = std::function<HttpResponse(const HttpRequest&)>;
using EventBroadcast = Broadcast<std::string>;

class ControlServer {
 public:
  /// `greeting` produces messages sent to each new /events subscriber
  /// before live traffic.
  ControlServer(std::uint16_t port, HttpHandler handler, EventBroadcast& events,
                std::function<std::vector<std::string>()> greeting = {},
                const std::string& address = "127.0.0.1")
      : handler_(std::move(handler)), events_(events), greeting_(std::move(greeting)), acceptor_(io_) {
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
    accept_thread_ = std::thread([this] { accept_loop(); });
  }

  ControlServer(const ControlServer&) = delete;
  ControlServer& operator=(const ControlServer&) = delete;

  ~ControlServer() { stop(); }

  void stop() {
    if (stopping_.exchange(true)) return;
    ::shutdown(acceptor_.native_handle(), SHUT_RDWR);
    if (accept_thread_.joinable()) accept_thread_.join();
    std::list<std::shared_ptr<Connection>> conns;
    {
      std::lock_guard lock(mu_);
      for (auto& c : conns_) {
        if (c->fd >= 0) ::shutdown(c->fd, SHUT_RDWR);
      }
      conns.swap(conns_);
    }
    for (auto& c : conns) {
      if (c->thread.joinable()) c->thread.join();
    }
    boost::system::error_code ec;
    acceptor_.close(ec);
  }

  std::uint16_t port() const { return port_; }

 private:
  struct Connection {
    std::thread thread;
    int fd = -1;  // guarded by mu_; -1 once the socket is closed
    std::atomic<bool> done{false};
  };

  void accept_loop() {
    while (!stopping_) {
      boost::asio::ip::tcp::socket socket(io_);
      boost::system::error_code ec;
      acceptor_.accept(socket, ec);
      if (ec) {
        if (stopping_) return;
        spdlog::warn("control: accept failed: {}", ec.message());
        std::this_thread::sleep_for(std::chrono::milliseconds(10));
        continue;
      }
      reap_finished();
      auto conn = std::make_shared<Connection>();
      std::lock_guard lock(mu_);
      if (stopping_) return;
      conn->fd = socket.native_handle();
      conn->thread = std::thread([this, conn, s = std::move(socket)]() mutable { serve(conn, std::move(s)); });
      conns_.push_back(conn);
    }
  }

  void reap_finished() {
    std::lock_guard lock(mu_);
    for (auto it = conns_.begin(); it != conns_.end();) {
      if ((*it)->done) {
        if ((*it)->thread.joinable()) (*it)->thread.join();
        it = conns_.erase(it);
      } else {
        ++it;
      }
    }
  }

  void serve(const std::shared_ptr<Connection>& conn, boost::asio::ip::tcp::socket socket) {
    namespace beast = boost::beast;
    namespace http = beast::http;
    auto release = [&] {
      std::lock_guard lock(mu_);
      conn->fd = -1;
    };
    try {
      beast::flat_buffer buffer;
      while (!stopping_) {
        http::request<http::string_body> req;
        http::read(socket, buffer, req);
        if (beast::websocket::is_upgrade(req)) {
          if (req.target() == "/events") {
            stream_events(std::move(socket), req, conn);
          }
          break;
        }
        HttpRequest in{std::string(req.method_string()), std::string(req.target()), req.body()};
        HttpResponse out;
        try {
          out = handler_(in);
        } catch (const std::exception& e) {
          out = {500, nlohmann::json{{"error", "internal"}, {"message", e.what()}}.dump()};
        }
        http::response<http::string_body> res{static_cast<http::status>(out.status), req.version()};
        res.set(http::field::content_type, out.content_type);
        res.set(http::field::access_control_allow_origin, "*");
        res.keep_alive(req.keep_alive());
        res.body() = std::move(out.body);
        res.prepare_payload();
        http::write(socket, res);
        if (!res.keep_alive()) break;
      }
    } catch (const std::exception& e) {
      spdlog::debug("control: connection ended: {}", e.what());
    }
    release();
    boost::system::error_code ec;
    if (socket.is_open()) {
      socket.shutdown(boost::asio::ip::tcp::socket::shutdown_both, ec);
      socket.close(ec);
    }
    conn->done = true;
  }

  void stream_events(boost::asio::ip::tcp::socket socket,
                     const boost::beast::http::request<boost::beast::http::string_body>& req,
                     const std::shared_ptr<Connection>& conn) {
    namespace websocket = boost::beast::websocket;
    websocket::stream<boost::asio::ip::tcp::socket> ws(std::move(socket));
    ws.accept(req);
    ws.text(true);
    auto sub = events_.subscribe();
    try {
      if (greeting_) {
        for (const auto& msg : greeting_()) ws.write(boost::asio::buffer(msg));
      }
      while (!stopping_ && !sub->closed()) {
        // Consume client frames so ping and close get their replies.
        if (ws.next_layer().available() > 0) {
          boost::beast::flat_buffer inbox;
          ws.read(inbox);
          continue;
        }
        auto msg = sub->pop_for(std::chrono::milliseconds(100));
        if (msg) ws.write(boost::asio::buffer(*msg));
      }
      if (!stopping_) {
        boost::system::error_code ec;
        ws.close(websocket::close_code::going_away, ec);
      }
    } catch (const std::exception& e) {
      spdlog::debug("control: event stream ended: {}", e.what());
    }
    events_.unsubscribe(sub);
    {
      std::lock_guard lock(mu_);
      conn->fd = -1;
    }
    boost::system::error_code ec;
    ws.next_layer().close(ec);
  }

  HttpHandler handler_;
  EventBroadcast& events_;
  std::function<std::vector<std::string>()> greeting_;
  boost::asio::io_context io_;
  boost::asio::ip::tcp::acceptor acceptor_;
  std::uint16_t port_ = 0;
  std::atomic<bool> stopping_{false};
  std::thread accept_thread_;
  std::mutex mu_;
  std::list<std::shared_ptr<Connection>> conns_;
};

}  // namespace gestop

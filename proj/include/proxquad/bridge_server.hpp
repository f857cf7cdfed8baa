/**
 * @file bridge_server.hpp
 *
 * WebSocket front end for BridgeSession. Every connection gets its own world,
 * ticked by a timer at the nominal rate; inbound frames are handled on the
 * same strand as the ticks, so a session is never touched concurrently.
 */

#pragma once

#include <chrono>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

#include "proxquad/bridge.hpp"

namespace proxquad::bridge {

namespace net = boost::asio;
namespace beast = boost::beast;
namespace websocket = beast::websocket;
using tcp = net::ip::tcp;

struct ServerOptions {
  double tick_rate = 30.0;
  double rate_window = 10.0;        ///< seconds of tick timestamps behind the reported rate
  int status_every = 30;            ///< ticks between unsolicited status frames
  std::size_t max_queued = 256;     ///< world_state frames are dropped beyond this backlog
  std::function<void(const std::string&)> log = [](const std::string&) {};
};

class WsSession : public std::enable_shared_from_this<WsSession> {
 public:
  WsSession(tcp::socket socket, std::shared_ptr<const ModelStore> models, const FlightContext& ctx,
            const ServerOptions& opts)
      : ws_(std::move(socket)), timer_(ws_.get_executor()), session_(std::move(models), ctx, opts.tick_rate),
        opts_(opts) {}

  void start() {
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.async_accept(beast::bind_front_handler(&WsSession::on_accept, shared_from_this()));
  }

  void close() {
    net::post(ws_.get_executor(), [self = shared_from_this()] {
      self->closed_ = true;
      self->timer_.cancel();
      beast::error_code ec;
      beast::get_lowest_layer(self->ws_).socket().close(ec);
    });
  }

 private:
  using clock = std::chrono::steady_clock;

  void on_accept(beast::error_code ec) {
    if (ec) return opts_.log("accept: " + ec.message());
    ws_.text(true);
    for (auto& f : session_.greeting()) send(std::move(f), false);
    next_tick_ = clock::now();
    schedule_tick();
    do_read();
  }

  void do_read() {
    ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) {
        self->closed_ = true;
        self->timer_.cancel();
        return;
      }
      const std::string text = beast::buffers_to_string(self->buffer_.data());
      self->buffer_.consume(self->buffer_.size());
      for (auto& f : self->session_.handle(text)) self->send(std::move(f), false);
      self->do_read();
    });
  }

  void schedule_tick() {
    const auto period = std::chrono::duration_cast<clock::duration>(std::chrono::duration<double>(1.0 / opts_.tick_rate));
    next_tick_ += period;
    timer_.expires_at(next_tick_);
    timer_.async_wait([self = shared_from_this()](beast::error_code ec) {
      if (ec || self->closed_) return;
      self->on_tick();
    });
  }

  void on_tick() {
    const auto now = clock::now();
    stamps_.push_back(now);
    const auto window = std::chrono::duration<double>(opts_.rate_window);
    while (stamps_.size() > 1 && now - stamps_.front() > window) stamps_.pop_front();
    if (stamps_.size() > 1) {
      const double span = std::chrono::duration<double>(stamps_.back() - stamps_.front()).count();
      if (span > 0.0) session_.set_measured_rate(static_cast<double>(stamps_.size() - 1) / span);
    }
    // After a stall, catch up on the schedule rather than bursting.
    if (now - next_tick_ > std::chrono::seconds(1)) next_tick_ = now;

    send(session_.tick(), true);
    if (opts_.status_every > 0 && ++ticks_ % opts_.status_every == 0) send(session_.status().dump(), false);
    schedule_tick();
  }

  void send(std::string frame, bool droppable) {
    if (closed_) return;
    if (droppable && queue_.size() >= opts_.max_queued) return;
    queue_.push_back(std::move(frame));
    if (queue_.size() == 1) do_write();
  }

  void do_write() {
    ws_.async_write(net::buffer(queue_.front()), [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) {
        self->closed_ = true;
        self->timer_.cancel();
        return;
      }
      self->queue_.pop_front();
      if (!self->queue_.empty()) self->do_write();
    });
  }

  websocket::stream<beast::tcp_stream> ws_;
  net::steady_timer timer_;
  beast::flat_buffer buffer_;
  BridgeSession session_;
  ServerOptions opts_;
  std::deque<std::string> queue_;
  std::deque<clock::time_point> stamps_;
  clock::time_point next_tick_;
  long ticks_ = 0;
  bool closed_ = false;
};

/// Accepts connections on `endpoint` (port 0 picks a free port) until stop().
class BridgeServer {
 public:
  BridgeServer(net::io_context& io, const tcp::endpoint& endpoint, std::shared_ptr<const ModelStore> models,
               FlightContext ctx, ServerOptions opts = {})
      : io_(io), acceptor_(net::make_strand(io)), models_(std::move(models)), ctx_(std::move(ctx)),
        opts_(std::move(opts)) {
    acceptor_.open(endpoint.protocol());
    acceptor_.set_option(net::socket_base::reuse_address(true));
    acceptor_.bind(endpoint);
    acceptor_.listen(net::socket_base::max_listen_connections);
  }

  unsigned short port() const { return acceptor_.local_endpoint().port(); }

  void start() { do_accept(); }

  void stop() {
    net::post(acceptor_.get_executor(), [this] {
      beast::error_code ec;
      acceptor_.close(ec);
      std::lock_guard lock(mutex_);
      for (auto& w : sessions_)
        if (auto s = w.lock()) s->close();
      sessions_.clear();
    });
  }

 private:
  void do_accept() {
    acceptor_.async_accept(net::make_strand(io_), [this](beast::error_code ec, tcp::socket socket) {
      if (ec) return;
      auto s = std::make_shared<WsSession>(std::move(socket), models_, ctx_, opts_);
      {
        std::lock_guard lock(mutex_);
        std::erase_if(sessions_, [](const auto& w) { return w.expired(); });
        sessions_.push_back(s);
      }
      s->start();
      do_accept();
    });
  }

  net::io_context& io_;
  tcp::acceptor acceptor_;
  std::shared_ptr<const ModelStore> models_;
  FlightContext ctx_;
  ServerOptions opts_;
  std::mutex mutex_;
  std::vector<std::weak_ptr<WsSession>> sessions_;
};

}  // namespace proxquad::bridge

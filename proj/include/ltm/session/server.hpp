#pragma once

// Control channel for operator sessions.
//
// One TCP port. A WebSocket upgrade on /control becomes the operator channel;
// any other GET is answered from the static asset directory. Messages both
// ways are JSON objects {kind, payload, seq_ack}:
//
//   client -> server  MarkResponse {classification, latency_hint_ms?, trial?, attempt?}
//                     OverridePromptLevel {level}
//                     AbortSession {reason?}
//                     Heartbeat {}
//   server -> client  StateSnapshot {...engine snapshot, reply?}
//                     Heartbeat {now_ms}
//
// seq_ack on a server message is the number of client messages handled so
// far; a snapshot answering a command also carries reply {to, accepted, reason}.

#include <atomic>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include "ltm/session/operator.hpp"

namespace ltm::session {

namespace net = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = net::ip::tcp;

inline constexpr const char* kControlPath = "/control";

struct ServerOptions {
  std::string bind = "127.0.0.1";
  unsigned short port = 0;  // 0 picks a free port
  std::optional<std::filesystem::path> assets;
  Millis heartbeat_interval{1000};
};

class BindError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline json control_message(std::string_view kind, json payload, std::uint64_t seq_ack) {
  return {{"kind", std::string(kind)}, {"payload", std::move(payload)}, {"seq_ack", seq_ack}};
}

namespace detail {

inline std::string_view mime_type(const std::filesystem::path& p) {
  const auto ext = p.extension().string();
  if (ext == ".html" || ext == ".htm") return "text/html; charset=utf-8";
  if (ext == ".js" || ext == ".mjs") return "text/javascript; charset=utf-8";
  if (ext == ".css") return "text/css; charset=utf-8";
  if (ext == ".json") return "application/json";
  if (ext == ".svg") return "image/svg+xml";
  if (ext == ".png") return "image/png";
  if (ext == ".ico") return "image/x-icon";
  if (ext == ".map") return "application/json";
  return "application/octet-stream";
}

// Resolves a request target inside the asset root, refusing anything that
// climbs out of it.
inline std::optional<std::filesystem::path> asset_path(const std::filesystem::path& root, std::string_view target) {
  std::string path(target.substr(0, target.find('?')));
  if (path.empty() || path[0] != '/' || path.find("..") != std::string::npos) return std::nullopt;
  if (path.back() == '/') path += "index.html";
  auto full = root / path.substr(1);
  std::error_code ec;
  if (!std::filesystem::is_regular_file(full, ec)) return std::nullopt;
  return full;
}

}  // namespace detail

class ControlServer {
 public:
  ControlServer(OperatorSession& session, ServerOptions opts)
      : session_(session), opts_(std::move(opts)), acceptor_(ioc_), bridge_(std::make_shared<Bridge>()) {
    beast::error_code ec;
    const auto addr = net::ip::make_address(opts_.bind, ec);
    if (ec) throw BindError("bad bind address '" + opts_.bind + "': " + ec.message());
    const tcp::endpoint ep(addr, opts_.port);
    acceptor_.open(ep.protocol(), ec);
    if (!ec) acceptor_.set_option(net::socket_base::reuse_address(true), ec);
    if (!ec) acceptor_.bind(ep, ec);
    if (!ec) acceptor_.listen(net::socket_base::max_listen_connections, ec);
    if (ec) {
      throw BindError("cannot listen on " + opts_.bind + ":" + std::to_string(opts_.port) + ": " + ec.message());
    }
    port_ = acceptor_.local_endpoint().port();

    bridge_->server = this;
    session_.subscribe([bridge = bridge_](const json& snap) {
      std::lock_guard lk(bridge->mu);
      if (!bridge->server) return;
      net::post(bridge->server->ioc_, [server = bridge->server, snap] { server->on_engine_snapshot(snap); });
    });

    accept();
    thread_ = std::thread([this] { ioc_.run(); });
  }

  ~ControlServer() { stop(); }

  ControlServer(const ControlServer&) = delete;
  ControlServer& operator=(const ControlServer&) = delete;

  unsigned short port() const { return port_; }

  void stop() {
    {
      std::lock_guard lk(bridge_->mu);
      bridge_->server = nullptr;
    }
    if (!thread_.joinable()) return;
    net::post(ioc_, [this] {
      beast::error_code ec;
      acceptor_.close(ec);
      if (auto op = operator_.lock()) op->close();
    });
    // give the close frame a moment, then stop regardless
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
    ioc_.stop();
    thread_.join();
  }

 private:
  struct Bridge {
    std::mutex mu;
    ControlServer* server = nullptr;
  };

  class OperatorChannel;

  // First request on a connection: either a WebSocket upgrade or a plain GET.
  class HttpConnection : public std::enable_shared_from_this<HttpConnection> {
   public:
    HttpConnection(ControlServer& server, tcp::socket socket) : server_(server), socket_(std::move(socket)) {}

    void start() {
      auto self = shared_from_this();
      http::async_read(socket_, buffer_, req_, [self](beast::error_code ec, std::size_t) {
        if (!ec) self->handle();
      });
    }

   private:
    void handle() {
      if (websocket::is_upgrade(req_)) {
        if (req_.target() != kControlPath) return respond(http::status::not_found, "text/plain", "no such channel\n");
        if (auto op = server_.operator_.lock(); op && !op->done_) {
          return respond(http::status::conflict, "text/plain", "an operator is already connected\n");
        }
        auto ch = std::make_shared<OperatorChannel>(server_, std::move(socket_));
        server_.operator_ = ch;
        ch->start(std::move(req_));
        return;
      }
      if (req_.method() != http::verb::get && req_.method() != http::verb::head) {
        return respond(http::status::method_not_allowed, "text/plain", "GET only\n");
      }
      if (!server_.opts_.assets) return respond(http::status::not_found, "text/plain", "no console assets\n");
      const auto path = detail::asset_path(*server_.opts_.assets, std::string_view(req_.target().data(), req_.target().size()));
      if (!path) return respond(http::status::not_found, "text/plain", "not found\n");
      std::ifstream in(*path, std::ios::binary);
      std::ostringstream body;
      body << in.rdbuf();
      respond(http::status::ok, detail::mime_type(*path), body.str());
    }

    void respond(http::status status, std::string_view type, std::string body) {
      auto res = std::make_shared<http::response<http::string_body>>(status, req_.version());
      res->set(http::field::content_type, std::string(type));
      res->set(http::field::cache_control, "no-store");
      res->keep_alive(false);
      res->body() = std::move(body);
      res->prepare_payload();
      auto self = shared_from_this();
      http::async_write(socket_, *res, [self, res](beast::error_code, std::size_t) {
        beast::error_code ec;
        self->socket_.shutdown(tcp::socket::shutdown_send, ec);
      });
    }

    ControlServer& server_;
    tcp::socket socket_;
    beast::flat_buffer buffer_;
    http::request<http::string_body> req_;
  };

  class OperatorChannel : public std::enable_shared_from_this<OperatorChannel> {
   public:
    OperatorChannel(ControlServer& server, tcp::socket socket)
        : server_(server), ws_(std::move(socket)), heartbeat_(server.ioc_) {}

    void start(http::request<http::string_body> req) {
      const auto r = server_.session_.connect();
      if (!r.accepted) {
        // engine already has an operator; refuse the upgrade
        done_ = true;
        auto res = std::make_shared<http::response<http::string_body>>(http::status::conflict, req.version());
        res->body() = r.reason + "\n";
        res->prepare_payload();
        auto self = shared_from_this();
        http::async_write(ws_.next_layer(), *res, [self, res](beast::error_code, std::size_t) {});
        return;
      }
      auto self = shared_from_this();
      ws_.async_accept(req, [self](beast::error_code ec) {
        if (ec) return self->gone();
        self->open_ = true;
        self->send(control_message("StateSnapshot", self->server_.session_.snapshot(), self->handled_));
        self->read();
        self->beat();
      });
    }

    void send(const json& msg) {
      if (!open_) return;
      outbox_.push_back(msg.dump());
      if (outbox_.size() == 1) write_next();
    }

    void close() {
      done_ = true;
      if (!open_) return;
      open_ = false;
      heartbeat_.cancel();
      auto self = shared_from_this();
      ws_.async_close(websocket::close_code::normal, [self](beast::error_code) {});
    }

   private:
    void write_next() {
      auto self = shared_from_this();
      ws_.text(true);
      ws_.async_write(net::buffer(outbox_.front()), [self](beast::error_code ec, std::size_t) {
        if (ec) return self->gone();
        self->outbox_.pop_front();
        if (!self->outbox_.empty()) self->write_next();
      });
    }

    void read() {
      auto self = shared_from_this();
      ws_.async_read(inbox_, [self](beast::error_code ec, std::size_t) {
        if (ec) return self->gone();
        const std::string text = beast::buffers_to_string(self->inbox_.data());
        self->inbox_.consume(self->inbox_.size());
        self->handle(text);
        self->read();
      });
    }

    void beat() {
      heartbeat_.expires_after(std::chrono::milliseconds(server_.opts_.heartbeat_interval.count()));
      auto self = shared_from_this();
      heartbeat_.async_wait([self](beast::error_code ec) {
        if (ec || !self->open_) return;
        self->send(control_message("Heartbeat", {{"now_ms", self->server_.session_.snapshot().at("now_ms")}},
                                   self->handled_));
        self->beat();
      });
    }

    void handle(const std::string& text) {
      ++handled_;
      json msg;
      std::string kind;
      try {
        msg = json::parse(text);
        kind = msg.at("kind").get<std::string>();
      } catch (const std::exception&) {
        return reply("?", CommandResult::rejected("malformed message"));
      }
      const json payload = msg.value("payload", json::object());
      auto& s = server_.session_;
      try {
        if (kind == "Heartbeat") {
          s.heartbeat();
          return;
        }
        if (kind == "MarkResponse") {
          Mark m;
          m.classification = parse_classification(payload.at("classification").get<std::string>());
          auto opt_int = [&](const char* key) -> std::optional<std::int64_t> {
            if (!payload.contains(key) || payload.at(key).is_null()) return std::nullopt;
            return payload.at(key).get<std::int64_t>();
          };
          if (auto h = opt_int("latency_hint_ms")) m.latency_hint = Millis{*h};
          if (auto t = opt_int("trial")) m.trial = static_cast<int>(*t);
          if (auto a = opt_int("attempt")) m.attempt = static_cast<int>(*a);
          return reply(kind, s.mark(m));
        }
        if (kind == "OverridePromptLevel") return reply(kind, s.override_level(payload.at("level").get<int>()));
        if (kind == "AbortSession") return reply(kind, s.abort(payload.value("reason", "aborted by operator")));
        if (kind == "StateSnapshot") return reply(kind, CommandResult::ok());
        reply(kind, CommandResult::rejected("unknown message kind '" + kind + "'"));
      } catch (const std::exception& e) {
        reply(kind, CommandResult::rejected(std::string("bad payload: ") + e.what()));
      }
    }

    void reply(const std::string& to, const CommandResult& r) {
      json snap = server_.session_.snapshot();
      snap["reply"] = {{"to", to}, {"accepted", r.accepted}, {"reason", r.accepted ? json(nullptr) : json(r.reason)}};
      send(control_message("StateSnapshot", std::move(snap), handled_));
    }

    void gone() {
      const bool was_open = open_;
      open_ = false;
      done_ = true;
      heartbeat_.cancel();
      if (was_open) server_.session_.disconnect();
    }

    friend class ControlServer;
    ControlServer& server_;
    websocket::stream<tcp::socket> ws_;
    net::steady_timer heartbeat_;
    beast::flat_buffer inbox_;
    std::deque<std::string> outbox_;
    std::uint64_t handled_ = 0;
    bool open_ = false;
    bool done_ = false;  // no longer the operator, even if handlers still hold us
  };

  void accept() {
    acceptor_.async_accept([this](beast::error_code ec, tcp::socket socket) {
      if (ec) return;
      std::make_shared<HttpConnection>(*this, std::move(socket))->start();
      accept();
    });
  }

  void on_engine_snapshot(const json& snap) {
    auto op = operator_.lock();
    if (!op) return;
    op->send(control_message("StateSnapshot", snap, op->handled_));
    // The engine dropped the operator (heartbeat silence): hang up.
    if (!snap.at("connected").get<bool>() && op->open_) op->close();
  }

  OperatorSession& session_;
  ServerOptions opts_;
  net::io_context ioc_;
  tcp::acceptor acceptor_;
  unsigned short port_ = 0;
  std::weak_ptr<OperatorChannel> operator_;
  std::shared_ptr<Bridge> bridge_;
  std::thread thread_;
};

// Operator mode end to end: serve the control channel and block until the
// session ends. `on_listening` receives the bound port.
struct Operator {
  OperatorOptions session;
  ServerOptions server;
  std::function<void(unsigned short)> on_listening;
  std::function<bool()> interrupted;  // polled; true aborts the session
};

inline SessionLog run_session(const ProtocolConfig& cfg, int trials, Operator src) {
  src.session.config = cfg;
  src.session.trials = trials;
  OperatorSession session(src.session);
  ControlServer server(session, src.server);
  if (src.on_listening) src.on_listening(server.port());
  while (!session.wait_until_ended(Millis{200})) {
    if (src.interrupted && src.interrupted()) session.abort("interrupted");
  }
  server.stop();
  return session.log();
}

}  // namespace ltm::session

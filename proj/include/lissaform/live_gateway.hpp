#pragma once

// Live gateway: a kernel thread steps the world in (scaled) real time while an
// io thread serves GET /config and a websocket at /ws. Clients receive state
// snapshots at a fixed rate and send operator commands, which are queued and
// applied at the next tick boundary and acknowledged with that tick.

#include <atomic>
#include <chrono>
#include <condition_variable>
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
#include <vector>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include "scenario.hpp"
#include "sim_engine.hpp"

namespace lissaform {

namespace net = boost::asio;
namespace beast = boost::beast;
namespace http = boost::beast::http;
namespace websocket = boost::beast::websocket;
using tcp = boost::asio::ip::tcp;

struct GatewayOptions {
  std::string host = "127.0.0.1";
  unsigned short port = 8080;  // 0 picks a free port
  double speedup = 1.0;        // simulated seconds per wall second; <= 0 runs unpaced
  double snapshot_hz = 20.0;
  bool queue_busy = false;  // queue reconfiguration commands while busy instead of refusing them
  long max_ticks = -1;      // stop the kernel after this many ticks; negative runs until stop()
  std::optional<std::filesystem::path> static_dir;
};

/// Parses one client command; returns an error string for malformed input.
inline std::string parse_client_command(const std::string& text, Command& out, ojson& seq) {
  ojson j;
  try {
    j = ojson::parse(text);
  } catch (const nlohmann::json::parse_error&) {
    return "malformed json";
  }
  if (!j.is_object()) return "malformed command";
  if (j.contains("seq")) seq = j.at("seq");
  if (!j.contains("cmd") || !j.at("cmd").is_string()) return "missing cmd";
  const auto kind = parse_command(j.at("cmd").get<std::string>());
  if (!kind) return "unknown cmd";
  out.kind = *kind;
  out.id = -1;
  if (command_needs_id(*kind)) {
    if (!j.contains("id") || !j.at("id").is_number_integer()) return "missing id";
    out.id = j.at("id").get<int>();
  }
  return "";
}

/// Coefficients of the formation ellipse x²/A² + y²/B² - 2xy sin(Ns)/(AB) = cos²(Ns).
inline ojson ellipse_json(const Region& r, int N, double s) {
  const double ns = N * s;
  ojson e;
  e["cxx"] = 1.0 / (r.A * r.A);
  e["cyy"] = 1.0 / (r.B * r.B);
  e["cxy"] = -2.0 * std::sin(ns) / (r.A * r.B);
  e["rhs"] = std::cos(ns) * std::cos(ns);
  return e;
}

inline ojson snapshot_json(const World& w) {
  ojson j;
  j["type"] = "snapshot";
  j["t"] = w.time();
  j["tick"] = w.tick();
  j["phase"] = w.phase();
  ojson agents = ojson::array();
  const AgentState* lead = nullptr;
  for (const auto& a : w.agents()) {
    if (a.role == Role::Formation && !lead) lead = &a;
    agents.push_back({{"id", a.id}, {"x", a.xy.x}, {"y", a.xy.y}, {"z", a.z}, {"mode", mode_name(a.mode)}, {"speed", a.speed()}});
  }
  j["agents"] = agents;
  j["N"] = w.formation_size();
  if (lead) {
    j["curve"] = {{"a", lead->curve.a}, {"b", lead->curve.b}, {"o", lead->curve.o}};
    j["s"] = lead->p.s;
    j["ellipse"] = ellipse_json(w.region(), lead->curve.N(), lead->p.s);
  }
  return j;
}

class Gateway {
 public:
  Gateway(Scenario scenario, GatewayOptions opts)
      : scenario_(std::move(scenario)), opts_(std::move(opts)), mission_(scenario_mission(scenario_)) {
    EngineOptions eo = scenario_.engine;
    eo.queue_when_busy = opts_.queue_busy;
    scenario_.engine = eo;
    world_ = std::make_unique<World>(mission_, eo);
    publish();
  }

  ~Gateway() { stop(); }
  Gateway(const Gateway&) = delete;
  Gateway& operator=(const Gateway&) = delete;

  void start() {
    tcp::endpoint ep(net::ip::make_address(opts_.host), opts_.port);
    acceptor_.open(ep.protocol());
    acceptor_.set_option(net::socket_base::reuse_address(true));
    acceptor_.bind(ep);
    acceptor_.listen();
    port_ = acceptor_.local_endpoint().port();
    running_ = true;
    do_accept();
    io_thread_ = std::thread([this] { ioc_.run(); });
    kernel_ = std::thread([this] { kernel_loop(); });
  }

  void stop() {
    if (!running_.exchange(false)) return;
    if (kernel_.joinable()) kernel_.join();
    net::post(ioc_, [this] {
      beast::error_code ec;
      acceptor_.close(ec);
      for (auto& wk : sessions_)
        if (auto s = wk.lock()) s->close();
    });
    // let sessions flush their close frames
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
    ioc_.stop();
    if (io_thread_.joinable()) io_thread_.join();
  }

  unsigned short port() const { return port_; }
  long tick() const { return tick_.load(); }
  bool kernel_finished() const { return kernel_done_.load(); }

  bool wait_for_tick(long k, std::chrono::milliseconds timeout) {
    std::unique_lock lk(tick_mu_);
    return tick_cv_.wait_for(lk, timeout, [&] { return tick_.load() >= k || kernel_done_.load(); }) && tick_.load() >= k;
  }

  ojson config_json() const {
    ojson j;
    j["scenario"] = scenario_.name;
    j["formation"] = formation_json(mission_);
    j["dt"] = scenario_.engine.dt;
    j["speedup"] = opts_.speedup;
    j["snapshot_hz"] = opts_.snapshot_hz;
    j["queue_busy"] = opts_.queue_busy;
    j["base"] = {world_->base().x, world_->base().y};
    return j;
  }

  /// Scenario that replays this session: same inputs, the accepted commands at
  /// the ticks they took effect, and the number of ticks run.
  Scenario session_scenario() const {
    std::lock_guard lk(world_mu_);
    Scenario s = scenario_;
    s.name = scenario_.name + "_session";
    s.commands = accepted_;
    s.duration_ticks = world_->tick();
    s.strict_duration = false;
    return s;
  }

  std::string trace_jsonl() const {
    std::lock_guard lk(world_mu_);
    return world_->trace().to_jsonl();
  }

  std::string latest_snapshot() const {
    std::lock_guard lk(snap_mu_);
    return *snapshot_;
  }

 private:
  struct Pending {
    Command command;
    ojson seq;
    std::function<void(std::string)> reply;
  };

  class WsSession : public std::enable_shared_from_this<WsSession> {
   public:
    WsSession(tcp::socket socket, Gateway& gw) : ws_(std::move(socket)), timer_(ws_.get_executor()), gw_(gw) {}

    void run(http::request<http::string_body> req) {
      ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
      ws_.async_accept(req, [self = shared_from_this()](beast::error_code ec) {
        if (ec) return;
        self->send(self->gw_.config_message());
        self->read();
        self->tick_snapshots();
      });
    }

    void send(std::string msg) {
      queue_.push_back(std::move(msg));
      if (!writing_) write_next();
    }

    void close() {
      closed_ = true;
      timer_.cancel();
      beast::error_code ec;
      beast::get_lowest_layer(ws_).socket().shutdown(tcp::socket::shutdown_both, ec);
    }

   private:
    void read() {
      ws_.async_read(buf_, [self = shared_from_this()](beast::error_code ec, size_t) {
        if (ec) {
          self->closed_ = true;
          self->timer_.cancel();
          return;
        }
        const std::string text = beast::buffers_to_string(self->buf_.data());
        self->buf_.consume(self->buf_.size());
        self->gw_.on_client_message(text, [weak = std::weak_ptr<WsSession>(self), &ioc = self->gw_.ioc_](std::string reply) {
          net::post(ioc, [weak, reply = std::move(reply)]() mutable {
            if (auto s = weak.lock()) s->send(std::move(reply));
          });
        });
        self->read();
      });
    }

    void tick_snapshots() {
      if (closed_) return;
      const auto period = std::chrono::duration<double>(1.0 / std::max(1e-3, gw_.opts_.snapshot_hz));
      timer_.expires_after(std::chrono::duration_cast<std::chrono::steady_clock::duration>(period));
      timer_.async_wait([self = shared_from_this()](beast::error_code ec) {
        if (ec || self->closed_) return;
        // latest-only: skip this frame if the client has not drained the last one
        if (!self->writing_) self->send(self->gw_.latest_snapshot());
        self->tick_snapshots();
      });
    }

    void write_next() {
      if (queue_.empty() || closed_) {
        writing_ = false;
        return;
      }
      writing_ = true;
      ws_.text(true);
      ws_.async_write(net::buffer(queue_.front()), [self = shared_from_this()](beast::error_code ec, size_t) {
        self->queue_.pop_front();
        if (ec) {
          self->closed_ = true;
          self->writing_ = false;
          return;
        }
        self->write_next();
      });
    }

    websocket::stream<beast::tcp_stream> ws_;
    net::steady_timer timer_;
    beast::flat_buffer buf_;
    std::deque<std::string> queue_;
    bool writing_ = false;
    bool closed_ = false;
    Gateway& gw_;
  };

  class HttpSession : public std::enable_shared_from_this<HttpSession> {
   public:
    HttpSession(tcp::socket socket, Gateway& gw) : stream_(std::move(socket)), gw_(gw) {}

    void run() {
      stream_.expires_after(std::chrono::seconds(30));
      http::async_read(stream_, buf_, req_, [self = shared_from_this()](beast::error_code ec, size_t) {
        if (ec) return;
        self->dispatch();
      });
    }

   private:
    void dispatch() {
      if (websocket::is_upgrade(req_) && req_.target() == "/ws") {
        stream_.expires_never();
        auto ws = std::make_shared<WsSession>(stream_.release_socket(), gw_);
        gw_.sessions_.push_back(ws);
        ws->run(std::move(req_));
        return;
      }
      auto res = std::make_shared<http::response<http::string_body>>();
      res->version(req_.version());
      res->keep_alive(false);
      const std::string target(req_.target());
      if (req_.method() == http::verb::get && target == "/config") {
        res->result(http::status::ok);
        res->set(http::field::content_type, "application/json");
        res->body() = gw_.config_json().dump();
      } else if (req_.method() == http::verb::get && gw_.opts_.static_dir && target.find("..") == std::string::npos) {
        const auto path = *gw_.opts_.static_dir / (target == "/" ? std::string("index.html") : target.substr(1));
        std::ifstream is(path, std::ios::binary);
        if (is) {
          std::ostringstream os;
          os << is.rdbuf();
          res->result(http::status::ok);
          res->body() = os.str();
        } else {
          res->result(http::status::not_found);
          res->body() = "not found";
        }
      } else {
        res->result(http::status::not_found);
        res->body() = "not found";
      }
      res->prepare_payload();
      http::async_write(stream_, *res, [self = shared_from_this(), res](beast::error_code, size_t) {
        beast::error_code ec;
        self->stream_.socket().shutdown(tcp::socket::shutdown_send, ec);
      });
    }

    beast::tcp_stream stream_;
    beast::flat_buffer buf_;
    http::request<http::string_body> req_;
    Gateway& gw_;
  };

  std::string config_message() const {
    ojson j;
    j["type"] = "config";
    j["config"] = config_json();
    return j.dump();
  }

  void do_accept() {
    acceptor_.async_accept([this](beast::error_code ec, tcp::socket socket) {
      if (ec) return;
      std::make_shared<HttpSession>(std::move(socket), *this)->run();
      do_accept();
    });
  }

  static std::string ack(bool ok, const Command& c, const ojson& seq, long tick, double t, const std::string& reason,
                         bool queued = false, int assigned = -1) {
    ojson j;
    j["type"] = "ack";
    j["ok"] = ok;
    j["cmd"] = command_name(c.kind);
    if (command_needs_id(c.kind)) j["id"] = c.id;
    j["tick"] = tick;
    j["t"] = t;
    if (!reason.empty()) j["reason"] = reason;
    if (queued) j["queued"] = true;
    if (assigned >= 0) j["assigned_id"] = assigned;
    if (!seq.is_null()) j["seq"] = seq;
    return j.dump();
  }

  void on_client_message(const std::string& text, std::function<void(std::string)> reply) {
    Command c;
    ojson seq;
    const std::string err = parse_client_command(text, c, seq);
    if (!err.empty()) {
      ojson j;
      j["type"] = "ack";
      j["ok"] = false;
      j["reason"] = err;
      if (!seq.is_null()) j["seq"] = seq;
      reply(j.dump());
      return;
    }
    std::lock_guard lk(cmd_mu_);
    if (kernel_done_) {
      reply(ack(false, c, seq, tick_.load(), tick_time(tick_.load(), scenario_.engine.dt), "session ended"));
      return;
    }
    commands_.push_back({c, seq, std::move(reply)});
  }

  void publish() {
    auto snap = std::make_shared<const std::string>(snapshot_json(*world_).dump());
    std::lock_guard lk(snap_mu_);
    snapshot_ = std::move(snap);
  }

  void kernel_loop() {
    using clock = std::chrono::steady_clock;
    const double dt = scenario_.engine.dt;
    auto next = clock::now();
    auto last_pub = clock::now();
    while (running_ && (opts_.max_ticks < 0 || tick_.load() < opts_.max_ticks)) {
      std::optional<Pending> p;
      {
        std::lock_guard lk(cmd_mu_);
        if (!commands_.empty()) {
          p = std::move(commands_.front());
          commands_.pop_front();
        }
      }
      {
        std::lock_guard lk(world_mu_);
        if (p) {
          const CommandResult r = world_->issue_command(p->command);
          if (r.accepted) accepted_.push_back({r.tick, p->command});
          p->reply(ack(r.accepted, p->command, p->seq, r.tick, r.t, r.reason, r.queued, r.assigned_id));
        }
        world_->step();
        tick_.store(world_->tick());
        if (clock::now() - last_pub >= std::chrono::milliseconds(10)) {
          publish();
          last_pub = clock::now();
        }
      }
      tick_cv_.notify_all();
      if (opts_.speedup > 0.0) {
        next += std::chrono::duration_cast<clock::duration>(std::chrono::duration<double>(dt / opts_.speedup));
        std::this_thread::sleep_until(next);
      }
    }
    {
      std::lock_guard lk(world_mu_);
      publish();
    }
    {
      std::lock_guard lk(cmd_mu_);
      kernel_done_ = true;
      const long k = tick_.load();
      for (auto& p : commands_)
        p.reply(ack(false, p.command, p.seq, k, tick_time(k, scenario_.engine.dt), "session ended"));
      commands_.clear();
    }
    tick_cv_.notify_all();
  }

  Scenario scenario_;
  GatewayOptions opts_;
  Mission mission_;
  std::unique_ptr<World> world_;
  std::vector<ScheduledCommand> accepted_;
  mutable std::mutex world_mu_;

  std::mutex cmd_mu_;
  std::deque<Pending> commands_;

  mutable std::mutex snap_mu_;
  std::shared_ptr<const std::string> snapshot_;

  std::atomic<long> tick_{0};
  std::atomic<bool> running_{false};
  std::atomic<bool> kernel_done_{false};
  std::mutex tick_mu_;
  std::condition_variable tick_cv_;

  net::io_context ioc_;
  tcp::acceptor acceptor_{ioc_};
  unsigned short port_ = 0;
  std::vector<std::weak_ptr<WsSession>> sessions_;
  std::thread io_thread_;
  std::thread kernel_;
};

}  // namespace lissaform

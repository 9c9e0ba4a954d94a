#include <gtest/gtest.h>

#include <chrono>
#include <filesystem>

#include "lissaform/lissaform.hpp"
#include "lissaform/live_gateway.hpp"

using namespace lissaform;
namespace fs = std::filesystem;
using namespace std::chrono_literals;

namespace {

Scenario bundled(const std::string& name) {
  return load_scenario(fs::path(LISSAFORM_SOURCE_DIR) / "scenarios" / (name + ".json"));
}

GatewayOptions fast(double speedup = 100.0) {
  GatewayOptions o;
  o.port = 0;
  o.speedup = speedup;
  return o;
}

struct HttpReply {
  int status;
  std::string body;
};

HttpReply http_get(unsigned short port, const std::string& target) {
  net::io_context ioc;
  beast::tcp_stream stream(ioc);
  stream.connect(tcp::endpoint(net::ip::make_address("127.0.0.1"), port));
  http::request<http::string_body> req{http::verb::get, target, 11};
  req.set(http::field::host, "127.0.0.1");
  http::write(stream, req);
  beast::flat_buffer buf;
  http::response<http::string_body> res;
  http::read(stream, buf, res);
  beast::error_code ec;
  stream.socket().shutdown(tcp::socket::shutdown_both, ec);
  return {static_cast<int>(res.result_int()), res.body()};
}

class WsClient {
 public:
  explicit WsClient(unsigned short port) : ws_(ioc_) {
    ws_.next_layer().connect(tcp::endpoint(net::ip::make_address("127.0.0.1"), port));
    ws_.handshake("127.0.0.1", "/ws");
  }

  ~WsClient() {
    beast::error_code ec;
    ws_.close(websocket::close_code::normal, ec);
  }

  void send(const std::string& text) { ws_.write(net::buffer(text)); }
  void send(const ojson& j) { send(j.dump()); }

  ojson read() {
    beast::flat_buffer buf;
    ws_.read(buf);
    return ojson::parse(beast::buffers_to_string(buf.data()));
  }

  // Reads until a message satisfies pred; snapshots keep arriving, so reads do not stall.
  template <class Pred>
  ojson read_until(Pred pred, std::chrono::milliseconds budget = 20s) {
    const auto deadline = std::chrono::steady_clock::now() + budget;
    while (std::chrono::steady_clock::now() < deadline) {
      ojson j = read();
      if (pred(j)) return j;
    }
    ADD_FAILURE() << "no matching message within budget";
    return {};
  }

  ojson ack() {
    return read_until([](const ojson& j) { return j["type"] == "ack"; });
  }

  ojson command(const std::string& cmd, int id = -1) {
    ojson j{{"cmd", cmd}};
    if (id >= 0) j["id"] = id;
    send(j);
    return ack();
  }

  void wait_for_phase(const std::string& phase) {
    read_until([&](const ojson& j) { return j["type"] == "snapshot" && j["phase"] == phase; });
  }

 private:
  net::io_context ioc_;
  websocket::stream<tcp::socket> ws_;
};

}  // namespace

TEST(ClientCommand, ParsesAndReportsErrors) {
  Command c;
  ojson seq;
  EXPECT_EQ(parse_client_command("{", c, seq), "malformed json");
  EXPECT_EQ(parse_client_command("[1]", c, seq), "malformed command");
  EXPECT_EQ(parse_client_command(R"({"id":1})", c, seq), "missing cmd");
  EXPECT_EQ(parse_client_command(R"({"cmd":"hover"})", c, seq), "unknown cmd");
  EXPECT_EQ(parse_client_command(R"({"cmd":"replace"})", c, seq), "missing id");
  EXPECT_EQ(parse_client_command(R"({"cmd":"remove","id":3,"seq":"a1"})", c, seq), "");
  EXPECT_EQ(c.kind, CommandKind::Remove);
  EXPECT_EQ(c.id, 3);
  EXPECT_EQ(seq, "a1");
  EXPECT_EQ(parse_client_command(R"({"cmd":"add"})", c, seq), "");
  EXPECT_EQ(c.kind, CommandKind::Add);
}

TEST(Gateway, ServesConfigOverHttp) {
  Gateway gw(bundled("matlab_sim_1_remove"), fast());
  gw.start();
  const HttpReply r = http_get(gw.port(), "/config");
  EXPECT_EQ(r.status, 200);
  const ojson j = ojson::parse(r.body);
  EXPECT_EQ(j["scenario"], "matlab_sim_1_remove");
  EXPECT_EQ(j["formation"]["N"], 5);
  EXPECT_EQ(j["dt"], 0.01);
  EXPECT_EQ(http_get(gw.port(), "/missing").status, 404);
  gw.stop();
}

TEST(Gateway, SendsConfigThenSnapshotsAtTheConfiguredRate) {
  GatewayOptions o = fast(1.0);
  Gateway gw(bundled("matlab_sim_1_remove"), o);
  gw.start();
  WsClient client(gw.port());
  const ojson first = client.read();
  EXPECT_EQ(first["type"], "config");
  EXPECT_EQ(first["config"]["formation"]["N"], 5);

  const auto t0 = std::chrono::steady_clock::now();
  int frames = 0;
  double last_t = -1.0;
  while (std::chrono::steady_clock::now() - t0 < 1s) {
    const ojson s = client.read();
    ASSERT_EQ(s["type"], "snapshot");
    for (const char* key : {"t", "tick", "phase", "agents", "N", "curve", "s", "ellipse"})
      EXPECT_TRUE(s.contains(key)) << key;
    ASSERT_EQ(s["agents"].size(), 5u);
    for (const auto& a : s["agents"])
      for (const char* key : {"id", "x", "y", "z", "mode", "speed"}) EXPECT_TRUE(a.contains(key)) << key;
    EXPECT_GE(s["t"].get<double>(), last_t);
    last_t = s["t"].get<double>();
    ++frames;
  }
  EXPECT_GE(frames, 14);
  EXPECT_LE(frames, 26);
  // paced at real time
  EXPECT_NEAR(last_t, 1.0, 0.3);
  gw.stop();
}

TEST(Gateway, NacksMalformedAndInvalidCommands) {
  Gateway gw(bundled("matlab_sim_1_remove"), fast());
  gw.start();
  WsClient client(gw.port());
  client.send(std::string("not json"));
  ojson a = client.ack();
  EXPECT_FALSE(a["ok"].get<bool>());
  EXPECT_EQ(a["reason"], "malformed json");

  client.send(ojson{{"cmd", "remove"}, {"seq", 4}});
  a = client.ack();
  EXPECT_EQ(a["reason"], "missing id");
  EXPECT_EQ(a["seq"], 4);

  client.send(ojson{{"cmd", "remove"}, {"id", 99}, {"seq", 5}});
  a = client.ack();
  EXPECT_FALSE(a["ok"].get<bool>());
  EXPECT_EQ(a["reason"], "unknown id");
  EXPECT_EQ(a["seq"], 5);
  EXPECT_TRUE(a.contains("tick"));

  a = client.command("takeoff");
  EXPECT_EQ(a["reason"], "not grounded");
  gw.stop();
}

TEST(Gateway, RefusesAdditionAtFullStrength) {
  Scenario s = bundled("matlab_sim_1_remove");
  s.inputs.N_extra = 1;
  Gateway gw(s, fast());
  gw.start();
  WsClient client(gw.port());
  const ojson a = client.command("add");
  EXPECT_FALSE(a["ok"].get<bool>());
  EXPECT_EQ(a["reason"], "above N_max");
  gw.stop();
}

TEST(Gateway, AcknowledgesRemovalAndRefusesWhileBusy) {
  Gateway gw(bundled("matlab_sim_1_remove"), fast(200.0));
  gw.start();
  WsClient client(gw.port());
  ojson a = client.command("remove", 2);
  ASSERT_TRUE(a["ok"].get<bool>());
  EXPECT_EQ(a["cmd"], "remove");
  EXPECT_EQ(a["id"], 2);
  const long k = a["tick"].get<long>();
  EXPECT_GE(k, 0);
  EXPECT_DOUBLE_EQ(a["t"].get<double>(), tick_time(k, 0.01));

  a = client.command("replace", 3);
  EXPECT_FALSE(a["ok"].get<bool>());
  EXPECT_EQ(a["reason"], "busy");

  client.wait_for_phase("SURVEIL");
  a = client.command("remove", 3);
  EXPECT_FALSE(a["ok"].get<bool>());
  EXPECT_EQ(a["reason"], "below N_min");
  gw.stop();
}

TEST(Gateway, QueuesWhileBusyWhenConfigured) {
  GatewayOptions o = fast(200.0);
  o.queue_busy = true;
  Gateway gw(bundled("matlab_sim_1_remove"), o);
  gw.start();
  WsClient client(gw.port());
  ASSERT_TRUE(client.command("remove", 2)["ok"].get<bool>());
  const ojson a = client.command("add");
  EXPECT_TRUE(a["ok"].get<bool>());
  EXPECT_TRUE(a["queued"].get<bool>());
  client.read_until([](const ojson& j) { return j["type"] == "snapshot" && j["phase"] == "ADDING"; });
  client.wait_for_phase("SURVEIL");
  gw.stop();
}

TEST(Gateway, RecordedSessionReplaysByteForByte) {
  GatewayOptions o = fast(400.0);
  o.max_ticks = 9000;
  Gateway gw(bundled("matlab_sim_1_remove"), o);
  gw.start();
  {
    WsClient client(gw.port());
    client.read_until([](const ojson& j) { return j["type"] == "snapshot" && j["tick"].get<long>() > 50; });
    ASSERT_TRUE(client.command("remove", 4)["ok"].get<bool>());
    client.wait_for_phase("SURVEIL");
    ASSERT_TRUE(client.command("add")["ok"].get<bool>());
  }
  ASSERT_TRUE(gw.wait_for_tick(9000, 60s));
  gw.stop();

  const Scenario session = gw.session_scenario();
  ASSERT_EQ(session.commands.size(), 2u);
  EXPECT_EQ(session.duration_ticks, 9000);
  const std::string live = gw.trace_jsonl();
  EXPECT_EQ(run_scenario(session).world.trace().to_jsonl(), live);
  // also through the serialized form
  const Scenario reloaded = scenario_from_json(ojson::parse(scenario_to_json(session).dump()));
  EXPECT_EQ(run_scenario(reloaded).world.trace().to_jsonl(), live);
}

TEST(Gateway, CommandsAfterTheRunEndAreRefused) {
  GatewayOptions o = fast(0.0);
  o.max_ticks = 10;
  Gateway gw(bundled("matlab_sim_1_remove"), o);
  gw.start();
  ASSERT_TRUE(gw.wait_for_tick(10, 10s));
  while (!gw.kernel_finished()) std::this_thread::sleep_for(1ms);
  WsClient client(gw.port());
  const ojson a = client.command("remove", 1);
  EXPECT_FALSE(a["ok"].get<bool>());
  EXPECT_EQ(a["reason"], "session ended");
  EXPECT_EQ(a["tick"], 10);
  gw.stop();
}

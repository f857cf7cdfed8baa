#include <gtest/gtest.h>

#include <thread>

#include "proxquad/bridge_server.hpp"
#include "support/gen.hpp"

using namespace proxquad;
using namespace proxquad::bridge;
using pqtest::for_all;
using pqtest::Gen;

namespace {

std::shared_ptr<const ModelStore> gt_only() { return std::make_shared<ModelStore>(); }

json reply(BridgeSession& s, const std::string& text) {
  const auto frames = s.handle(text);
  EXPECT_EQ(frames.size(), 1u) << text;
  return frames.empty() ? json() : json::parse(frames[0]);
}

std::string error_code(const std::string& text) {
  try {
    parse_inbound(text);
  } catch (const ProtocolError& e) {
    return e.code;
  }
  return "";
}

// Minimal synchronous websocket client.
struct Client {
  net::io_context io;
  websocket::stream<tcp::socket> ws{io};

  explicit Client(unsigned short port) {
    tcp::resolver r(io);
    net::connect(ws.next_layer(), r.resolve("127.0.0.1", std::to_string(port)));
    ws.handshake("127.0.0.1", "/");
    ws.text(true);
  }
  ~Client() {
    beast::error_code ec;
    ws.close(websocket::close_code::normal, ec);
  }
  void send(const json& j) { ws.write(net::buffer(j.dump())); }
  void send_raw(const std::string& s) { ws.write(net::buffer(s)); }
  json read() {
    beast::flat_buffer b;
    ws.read(b);
    return json::parse(beast::buffers_to_string(b.data()));
  }
  json read_until(const std::string& type) {
    for (;;) {
      json j = read();
      if (j["type"] == type) return j;
    }
  }
};

// Server on an ephemeral port, driven by its own thread.
struct LiveServer {
  net::io_context io;
  BridgeServer server;
  std::thread thread;

  explicit LiveServer(double rate)
      : server(io, {net::ip::make_address("127.0.0.1"), 0}, gt_only(), {}, ServerOptions{rate, 10.0, 30, 100000}) {
    server.start();
    thread = std::thread([this] { io.run(); });
  }
  ~LiveServer() {
    server.stop();
    io.stop();
    thread.join();
  }
};

}  // namespace

TEST(Protocol, ParsesEachMessageType) {
  const auto p = std::get<PersonPose>(parse_inbound(R"({"type":"person_pose","seq":3,"x":1,"y":-2.5,"heading":0.5,"t":1.25})"));
  EXPECT_EQ(p.seq, 3u);
  EXPECT_EQ(p.y, -2.5);
  EXPECT_EQ(p.t, 1.25);
  EXPECT_EQ(std::get<SelectController>(parse_inbound(R"({"type":"select_controller","seq":1,"kind":"A2"})")).kind,
            ApproachKind::A2);
  EXPECT_EQ(std::get<SelectController>(parse_inbound(R"({"type":"select_controller","seq":1,"kind":"GroundTruth"})")).kind,
            ApproachKind::GroundTruth);
  const auto r = std::get<Reset>(parse_inbound(R"({"type":"reset","seq":9,"scenario":"approach_0","seed":4})"));
  EXPECT_EQ(r.scenario, "approach_0");
  EXPECT_EQ(r.seed, 4u);
  EXPECT_FALSE(std::get<Reset>(parse_inbound(R"({"type":"reset","seq":9,"scenario":"still"})")).seed);
}

TEST(Protocol, ErrorCodes) {
  EXPECT_EQ(error_code("{nope"), "malformed");
  EXPECT_EQ(error_code("[1,2]"), "malformed");
  EXPECT_EQ(error_code(R"({"seq":1})"), "missing_field");
  EXPECT_EQ(error_code(R"({"type":"reset"})"), "missing_field");
  EXPECT_EQ(error_code(R"({"type":"reset","seq":-1,"scenario":"still"})"), "bad_value");
  EXPECT_EQ(error_code(R"({"type":"reset","seq":1.5,"scenario":"still"})"), "bad_value");
  EXPECT_EQ(error_code(R"({"type":"person_pose","seq":1,"x":1,"y":2,"heading":0})"), "missing_field");
  EXPECT_EQ(error_code(R"({"type":"person_pose","seq":1,"x":"1","y":2,"heading":0,"t":0})"), "bad_value");
  // Out-of-range numbers fail JSON parsing itself.
  EXPECT_EQ(error_code(R"({"type":"person_pose","seq":1,"x":1e999,"y":2,"heading":0,"t":0})"), "malformed");
  EXPECT_EQ(error_code(R"({"type":"select_controller","seq":1,"kind":"A4"})"), "bad_value");
  EXPECT_EQ(error_code(R"({"type":"jump","seq":1})"), "unknown_type");
}

TEST(Protocol, SerializeRoundTrip) {
  for_all(2000, 61, [](Gen& g, int) {
    const std::uint64_t seq = static_cast<std::uint64_t>(g.integer(0, 1 << 30));
    Inbound m;
    switch (g.integer(0, 2)) {
      case 0: m = PersonPose{seq, g.real(-9, 9), g.real(-9, 9), g.angle(), g.real(0, 100)}; break;
      case 1: m = SelectController{seq, static_cast<ApproachKind>(g.integer(0, 3))}; break;
      default:
        m = Reset{seq, g.coin() ? "still" : "scripted:0.3",
                  g.coin() ? std::optional<std::uint64_t>(g.integer(0, 1000)) : std::nullopt};
    }
    const Inbound back = parse_inbound(serialize(m));
    ASSERT_EQ(back.index(), m.index());
    ASSERT_EQ(serialize(back), serialize(m));
    ASSERT_EQ(seq_of(back), seq);
  });
}

TEST(Protocol, WorldStateRoundTrip) {
  const auto t = rollout(TrainedApproach{}, parse_scenario("scripted:0.9"), 2.0, 3, {});
  for (std::size_t i = 0; i < t.samples.size(); ++i) {
    const json j = world_state_json(i + 1, 0, static_cast<std::int64_t>(i), t.samples[i], ApproachKind::GroundTruth);
    ASSERT_EQ(trace_sample_from_json(json::parse(j.dump())), t.samples[i]);
  }
  TraceSample s;
  s.s_estimated = HeadState{1, 2, 3, 0.5};
  EXPECT_EQ(trace_sample_from_json(world_state_json(1, 0, 0, s, ApproachKind::A1)), s);
}

TEST(Session, GreetingAndDefaults) {
  BridgeSession s(gt_only(), {});
  const json g = json::parse(s.greeting().at(0));
  EXPECT_EQ(g["type"], "status");
  EXPECT_EQ(g["controller"], "GroundTruth");
  EXPECT_EQ(g["scenario"], "still");
  EXPECT_EQ(g["available"], json::array({"GroundTruth"}));
  EXPECT_EQ(g["tick_rate_nominal"], 30.0);
}

TEST(Session, SequenceNumbersIncreaseAndStaleInputIsRejected) {
  BridgeSession s(gt_only(), {});
  std::uint64_t last = json::parse(s.greeting()[0])["seq"];
  for (int i = 0; i < 5; ++i) {
    const std::uint64_t seq = json::parse(s.tick())["seq"];
    EXPECT_GT(seq, last);
    last = seq;
  }
  EXPECT_TRUE(s.handle(R"({"type":"person_pose","seq":5,"x":0,"y":0,"heading":0,"t":0})").empty());
  const json e = reply(s, R"({"type":"person_pose","seq":5,"x":0,"y":0,"heading":0,"t":0})");
  EXPECT_EQ(e["type"], "error");
  EXPECT_EQ(e["code"], "stale_seq");
  EXPECT_EQ(e["in_reply_to"], 5);
  EXPECT_GT(e["seq"].get<std::uint64_t>(), last);
}

TEST(Session, MalformedInputKeepsSessionAlive) {
  BridgeSession s(gt_only(), {});
  const json e = reply(s, "garbage");
  EXPECT_EQ(e["code"], "malformed");
  EXPECT_TRUE(e["in_reply_to"].is_null());
  EXPECT_EQ(json::parse(s.tick())["tick"], 0);
  EXPECT_EQ(reply(s, R"({"type":"reset","seq":1,"scenario":"approach_90"})")["type"], "status");
}

TEST(Session, UnavailableControllerIsRefused) {
  BridgeSession s(gt_only(), {});
  const json e = reply(s, R"({"type":"select_controller","seq":1,"kind":"A3"})");
  EXPECT_EQ(e["code"], "model_unavailable");
  EXPECT_EQ(s.controller(), ApproachKind::GroundTruth);
  EXPECT_EQ(reply(s, R"({"type":"select_controller","seq":2,"kind":"gt"})")["controller"], "GroundTruth");
}

TEST(Session, LoadedModelsCanBeSelected) {
  auto store = std::make_shared<ModelStore>();
  TrainedApproach a2;
  a2.kind = ApproachKind::A2;
  a2.m2 = nn::init_model({8, {4}, 4}, 1);
  store->add(a2);
  BridgeSession s(store, {});
  const json st = reply(s, R"({"type":"select_controller","seq":1,"kind":"a2"})");
  EXPECT_EQ(st["controller"], "A2");
  EXPECT_EQ(st["available"], json::array({"A2", "GroundTruth"}));
  const json w = json::parse(s.tick());
  EXPECT_EQ(w["controller"], "A2");
  EXPECT_FALSE(w.contains("s_pose_estimated"));
}

TEST(Session, ResetStartsNewEpisode) {
  BridgeSession s(gt_only(), {});
  s.tick();
  s.tick();
  const json st = reply(s, R"({"type":"reset","seq":1,"scenario":"approach_45","seed":2})");
  EXPECT_EQ(st["episode"], 1);
  EXPECT_EQ(st["scenario"], "approach_45");
  const json w = json::parse(s.tick());
  EXPECT_EQ(w["tick"], 0);
  EXPECT_EQ(w["t"], 0.0);
  EXPECT_EQ(trace_sample_from_json(w), rollout({}, parse_scenario("approach_45"), 1.0 / 30, 2, {}).samples[0]);

  const json bad = reply(s, R"({"type":"reset","seq":2,"scenario":"approach_30"})");
  EXPECT_EQ(bad["code"], "bad_value");
  EXPECT_EQ(s.episode(), 1u);
}

TEST(Session, PosesAreClampedToTheArena) {
  BridgeSession s(gt_only(), {});
  s.handle(R"({"type":"person_pose","seq":1,"x":50,"y":-50,"heading":0,"t":0})");
  const json w = json::parse(s.tick());
  EXPECT_EQ(w["person"]["x"], 3.5);
  EXPECT_EQ(w["person"]["y"], -3.5);
}

TEST(Session, MatchesOfflineRolloutTickForTick) {
  const std::vector<TimedPersonPose> script{{0.4, 0.3, 0.0, 3.0}, {0.8, 0.6, 0.2, 2.6}, {1.6, 0.6, 0.5, 2.0}};
  const auto offline = rollout({}, parse_scenario("scripted:0.6"), 3.0, 17, {}, script);
  BridgeSession s(gt_only(), {});
  reply(s, R"({"type":"reset","seq":1,"scenario":"scripted:0.6","seed":17})");
  std::uint64_t seq = 2;
  for (const auto& p : script)
    s.handle(serialize(PersonPose{seq++, p.x, p.y, p.heading, p.t}));
  for (const auto& want : offline.samples) ASSERT_EQ(trace_sample_from_json(json::parse(s.tick())), want);
}

TEST(Live, StreamsAndMatchesOfflineRollout) {
  LiveServer srv(120.0);
  Client c(srv.server.port());
  EXPECT_EQ(c.read()["type"], "status");

  const std::vector<TimedPersonPose> script{{1.0, 0.2, 0.1, 3.0}, {1.5, 0.5, 0.3, 2.5}, {2.0, 0.5, 0.3, 2.0}};
  c.send(json::parse(serialize(Reset{1, "approach_0", 5})));
  std::uint64_t seq = 2;
  for (const auto& p : script) c.send(json::parse(serialize(PersonPose{seq++, p.x, p.y, p.heading, p.t})));

  const auto offline = rollout({}, parse_scenario("approach_0"), 3.0, 5, {}, script);
  std::size_t k = 0;
  std::uint64_t last_seq = 0;
  while (k < offline.samples.size()) {
    const json j = c.read();
    ASSERT_GT(j["seq"].get<std::uint64_t>(), last_seq);
    last_seq = j["seq"];
    if (j["type"] != "world_state" || j["episode"] != 1) continue;
    ASSERT_EQ(j["tick"], k);
    ASSERT_EQ(trace_sample_from_json(j), offline.samples[k]) << "tick " << k;
    ++k;
  }
}

TEST(Live, ClientsAreIsolated) {
  LiveServer srv(60.0);
  Client a(srv.server.port()), b(srv.server.port());
  a.read_until("status");
  b.read_until("status");
  a.send({{"type", "reset"}, {"seq", 1}, {"scenario", "approach_90"}, {"seed", 3}});
  a.send_raw("{{{ not json");
  EXPECT_EQ(a.read_until("error")["code"], "malformed");

  const WorldState still = make_scenario(parse_scenario("still"), 0);
  for (int i = 0; i < 20; ++i) {
    const json w = b.read_until("world_state");
    ASSERT_EQ(w["episode"], 0);
    ASSERT_EQ(w["person"]["x"], still.person.pose.x);
    ASSERT_EQ(w["drone"]["x"], still.drone.pose.x);
  }
  json w;
  do w = a.read_until("world_state");
  while (w["episode"] != 1);
  EXPECT_NEAR(w["drone"]["x"].get<double>(), -3.0, 0.2);
}

TEST(Live, ReportsMeasuredTickRate) {
  LiveServer srv(30.0);
  Client c(srv.server.port());
  c.read_until("status");
  json st;
  for (int i = 0; i < 2; ++i) st = c.read_until("status");
  EXPECT_NEAR(st["tick_rate"].get<double>(), 30.0, 3.0);
  EXPECT_EQ(st["tick_rate_nominal"], 30.0);
}

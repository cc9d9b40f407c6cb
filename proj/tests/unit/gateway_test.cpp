#include <zlib.h>

#include <cstdlib>
#include <fstream>
#include <set>
#include <thread>

#include <gtest/gtest.h>

#include "rollbox/gateway/server.hpp"
#include "../support/transcript.hpp"

namespace rollbox::gateway {
namespace {

using rollbox::testing::Driver;
using rollbox::testing::golden_session;
using rollbox::testing::hello;
using rollbox::testing::transcript_digest;

TEST(Frame, RoundTripAndPartialFeeds) {
  const std::string a = encode_frame("{\"x\":1}");
  EXPECT_EQ(a.size(), 11u);
  EXPECT_EQ(a.substr(0, 4), std::string("\0\0\0\7", 4));
  FrameDecoder d;
  const std::string stream = a + encode_frame("") + encode_frame("hi");
  for (char c : stream) d.feed(std::string_view(&c, 1));
  EXPECT_EQ(d.next(), "{\"x\":1}");
  EXPECT_EQ(d.next(), "");
  EXPECT_EQ(d.next(), "hi");
  EXPECT_EQ(d.next(), std::nullopt);
  FrameDecoder bad;
  bad.feed(std::string("\xff\xff\xff\xff", 4));
  EXPECT_THROW(bad.next(), FrameError);
}

TEST(Frame, Base64KnownVectors) {
  auto bytes = [](std::string_view s) { return std::vector<std::uint8_t>(s.begin(), s.end()); };
  EXPECT_EQ(base64_encode(bytes("")), "");
  EXPECT_EQ(base64_encode(bytes("f")), "Zg==");
  EXPECT_EQ(base64_encode(bytes("fo")), "Zm8=");
  EXPECT_EQ(base64_encode(bytes("foobar")), "Zm9vYmFy");
  EXPECT_EQ(base64_decode("Zm9vYmE="), bytes("fooba"));
  EXPECT_EQ(base64_decode("Zg=="), bytes("f"));
  Rng rng(3);
  std::vector<std::uint8_t> blob(1000);
  for (auto& b : blob) b = static_cast<std::uint8_t>(rng.below(256));
  EXPECT_EQ(base64_decode(base64_encode(blob)), blob);
  EXPECT_THROW(base64_decode("abc"), Error);
}

// Drives a Connection directly, numbering requests.
TEST(Protocol, HelloAckAndVersionMismatch) {
  Hub hub;
  Driver d{hub};
  const json r = hello(d);
  EXPECT_EQ(r["type"], "hello");
  EXPECT_EQ(r["seq"], 1);
  EXPECT_EQ(r["payload"]["session"], "s1");
  EXPECT_EQ(r["payload"]["version"], "1");
  EXPECT_EQ(r["payload"]["palette"]["goal_sphere_low"], json::array({240, 220, 40}));
  Driver e{hub};
  const json bad = e.send("hello", {{"version", "2"}});
  EXPECT_EQ(bad["type"], "bye");
  EXPECT_TRUE(e.conn.closed());
  Driver f{hub};
  EXPECT_EQ(f.send("reset")["type"], "bye");
}

TEST(Protocol, StepBeforeResetIsAnError) {
  Hub hub;
  Driver d{hub};
  hello(d);
  json r = d.send("step", {{"action", 0}});
  EXPECT_EQ(r["type"], "error");
  EXPECT_EQ(r["payload"]["message"], "episode not started");
  d.send("add_change_puzzle", {{"mode", 1}, {"task", 1}, {"seed", 3}});
  r = d.send("step", {{"action", 0}});
  EXPECT_EQ(r["payload"]["message"], "episode not started");
  EXPECT_EQ(d.send("reset")["type"], "observation");
  EXPECT_EQ(d.send("step", {{"action", 0}})["type"], "result");
  EXPECT_EQ(d.send("step", {{"action", 9}})["type"], "error");
}

TEST(Protocol, MalformedAndUnknownKeepTheSession) {
  Hub hub;
  Driver d{hub};
  hello(d);
  const json r = json::parse(d.conn.on_payload("{not json"));
  EXPECT_EQ(r["type"], "error");
  EXPECT_TRUE(r["seq"].is_null());
  EXPECT_EQ(d.send("teleport")["type"], "error");
  EXPECT_EQ(d.send("configure", {{"action_space", "discrete4"}})["type"], "error");
  EXPECT_EQ(d.send("configure", {{"skip_frame", true}})["type"], "result");
  EXPECT_FALSE(d.conn.closed());
  // Replaying an old sequence number is a protocol violation.
  const json old = {{"type", "reset"}, {"seq", 1}};
  EXPECT_EQ(json::parse(d.conn.on_payload(old.dump()))["type"], "bye");
  EXPECT_TRUE(d.conn.closed());
  EXPECT_EQ(hub.size(), 0u);
}

TEST(Protocol, SkipFrameControlsTickAdvance) {
  Hub hub;
  Driver d{hub};
  hello(d);
  d.send("add_change_puzzle", {{"mode", 0}, {"task", 0}, {"seed", 2}});
  d.send("configure", {{"skip_frame", true}});
  d.send("reset");
  auto t0 = d.send("step", {{"action", 1}})["payload"]["info"]["tick"].get<int>();
  auto t1 = d.send("step", {{"action", 1}})["payload"]["info"]["tick"].get<int>();
  EXPECT_EQ(t1 - t0, 4);
  d.send("configure", {{"skip_frame", false}});
  auto t2 = d.send("step", {{"action", 1}})["payload"]["info"]["tick"].get<int>();
  EXPECT_EQ(t2 - t1, 1);
}

TEST(Protocol, AddChangePuzzleInstallsAvoidance) {
  Hub hub;
  Driver d{hub};
  hello(d);
  const json r = d.send("add_change_puzzle", {{"mode", 1}, {"task", 3}, {"seed", 8}});
  EXPECT_EQ(r["payload"]["task"], 3);
  d.send("reset");
  const json s = d.send("state_snapshot");
  EXPECT_EQ(s["type"], "state_snapshot");
  EXPECT_EQ(s["payload"]["task"], 3);
  EXPECT_EQ(s["payload"]["budget"], 100);
  bool danger = false;
  for (const auto& b : s["payload"]["bodies"]) danger |= b["kind"] == "danger_region";
  EXPECT_TRUE(danger);
  EXPECT_EQ(d.send("add_change_puzzle", {{"mode", 1}, {"task", 0}})["type"], "error");
  EXPECT_EQ(d.send("add_change_puzzle", {{"mode", 0}, {"task", 2}})["type"], "error");
}

// Greedy steering toward the yellow sphere from a snapshot or a world.
int steer(const sim::Vec2& a, const sim::Vec2& g) {
  int best = 0;
  double score = -1e300;
  for (int k = 0; k < env::kNumActions; ++k) {
    const sim::Vec2 d = env::Action{k}.direction();
    const double dot = d.x * (g.x - a.x) + d.y * (g.y - a.y);
    if (dot > score) score = dot, best = k;
  }
  return best;
}

int steer_snapshot(const json& snap) {
  sim::Vec2 a, g;
  for (const auto& b : snap["bodies"]) {
    const sim::Vec2 p{b["position"][0].get<double>(), b["position"][1].get<double>()};
    if (b["kind"] == "agent") a = p;
    if (b["kind"] == "goal_sphere_low") g = p;
  }
  return steer(a, g);
}

TEST(Protocol, TurnOffRewardZeroesReward) {
  Hub hub;
  Driver d{hub};
  hello(d);
  d.send("add_change_puzzle", {{"mode", 1}, {"task", 1}, {"seed", 4}, {"table_half_extent", 1.0}, {"obstacles", false}});
  d.send("turn_off_reward", {{"off", true}});
  d.send("reset");
  json r;
  for (int k = 0; k < 100; ++k) {
    r = d.send("step", {{"action", steer_snapshot(d.send("state_snapshot")["payload"])}});
    EXPECT_EQ(r["payload"]["reward"], 0.0);
    if (r["payload"]["done"].get<bool>()) break;
  }
  ASSERT_EQ(r["payload"]["info"]["termination"], "goal");
  EXPECT_EQ(r["payload"]["info"]["credit"], 1.0);
}

class Steering : public eval::Controller {
 public:
  std::vector<int> act(const std::vector<eval::Query>& queries, Rng&) override {
    std::vector<int> out;
    for (const auto& q : queries) {
      sim::Vec2 g;
      for (const auto& b : q.world->bodies) {
        if (b.kind == sim::BodyKind::goal_sphere_low) g = b.position;
      }
      out.push_back(steer(q.world->agent().position, g));
    }
    return out;
  }
};

TEST(Protocol, HumanSuitePlayScoresLikeRunSuite) {
  Hub hub;
  Driver d{hub};
  hello(d);
  const json setup = {{"mode", 1}, {"task", 1}, {"suite_seed", 5}, {"suite_size", 10}, {"table_half_extent", 1.0}, {"obstacles", false}};
  EXPECT_EQ(d.send("add_change_puzzle", setup)["payload"]["suite_size"], 10);
  for (int p = 0; p < 10; ++p) {
    ASSERT_EQ(d.send("reset")["type"], "observation");
    while (true) {
      const json r = d.send("step", {{"action", steer_snapshot(d.send("state_snapshot")["payload"])}});
      ASSERT_EQ(r["type"], "result");
      if (r["payload"]["done"].get<bool>()) break;
    }
  }
  EXPECT_EQ(d.send("reset")["payload"]["message"], "suite finished");
  const auto human = eval::report_from_json(d.send("report")["payload"]["report"]);

  worldgen::PuzzleSetOptions opt;
  opt.table_half_extent = 1.0;
  opt.obstacles = false;
  Steering ctl;
  const auto agent = eval::run_suite(ctl, worldgen::make_puzzle_set(Task::goal_seeking, 5, 10, opt), 100, 0, "human").report;
  EXPECT_TRUE(human.complete);
  EXPECT_NEAR(human.score, agent.score, 1e-12);
  ASSERT_EQ(human.s.size(), agent.s.size());
  for (std::size_t i = 0; i < human.s.size(); ++i) EXPECT_NEAR(human.s[i], agent.s[i], 1e-12);
  EXPECT_GT(human.score, 0.0);
}

TEST(Protocol, AbandonedSuiteIsIncomplete) {
  Hub hub;
  Driver d{hub};
  hello(d);
  d.send("add_change_puzzle", {{"mode", 1}, {"task", 2}, {"suite_seed", 1}, {"suite_size", 4}});
  d.send("reset");
  d.send("step", {{"action", 0}});
  EXPECT_EQ(d.send("reset")["payload"]["message"], "episode in progress");
  const auto r = eval::report_from_json(d.send("report")["payload"]["report"]);
  EXPECT_FALSE(r.complete);
  EXPECT_EQ(r.episodes, 1);
  EXPECT_EQ(r.n, 100);
}

TEST(Protocol, SessionsAreIsolated) {
  Hub hub, solo;
  Driver a{hub}, b{hub}, solo_hub_driver{solo};
  EXPECT_EQ(hello(a)["payload"]["session"], "s1");
  EXPECT_EQ(hello(b)["payload"]["session"], "s2");
  hello(solo_hub_driver);
  for (Driver* d : {&a, &b, &solo_hub_driver}) d->send("add_change_puzzle", {{"mode", 0}, {"seed", 6}});
  a.send("reset");
  b.send("reset");
  solo_hub_driver.send("reset");
  for (int k = 0; k < 20; ++k) {
    const json ra = a.send("step", {{"action", k % 8}});
    b.send("step", {{"action", (k * 5) % 8}});
    const json rs = solo_hub_driver.send("step", {{"action", k % 8}});
    ASSERT_EQ(ra["payload"], rs["payload"]);
  }
}

TEST(Golden, TranscriptRepliesAreByteIdentical) {
  const auto first = golden_session();
  const auto second = golden_session();
  ASSERT_EQ(first, second);
  const std::string path = std::string(ROLLBOX_TEST_DATA) + "/golden_transcript.json";
  if (std::getenv("ROLLBOX_REGEN_GOLDEN")) {
    std::ofstream(path) << transcript_digest(first).dump(1) << '\n';
  }
  std::ifstream in(path);
  ASSERT_TRUE(in) << "missing " << path;
  const json want = json::parse(in);
  const json got = transcript_digest(first);
  ASSERT_EQ(want.size(), got.size());
  for (std::size_t k = 0; k < got.size(); ++k) ASSERT_EQ(want[k], got[k]) << "reply " << k;
}

// Snapshot plus the rasterized 84x84 view sampled every 4 pixels, as palette
// class names. The browser client checks its canvas against this file.
json palette_fixture() {
  Hub hub;
  Driver d{hub};
  hello(d);
  d.send("add_change_puzzle", {{"mode", 1}, {"task", 3}, {"seed", 5}});
  const json obs = d.send("reset")["payload"]["observation"];
  const json snap = d.send("state_snapshot")["payload"];
  const auto px = base64_decode(obs["data"].get<std::string>());
  const json palette = palette_json();
  json grid = json::array();
  for (int r = 2; r < env::kObsSize; r += 4) {
    json row = json::array();
    for (int c = 2; c < env::kObsSize; c += 4) {
      const std::uint8_t* p = &px[static_cast<std::size_t>(3 * (r * env::kObsSize + c))];
      std::string name = "?";
      for (auto it = palette.begin(); it != palette.end(); ++it) {
        if ((*it)[0] == p[0] && (*it)[1] == p[1] && (*it)[2] == p[2]) {
          name = it.key();
          break;
        }
      }
      row.push_back(name);
    }
    grid.push_back(row);
  }
  return {{"palette", palette}, {"snapshot", snap}, {"sample", {{"first", 2}, {"stride", 4}}}, {"grid", grid}};
}

TEST(Palette, CrossCheckFixture) {
  const json got = palette_fixture();
  std::set<std::string> classes;
  for (const auto& row : got["grid"]) {
    for (const auto& c : row) classes.insert(c.get<std::string>());
  }
  EXPECT_EQ(classes.count("?"), 0u) << "rasterizer produced a colour outside the palette";
  EXPECT_TRUE(classes.count("agent") && classes.count("goal_sphere_low") && classes.count("danger_region"));
  const std::string path = std::string(ROLLBOX_TEST_DATA) + "/palette_fixture.json";
  if (std::getenv("ROLLBOX_REGEN_GOLDEN")) std::ofstream(path) << got.dump(1) << '\n';
  std::ifstream in(path);
  ASSERT_TRUE(in) << "missing " << path;
  EXPECT_EQ(json::parse(in), got);
}

class Live : public ::testing::Test {
 protected:
  void start(std::chrono::milliseconds idle = kIdleTimeout) {
    server = std::make_unique<Server>("127.0.0.1", 0, idle);
    thread = std::thread([this] { server->run(); });
  }
  void TearDown() override {
    if (server) server->stop();
    if (thread.joinable()) thread.join();
  }
  std::unique_ptr<Server> server;
  std::thread thread;
};

TEST_F(Live, SocketSessionAndCorruptFrames) {
  start();
  Client c("127.0.0.1", server->port());
  EXPECT_EQ(c.request("hello", {{"version", "1"}})["payload"]["session"], "s1");
  c.request("add_change_puzzle", {{"mode", 1}, {"task", 4}, {"seed", 1}});
  const json obs = c.request("reset");
  EXPECT_EQ(base64_decode(obs["payload"]["observation"]["data"].get<std::string>()).size(), static_cast<std::size_t>(env::kObsBytes));
  EXPECT_EQ(json::parse(c.raw("garbage"))["type"], "error");
  EXPECT_EQ(c.request("step", {{"action", 2}})["type"], "result");

  Client bad("127.0.0.1", server->port());
  bad.send_bytes(std::string("\x7f\xff\xff\xff", 4));
  EXPECT_EQ(json::parse(bad.read())["type"], "bye");
  // The server is still serving.
  Client again("127.0.0.1", server->port());
  EXPECT_EQ(again.request("hello", {{"version", "1"}})["type"], "hello");
  EXPECT_EQ(c.request("bye")["type"], "bye");
}

TEST_F(Live, IdleSessionsExpire) {
  start(std::chrono::milliseconds(100));
  Client c("127.0.0.1", server->port());
  c.request("hello", {{"version", "1"}});
  EXPECT_EQ(server->hub().size(), 1u);
  std::this_thread::sleep_for(std::chrono::milliseconds(400));
  EXPECT_EQ(server->hub().size(), 0u);
  EXPECT_THROW(c.request("reset"), Error);
}

}  // namespace
}  // namespace rollbox::gateway

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "httplib.h"

#include <deque>
#include <thread>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "planex/remote.hpp"
#include "planex/simulator.hpp"

using namespace planex;
using nlohmann::json;

namespace {

std::string completion(const std::string& content) {
  return json{{"choices", json::array({{{"message", {{"role", "assistant"}, {"content", content}}}}})}}
      .dump();
}

// Serves scripted responses and counts requests.
class ScriptedTransport : public Transport {
 public:
  explicit ScriptedTransport(std::deque<HttpResponse> script) : script_(std::move(script)) {}
  HttpResponse post(const HttpRequest& request) override {
    ++calls;
    bodies.push_back(request.body);
    if (script_.empty()) throw TransportError("no scripted response left");
    auto r = script_.front();
    script_.pop_front();
    if (r.status < 0) throw TransportError("connection reset");
    return r;
  }
  int calls = 0;
  std::vector<std::string> bodies;

 private:
  std::deque<HttpResponse> script_;
};

BackendConfig quick_config() {
  BackendConfig c;
  c.endpoint = "http://127.0.0.1:1/v1/chat/completions";
  c.model = "test-model";
  c.backoff = std::chrono::milliseconds(1);
  return c;
}

std::unique_ptr<RemoteBackend> make_backend(std::shared_ptr<Transport> t,
                                            std::shared_ptr<TranscriptStore> store = nullptr) {
  auto b = std::make_unique<RemoteBackend>(quick_config(), PromptSet{}, std::move(t),
                                           std::move(store));
  b->set_sleeper([](std::chrono::milliseconds) {});
  return b;
}

std::filesystem::path temp_file(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("planex_" + std::to_string(::getpid()) + "_" + name);
  std::filesystem::remove(p);
  return p;
}

}  // namespace

TEST(Backends, RetriesOnServerErrorsThenSucceeds) {
  auto t = std::make_shared<ScriptedTransport>(
      std::deque<HttpResponse>{{503, ""}, {-1, ""}, {200, completion("Hotel California")}});
  auto owner = make_backend(t);
  auto& b = *owner;
  std::vector<std::chrono::milliseconds> waits;
  b.set_sleeper([&](std::chrono::milliseconds d) { waits.push_back(d); });
  EXPECT_EQ(b.complete("p"), "Hotel California");
  EXPECT_EQ(t->calls, 3);
  ASSERT_EQ(waits.size(), 2u);
  EXPECT_EQ(waits[1], waits[0] * 2);
}

TEST(Backends, GivesUpAfterTwoRetries) {
  auto t = std::make_shared<ScriptedTransport>(
      std::deque<HttpResponse>{{429, ""}, {500, ""}, {502, ""}, {200, completion("late")}});
  auto owner = make_backend(t);
  auto& b = *owner;
  EXPECT_THROW(b.complete("p"), BackendError);
  EXPECT_EQ(t->calls, 3);
}

TEST(Backends, ClientErrorsAreNotRetried) {
  auto t = std::make_shared<ScriptedTransport>(
      std::deque<HttpResponse>{{400, "bad"}, {200, completion("x")}});
  auto owner = make_backend(t);
  auto& b = *owner;
  EXPECT_THROW(b.complete("p"), BackendError);
  EXPECT_EQ(t->calls, 1);
}

TEST(Backends, RequestBodyIsByteStable) {
  const auto c = quick_config();
  EXPECT_EQ(build_request_body(c, "hello"), build_request_body(c, "hello"));
  EXPECT_EQ(transcript_key(c, "hello"), transcript_key(c, "hello"));
  auto other = c;
  other.temperature = 0.5;
  EXPECT_NE(transcript_key(c, "hello"), transcript_key(other, "hello"));
  const auto body = json::parse(build_request_body(c, "hello"));
  EXPECT_EQ(body["messages"][0]["content"], "hello");
  EXPECT_EQ(body["model"], "test-model");
}

TEST(Backends, ReplayServesCachedRepliesWithoutNetwork) {
  const auto path = temp_file("transcripts.jsonl");
  const ExtractorInput input{"Eagles sang Hotel California .", "song", {}, "title"};
  {
    auto t = std::make_shared<ScriptedTransport>(
        std::deque<HttpResponse>{{200, completion("Hotel California")}});
    auto store = std::make_shared<TranscriptStore>(TranscriptMode::kRecord, path);
    auto owner = make_backend(t, store);
    auto& b = *owner;
    EXPECT_EQ(b.extract(input), "Hotel California");
    EXPECT_EQ(b.extract(input), "Hotel California");
    EXPECT_EQ(t->calls, 1);
  }
  auto t = std::make_shared<ScriptedTransport>(std::deque<HttpResponse>{});
  auto store = std::make_shared<TranscriptStore>(TranscriptMode::kReplay, path);
  auto owner = make_backend(t, store);
  auto& b = *owner;
  EXPECT_EQ(b.extract(input), "Hotel California");
  EXPECT_EQ(t->calls, 0);
  EXPECT_EQ(b.network_calls(), 0u);
  EXPECT_THROW(b.extract({"Other .", "song", {}, "title"}), BackendError);
  EXPECT_EQ(t->calls, 0);
  std::filesystem::remove(path);
}

TEST(Backends, ClassifyFiltersNonCandidates) {
  auto t = std::make_shared<ScriptedTransport>(std::deque<HttpResponse>{
      {200, completion("work at, founder")}, {200, completion("married to")}});
  auto owner = make_backend(t);
  auto& b = *owner;
  EXPECT_EQ(b.classify("s", {"founder", "work at", "born in"}),
            (std::vector<std::string>{"work at", "founder"}));
  EXPECT_TRUE(b.classify("s", {"founder"}).empty());
}

TEST(Backends, UnparseableJudgeReplyScoresZero) {
  auto t = std::make_shared<ScriptedTransport>(
      std::deque<HttpResponse>{{200, completion("maybe")}, {200, completion("Score: 1")}});
  auto owner = make_backend(t);
  auto& b = *owner;
  EXPECT_EQ(b.judge("a", "b"), 0);
  EXPECT_EQ(b.judge("a", "b"), 1);
}

TEST(Backends, FilterCandidatesKeepsReplyOrder) {
  EXPECT_EQ(filter_candidates({"b", "x", "a"}, {"a", "b"}), (std::vector<std::string>{"b", "a"}));
}

TEST(Backends, HttpTransportTalksToALocalServer) {
  httplib::Server server;
  std::string seen_auth;
  server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    seen_auth = req.get_header_value("Authorization");
    const auto body = json::parse(req.body);
    res.set_content(completion("echo " + body["messages"][0]["content"].get<std::string>()),
                    "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread runner([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  auto config = quick_config();
  config.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions";
  config.api_key = "secret";
  RemoteBackend b(config, PromptSet{}, std::make_shared<HttpTransport>());
  EXPECT_EQ(b.complete("ping"), "echo ping");
  EXPECT_EQ(seen_auth, "Bearer secret");
  server.stop();
  runner.join();
}

TEST(Backends, SimulatorReturnsGoldOnlyAfterPrerequisites) {
  SimInstance inst;
  inst.id = "s1";
  inst.sentence = "The Eagles released Hotel California in 1976 .";
  inst.type_label = "release";
  inst.roles = {"artist", "title"};
  inst.gold = {{"artist", {"The Eagles"}}, {"title", {"Hotel California"}}};
  inst.prerequisites = {{"title", {"artist"}}};
  inst.decoys = {{"title", "California"}};
  auto world = std::make_shared<const SimWorld>(std::vector<SimInstance>{inst});
  SimulatorBackend sim(world);

  EXPECT_EQ(sim.classify(inst.sentence, {"release", "other"}), std::vector<std::string>{"release"});
  EXPECT_TRUE(sim.classify(inst.sentence, {"other"}).empty());
  EXPECT_EQ(sim.extract({inst.sentence, "release", {}, "title"}), "California");
  EXPECT_EQ(sim.extract({inst.sentence, "release", {{"artist", {"the eagles"}}}, "title"}),
            "Hotel California");
  EXPECT_EQ(sim.extract({inst.sentence, "release", {{"artist", {"Eagles"}}}, "title"}),
            "California");
  EXPECT_EQ(sim.extract({inst.sentence, "release", {}, "artist"}), "The Eagles");
}

TEST(Backends, AliasJudge) {
  AliasTable aliases;
  aliases.add("USA", "the United States");
  AliasJudge judge(aliases);
  EXPECT_EQ(judge.judge("USA", "the United States"), 1);
  EXPECT_EQ(judge.judge("the United States", "USA"), 1);
  EXPECT_EQ(judge.judge("Beijing City", "Nanjing City"), 0);
  EXPECT_EQ(judge.judge("x", "x"), 1);
  EXPECT_EQ(judge.judge(" Seattle ", "seattle"), 1);
}

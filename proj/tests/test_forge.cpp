// Copyright 2026 The SPT Workbench Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <thread>

#include "httplib.h"
#include "json.hpp"
#include "sptw/common.hpp"
#include "sptw/forge.hpp"
#include "sptw/process.hpp"
#include "support.hpp"

using namespace sptw;
using nlohmann::json;
using sptw::testing::fixture;
using sptw::testing::read_file;

namespace {

constexpr const char* kKeyVar = "SPTW_TEST_CHAT_KEY";

/// Answers from a fixed script, one response per call.
class ScriptedTransport : public ChatTransport {
public:
  explicit ScriptedTransport(std::vector<std::string> replies) : replies_(std::move(replies)) {}
  std::string send(const ChatRequest& request) override {
    std::lock_guard lock(mutex_);
    requests.push_back(request);
    return replies_.at(next_++ % replies_.size());
  }
  std::vector<ChatRequest> requests;

private:
  std::mutex mutex_;
  std::vector<std::string> replies_;
  std::size_t next_ = 0;
};

ChatClientConfig replay_config() {
  ChatClientConfig c;
  c.mode = ChatMode::replay;
  c.model_id = "fixture-model";
  c.cassette_path = fixture("forge_cassette.jsonl");
  return c;
}

ChatClientConfig networked(ChatMode mode, std::optional<std::filesystem::path> cassette = std::nullopt) {
  ChatClientConfig c;
  c.mode = mode;
  c.model_id = "fixture-model";
  c.endpoint = "http://127.0.0.1:1";
  c.api_key_env = kKeyVar;
  c.cassette_path = std::move(cassette);
  c.backoff_ms = 10;
  return c;
}

/// First solution of each problem in programs20, problems sorted by id.
std::vector<Program> design_examples() {
  auto problems = load_corpus(fixture("programs20.jsonl"));
  std::sort(problems.begin(), problems.end(),
            [](const Problem& a, const Problem& b) { return a.problem_id < b.problem_id; });
  std::vector<Program> out;
  for (std::size_t i = 0; i < 5; ++i) {
    auto sols = problems[i].solutions;
    std::sort(sols.begin(), sols.end(),
              [](const Program& a, const Program& b) { return a.program_id < b.program_id; });
    out.push_back(sols.front());
  }
  return out;
}

SptDesign design(const std::string& name, const std::string& description) {
  return SptDesign{design_id_for(name), name, description, {}, {}};
}

class KeyEnv {
public:
  KeyEnv() { setenv(kKeyVar, "test-key", 1); }
  ~KeyEnv() { unsetenv(kKeyVar); }
};

}  // namespace

TEST(ParseDesign, PlainAndBulleted) {
  auto a = parse_design_response("Transformation Name: Loop Fission\nDescription: Split loops.");
  EXPECT_EQ(a.name, "Loop Fission");
  EXPECT_EQ(a.description, "Split loops.");
  auto b = parse_design_response("Sure!\n- Transformation Name: X\n- Description: Y\n");
  EXPECT_EQ(b.name, "X");
  EXPECT_EQ(b.description, "Y");
  auto c = parse_design_response("* Transformation Name: **Bold**\n  * Description:   Line one\nline two\n\n");
  EXPECT_EQ(c.name, "Bold");
  EXPECT_EQ(c.description, "Line one\nline two");
}

TEST(ParseDesign, DescriptionStopsAtNextLabel) {
  auto d = parse_design_response(
      "Transformation Name: A\nDescription: first\nmore\nTransformation Name: B\nDescription: other\n");
  EXPECT_EQ(d.name, "A");
  EXPECT_EQ(d.description, "first\nmore");
}

TEST(ParseDesign, Failures) {
  for (const char* text : {"no labels at all", "Transformation Name: only a name",
                           "Description: d\nTransformation Name: n", "Transformation Name:\nDescription: d"}) {
    try {
      parse_design_response(text);
      FAIL() << text;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::design_parse) << text;
    }
  }
}

TEST(ExtractCode, FencesAndFallback) {
  EXPECT_EQ(extract_code("text\n```python\nprint(1)\n```\nmore ```python\nx\n```"), "print(1)\n");
  EXPECT_EQ(extract_code("```\na = '```'\nb\n```"), "a = '```'\nb\n");
  EXPECT_EQ(extract_code("print(2)\n"), "print(2)\n");
  EXPECT_EQ(extract_code("```py\nunterminated\n"), "unterminated\n");
}

TEST(Prompts, MatchGoldenFiles) {
  std::vector<Program> programs;
  for (int i = 1; i <= 5; ++i) {
    const std::string src = i == 4 ? "x = input()\nprint(x)\n" : "print(" + std::to_string(i) + ")\n";
    programs.push_back(Program::make("p" + std::to_string(i), "p", src));
  }
  const std::vector<SptDesign> existing{
      design("Loop Unrolling", "Unroll every loop with a constant trip count."),
      design("Dead Code", "Insert statements whose results are never used.")};
  EXPECT_EQ(render_design_prompt(existing, programs), read_file(sptw::testing::golden("design_prompt.txt")));
  EXPECT_EQ(render_implementation_prompt(design("Rename", "Rename every local variable to a fresh name.")),
            read_file(sptw::testing::golden("implementation_prompt.txt")));
}

TEST(Prompts, PlaceholderInsideProgramIsKept) {
  const std::vector<Program> programs{Program::make("p", "p", "# {transformation_list}\n")};
  const std::string prompt = render_design_prompt({}, programs);
  EXPECT_NE(prompt.find("Program 1:\n# {transformation_list}\n"), std::string::npos);
}

TEST(Digest, CanonicalJson) {
  EXPECT_EQ(request_digest("m", 0.5, "hi"),
            sha256_hex(R"({"model":"m","prompt":"hi","temperature":0.5})"));
  EXPECT_NE(request_digest("m", 0.5, "hi"), request_digest("m", 0.6, "hi"));
  EXPECT_EQ(design_id_for("  Loop Fission "), design_id_for("loop fission"));
  EXPECT_EQ(design_id_for("x").substr(0, 4), "spt-");
  EXPECT_EQ(design_id_for("x").size(), 16u);
}

TEST(ChatClient, ReplayDesignsFromCassette) {
  ChatClient client(replay_config());
  const auto examples = design_examples();
  const auto designs = design_spts(client, examples, {}, 2);
  ASSERT_EQ(designs.size(), 2u);
  EXPECT_EQ(designs[0].name, "Append Marker Comment");
  EXPECT_EQ(designs[1].name, "Wrap In Main");
  EXPECT_EQ(designs[1].description,
            "Move the whole program into a function named main and call it.\nThe body is indented by four spaces.");
  EXPECT_EQ(designs[1].prior_designs, std::vector<std::string>{"Append Marker Comment"});
  EXPECT_EQ(designs[0].example_program_ids.size(), 5u);
  EXPECT_EQ(client.network_calls(), 0u);
  const auto transcript = client.transcript();
  ASSERT_EQ(transcript.size(), 3u);
  EXPECT_EQ(transcript[0].prompt, transcript[1].prompt);
  EXPECT_EQ(transcript[0].prompt, render_design_prompt({}, examples));
  EXPECT_NE(transcript[2].prompt.find("- Append Marker Comment: Append the line"), std::string::npos);
}

TEST(ChatClient, ReplayMissAndExhaustion) {
  ChatClient client(replay_config());
  try {
    client.chat("never recorded", 0.1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::cassette_miss);
  }
  const std::string prompt = render_implementation_prompt(
      design("Exit Early", "Stop before producing any output."));
  EXPECT_EQ(client.sample(prompt, 3, 0.8).size(), 3u);
  EXPECT_THROW(client.chat(prompt, 0.8), Error);
  EXPECT_THROW(client.chat(prompt, 0.7), Error);
}

TEST(ChatClient, ReplayWithoutCassetteIsConfigError) {
  ChatClientConfig c = replay_config();
  c.cassette_path.reset();
  try {
    ChatClient client(c);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::config);
  }
}

TEST(ChatClient, LiveWithoutKeyFailsBeforeNetwork) {
  unsetenv(kKeyVar);
  auto transport = std::make_shared<ScriptedTransport>(std::vector<std::string>{"x"});
  try {
    ChatClient client(networked(ChatMode::live), transport);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::config);
  }
  EXPECT_TRUE(transport->requests.empty());
}

TEST(ChatClient, RecordThenReplayRoundTrip) {
  KeyEnv key;
  ScratchDir dir;
  const auto cassette = dir.path() / "c.jsonl";
  auto transport = std::make_shared<ScriptedTransport>(std::vector<std::string>{"one", "two", "three"});
  std::vector<std::string> recorded;
  {
    ChatClient client(networked(ChatMode::record, cassette), transport);
    recorded = client.sample("prompt", 2, 0.8);
    recorded.push_back(client.chat("other", 0.1));
    EXPECT_EQ(client.network_calls(), 3u);
  }
  EXPECT_EQ(recorded, (std::vector<std::string>{"one", "two", "three"}));
  ASSERT_EQ(transport->requests.size(), 3u);
  EXPECT_EQ(transport->requests[0].model, "fixture-model");
  EXPECT_EQ(transport->requests[0].temperature, 0.8);
  EXPECT_EQ(transport->requests[0].max_output_tokens, 2048);
  const auto records = load_cassette(cassette);
  ASSERT_EQ(records.size(), 3u);
  EXPECT_EQ(records[2].digest, request_digest("fixture-model", 0.1, "other"));

  ChatClientConfig rc = replay_config();
  rc.cassette_path = cassette;
  ChatClient replay(rc);
  EXPECT_EQ(replay.sample("prompt", 2, 0.8), (std::vector<std::string>{"one", "two"}));
  EXPECT_EQ(replay.chat("other", 0.1), "three");
  EXPECT_EQ(replay.network_calls(), 0u);
}

TEST(ChatClient, DuplicateDesignNameIsRetried) {
  KeyEnv key;
  auto transport = std::make_shared<ScriptedTransport>(std::vector<std::string>{
      "Transformation Name: dead code\nDescription: again\n",
      "Transformation Name: Fresh Idea\nDescription: new\n"});
  ChatClient client(networked(ChatMode::live), transport);
  const std::vector<SptDesign> existing{design("Dead Code", "Insert unused statements.")};
  const auto designs = design_spts(client, design_examples(), existing, 1);
  ASSERT_EQ(designs.size(), 1u);
  EXPECT_EQ(designs[0].name, "Fresh Idea");
  EXPECT_EQ(transport->requests.size(), 2u);
  EXPECT_EQ(transport->requests[0].prompt, transport->requests[1].prompt);
  EXPECT_EQ(transport->requests[0].temperature, 0.1);
}

TEST(ChatClient, DesignGivesUpAfterRetries) {
  KeyEnv key;
  auto transport = std::make_shared<ScriptedTransport>(std::vector<std::string>{"nothing useful"});
  ChatClient client(networked(ChatMode::live), transport);
  try {
    design_spts(client, design_examples(), {}, 1, DesignOptions{0.1, 2});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::design_parse);
    EXPECT_NE(std::string(e.what()).find("nothing useful"), std::string::npos);
  }
  EXPECT_EQ(transport->requests.size(), 3u);
  const auto few = design_examples();
  EXPECT_THROW(design_spts(client, std::span<const Program>(few.data(), 4), {}, 1), Error);
}

TEST(HttpChatTransport, PostsRequestAndRetries) {
  httplib::Server server;
  std::atomic<int> calls{0};
  json seen;
  std::string auth;
  server.Post("/v1/chat", [&](const httplib::Request& req, httplib::Response& res) {
    if (++calls == 1) {
      res.status = 502;
      return;
    }
    seen = json::parse(req.body);
    auth = req.get_header_value("Authorization");
    res.set_content(R"({"text":"hello"})", "application/json");
  });
  server.Post("/bad", [&](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"({"nope":1})", "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread th([&] { server.listen_after_bind(); });
  server.wait_until_ready();
  const std::string base = "http://127.0.0.1:" + std::to_string(port);

  HttpChatTransport ok(base + "/v1/chat", "k123", 2000, 2, 10);
  EXPECT_EQ(ok.send({"m", 0.8, 64, "prompt text"}), "hello");
  EXPECT_EQ(calls.load(), 2);
  EXPECT_EQ(seen, (json{{"model", "m"}, {"temperature", 0.8}, {"max_output_tokens", 64}, {"prompt", "prompt text"}}));
  EXPECT_EQ(auth, "Bearer k123");

  HttpChatTransport bad(base + "/bad", "k", 2000, 0, 10);
  try {
    bad.send({"m", 0.0, 8, "p"});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::protocol);
  }
  server.stop();
  th.join();

  HttpChatTransport down(base + "/v1/chat", "k", 500, 1, 10);
  try {
    down.send({"m", 0.0, 8, "p"});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::transport);
  }
}

class ForgeTest : public ::testing::Test {
protected:
  ForgeTest() : sandbox_(sptw::testing::fast_sandbox()), runner_(sandbox_, ApplyOptions{}) {
    const auto all = sptw::testing::fixture_cases("programs20.jsonl");
    for (std::size_t i = 0; i < all.size(); i += 7) validation_.push_back(all[i]);
  }
  Sandbox sandbox_;
  TransformRunner runner_;
  std::vector<ProgramCase> validation_;
};

TEST_F(ForgeTest, SelectsAndRegistersWinner) {
  ChatClient client(replay_config());
  ScratchDir dir;
  Registry registry(dir.path() / "reg");
  auto detector = make_detector(DetectorHandle{});
  const SptDesign d = design("Append Marker Comment", "Append the line `# marker` to the end of the program.");
  const ForgeResult r = forge_transformer(client, d, 3, validation_, *detector, runner_, registry);
  EXPECT_EQ(r.winner_index, 1u);
  EXPECT_FALSE(r.zero_reward_warning);
  ASSERT_EQ(r.candidates.size(), 3u);
  EXPECT_EQ(r.candidates[0].evaluation->mean_reward, 0.0);
  EXPECT_EQ(r.candidates[2].evaluation->mean_reward, 0.0);
  double expected = 0.0;
  for (const ProgramCase& c : validation_) {
    expected += sptw::testing::oracle_distance(c.program.source_text, c.program.source_text + "# marker\n");
  }
  expected /= static_cast<double>(validation_.size());
  EXPECT_NEAR(r.candidates[1].evaluation->mean_reward, expected, 1e-12);

  EXPECT_EQ(r.transformer.transformer_id, d.design_id);
  EXPECT_EQ(r.transformer.provenance.kind, ProvenanceKind::forged);
  EXPECT_EQ(r.transformer.provenance.candidate_index, 1);
  const Transformer stored = registry.get(d.design_id);
  const std::string out = *runner_.apply(stored, "print(5)\n").output_source;
  EXPECT_EQ(out, "print(5)\n# marker\n");
  EXPECT_EQ(read_file(stored.directory / "transform.py"), r.candidates[1].source);
  const json table = json::parse(read_file(stored.directory / "candidates.json"));
  EXPECT_EQ(table["winner_index"], 1);
  EXPECT_EQ(client.network_calls(), 0u);
}

TEST_F(ForgeTest, ZeroRewardWarning) {
  ChatClient client(replay_config());
  ScratchDir dir;
  Registry registry(dir.path());
  auto detector = make_detector(DetectorHandle{});
  const SptDesign d = design("Exit Early", "Stop before producing any output.");
  const ForgeResult r = forge_transformer(client, d, 3, validation_, *detector, runner_, registry);
  EXPECT_TRUE(r.zero_reward_warning);
  EXPECT_EQ(r.winner_index, 0u);
  EXPECT_EQ(candidates_json(r)["flags"], json::array({"zero_reward"}));
}

TEST(DesignJson, RoundTrip) {
  SptDesign d = design("Name", "Desc");
  d.example_program_ids = {"a", "b"};
  d.prior_designs = {"Other"};
  const SptDesign back = design_from_json(to_json(d));
  EXPECT_EQ(to_json(back), to_json(d));
  EXPECT_THROW(design_from_json(json{{"name", ""}, {"description", "x"}}), Error);
}

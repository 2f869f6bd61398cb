#include <doctest.h>
#include <unistd.h>

#include <filesystem>
#include <string>

#include "prs/json_io.hpp"
#include "prs/types.hpp"

using namespace prs;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const char* tag) {
  fs::path dir = fs::temp_directory_path() / (std::string("prs-json-") + tag + "-" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

SampleTree sample_tree() {
  SampleTree t;
  t.prompt.id = "p1";
  t.prompt.instruction = "write a haiku";
  t.prompt.preference = "I prefer brevity";
  t.prompt.meta["source"] = "unit";
  Layer l0;
  l0.index = 0;
  Candidate a;
  a.id = "p1-s0-l0-c0000";
  a.prompt_id = "p1";
  a.layer = 0;
  a.index = 0;
  a.text = "v:[0.1]";
  a.reward = -1.5;
  Candidate b = a;
  b.id = "p1-s0-l0-c0001";
  b.index = 1;
  b.reward = -0.5;
  l0.candidates = {a, b};

  Layer l1;
  l1.index = 1;
  Feedback fb;
  fb.id = "p1-s0-l1-f";
  fb.prompt_id = "p1";
  fb.target_candidate_id = b.id;
  fb.text = "move toward target";
  l1.feedback = fb;
  Candidate c;
  c.id = "p1-s0-l1-c0000";
  c.prompt_id = "p1";
  c.layer = 1;
  c.index = 0;
  c.parent_id = b.id;
  c.feedback_id = fb.id;
  c.text = "v:[0.2]";
  c.reward = -0.25;
  l1.candidates = {c};

  t.layers = {l0, l1};
  t.ledger.count_generation(3);
  t.ledger.count_feedback(1);
  t.ledger.count_reward(3);
  return t;
}

}  // namespace

TEST_CASE("tree serialization round-trips byte-identically") {
  SampleTree t = sample_tree();
  json first = to_json(t);
  SampleTree back = tree_from_json(first);
  json second = to_json(back);
  CHECK(first.dump() == second.dump());
  CHECK_NOTHROW(validate_tree(back));
  // candidate ordinals are positional, never a field (layers do store theirs)
  CHECK(first["layers"][0]["candidates"][1].dump().find("\"index\"") == std::string::npos);
  CHECK(back.layers[0].candidates[1].index == 1);
}

TEST_CASE("optional candidate fields are elided, not nulled") {
  Candidate a;
  a.id = "x-0";
  a.prompt_id = "x";
  a.text = "hi";
  std::string s = to_json(a).dump();
  CHECK(s.find("reward") == std::string::npos);
  CHECK(s.find("parent_id") == std::string::npos);
  CHECK(s.find("feedback_id") == std::string::npos);
  CHECK(s.find("null") == std::string::npos);
}

TEST_CASE("parsers reject unknown and ill-typed fields") {
  json j = to_json(sample_tree());
  SUBCASE("unknown top-level field") {
    j["extra"] = 1;
    try {
      tree_from_json(j);
      FAIL("expected data error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::data);
      CHECK(std::string(e.what()).find("unknown field 'extra'") != std::string::npos);
    }
  }
  SUBCASE("reward must be numeric") {
    j["layers"][0]["candidates"][0]["reward"] = "high";
    CHECK_THROWS_AS(tree_from_json(j), Error);
  }
  SUBCASE("validation runs on load") {
    j["layers"][1]["candidates"][0].erase("parent_id");
    CHECK_THROWS_AS(tree_from_json(j), Error);
  }
}

TEST_CASE("sampling config round-trips including the width schedule") {
  SamplingConfig c;
  c.method = Method::prs;
  c.total_n = 16;
  c.depth = 3;
  c.width_schedule = std::vector<int>{6, 5, 5};
  c.use_feedback = false;
  c.reward_sees_preference = true;
  c.decode.temperature = 0.7;
  c.decode.max_tokens = 256;
  c.seed = 42;
  json j = to_json(c);
  SamplingConfig back = sampling_config_from_json(j);
  CHECK(to_json(back).dump() == j.dump());
  CHECK(back.width_schedule == c.width_schedule);
  CHECK(back.use_feedback == false);
  CHECK(back.decode.temperature == 0.7);
}

TEST_CASE("atomic writes create parents and read_file returns exact bytes") {
  fs::path dir = fresh_dir("atomic");
  std::string path = (dir / "nested" / "deep" / "out.txt").string();
  std::string content = "line1\n\nline3 with trailing space \n";
  write_file_atomic(path, content);
  CHECK(read_file(path) == content);
  // overwrite in place
  write_file_atomic(path, "replaced");
  CHECK(read_file(path) == "replaced");
  fs::remove_all(dir);
}

TEST_CASE("read_file reports missing files as data errors") {
  try {
    read_file("/nonexistent/prs-no-such-file");
    FAIL("expected data error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::data);
  }
}

TEST_CASE("prompt files reject duplicates, name both lines, and reject emptiness") {
  fs::path dir = fresh_dir("prompts");
  std::string path = (dir / "prompts.jsonl").string();

  SUBCASE("valid file loads in order") {
    write_file_atomic(path,
                      "{\"id\":\"a\",\"instruction\":\"one\"}\n"
                      "{\"id\":\"b\",\"instruction\":\"two\",\"preference\":\"I prefer short answers\"}\n");
    auto records = load_prompt_file(path);
    REQUIRE(records.size() == 2);
    CHECK(records[0].id == "a");
    CHECK(records[1].preference == "I prefer short answers");
  }
  SUBCASE("duplicate id names both line numbers") {
    write_file_atomic(path,
                      "{\"id\":\"a\",\"instruction\":\"one\"}\n"
                      "{\"id\":\"b\",\"instruction\":\"two\"}\n"
                      "{\"id\":\"a\",\"instruction\":\"three\"}\n");
    try {
      load_prompt_file(path);
      FAIL("expected data error");
    } catch (const Error& e) {
      std::string msg = e.what();
      CHECK(msg.find(":3") != std::string::npos);
      CHECK(msg.find("first seen on line 1") != std::string::npos);
      CHECK(msg.find("duplicate prompt id 'a'") != std::string::npos);
    }
  }
  SUBCASE("empty file is an error") {
    write_file_atomic(path, "\n\n");
    try {
      load_prompt_file(path);
      FAIL("expected data error");
    } catch (const Error& e) {
      CHECK(std::string(e.what()).find("has no records") != std::string::npos);
    }
  }
  SUBCASE("parse errors carry path and line") {
    write_file_atomic(path, "{\"id\":\"a\",\"instruction\":\"one\"}\nnot json\n");
    try {
      load_prompt_file(path);
      FAIL("expected data error");
    } catch (const Error& e) {
      CHECK(std::string(e.what()).find(path + ":2") != std::string::npos);
    }
  }
  fs::remove_all(dir);
}

TEST_CASE("tree files round-trip through to_jsonl and load_tree_file") {
  fs::path dir = fresh_dir("trees");
  std::string path = (dir / "trees.jsonl").string();
  std::vector<SampleTree> trees = {sample_tree()};
  trees.push_back(sample_tree());
  trees[1].prompt.id = "p2";
  for (Layer& l : trees[1].layers) {
    if (l.feedback) l.feedback->prompt_id = "p2";
    for (Candidate& c : l.candidates) c.prompt_id = "p2";
  }
  std::string body = to_jsonl(trees);
  write_file_atomic(path, body);
  auto back = load_tree_file(path);
  REQUIRE(back.size() == 2);
  CHECK(to_jsonl(back) == body);
  CHECK(back[1].prompt.id == "p2");
  CHECK(back[0].ledger.generation_calls() == 3);
  fs::remove_all(dir);
}

#include <doctest.h>
#include <unistd.h>

#include <filesystem>
#include <string>
#include <vector>

#include "prs/dataset.hpp"
#include "prs/json_io.hpp"

using namespace prs;
namespace fs = std::filesystem;

namespace {

Candidate cand(const std::string& id, int layer, int index, double reward,
               std::optional<std::string> parent = std::nullopt) {
  Candidate c;
  c.id = id;
  c.prompt_id = "p";
  c.layer = layer;
  c.index = index;
  c.reward = reward;
  c.parent_id = std::move(parent);
  c.text = "text of " + id;
  return c;
}

// depth-2 tree: layer0 rewards {0.6, 0.7}; layer1 refines the 0.7 winner.
SampleTree tree2(std::vector<double> layer1_rewards) {
  SampleTree t;
  t.prompt.id = "p";
  t.prompt.instruction = "improve";
  t.prompt.preference = "I prefer higher scores";
  Layer l0;
  l0.index = 0;
  l0.candidates = {cand("a", 0, 0, 0.6), cand("b", 0, 1, 0.7)};
  Layer l1;
  l1.index = 1;
  Feedback fb;
  fb.id = "f1";
  fb.prompt_id = "p";
  fb.target_candidate_id = "b";
  fb.text = "push higher";
  l1.feedback = fb;
  for (std::size_t i = 0; i < layer1_rewards.size(); ++i) {
    Candidate c = cand("r" + std::to_string(i), 1, static_cast<int>(i), layer1_rewards[i], "b");
    c.feedback_id = "f1";
    l1.candidates.push_back(std::move(c));
  }
  t.layers = {l0, l1};
  return t;
}

}  // namespace

TEST_CASE("improving pairs are layer-1 refinements that strictly beat the layer-0 winner") {
  SampleTree t = tree2({0.8, 0.65, 0.71, 0.7});
  auto pairs = improving_pairs(t);
  REQUIRE(pairs.size() == 2);
  CHECK(pairs[0]->id == "r0");  // 0.8 > 0.7
  CHECK(pairs[1]->id == "r2");  // 0.71 > 0.7; 0.7 is a tie, not an improvement
  for (const Candidate* c : pairs) CHECK(*c->parent_id == "b");

  SampleTree flat = tree2({});
  flat.layers.pop_back();
  try {
    improving_pairs(flat);
    FAIL("expected data error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::data);
    CHECK(std::string(e.what()) == "tree 'p' has no refinement layer, cannot extract improving pairs");
  }
}

TEST_CASE("iteration datasets hold one triple per tree plus per-step improving pairs") {
  SUBCASE("depth-2 with improvement: exactly a triple and a pair") {
    auto records = build_iteration_dataset({tree2({0.9, 0.2})}, 1);
    REQUIRE(records.size() == 2);
    CHECK(records[0].kind == RecordKind::response_triple);
    CHECK(records[0].response == "text of r0");  // global best
    CHECK(records[0].reward == 0.9);
    CHECK(records[0].iteration == 1);
    CHECK(records[1].kind == RecordKind::improving_pair);
    CHECK(records[1].parent_response == "text of b");
    CHECK(records[1].feedback == "push higher");
    CHECK(records[1].response == "text of r0");
  }
  SUBCASE("depth-2 without improvement: just the triple") {
    auto records = build_iteration_dataset({tree2({0.1, 0.2})}, 2);
    REQUIRE(records.size() == 1);
    CHECK(records[0].kind == RecordKind::response_triple);
    CHECK(records[0].response == "text of b");
    CHECK(records[0].iteration == 2);
  }
  SUBCASE("a tie with the parent is not an improvement") {
    auto records = build_iteration_dataset({tree2({0.7})}, 1);
    REQUIRE(records.size() == 1);
  }
  SUBCASE("deeper trees contribute one pair per improving refinement step") {
    SampleTree t = tree2({0.8});
    Layer l2;
    l2.index = 2;
    l2.candidates = {cand("z0", 2, 0, 0.85, "r0"), cand("z1", 2, 1, 0.5, "r0")};
    t.layers.push_back(l2);
    auto records = build_iteration_dataset({t}, 1);
    REQUIRE(records.size() == 3);  // triple + layer-1 pair + layer-2 pair
    CHECK(records[0].response == "text of z0");
    CHECK(records[1].parent_response == "text of b");
    CHECK(records[2].parent_response == "text of r0");
    CHECK(!records[2].feedback.has_value());  // layer 2 carried no critique

    // stall the last layer and its pair disappears
    t.layers[2].candidates[0].reward = 0.8;
    auto fewer = build_iteration_dataset({t}, 1);
    CHECK(fewer.size() == 2);
  }
  SUBCASE("mixed parents within a layer cannot form pairs") {
    SampleTree t = tree2({0.8, 0.9});
    t.layers[1].candidates[1].parent_id = "a";
    try {
      build_iteration_dataset({t}, 1);
      FAIL("expected data error");
    } catch (const Error& e) {
      CHECK(std::string(e.what()).find("mixes parents, cannot form pairs") != std::string::npos);
    }
  }
  CHECK_THROWS_AS(build_iteration_dataset({tree2({0.8})}, 0), Error);
}

TEST_CASE("merging validates iteration bookkeeping") {
  auto it1 = build_iteration_dataset({tree2({0.9})}, 1);
  auto it2 = build_iteration_dataset({tree2({0.95, 0.1})}, 2);
  TrainingRecord seed;
  seed.kind = RecordKind::sft_passthrough;
  seed.instruction = "seed";
  seed.response = "seed answer";
  std::vector<TrainingRecord> sft = {seed};

  auto merged = merge_iterations({it1, it2}, &sft);
  REQUIRE(merged.size() == 1 + it1.size() + it2.size());
  CHECK(merged[0].kind == RecordKind::sft_passthrough);
  CHECK(merged[1].iteration == 1);
  CHECK(merged.back().iteration == 2);

  SUBCASE("same iteration twice") {
    try {
      merge_iterations({it1, it1}, nullptr);
      FAIL("expected data error");
    } catch (const Error& e) {
      std::string msg = e.what();
      CHECK(msg.find("duplicate iteration index or gap") != std::string::npos);
      CHECK(msg.find("dataset 2 carries iteration 1") != std::string::npos);
    }
  }
  SUBCASE("gap in the sequence") {
    CHECK_THROWS_AS(merge_iterations({it2}, nullptr), Error);
  }
  SUBCASE("seed records must be passthrough at iteration 0") {
    std::vector<TrainingRecord> bad = {it1[0]};
    CHECK_THROWS_AS(merge_iterations({}, &bad), Error);
  }
  SUBCASE("passthrough records cannot hide in an iteration") {
    std::vector<TrainingRecord> sneaky = it1;
    seed.iteration = 1;
    sneaky.push_back(seed);
    CHECK_THROWS_AS(merge_iterations({sneaky}, nullptr), Error);
  }
}

TEST_CASE("training records round-trip and reject drift") {
  auto records = build_iteration_dataset({tree2({0.9})}, 1);
  for (const TrainingRecord& r : records) {
    json j = to_json(r);
    TrainingRecord back = training_record_from_json(j);
    CHECK(to_json(back).dump() == j.dump());
  }
  json j = to_json(records[0]);
  j["kind"] = "reward_triple";
  try {
    training_record_from_json(j);
    FAIL("expected data error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("unknown record kind 'reward_triple'") != std::string::npos);
  }
  j = to_json(records[0]);
  j["iteration"] = -1;
  CHECK_THROWS_AS(training_record_from_json(j), Error);
  j = to_json(records[0]);
  j["extra"] = true;
  CHECK_THROWS_AS(training_record_from_json(j), Error);
}

TEST_CASE("seed files accept only instruction/response lines") {
  fs::path dir = fs::temp_directory_path() / ("prs-sft-" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  std::string path = (dir / "seed.jsonl").string();
  write_file_atomic(path,
                    "{\"instruction\":\"q1\",\"response\":\"a1\"}\n"
                    "{\"instruction\":\"q2\",\"response\":\"a2\"}\n");
  auto seeds = load_sft_file(path);
  REQUIRE(seeds.size() == 2);
  CHECK(seeds[0].kind == RecordKind::sft_passthrough);
  CHECK(seeds[0].iteration == 0);
  CHECK(seeds[1].instruction == "q2");

  write_file_atomic(path, "{\"instruction\":\"q\",\"response\":\"a\",\"reward\":1}\n");
  try {
    load_sft_file(path);
    FAIL("expected data error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find(path + ":1") != std::string::npos);
    CHECK(std::string(e.what()).find("unknown field 'reward'") != std::string::npos);
  }
  fs::remove_all(dir);
}

TEST_CASE("trainer views partition by record kind with fixed keys") {
  fs::path dir = fs::temp_directory_path() / ("prs-views-" + std::to_string(::getpid()));
  fs::remove_all(dir);

  TrainingRecord seed;
  seed.kind = RecordKind::sft_passthrough;
  seed.instruction = "seed";
  seed.response = "seed answer";
  std::vector<TrainingRecord> sft = {seed};
  auto it1 = build_iteration_dataset({tree2({0.9})}, 1);
  auto merged = merge_iterations({it1}, &sft);

  // one triple without a preference, exercising the null
  SampleTree bare = tree2({0.9});
  bare.prompt.preference.reset();
  auto it1b = build_iteration_dataset({bare}, 1);
  merged.insert(merged.end(), it1b.begin(), it1b.end());

  emit_trainer_views(merged, dir.string());

  auto lines = [](const std::string& text) {
    std::vector<json> out;
    std::size_t start = 0;
    while (start < text.size()) {
      std::size_t end = text.find('\n', start);
      if (end == std::string::npos) end = text.size();
      out.push_back(json::parse(text.substr(start, end - start)));
      start = end + 1;
    }
    return out;
  };

  auto sft_lines = lines(read_file((dir / "sft.jsonl").string()));
  REQUIRE(sft_lines.size() == 1);
  CHECK(sft_lines[0].dump() == "{\"instruction\":\"seed\",\"response\":\"seed answer\"}");

  auto pref_lines = lines(read_file((dir / "preference.jsonl").string()));
  REQUIRE(pref_lines.size() == 2);
  CHECK(pref_lines[0]["preference"] == "I prefer higher scores");
  CHECK(pref_lines[1]["preference"].is_null());
  for (const json& j : pref_lines) CHECK(j.size() == 3);

  auto refine_lines = lines(read_file((dir / "refinement.jsonl").string()));
  REQUIRE(refine_lines.size() == 2);
  for (const json& j : refine_lines) {
    CHECK(j.size() == 5);
    CHECK(j.contains("parent_response"));
    CHECK(j.contains("feedback"));
    CHECK(j["response"] == "text of r0");
  }

  // views for kinds that never occur still exist (empty)
  fs::path only_sft = dir / "only-sft";
  emit_trainer_views({seed}, only_sft.string());
  CHECK(read_file((only_sft / "preference.jsonl").string()).empty());
  CHECK(read_file((only_sft / "refinement.jsonl").string()).empty());

  CHECK_THROWS_AS(emit_trainer_views({}, dir.string()), Error);
  fs::remove_all(dir);
}

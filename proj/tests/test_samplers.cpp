#include <doctest.h>

#include <atomic>
#include <limits>
#include <semaphore>
#include <string>
#include <vector>

#include "prs/json_io.hpp"
#include "prs/mock_backend.hpp"
#include "prs/samplers.hpp"
#include "prs/selection.hpp"
#include "prs/templates.hpp"

using namespace prs;

namespace {

PromptRecord record(const std::string& id, std::optional<std::string> preference = std::nullopt) {
  PromptRecord r;
  r.id = id;
  r.instruction = "Reach the target.";
  r.preference = std::move(preference);
  return r;
}

struct Fixture {
  TemplateSet templates = TemplateSet::builtin_defaults();
  MockBackend mock;
  SamplerEnv env;

  explicit Fixture(MockLandscapeConfig cfg = {}) : mock(cfg) {
    env.templates = &templates;
    env.generation = &mock;
    env.reward = &mock;
  }
};

SamplingConfig config(Method m, int n, int depth = 1, std::uint64_t seed = 42) {
  SamplingConfig c;
  c.method = m;
  c.total_n = n;
  c.depth = depth;
  c.seed = seed;
  return c;
}

std::string dump(const SampleTree& t) { return to_json(t).dump(); }

}  // namespace

TEST_CASE("default schedules put the remainder in layer 0 and reject thin budgets") {
  CHECK(default_schedule(16, 3).sizes == std::vector<int>{6, 5, 5});
  CHECK(default_schedule(32, 2).sizes == std::vector<int>{16, 16});
  CHECK(default_schedule(7, 3).sizes == std::vector<int>{3, 2, 2});
  CHECK(default_schedule(5, 5).sizes == std::vector<int>{1, 1, 1, 1, 1});
  CHECK(default_schedule(9, 1).sizes == std::vector<int>{9});
  try {
    default_schedule(3, 4);
    FAIL("expected usage error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::usage);
    CHECK(std::string(e.what()) == "budget smaller than depth: cannot spread 3 samples over 4 layers");
  }
  CHECK_THROWS_AS(default_schedule(4, 0), Error);
}

TEST_CASE("for_each_slot covers every index once and propagates the first failure") {
  std::vector<std::atomic<int>> hits(100);
  for (auto& h : hits) h = 0;
  for_each_slot(100, 8, [&](int i) { hits[static_cast<std::size_t>(i)].fetch_add(1); });
  for (auto& h : hits) CHECK(h.load() == 1);

  for_each_slot(0, 8, [&](int) { FAIL("must not run"); });

  try {
    for_each_slot(50, 4, [&](int i) {
      if (i == 37) throw data_error("slot 37 exploded");
    });
    FAIL("expected the worker error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()) == "slot 37 exploded");
  }
}

TEST_CASE("samplers spend exactly the budget and record call purposes") {
  Fixture f;
  auto r = record("p1", "I prefer short answers");

  SampleTree rand_tree = run_rand(r, config(Method::rand, 8), f.env);
  CHECK(rand_tree.layers.size() == 1);
  CHECK(rand_tree.layers[0].candidates.size() == 8);
  CHECK(rand_tree.ledger.generation_calls() == 8);
  CHECK(rand_tree.ledger.reward_calls() == 8);
  CHECK(rand_tree.ledger.feedback_calls() == 0);
  CHECK_NOTHROW(validate_tree(rand_tree));

  SampleTree prand_tree = run_prand(r, config(Method::prand, 8), f.env);
  CHECK(prand_tree.ledger.generation_calls() == 8);

  SampleTree greedy_tree = run_greedy(r, config(Method::greedy, 8), f.env);
  CHECK(greedy_tree.layers.size() == 8);
  for (const Layer& l : greedy_tree.layers) CHECK(l.candidates.size() == 1);
  CHECK(greedy_tree.ledger.generation_calls() == 8);
  CHECK(greedy_tree.ledger.feedback_calls() == 0);
  CHECK_NOTHROW(validate_tree(greedy_tree));

  auto cfg = config(Method::prs, 16, 3);
  cfg.use_feedback = true;
  SampleTree prs_tree = run_prs(r, cfg, f.env);
  REQUIRE(prs_tree.layers.size() == 3);
  CHECK(prs_tree.layers[0].candidates.size() == 6);
  CHECK(prs_tree.layers[1].candidates.size() == 5);
  CHECK(prs_tree.layers[2].candidates.size() == 5);
  CHECK(prs_tree.ledger.generation_calls() == 16);   // feedback not counted here
  CHECK(prs_tree.ledger.feedback_calls() == 2);      // one per refinement layer
  CHECK(prs_tree.ledger.reward_calls() == 16);
  CHECK_NOTHROW(validate_tree(prs_tree));
  CHECK_NOTHROW(verify_parent_monotonicity(prs_tree));
  CHECK(prs_tree.layers[1].feedback.has_value());
  CHECK(prs_tree.layers[1].feedback->target_candidate_id == *prs_tree.layers[1].candidates[0].parent_id);

  // deterministic id scheme
  CHECK(prs_tree.layers[0].candidates[3].id == "p1-s42-l0-c0003");
  CHECK(prs_tree.layers[2].feedback->id == "p1-s42-l2-f");
}

TEST_CASE("budget and schedule validation") {
  Fixture f;
  auto r = record("p", "I prefer depth");
  CHECK_THROWS_AS(run_rand(r, config(Method::rand, 0), f.env), Error);

  auto cfg = config(Method::prs, 16, 3);
  cfg.width_schedule = std::vector<int>{6, 10};
  try {
    run_prs(r, cfg, f.env);
    FAIL("expected usage error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()) == "width schedule has 2 layers but depth is 3");
  }
  cfg.width_schedule = std::vector<int>{6, 10, 0};
  try {
    run_prs(r, cfg, f.env);
    FAIL("expected usage error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()) == "width schedule entries must be >= 1");
  }
  cfg.width_schedule = std::vector<int>{6, 5, 4};
  try {
    run_prs(r, cfg, f.env);
    FAIL("expected usage error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()) == "width schedule sums to 15 but the budget is 16");
  }
  cfg.width_schedule = std::vector<int>{2, 13, 1};
  CHECK_NOTHROW(run_prs(r, cfg, f.env));
}

TEST_CASE("prand demands a preference; rand never uses one") {
  Fixture f;
  try {
    run_prand(record("p7"), config(Method::prand, 4), f.env);
    FAIL("expected usage error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::usage);
    CHECK(std::string(e.what()) == "prand requires a preference on every prompt; prompt 'p7' has none");
  }
  CHECK_THROWS_AS(run_prand(record("p7", "   "), config(Method::prand, 4), f.env), Error);

  // same prompt id, with and without a preference: rand output is identical
  SampleTree with = run_rand(record("p7", "I prefer poetry"), config(Method::rand, 4), f.env);
  SampleTree bare = run_rand(record("p7"), config(Method::rand, 4), f.env);
  for (std::size_t i = 0; i < 4; ++i) CHECK(with.layers[0].candidates[i].text == bare.layers[0].candidates[i].text);
  // while prand genuinely conditions on it
  SampleTree prand_tree = run_prand(record("p7", "I prefer poetry"), config(Method::prand, 4), f.env);
  CHECK(prand_tree.layers[0].candidates[0].text != bare.layers[0].candidates[0].text);
}

TEST_CASE("depth-1 tree sampling collapses to the preference baseline bitwise") {
  Fixture f;
  auto r = record("p3", "I prefer vectors near the target");
  SampleTree prs_tree = run_prs(r, config(Method::prs, 12, 1, 7), f.env);
  SampleTree prand_tree = run_prand(r, config(Method::prand, 12, 1, 7), f.env);
  CHECK(dump(prs_tree) == dump(prand_tree));
}

TEST_CASE("greedy is tree sampling at depth N, width 1, feedback off — bitwise") {
  Fixture f;
  auto r = record("p4", "I prefer accuracy");
  SampleTree greedy_tree = run_greedy(r, config(Method::greedy, 6, 1, 9), f.env);
  auto cfg = config(Method::prs, 6, 6, 9);
  cfg.use_feedback = false;
  SampleTree prs_tree = run_prs(r, cfg, f.env);
  CHECK(dump(greedy_tree) == dump(prs_tree));
}

TEST_CASE("run_method dispatches on the configured method") {
  Fixture f;
  auto r = record("p5", "I prefer brevity");
  CHECK(dump(run_method(r, config(Method::greedy, 3), f.env)) == dump(run_greedy(r, config(Method::greedy, 3), f.env)));
  CHECK(dump(run_method(r, config(Method::rand, 3), f.env)) == dump(run_rand(r, config(Method::rand, 3), f.env)));
}

TEST_CASE("refinement layers condition on the argmax over the whole pool") {
  MockLandscapeConfig lc;
  lc.feedback_gain = 0.5;
  Fixture f(lc);
  auto cfg = config(Method::prs, 18, 3, 11);
  SampleTree tree = run_prs(record("p6", "I prefer the target"), cfg, f.env);
  CHECK_NOTHROW(verify_parent_monotonicity(tree));

  // recompute the argmax the slow way for layer 2's parent
  std::vector<const Candidate*> pool;
  for (std::size_t l = 0; l < 2; ++l)
    for (const Candidate& c : tree.layers[l].candidates) pool.push_back(&c);
  const Candidate& best = select_best(pool);
  for (const Candidate& c : tree.layers[2].candidates) CHECK(*c.parent_id == best.id);
  CHECK(tree.layers[2].feedback->target_candidate_id == best.id);
}

TEST_CASE("parallelism and call gating never change the bytes") {
  MockLandscapeConfig lc;
  lc.feedback_gain = 0.25;
  Fixture serial(lc), wide(lc);
  wide.env.parallelism = 8;
  std::counting_semaphore<> gate(2);
  wide.env.call_gate = &gate;

  auto r = record("p8", "I prefer reproducibility");
  auto cfg = config(Method::prs, 12, 3, 5);
  SampleTree a = run_prs(r, cfg, serial.env);
  SampleTree b = run_prs(r, cfg, wide.env);
  CHECK(dump(a) == dump(b));

  SampleTree c = run_rand(r, config(Method::rand, 16, 1, 5), serial.env);
  SampleTree d = run_rand(r, config(Method::rand, 16, 1, 5), wide.env);
  CHECK(dump(c) == dump(d));
}

TEST_CASE("non-finite rewards are reported as backend failures") {
  struct NanReward final : RewardBackend {
    double score(const std::string&, const std::optional<std::string>&, const std::string&,
                 const std::optional<std::string>&) override {
      return std::numeric_limits<double>::quiet_NaN();
    }
  };
  Fixture f;
  NanReward nan_reward;
  f.env.reward = &nan_reward;
  try {
    run_rand(record("p9"), config(Method::rand, 2), f.env);
    FAIL("expected backend error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::backend);
    CHECK(std::string(e.what()) == "reward backend returned a non-finite score");
  }
}

TEST_CASE("bon_select surfaces the tree-wide winner") {
  Fixture f;
  SampleTree tree = run_prs(record("p10", "I prefer winning"), config(Method::prs, 9, 3, 3), f.env);
  const Candidate& best = bon_select(tree);
  for (const Candidate* c : flatten(tree)) CHECK(*c->reward <= *best.reward);
}

TEST_CASE("depth sweeps aggregate per depth and degrade per cell on failure") {
  Fixture f;
  std::vector<PromptRecord> prompts = {record("s1", "I prefer A"), record("s2", "I prefer B"),
                                       record("s3", "I prefer C")};
  SamplingConfig base = config(Method::prs, 8, 1, 21);

  auto rows = sweep_depth(prompts, base, {1, 2, 4}, f.env);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].depth == 1);
  CHECK(rows[0].width == 8);
  CHECK(rows[1].width == 4);
  CHECK(rows[2].width == 2);
  for (const auto& row : rows) CHECK(!row.failed);

  // the depth-1 cell is exactly the preference baseline, aggregated
  double best_sum = 0.0, top3_sum = 0.0;
  for (const PromptRecord& p : prompts) {
    SamplingConfig cfg = base;
    cfg.depth = 1;
    SampleTree t = run_prand(p, cfg, f.env);
    best_sum += *bon_select(t).reward;
    top3_sum += top_k_mean(flatten(t), 3);
  }
  CHECK(rows[0].mean_best == best_sum / 3.0);
  CHECK(rows[0].mean_top3 == top3_sum / 3.0);

  // depth outside the budget is rejected up front
  try {
    sweep_depth(prompts, base, {16}, f.env);
    FAIL("expected usage error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()) == "sweep depth 16 is outside 1..8 (budget 8)");
  }

  // a backend dying mid-sweep marks that cell, not the whole sweep
  MockLandscapeConfig dying;
  dying.fail_after = 8;  // exactly the depth-1 cell's generation budget
  Fixture g(dying);
  auto partial = sweep_depth({prompts[0]}, base, {1, 2}, g.env);
  REQUIRE(partial.size() == 2);
  CHECK(!partial[0].failed);
  CHECK(partial[1].failed);
  std::string csv = sweep_csv(partial);
  CHECK(csv.rfind("depth,width,mean_best,mean_top3\n", 0) == 0);
  CHECK(csv.find("2,4,nan,nan\n") != std::string::npos);
}

TEST_CASE("format_double prints shortest round-trip forms") {
  CHECK(format_double(0.5) == "0.5");
  CHECK(format_double(-3.0) == "-3");
  CHECK(format_double(std::numeric_limits<double>::quiet_NaN()) == "nan");
  double v = 0.1 + 0.2;
  CHECK(std::stod(format_double(v)) == v);
}

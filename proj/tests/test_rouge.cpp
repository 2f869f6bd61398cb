#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

#include "prs/hash.hpp"
#include "prs/rouge.hpp"

using namespace prs;

TEST_CASE("tokenization lowercases, strips ASCII punctuation, splits on whitespace") {
  CHECK(rouge_tokenize("The  CAT, was: found!") == std::vector<std::string>{"the", "cat", "was", "found"});
  CHECK(rouge_tokenize("  \t\n ") == std::vector<std::string>{});
  CHECK(rouge_tokenize("don't-stop") == std::vector<std::string>{"dontstop"});
  CHECK(rouge_tokenize("a1 b2!c3") == std::vector<std::string>{"a1", "b2c3"});
}

TEST_CASE("identical texts score 1 and disjoint texts score 0") {
  CHECK(rouge_reward("The quick brown fox.", "the quick brown fox") == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(rouge_reward("alpha beta gamma", "delta epsilon zeta") == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(rouge_reward("", "anything at all") == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(rouge_reward("", "") == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("worked example: near-paraphrase scores 12/13") {
  // hand-computed: R1 F1 = 12/13, R2 F1 = 8/11, RL F1 = 12/13
  const std::string cand = "the cat was found under the bed";
  const std::string ref = "the cat was under the bed";
  CHECK(rouge_ngram_f1(cand, ref, 1) == doctest::Approx(12.0 / 13.0).epsilon(1e-9));
  double r1 = 12.0 / 13.0;
  double r2 = 2.0 * (4.0 / 6.0) * (4.0 / 5.0) / ((4.0 / 6.0) + (4.0 / 5.0));
  double rl = 12.0 / 13.0;
  CHECK(rouge_reward(cand, ref) == doctest::Approx((r1 + r2 + rl) / 3.0).epsilon(1e-9));
}

TEST_CASE("clipping stops repeated tokens from inflating overlap") {
  // candidate repeats "the" 4x; reference has it twice -> clipped to 2
  double score = rouge_reward("the the the the", "the cat the");
  // R1: P = 2/4, R = 2/3, F1 = 2*(1/2)*(2/3)/(1/2+2/3) = 4/7
  // R2: bigram "the the" appears 3x in cand, 0x in ref -> 0
  // RL: LCS("the the the the","the cat the") = 2 -> F1 = 2*(2/4)*(2/3)/(2/4+2/3) = 4/7
  CHECK(score == doctest::Approx((4.0 / 7.0 + 0.0 + 4.0 / 7.0) / 3.0).epsilon(1e-12));
}

TEST_CASE("scores are symmetric and bounded on randomized pairs") {
  SplitMix64 rng(99);
  std::vector<std::string> words = {"alpha", "beta", "gamma", "delta", "epsilon", "zeta", "eta", "theta"};
  for (int trial = 0; trial < 500; ++trial) {
    auto draw = [&](int len) {
      std::string s;
      for (int i = 0; i < len; ++i) {
        if (i) s += ' ';
        s += words[static_cast<std::size_t>(rng.next() % words.size())];
      }
      return s;
    };
    std::string a = draw(1 + static_cast<int>(rng.next() % 12));
    std::string b = draw(1 + static_cast<int>(rng.next() % 12));
    double ab = rouge_reward(a, b);
    double ba = rouge_reward(b, a);
    CHECK(ab == ba);
    CHECK(ab >= 0.0);
    CHECK(ab <= 1.0);
  }
}

TEST_CASE("the reward backend requires a reference text") {
  RougeRewardBackend backend;
  CHECK(backend.score("summarize", std::nullopt, "the cat sat", std::string("the cat sat")) ==
        doctest::Approx(1.0).epsilon(1e-12));
  try {
    backend.score("summarize", std::nullopt, "the cat sat", std::nullopt);
    FAIL("expected data error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::data);
    CHECK(std::string(e.what()).find("reference") != std::string::npos);
  }
}

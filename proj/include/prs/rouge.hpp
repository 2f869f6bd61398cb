#pragma once

#include <optional>
#include <string>
#include <vector>

#include "prs/backends.hpp"

namespace prs {

// Mean of ROUGE-1, ROUGE-2, and ROUGE-L F1 over lowercased,
// whitespace-tokenized text with ASCII punctuation removed. Clipped n-gram
// counts for ROUGE-1/2, longest common subsequence for ROUGE-L,
// F1 = 2PR/(P+R) with 0 when P+R = 0. Symmetric in its arguments and in
// [0, 1]; an empty side is a 0 score, not an error.
double rouge_reward(const std::string& candidate, const std::string& reference);

// Tokenization used by rouge_reward, exposed for verification.
std::vector<std::string> rouge_tokenize(const std::string& text);

// One ROUGE-N F1 component on its own (n >= 1), exposed for verification.
double rouge_ngram_f1(const std::string& candidate, const std::string& reference, int n);

// Scores the response against the record's reference text.
class RougeRewardBackend final : public RewardBackend {
 public:
  double score(const std::string& instruction, const std::optional<std::string>& preference,
               const std::string& response, const std::optional<std::string>& reference) override;
};

}  // namespace prs

#include "prs/rouge.hpp"

#include <algorithm>
#include <cctype>
#include <map>

namespace prs {

std::vector<std::string> rouge_tokenize(const std::string& text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      if (!cur.empty()) {
        tokens.push_back(cur);
        cur.clear();
      }
    } else if (!std::ispunct(c)) {
      cur += static_cast<char>(std::tolower(c));
    }
  }
  if (!cur.empty()) tokens.push_back(cur);
  return tokens;
}

namespace {

double f1(double overlap, std::size_t cand_total, std::size_t ref_total) {
  if (cand_total == 0 || ref_total == 0) return 0.0;
  double p = overlap / static_cast<double>(cand_total);
  double r = overlap / static_cast<double>(ref_total);
  if (p + r == 0.0) return 0.0;
  return 2.0 * p * r / (p + r);
}

double ngram_f1(const std::vector<std::string>& cand, const std::vector<std::string>& ref, std::size_t n) {
  if (cand.size() < n || ref.size() < n) return 0.0;
  auto counts = [n](const std::vector<std::string>& toks) {
    std::map<std::vector<std::string>, long long> m;
    for (std::size_t i = 0; i + n <= toks.size(); ++i)
      ++m[std::vector<std::string>(toks.begin() + i, toks.begin() + i + n)];
    return m;
  };
  auto cc = counts(cand);
  auto rc = counts(ref);
  long long overlap = 0;  // clipped: each reference n-gram matches at most its count
  for (const auto& [gram, count] : cc) {
    auto it = rc.find(gram);
    if (it != rc.end()) overlap += std::min(count, it->second);
  }
  return f1(static_cast<double>(overlap), cand.size() - n + 1, ref.size() - n + 1);
}

double lcs_f1(const std::vector<std::string>& cand, const std::vector<std::string>& ref) {
  if (cand.empty() || ref.empty()) return 0.0;
  std::vector<long long> prev(ref.size() + 1, 0), cur(ref.size() + 1, 0);
  for (std::size_t i = 1; i <= cand.size(); ++i) {
    for (std::size_t j = 1; j <= ref.size(); ++j) {
      if (cand[i - 1] == ref[j - 1])
        cur[j] = prev[j - 1] + 1;
      else
        cur[j] = std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return f1(static_cast<double>(prev[ref.size()]), cand.size(), ref.size());
}

}  // namespace

double rouge_ngram_f1(const std::string& candidate, const std::string& reference, int n) {
  if (n < 1) throw usage_error("rouge n-gram order must be >= 1");
  return ngram_f1(rouge_tokenize(candidate), rouge_tokenize(reference), static_cast<std::size_t>(n));
}

double rouge_reward(const std::string& candidate, const std::string& reference) {
  std::vector<std::string> c = rouge_tokenize(candidate);
  std::vector<std::string> r = rouge_tokenize(reference);
  double r1 = ngram_f1(c, r, 1);
  double r2 = ngram_f1(c, r, 2);
  double rl = lcs_f1(c, r);
  return (r1 + r2 + rl) / 3.0;
}

double RougeRewardBackend::score(const std::string&, const std::optional<std::string>&,
                                 const std::string& response, const std::optional<std::string>& reference) {
  if (!reference) throw data_error("rouge reward requires a reference text on the prompt record");
  return rouge_reward(response, *reference);
}

}  // namespace prs

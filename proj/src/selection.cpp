#include "prs/selection.hpp"

#include <algorithm>

namespace prs {

namespace {

// Strict weak ordering: true when a should win over b.
bool wins(const Candidate& a, const Candidate& b) {
  if (*a.reward != *b.reward) return *a.reward > *b.reward;
  if (a.layer != b.layer) return a.layer < b.layer;
  if (a.index != b.index) return a.index < b.index;
  return a.id < b.id;
}

void require_scored(const Candidate& c) {
  if (!c.reward) throw data_error("unscored candidate '" + c.id + "'");
}

}  // namespace

const Candidate& select_best(const std::vector<const Candidate*>& candidates) {
  if (candidates.empty()) throw data_error("no candidates");
  const Candidate* best = nullptr;
  for (const Candidate* c : candidates) {
    require_scored(*c);
    if (!best || wins(*c, *best)) best = c;
  }
  return *best;
}

const Candidate& select_best(const std::vector<Candidate>& candidates) {
  std::vector<const Candidate*> view;
  view.reserve(candidates.size());
  for (const Candidate& c : candidates) view.push_back(&c);
  return select_best(view);
}

double top_k_mean(const std::vector<const Candidate*>& candidates, int k) {
  if (k < 1) throw usage_error("top_k_mean requires k >= 1");
  std::vector<double> rewards;
  rewards.reserve(candidates.size());
  for (const Candidate* c : candidates) {
    if (c->reward) rewards.push_back(*c->reward);
  }
  if (static_cast<int>(rewards.size()) < k)
    throw data_error("top_k_mean requires at least " + std::to_string(k) + " scored candidates, have " +
                     std::to_string(rewards.size()));
  std::partial_sort(rewards.begin(), rewards.begin() + k, rewards.end(), std::greater<double>());
  double sum = 0.0;
  for (int i = 0; i < k; ++i) sum += rewards[i];
  return sum / static_cast<double>(k);
}

double top_k_mean(const std::vector<Candidate>& candidates, int k) {
  std::vector<const Candidate*> view;
  view.reserve(candidates.size());
  for (const Candidate& c : candidates) view.push_back(&c);
  return top_k_mean(view, k);
}

}  // namespace prs

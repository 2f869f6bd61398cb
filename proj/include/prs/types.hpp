#pragma once

#include <atomic>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace prs {

// Error taxonomy. The kind maps 1:1 onto CLI exit codes and C-API status
// values: usage -> 1, backend -> 2, data -> 3.
enum class ErrorKind { usage, backend, data, internal };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline Error usage_error(const std::string& msg) { return Error(ErrorKind::usage, msg); }
inline Error backend_error(const std::string& msg) { return Error(ErrorKind::backend, msg); }
inline Error data_error(const std::string& msg) { return Error(ErrorKind::data, msg); }
inline Error internal_error(const std::string& msg) { return Error(ErrorKind::internal, msg); }

// Process exit code / C-API status value for an error kind. 4 (internal) is
// reserved for bugs and never expected in normal operation.
inline int exit_code(ErrorKind k) noexcept {
  switch (k) {
    case ErrorKind::usage: return 1;
    case ErrorKind::backend: return 2;
    case ErrorKind::data: return 3;
    case ErrorKind::internal: return 4;
  }
  return 4;
}

struct PromptRecord {
  std::string id;           // unique within a prompt file
  std::string instruction;  // non-empty
  std::optional<std::string> preference;
  std::optional<std::string> reference;  // gold answer for reference-based scoring
  std::map<std::string, std::string> meta;
};

struct DecodeParams {
  double temperature = 1.0;
  double top_p = 1.0;
  int max_tokens = 1024;
  std::optional<std::uint64_t> seed;  // samplers set this per generation call
};

struct Candidate {
  std::string id;  // deterministic from (run seed, prompt id, layer, index)
  std::string prompt_id;
  int layer = 0;
  // Ordinal within its layer. Not serialized; reconstructed from array order
  // on load. Second tie-break key of select_best.
  int index = 0;
  std::optional<std::string> parent_id;    // absent for layer-0 candidates
  std::optional<std::string> feedback_id;  // absent when generated without feedback
  std::string text;
  std::optional<double> reward;
  int gen_calls_used = 1;  // always 1
};

struct Feedback {
  std::string id;
  std::string prompt_id;
  std::string target_candidate_id;  // the candidate the feedback critiques
  std::string text;
};

// Call counters for one tree. Incremented by the sampling machinery per call
// purpose: response generation, feedback generation, scoring. Safe to bump
// from concurrent layer workers.
class BudgetLedger {
 public:
  BudgetLedger() = default;
  BudgetLedger(const BudgetLedger& o) { copy_from(o); }
  BudgetLedger& operator=(const BudgetLedger& o) {
    copy_from(o);
    return *this;
  }

  void count_generation(long long n = 1) noexcept { generation_.fetch_add(n, std::memory_order_relaxed); }
  void count_feedback(long long n = 1) noexcept { feedback_.fetch_add(n, std::memory_order_relaxed); }
  void count_reward(long long n = 1) noexcept { reward_.fetch_add(n, std::memory_order_relaxed); }

  long long generation_calls() const noexcept { return generation_.load(std::memory_order_relaxed); }
  long long feedback_calls() const noexcept { return feedback_.load(std::memory_order_relaxed); }
  long long reward_calls() const noexcept { return reward_.load(std::memory_order_relaxed); }

 private:
  void copy_from(const BudgetLedger& o) {
    generation_.store(o.generation_calls(), std::memory_order_relaxed);
    feedback_.store(o.feedback_calls(), std::memory_order_relaxed);
    reward_.store(o.reward_calls(), std::memory_order_relaxed);
  }

  std::atomic<long long> generation_{0};
  std::atomic<long long> feedback_{0};
  std::atomic<long long> reward_{0};
};

struct Layer {
  int index = 0;
  std::optional<Feedback> feedback;  // the feedback used to generate this layer
  std::vector<Candidate> candidates;
};

struct SampleTree {
  PromptRecord prompt;
  std::vector<Layer> layers;
  BudgetLedger ledger;
};

enum class Method { rand, prand, greedy, prs };

Method method_from_string(const std::string& s);
std::string to_string(Method m);

struct SamplingConfig {
  Method method = Method::prs;
  int total_n = 1;  // >= 1; refinements share this budget, feedback does not
  int depth = 1;    // >= 1
  std::optional<std::vector<int>> width_schedule;  // default: derived from (total_n, depth)
  bool use_feedback = true;
  bool use_preference = true;
  bool reward_sees_preference = false;  // R(x,z,y) when set, R(x,y) otherwise
  DecodeParams decode;
  std::uint64_t seed = 0;
};

// Flat view over all candidates of a tree, in (layer, index) order.
std::vector<const Candidate*> flatten(const SampleTree& tree);

// Structural checks: layer/candidate indexes match positions, parent and
// feedback links resolve to earlier layers, ids are unique. Throws data_error.
void validate_tree(const SampleTree& tree);

// Checks that every layer l >= 1 is conditioned on the argmax over layers
// 0..l-1. Holds for trees produced by run_prs and run_greedy.
void verify_parent_monotonicity(const SampleTree& tree);

}  // namespace prs

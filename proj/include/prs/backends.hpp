#pragma once

#include <optional>
#include <string>

#include "prs/types.hpp"

namespace prs {

enum class ContextKind { initial, feedback, refine_with_feedback, refine_without_feedback, annotate_preference };

std::string to_string(ContextKind k);

struct AssembledPrompt {
  std::optional<std::string> system;
  std::string user;
  ContextKind context_kind = ContextKind::initial;
};

struct GenerationUsage {
  long long prompt_tokens = 0;
  long long completion_tokens = 0;
  int attempts = 1;  // wire attempts including retries; 1 for local backends
};

struct GenerationResult {
  std::string text;
  GenerationUsage usage;
};

// One sampled continuation per call. Implementations must be thread-safe and
// honor decode.seed where the underlying engine supports it.
class GenerationBackend {
 public:
  virtual ~GenerationBackend() = default;
  virtual GenerationResult generate(const AssembledPrompt& prompt, const DecodeParams& decode) = 0;
};

// Pure scorer: same inputs, same score. Thread-safe.
class RewardBackend {
 public:
  virtual ~RewardBackend() = default;
  virtual double score(const std::string& instruction, const std::optional<std::string>& preference,
                       const std::string& response, const std::optional<std::string>& reference) = 0;
};

struct ScoreInputs {
  std::string instruction;
  std::string response;
};

// Builds the inputs a reward backend scores. With the flag set and a
// preference present, the preference is appended to the instruction after a
// blank line; otherwise the preference is dropped from scoring entirely.
// Generation-side conditioning never leaks into scoring except through this.
ScoreInputs reward_context(const std::string& instruction, const std::optional<std::string>& preference,
                           const std::string& response, bool reward_sees_preference);

}  // namespace prs

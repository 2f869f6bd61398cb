#pragma once

#include <atomic>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "prs/backends.hpp"

namespace prs {

// Synthetic generation/reward pair over numeric vectors with a hidden target,
// for deterministic verification of exploration/exploitation behavior.
struct MockLandscapeConfig {
  int dim = 8;                 // >= 1
  double sigma0 = 1.0;         // initial-draw spread, > 0
  double sigma1 = 0.25;        // refinement spread, > 0
  double feedback_gain = 0.0;  // >= 0; how far a refinement moves along the hint
  std::uint64_t seed = 0;
  // Testing aid: generation calls beyond this count throw a backend error,
  // simulating a backend dying mid-run. Negative disables.
  long long fail_after = -1;
};

// "v:[a1,...,ak]" with 9 decimal digits.
std::string encode_vector(const std::vector<double>& v);

// All "v:[...]" occurrences in text, in order.
std::vector<std::vector<double>> find_vectors(const std::string& text);

class MockBackend final : public GenerationBackend, public RewardBackend {
 public:
  explicit MockBackend(const MockLandscapeConfig& cfg);

  // initial / annotate_preference -> fresh draw around the origin (sigma0);
  // refine_* -> draw around the parent, shifted feedback_gain along the hint
  // when one is present (sigma1); feedback -> the unit direction from parent
  // to target (zero vector when feedback_gain is 0). Deterministic in
  // (cfg.seed, decode.seed, prompt bytes); thread-safe because each call's
  // randomness is derived from those alone.
  GenerationResult generate(const AssembledPrompt& prompt, const DecodeParams& decode) override;

  // -(||v - target||^2); <= 0, equality only when the response hits the
  // target exactly. Instruction, preference and reference are ignored.
  double score(const std::string& instruction, const std::optional<std::string>& preference,
               const std::string& response, const std::optional<std::string>& reference) override;

  // Verification hook.
  const std::vector<double>& target() const noexcept { return target_; }
  const std::vector<std::string>& warnings() const noexcept { return warnings_; }

 private:
  MockLandscapeConfig cfg_;
  std::vector<double> target_;
  std::vector<std::string> warnings_;
  std::atomic<long long> generation_count_{0};
};

}  // namespace prs

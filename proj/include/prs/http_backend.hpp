#pragma once

#include <memory>
#include <optional>
#include <string>

#include "prs/backends.hpp"

namespace prs {

// Wire-client settings shared by the generation and reward endpoints.
// retries counts re-sends after the first attempt, so retries=4 allows five
// attempts total. Backoff doubles from base_delay_ms with uniform jitter.
struct HttpEndpointConfig {
  std::string endpoint;  // http[s]://host[:port][/path-prefix]
  std::string model;
  std::string api_token;  // empty → no Authorization header
  int max_retries = 4;
  int base_delay_ms = 250;
  int timeout_ms = 60000;
  int max_concurrency = 8;
};

// Chat-completion client: POST <prefix>/v1/chat/completions with
// {model, messages, temperature, top_p, max_tokens, seed?}; the completion
// is read from choices[0].message.content. 429/5xx/transport failures are
// retried with exponential backoff; other 4xx fail fast with status + body.
class HttpGenerationBackend : public GenerationBackend {
 public:
  explicit HttpGenerationBackend(HttpEndpointConfig cfg);
  ~HttpGenerationBackend() override;
  GenerationResult generate(const AssembledPrompt& prompt, const DecodeParams& decode) override;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Scoring client: POST <prefix>/v1/score with
// {instruction, preference?, response, reference?} → {"score": real}.
// Same retry policy as generation.
class HttpRewardBackend : public RewardBackend {
 public:
  explicit HttpRewardBackend(HttpEndpointConfig cfg);
  ~HttpRewardBackend() override;
  double score(const std::string& instruction, const std::optional<std::string>& preference,
               const std::string& response, const std::optional<std::string>& reference) override;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Reads the auth token from the PRS_API_TOKEN environment variable ("" when
// unset).
std::string api_token_from_env();

}  // namespace prs

#pragma once

#include <string>

#include "prs/json_io.hpp"
#include "prs/types.hpp"

namespace prs {

inline constexpr const char* kArtifactVersion = "0.1.0";

// Everything needed to reproduce a run: resolved sampling config, backend
// identities, and content digests of the template set and prompt file. With
// the mock backend the manifest pins the run bit-exactly.
struct RunManifest {
  std::string artifact_version = kArtifactVersion;
  std::string created_at;  // ISO-8601 UTC; excluded from the digest
  std::uint64_t seed = 0;
  SamplingConfig config;
  json generation_backend;  // {"kind": "mock"|"http", ...identity fields}
  json reward_backend;
  std::string templates_digest;
  std::string prompts_digest;
};

json to_json(const RunManifest& m);
RunManifest manifest_from_json(const json& j);

// Content hash over every field except created_at; two runs with equal
// digests are resumable into each other.
std::string manifest_digest(const RunManifest& m);

std::string iso8601_utc_now();

// Hex content hash of raw bytes (used for prompt-file digests).
std::string content_digest(const std::string& bytes);

}  // namespace prs

#include "prs/manifest.hpp"

#include <cstdio>
#include <ctime>

#include "prs/hash.hpp"

namespace prs {

json to_json(const RunManifest& m) {
  json j;
  j["artifact_version"] = m.artifact_version;
  j["created_at"] = m.created_at;
  j["seed"] = m.seed;
  j["config"] = to_json(m.config);
  j["generation_backend"] = m.generation_backend;
  j["reward_backend"] = m.reward_backend;
  j["templates_digest"] = m.templates_digest;
  j["prompts_digest"] = m.prompts_digest;
  return j;
}

RunManifest manifest_from_json(const json& j) {
  expect_object(j, "manifest");
  reject_unknown(j,
                 {"artifact_version", "created_at", "seed", "config", "generation_backend", "reward_backend",
                  "templates_digest", "prompts_digest"},
                 "manifest");
  RunManifest m;
  m.artifact_version = require_string(j, "artifact_version", "manifest");
  m.created_at = require_string(j, "created_at", "manifest");
  m.seed = static_cast<std::uint64_t>(require_int(j, "seed", "manifest"));
  m.config = sampling_config_from_json(require(j, "config", "manifest"));
  m.generation_backend = require(j, "generation_backend", "manifest");
  m.reward_backend = require(j, "reward_backend", "manifest");
  if (!m.generation_backend.is_object() || !m.reward_backend.is_object()) {
    throw data_error("manifest backend identities must be objects");
  }
  m.templates_digest = require_string(j, "templates_digest", "manifest");
  m.prompts_digest = require_string(j, "prompts_digest", "manifest");
  return m;
}

std::string manifest_digest(const RunManifest& m) {
  json j = to_json(m);
  j.erase("created_at");
  return content_digest(j.dump());
}

std::string iso8601_utc_now() {
  std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[80];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02dZ", tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday,
                tm.tm_hour, tm.tm_min, tm.tm_sec);
  return buf;
}

std::string content_digest(const std::string& bytes) {
  Fnv1a64 h;
  h.update_u64(bytes.size());
  h.update(bytes);
  return hex64(h.digest());
}

}  // namespace prs

#include "prs/http_backend.hpp"

#include <chrono>
#include <cstdlib>
#include <mutex>
#include <random>
#include <semaphore>
#include <thread>

#include <httplib.h>

#include "prs/hash.hpp"
#include "prs/json_io.hpp"

namespace prs {
namespace {

struct ParsedEndpoint {
  std::string scheme_host_port;  // what httplib::Client takes
  std::string path_prefix;       // "" or "/prefix" with no trailing slash
};

ParsedEndpoint parse_endpoint(const std::string& url) {
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw usage_error("endpoint '" + url + "' must start with http:// or https://");
  }
  std::string scheme = url.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https") {
    throw usage_error("endpoint '" + url + "' has unsupported scheme '" + scheme + "'");
  }
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
  if (scheme == "https") throw usage_error("this build lacks TLS support; use an http:// endpoint");
#endif
  auto path_start = url.find('/', scheme_end + 3);
  ParsedEndpoint out;
  if (path_start == std::string::npos) {
    out.scheme_host_port = url;
  } else {
    out.scheme_host_port = url.substr(0, path_start);
    out.path_prefix = url.substr(path_start);
    while (!out.path_prefix.empty() && out.path_prefix.back() == '/') out.path_prefix.pop_back();
  }
  if (out.scheme_host_port.size() <= scheme_end + 3) {
    throw usage_error("endpoint '" + url + "' is missing a host");
  }
  return out;
}

// Shared request machinery: client + retry loop + concurrency cap.
struct Wire {
  HttpEndpointConfig cfg;
  ParsedEndpoint parsed;
  httplib::Client client;
  std::counting_semaphore<> slots;
  std::mutex jitter_mu;
  SplitMix64 jitter;

  explicit Wire(HttpEndpointConfig c)
      : cfg(std::move(c)),
        parsed(parse_endpoint(cfg.endpoint)),
        client(parsed.scheme_host_port),
        slots(std::max(1, cfg.max_concurrency)),
        jitter(fnv1a64(cfg.endpoint)) {
    if (cfg.max_retries < 0) throw usage_error("max_retries must be >= 0");
    if (cfg.timeout_ms < 1) throw usage_error("timeout_ms must be >= 1");
    client.set_connection_timeout(std::chrono::milliseconds(cfg.timeout_ms));
    client.set_read_timeout(std::chrono::milliseconds(cfg.timeout_ms));
    client.set_write_timeout(std::chrono::milliseconds(cfg.timeout_ms));
    client.set_keep_alive(true);
  }

  static bool retryable_status(int status) { return status == 429 || (status >= 500 && status <= 599); }

  std::chrono::milliseconds backoff_delay(int attempt) {
    // base * 2^attempt plus up to one extra base of jitter
    double base = static_cast<double>(std::max(1, cfg.base_delay_ms));
    double delay = base * static_cast<double>(1LL << std::min(attempt, 20));
    double extra;
    {
      std::lock_guard<std::mutex> lock(jitter_mu);
      extra = jitter.next_unit() * base;
    }
    return std::chrono::milliseconds(static_cast<long long>(delay + extra));
  }

  // POST body to path; retries transient failures. Returns (body, attempts).
  std::pair<std::string, int> post_json(const std::string& path, const std::string& body) {
    httplib::Headers headers;
    if (!cfg.api_token.empty()) headers.emplace("Authorization", "Bearer " + cfg.api_token);
    std::string full_path = parsed.path_prefix + path;

    int attempts = 0;
    std::string last_failure;
    while (attempts <= cfg.max_retries) {
      ++attempts;
      httplib::Result res = [&] {
        std::counting_semaphore<>* gate = &slots;
        gate->acquire();
        struct Release {
          std::counting_semaphore<>* g;
          ~Release() { g->release(); }
        } release{gate};
        return client.Post(full_path, headers, body, "application/json");
      }();
      if (res) {
        if (res->status >= 200 && res->status < 300) return {res->body, attempts};
        if (!retryable_status(res->status)) {
          throw backend_error("endpoint returned HTTP " + std::to_string(res->status) + " for " + full_path + ": " +
                              res->body);
        }
        last_failure = "HTTP " + std::to_string(res->status);
      } else {
        last_failure = "transport error: " + httplib::to_string(res.error());
      }
      if (attempts <= cfg.max_retries) std::this_thread::sleep_for(backoff_delay(attempts - 1));
    }
    throw backend_error("backend unavailable: " + std::to_string(attempts) + " attempts to " + full_path +
                        " failed (last: " + last_failure + ")");
  }
};

json parse_response_body(const std::string& body, const std::string& what) {
  try {
    return json::parse(body);
  } catch (const std::exception& e) {
    throw backend_error(what + " response is not valid JSON: " + e.what());
  }
}

}  // namespace

std::string api_token_from_env() {
  const char* tok = std::getenv("PRS_API_TOKEN");
  return tok ? std::string(tok) : std::string();
}

struct HttpGenerationBackend::Impl {
  Wire wire;
  explicit Impl(HttpEndpointConfig cfg) : wire(std::move(cfg)) {}
};

HttpGenerationBackend::HttpGenerationBackend(HttpEndpointConfig cfg) : impl_(new Impl(std::move(cfg))) {
  if (impl_->wire.cfg.model.empty()) throw usage_error("http generation backend needs a model name");
}

HttpGenerationBackend::~HttpGenerationBackend() = default;

GenerationResult HttpGenerationBackend::generate(const AssembledPrompt& prompt, const DecodeParams& decode) {
  json req;
  req["model"] = impl_->wire.cfg.model;
  json messages = json::array();
  if (prompt.system) messages.push_back({{"role", "system"}, {"content", *prompt.system}});
  messages.push_back({{"role", "user"}, {"content", prompt.user}});
  req["messages"] = std::move(messages);
  req["temperature"] = decode.temperature;
  req["top_p"] = decode.top_p;
  req["max_tokens"] = decode.max_tokens;
  if (decode.seed) req["seed"] = *decode.seed;

  auto [body, attempts] = impl_->wire.post_json("/v1/chat/completions", req.dump());
  json res = parse_response_body(body, "chat completion");

  auto choices = res.find("choices");
  if (choices == res.end() || !choices->is_array() || choices->empty()) {
    throw backend_error("chat completion response has no choices");
  }
  const json& first = (*choices)[0];
  if (!first.contains("message") || !first["message"].contains("content") ||
      !first["message"]["content"].is_string()) {
    throw backend_error("chat completion response is missing choices[0].message.content");
  }

  GenerationResult out;
  out.text = first["message"]["content"].get<std::string>();
  out.usage.attempts = attempts;
  if (auto usage = res.find("usage"); usage != res.end() && usage->is_object()) {
    if (auto p = usage->find("prompt_tokens"); p != usage->end() && p->is_number_integer())
      out.usage.prompt_tokens = p->get<long long>();
    if (auto c = usage->find("completion_tokens"); c != usage->end() && c->is_number_integer())
      out.usage.completion_tokens = c->get<long long>();
  }
  return out;
}

struct HttpRewardBackend::Impl {
  Wire wire;
  explicit Impl(HttpEndpointConfig cfg) : wire(std::move(cfg)) {}
};

HttpRewardBackend::HttpRewardBackend(HttpEndpointConfig cfg) : impl_(new Impl(std::move(cfg))) {}

HttpRewardBackend::~HttpRewardBackend() = default;

double HttpRewardBackend::score(const std::string& instruction, const std::optional<std::string>& preference,
                                const std::string& response, const std::optional<std::string>& reference) {
  json req;
  req["instruction"] = instruction;
  if (preference) req["preference"] = *preference;
  req["response"] = response;
  if (reference) req["reference"] = *reference;

  auto [body, attempts] = impl_->wire.post_json("/v1/score", req.dump());
  (void)attempts;
  json res = parse_response_body(body, "score");
  auto it = res.find("score");
  if (it == res.end() || !it->is_number()) throw backend_error("score response is missing a numeric 'score'");
  return it->get<double>();
}

}  // namespace prs

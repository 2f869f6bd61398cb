#include "prs/mock_backend.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>

#include "prs/hash.hpp"

namespace prs {

std::string encode_vector(const std::vector<double>& v) {
  std::string out = "v:[";
  char buf[64];
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    std::snprintf(buf, sizeof(buf), "%.9f", v[i]);
    out += buf;
  }
  out += ']';
  return out;
}

std::vector<std::vector<double>> find_vectors(const std::string& text) {
  std::vector<std::vector<double>> out;
  std::size_t pos = 0;
  while ((pos = text.find("v:[", pos)) != std::string::npos) {
    std::size_t cur = pos + 3;
    std::vector<double> v;
    bool ok = true;
    while (true) {
      const char* start = text.c_str() + cur;
      char* end = nullptr;
      double val = std::strtod(start, &end);
      if (end == start) {
        ok = false;
        break;
      }
      v.push_back(val);
      cur += static_cast<std::size_t>(end - start);
      if (cur >= text.size()) {
        ok = false;
        break;
      }
      if (text[cur] == ',') {
        ++cur;
        continue;
      }
      if (text[cur] == ']') {
        ++cur;
        break;
      }
      ok = false;
      break;
    }
    if (ok && !v.empty()) {
      out.push_back(std::move(v));
      pos = cur;
    } else {
      pos += 3;
    }
  }
  return out;
}

MockBackend::MockBackend(const MockLandscapeConfig& cfg) : cfg_(cfg) {
  if (cfg_.dim < 1) throw usage_error("mock landscape dim must be >= 1");
  if (!(cfg_.sigma0 > 0.0)) throw usage_error("mock landscape sigma0 must be > 0");
  if (!(cfg_.sigma1 > 0.0)) throw usage_error("mock landscape sigma1 must be > 0");
  if (cfg_.feedback_gain < 0.0) throw usage_error("mock landscape feedback_gain must be >= 0");
  if (cfg_.sigma1 >= cfg_.sigma0) {
    std::string w = "mock landscape: sigma1 >= sigma0 makes refinement no tighter than exploration";
    warnings_.push_back(w);
    std::fprintf(stderr, "warning: %s\n", w.c_str());
  }
  Fnv1a64 h;
  h.update("mock-target");
  h.update_u64(cfg_.seed);
  GaussianStream g(h.digest());
  target_.resize(static_cast<std::size_t>(cfg_.dim));
  for (double& t : target_) t = g.next();
}

GenerationResult MockBackend::generate(const AssembledPrompt& prompt, const DecodeParams& decode) {
  long long n = generation_count_.fetch_add(1, std::memory_order_relaxed) + 1;
  if (cfg_.fail_after >= 0 && n > cfg_.fail_after)
    throw backend_error("mock backend failure injected after " + std::to_string(cfg_.fail_after) + " calls");

  // Per-call randomness keyed by (landscape seed, decode seed, prompt bytes,
  // context kind), so concurrency and call order cannot perturb results.
  Fnv1a64 h;
  h.update("mock-generate");
  h.update_u64(cfg_.seed);
  h.update_u64(decode.seed.has_value() ? 1 : 0);
  h.update_u64(decode.seed.value_or(0));
  h.update(to_string(prompt.context_kind));
  if (prompt.system) {
    h.update_u64(prompt.system->size());
    h.update(*prompt.system);
  }
  h.update_u64(prompt.user.size());
  h.update(prompt.user);
  GaussianStream g(h.digest());

  const std::size_t dim = static_cast<std::size_t>(cfg_.dim);
  std::vector<double> v(dim);
  switch (prompt.context_kind) {
    case ContextKind::initial:
    case ContextKind::annotate_preference: {
      for (double& x : v) x = cfg_.sigma0 * g.next();
      break;
    }
    case ContextKind::feedback: {
      auto vecs = find_vectors(prompt.user);
      if (vecs.empty() || vecs[0].size() != dim)
        throw data_error("malformed parent in feedback context");
      const std::vector<double>& parent = vecs[0];
      double norm = 0.0;
      for (std::size_t i = 0; i < dim; ++i) {
        v[i] = target_[i] - parent[i];
        norm += v[i] * v[i];
      }
      norm = std::sqrt(norm);
      if (cfg_.feedback_gain == 0.0 || norm == 0.0) {
        std::fill(v.begin(), v.end(), 0.0);
      } else {
        for (double& x : v) x /= norm;
      }
      break;
    }
    case ContextKind::refine_with_feedback:
    case ContextKind::refine_without_feedback: {
      auto vecs = find_vectors(prompt.user);
      if (vecs.empty() || vecs[0].size() != dim)
        throw data_error("malformed parent in refinement context");
      const std::vector<double>& parent = vecs[0];
      const std::vector<double>* hint = nullptr;
      if (prompt.context_kind == ContextKind::refine_with_feedback) {
        if (vecs.size() < 2 || vecs[1].size() != dim)
          throw data_error("malformed feedback hint in refinement context");
        hint = &vecs[1];
      }
      for (std::size_t i = 0; i < dim; ++i) {
        double center = parent[i] + (hint ? cfg_.feedback_gain * (*hint)[i] : 0.0);
        v[i] = center + cfg_.sigma1 * g.next();
      }
      break;
    }
  }

  GenerationResult result;
  result.text = encode_vector(v);
  result.usage.prompt_tokens = static_cast<long long>(prompt.user.size() / 4);
  result.usage.completion_tokens = static_cast<long long>(result.text.size() / 4);
  return result;
}

double MockBackend::score(const std::string&, const std::optional<std::string>&, const std::string& response,
                          const std::optional<std::string>&) {
  auto vecs = find_vectors(response);
  if (vecs.empty() || vecs[0].size() != target_.size())
    throw data_error("malformed response: expected a vector of length " + std::to_string(cfg_.dim));
  double d2 = 0.0;
  for (std::size_t i = 0; i < target_.size(); ++i) {
    double d = vecs[0][i] - target_[i];
    d2 += d * d;
  }
  return -d2;
}

}  // namespace prs

#include "prs.h"

#include <cstdlib>
#include <cstring>
#include <new>
#include <string>

#include "prs/json_io.hpp"
#include "prs/manifest.hpp"
#include "prs/rouge.hpp"
#include "prs/runner.hpp"

struct prs_run {
  prs::Runner runner;
  std::string last_error;
  explicit prs_run(prs::JobOptions opts) : runner(std::move(opts)) {}
};

namespace {

prs_status status_from(prs::ErrorKind kind) {
  switch (kind) {
    case prs::ErrorKind::usage: return PRS_ERR_USAGE;
    case prs::ErrorKind::backend: return PRS_ERR_BACKEND;
    case prs::ErrorKind::data: return PRS_ERR_DATA;
    case prs::ErrorKind::internal: return PRS_ERR_INTERNAL;
  }
  return PRS_ERR_INTERNAL;
}

void write_errbuf(char* errbuf, size_t errbuf_len, const std::string& msg) {
  if (errbuf == nullptr || errbuf_len == 0) return;
  size_t n = msg.size() < errbuf_len - 1 ? msg.size() : errbuf_len - 1;
  std::memcpy(errbuf, msg.data(), n);
  errbuf[n] = '\0';
}

char* malloc_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) return nullptr;
  std::memcpy(out, s.data(), s.size() + 1);
  return out;
}

// Runs a command body, translating exceptions into statuses + last_error.
template <typename Fn>
prs_status guarded(prs_run* run, Fn&& fn) {
  if (run == nullptr) return PRS_ERR_USAGE;
  run->last_error.clear();
  try {
    fn();
    return PRS_OK;
  } catch (const prs::Error& e) {
    run->last_error = e.what();
    return status_from(e.kind());
  } catch (const std::bad_alloc&) {
    run->last_error = "out of memory";
    return PRS_ERR_INTERNAL;
  } catch (const std::exception& e) {
    run->last_error = std::string("internal error: ") + e.what();
    return PRS_ERR_INTERNAL;
  }
}

}  // namespace

extern "C" {

const char* prs_version(void) { return prs::kArtifactVersion; }

const char* prs_status_name(prs_status status) {
  switch (status) {
    case PRS_OK: return "ok";
    case PRS_ERR_USAGE: return "usage_error";
    case PRS_ERR_BACKEND: return "backend_error";
    case PRS_ERR_DATA: return "data_error";
    case PRS_ERR_INTERNAL: return "internal_error";
  }
  return "unknown";
}

prs_run* prs_run_open(const char* config_json, prs_status* status, char* errbuf, size_t errbuf_len) {
  auto fail = [&](prs_status st, const std::string& msg) -> prs_run* {
    if (status != nullptr) *status = st;
    write_errbuf(errbuf, errbuf_len, msg);
    return nullptr;
  };
  if (config_json == nullptr) return fail(PRS_ERR_USAGE, "config_json must not be NULL");
  try {
    prs::json cfg = prs::json::parse(config_json);
    prs::JobOptions opts = prs::job_options_from_json(cfg);
    prs_run* run = new prs_run(std::move(opts));
    if (status != nullptr) *status = PRS_OK;
    write_errbuf(errbuf, errbuf_len, "");
    return run;
  } catch (const prs::Error& e) {
    return fail(status_from(e.kind()), e.what());
  } catch (const std::exception& e) {
    return fail(PRS_ERR_DATA, std::string("config is not valid JSON: ") + e.what());
  }
}

void prs_run_close(prs_run* run) { delete run; }

const char* prs_run_last_error(const prs_run* run) { return run == nullptr ? "" : run->last_error.c_str(); }

prs_status prs_run_sample(prs_run* run) {
  return guarded(run, [&] { run->runner.run_sample(); });
}

prs_status prs_run_compare(prs_run* run) {
  return guarded(run, [&] { run->runner.run_compare(); });
}

prs_status prs_run_sweep(prs_run* run) {
  return guarded(run, [&] { run->runner.run_sweep(); });
}

prs_status prs_run_build_dataset(prs_run* run) {
  return guarded(run, [&] { run->runner.run_build_dataset(); });
}

prs_status prs_run_annotate_preferences(prs_run* run) {
  return guarded(run, [&] { run->runner.run_annotate(); });
}

prs_status prs_run_stats(prs_run* run, const char* trees_path, char** metrics_json) {
  if (run == nullptr) return PRS_ERR_USAGE;
  if (trees_path == nullptr || metrics_json == nullptr) {
    run->last_error = "trees_path and metrics_json must not be NULL";
    return PRS_ERR_USAGE;
  }
  *metrics_json = nullptr;
  return guarded(run, [&] {
    prs::json metrics = run->runner.run_stats(trees_path);
    *metrics_json = malloc_string(metrics.dump(2));
    if (*metrics_json == nullptr) throw std::bad_alloc();
  });
}

prs_status prs_run_warnings(prs_run* run, char** warnings_json) {
  if (run == nullptr) return PRS_ERR_USAGE;
  if (warnings_json == nullptr) {
    run->last_error = "warnings_json must not be NULL";
    return PRS_ERR_USAGE;
  }
  *warnings_json = nullptr;
  return guarded(run, [&] {
    prs::json arr = prs::json::array();
    for (const std::string& w : run->runner.warnings()) arr.push_back(w);
    *warnings_json = malloc_string(arr.dump());
    if (*warnings_json == nullptr) throw std::bad_alloc();
  });
}

void prs_string_free(char* s) { std::free(s); }

prs_status prs_rouge_score(const char* candidate, const char* reference, double* score) {
  if (candidate == nullptr || reference == nullptr || score == nullptr) return PRS_ERR_USAGE;
  try {
    *score = prs::rouge_reward(candidate, reference);
    return PRS_OK;
  } catch (const std::exception&) {
    return PRS_ERR_INTERNAL;
  }
}

}  // extern "C"

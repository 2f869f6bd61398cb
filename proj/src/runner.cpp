#include "prs/runner.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <numeric>
#include <semaphore>
#include <set>
#include <unordered_map>

#include "prs/dataset.hpp"
#include "prs/hash.hpp"
#include "prs/rouge.hpp"
#include "prs/selection.hpp"

namespace fs = std::filesystem;

namespace prs {
namespace {

bool blank(const std::optional<std::string>& s) {
  if (!s) return true;
  return std::all_of(s->begin(), s->end(), [](unsigned char c) { return std::isspace(c) != 0; });
}

GenerationKind generation_kind_from_string(const std::string& s) {
  if (s == "http") return GenerationKind::http;
  if (s == "mock") return GenerationKind::mock;
  throw usage_error("unknown generation backend '" + s + "' (expected http or mock)");
}

RewardKind reward_kind_from_string(const std::string& s) {
  if (s == "http") return RewardKind::http;
  if (s == "mock") return RewardKind::mock;
  if (s == "rouge") return RewardKind::rouge;
  throw usage_error("unknown reward backend '" + s + "' (expected http, mock, or rouge)");
}

const char* to_string(GenerationKind k) { return k == GenerationKind::http ? "http" : "mock"; }

const char* to_string(RewardKind k) {
  switch (k) {
    case RewardKind::http: return "http";
    case RewardKind::mock: return "mock";
    case RewardKind::rouge: return "rouge";
  }
  return "?";
}

HttpEndpointConfig endpoint_from_json(const json& j, const char* what) {
  HttpEndpointConfig cfg;
  reject_unknown(j,
                 {"kind", "endpoint", "model", "api_token", "max_retries", "base_delay_ms", "timeout_ms",
                  "max_concurrency"},
                 what);
  if (j.contains("endpoint")) cfg.endpoint = require_string(j, "endpoint", what);
  if (j.contains("model")) cfg.model = require_string(j, "model", what);
  if (j.contains("api_token")) cfg.api_token = require_string(j, "api_token", what);
  if (j.contains("max_retries")) cfg.max_retries = static_cast<int>(require_int(j, "max_retries", what));
  if (j.contains("base_delay_ms")) cfg.base_delay_ms = static_cast<int>(require_int(j, "base_delay_ms", what));
  if (j.contains("timeout_ms")) cfg.timeout_ms = static_cast<int>(require_int(j, "timeout_ms", what));
  if (j.contains("max_concurrency")) cfg.max_concurrency = static_cast<int>(require_int(j, "max_concurrency", what));
  return cfg;
}

// Uniform index draw that does not depend on catalog load order beyond size.
std::size_t uniform_index(std::uint64_t seed, const std::string& domain, const std::string& key, std::size_t size) {
  Fnv1a64 h;
  h.update(domain);
  h.update_u64(seed);
  h.update_u64(key.size());
  h.update(key);
  SplitMix64 rng(h.digest());
  return static_cast<std::size_t>(rng.next() % static_cast<std::uint64_t>(size));
}

std::uint64_t derive_call_seed(const char* domain, std::uint64_t run_seed, const std::string& prompt_id) {
  Fnv1a64 h;
  h.update(domain);
  h.update_u64(run_seed);
  h.update_u64(prompt_id.size());
  h.update(prompt_id);
  return h.digest();
}

// Appended-during-run file holding one tree/record JSON line per completed
// unit, in completion order. A torn final line (crash mid-write) is dropped.
class PartialLog {
 public:
  PartialLog(std::string path, bool resume) : path_(std::move(path)) {
    if (!resume) {
      std::error_code ec;
      fs::remove(path_, ec);
    }
  }

  // Parses existing lines with `parse_id` (returns the unit id) and records
  // raw lines keyed by id. Returns a warning for a dropped torn tail, if any.
  std::optional<std::string> load(const std::function<std::string(const json&)>& parse_id) {
    std::error_code ec;
    if (!fs::exists(path_, ec)) return std::nullopt;
    std::string content = read_file(path_);
    std::size_t pos = 0;
    std::optional<std::string> warning;
    while (pos <= content.size()) {
      std::size_t end = content.find('\n', pos);
      bool has_newline = end != std::string::npos;
      if (!has_newline) end = content.size();
      std::string line = content.substr(pos, end - pos);
      if (!line.empty()) {
        try {
          json j = json::parse(line);
          lines_[parse_id(j)] = line;
        } catch (const Error&) {
          throw;
        } catch (const std::exception& e) {
          // Only an unterminated tail can be a torn write; our writer flushes
          // whole lines. Anything else is real corruption.
          if (!has_newline) {
            warning = "dropped torn final line of '" + path_ + "' (interrupted write)";
          } else {
            throw data_error(path_ + ": unreadable line in partial output: " + e.what());
          }
        }
      }
      if (end >= content.size()) break;
      pos = end + 1;
    }
    return warning;
  }

  bool has(const std::string& id) const { return lines_.count(id) != 0; }
  const std::string& line(const std::string& id) const { return lines_.at(id); }

  void append(const std::string& id, const std::string& line) {
    std::lock_guard<std::mutex> lock(mu_);
    std::ofstream out(path_, std::ios::binary | std::ios::app);
    if (!out) throw data_error("cannot append to '" + path_ + "'");
    out << line << '\n';
    out.flush();
    if (!out) throw data_error("short write to '" + path_ + "'");
    lines_[id] = line;
  }

  void remove_file() {
    std::error_code ec;
    fs::remove(path_, ec);
  }

 private:
  std::string path_;
  std::mutex mu_;
  std::unordered_map<std::string, std::string> lines_;
};

struct LayerStats {
  int layer = 0;
  long long count = 0;
  double mean = 0.0;
  double stddev = 0.0;
  double max = 0.0;
};

}  // namespace

JobOptions job_options_from_json(const json& j) {
  expect_object(j, "job options");
  reject_unknown(j,
                 {"sampling", "generation", "reward", "mock", "templates_dir", "prompts", "out", "parallelism",
                  "resume", "compare", "sweep", "dataset", "annotate"},
                 "job options");
  JobOptions o;
  if (j.contains("sampling")) o.sampling = sampling_config_from_json(j.at("sampling"));

  if (j.contains("generation")) {
    const json& g = j.at("generation");
    expect_object(g, "generation backend config");
    o.generation_kind = generation_kind_from_string(require_string(g, "kind", "generation backend config"));
    o.http = endpoint_from_json(g, "generation backend config");
  }
  if (j.contains("reward")) {
    const json& r = j.at("reward");
    expect_object(r, "reward backend config");
    o.reward_kind = reward_kind_from_string(require_string(r, "kind", "reward backend config"));
    o.reward_http = endpoint_from_json(r, "reward backend config");
  }
  if (o.reward_kind == RewardKind::http && o.reward_http.endpoint.empty()) {
    o.reward_http = o.http;  // default: score against the generation host
  }

  if (j.contains("mock")) {
    const json& m = j.at("mock");
    expect_object(m, "mock landscape config");
    reject_unknown(m, {"dim", "sigma0", "sigma1", "feedback_gain", "fail_after"}, "mock landscape config");
    if (m.contains("dim")) o.mock.dim = static_cast<int>(require_int(m, "dim", "mock landscape config"));
    if (m.contains("sigma0")) o.mock.sigma0 = require_number(m, "sigma0", "mock landscape config");
    if (m.contains("sigma1")) o.mock.sigma1 = require_number(m, "sigma1", "mock landscape config");
    if (m.contains("feedback_gain"))
      o.mock.feedback_gain = require_number(m, "feedback_gain", "mock landscape config");
    if (m.contains("fail_after")) o.mock.fail_after = require_int(m, "fail_after", "mock landscape config");
  }
  o.mock.seed = o.sampling.seed;  // one seed pins the whole run

  if (j.contains("templates_dir")) o.templates_dir = require_string(j, "templates_dir", "job options");
  if (j.contains("prompts")) o.prompts_path = require_string(j, "prompts", "job options");
  if (j.contains("out")) o.out_dir = require_string(j, "out", "job options");
  if (j.contains("parallelism")) o.parallelism = static_cast<int>(require_int(j, "parallelism", "job options"));
  if (o.parallelism < 1) throw usage_error("parallelism must be >= 1");
  if (auto it = j.find("resume"); it != j.end()) {
    if (!it->is_boolean()) throw data_error("job options field 'resume' must be a boolean");
    o.resume = it->get<bool>();
  }

  if (j.contains("compare")) {
    const json& c = j.at("compare");
    expect_object(c, "compare config");
    reject_unknown(c, {"methods"}, "compare config");
    const json& methods = require(c, "methods", "compare config");
    if (!methods.is_array()) throw data_error("compare config field 'methods' must be an array");
    for (const json& mj : methods) {
      JobOptions::CompareMethod cm;
      if (mj.is_string()) {
        cm.method = method_from_string(mj.get<std::string>());
      } else if (mj.is_object()) {
        reject_unknown(mj, {"method", "budget"}, "compare method");
        cm.method = method_from_string(require_string(mj, "method", "compare method"));
        if (mj.contains("budget")) cm.budget = static_cast<int>(require_int(mj, "budget", "compare method"));
      } else {
        throw data_error("compare methods must be strings or {method, budget} objects");
      }
      o.compare_methods.push_back(cm);
    }
  }

  if (j.contains("sweep")) {
    const json& s = j.at("sweep");
    expect_object(s, "sweep config");
    reject_unknown(s, {"depths"}, "sweep config");
    const json& depths = require(s, "depths", "sweep config");
    if (!depths.is_array()) throw data_error("sweep config field 'depths' must be an array");
    for (const json& d : depths) {
      if (!d.is_number_integer()) throw data_error("sweep depths must be integers");
      o.sweep_depths.push_back(d.get<int>());
    }
  }

  if (j.contains("dataset")) {
    const json& d = j.at("dataset");
    expect_object(d, "dataset config");
    reject_unknown(d, {"trees", "sft", "pairs", "force"}, "dataset config");
    const json& trees = require(d, "trees", "dataset config");
    if (!trees.is_array()) throw data_error("dataset config field 'trees' must be an array");
    for (const json& t : trees) {
      if (!t.is_string()) throw data_error("dataset tree entries must be file paths");
      o.dataset_tree_files.push_back(t.get<std::string>());
    }
    o.sft_path = optional_string(d, "sft", "dataset config");
    if (auto it = d.find("pairs"); it != d.end()) o.dataset_pairs = it->get<bool>();
    if (auto it = d.find("force"); it != d.end()) o.dataset_force = it->get<bool>();
  }

  if (j.contains("annotate")) {
    const json& a = j.at("annotate");
    expect_object(a, "annotate config");
    reject_unknown(a, {"professions", "revise"}, "annotate config");
    o.professions_path = optional_string(a, "professions", "annotate config");
    if (auto it = a.find("revise"); it != a.end()) o.annotate_revise = it->get<bool>();
  }

  return o;
}

struct Runner::State {
  TemplateSet templates;
  std::unique_ptr<MockBackend> mock;
  std::unique_ptr<HttpGenerationBackend> http_gen;
  std::unique_ptr<HttpRewardBackend> http_reward;
  std::unique_ptr<RougeRewardBackend> rouge;
  GenerationBackend* generation = nullptr;
  RewardBackend* reward = nullptr;
  json generation_identity;
  json reward_identity;
  std::vector<std::string> run_warnings;
};

Runner::Runner(JobOptions opts) : opts_(std::move(opts)), state_(new State) {
  state_->templates = opts_.templates_dir ? TemplateSet::load_dir(*opts_.templates_dir)
                                          : TemplateSet::builtin_defaults();

  bool needs_mock = opts_.generation_kind == GenerationKind::mock || opts_.reward_kind == RewardKind::mock;
  if (needs_mock) state_->mock = std::make_unique<MockBackend>(opts_.mock);

  json mock_identity;
  if (needs_mock) {
    // fail_after is a failure-injection knob, not part of the landscape
    // identity: it never changes the bytes of calls that succeed, and a
    // resumed run must be able to drop it.
    mock_identity["kind"] = "mock";
    mock_identity["dim"] = opts_.mock.dim;
    mock_identity["sigma0"] = opts_.mock.sigma0;
    mock_identity["sigma1"] = opts_.mock.sigma1;
    mock_identity["feedback_gain"] = opts_.mock.feedback_gain;
    mock_identity["seed"] = opts_.mock.seed;
  }

  if (opts_.generation_kind == GenerationKind::mock) {
    state_->generation = state_->mock.get();
    state_->generation_identity = mock_identity;
  } else {
    state_->http_gen = std::make_unique<HttpGenerationBackend>(opts_.http);
    state_->generation = state_->http_gen.get();
    state_->generation_identity = {{"kind", "http"}, {"endpoint", opts_.http.endpoint}, {"model", opts_.http.model}};
  }

  switch (opts_.reward_kind) {
    case RewardKind::mock:
      state_->reward = state_->mock.get();
      state_->reward_identity = mock_identity;
      break;
    case RewardKind::rouge:
      state_->rouge = std::make_unique<RougeRewardBackend>();
      state_->reward = state_->rouge.get();
      state_->reward_identity = {{"kind", "rouge"}};
      break;
    case RewardKind::http:
      state_->http_reward = std::make_unique<HttpRewardBackend>(opts_.reward_http);
      state_->reward = state_->http_reward.get();
      state_->reward_identity = {{"kind", "http"}, {"endpoint", opts_.reward_http.endpoint}};
      break;
  }
}

Runner::~Runner() = default;

std::vector<std::string> Runner::warnings() const {
  std::vector<std::string> out;
  if (state_->mock) out = state_->mock->warnings();
  out.insert(out.end(), state_->run_warnings.begin(), state_->run_warnings.end());
  return out;
}

namespace {

void require_out_dir(const JobOptions& o) {
  if (o.out_dir.empty()) throw usage_error("an output directory is required (--out)");
}

std::vector<PromptRecord> load_prompts(const JobOptions& o) {
  if (o.prompts_path.empty()) throw usage_error("a prompt file is required (--prompts)");
  return load_prompt_file(o.prompts_path);
}

// Fail before the first backend call, not on the unlucky prompt mid-run.
void check_method_inputs(Method method, const std::vector<PromptRecord>& prompts) {
  if (method != Method::prand) return;
  for (const PromptRecord& r : prompts) {
    if (blank(r.preference)) {
      throw usage_error("prand requires a preference on every prompt; prompt '" + r.id + "' has none");
    }
  }
}

void check_reward_inputs(RewardKind kind, const std::vector<PromptRecord>& prompts) {
  if (kind != RewardKind::rouge) return;
  for (const PromptRecord& r : prompts) {
    if (!r.reference || r.reference->empty()) {
      throw data_error("rouge reward requires a reference text on every prompt; prompt '" + r.id + "' has none");
    }
  }
}

struct Failure {
  std::string prompt_id;
  std::string error;
};

void write_failures(const std::string& path, const std::vector<Failure>& failures) {
  if (failures.empty()) {
    std::error_code ec;
    fs::remove(path, ec);
    return;
  }
  std::string lines;
  for (const Failure& f : failures) {
    json j;
    j["prompt_id"] = f.prompt_id;
    j["error"] = f.error;
    j["partial_tree"] = nullptr;  // trees are committed whole; nothing partial survives
    lines += j.dump();
    lines += '\n';
  }
  write_file_atomic(path, lines);
}

}  // namespace

void Runner::run_sample() {
  require_out_dir(opts_);
  std::vector<PromptRecord> prompts = load_prompts(opts_);
  check_method_inputs(opts_.sampling.method, prompts);
  check_reward_inputs(opts_.reward_kind, prompts);

  fs::create_directories(opts_.out_dir);
  std::string manifest_path = (fs::path(opts_.out_dir) / "manifest.json").string();
  std::string trees_path = (fs::path(opts_.out_dir) / "trees.jsonl").string();
  std::string partial_path = (fs::path(opts_.out_dir) / "trees.partial.jsonl").string();
  std::string failures_path = (fs::path(opts_.out_dir) / "failures.jsonl").string();

  RunManifest manifest;
  manifest.created_at = iso8601_utc_now();
  manifest.seed = opts_.sampling.seed;
  manifest.config = opts_.sampling;
  manifest.generation_backend = state_->generation_identity;
  manifest.reward_backend = state_->reward_identity;
  manifest.templates_digest = state_->templates.digest();
  manifest.prompts_digest = content_digest(read_file(opts_.prompts_path));

  if (opts_.resume && fs::exists(manifest_path)) {
    RunManifest existing = manifest_from_json(json::parse(read_file(manifest_path)));
    if (manifest_digest(existing) != manifest_digest(manifest)) {
      throw usage_error("resume mismatch: '" + manifest_path +
                        "' records different settings (manifest digest " + manifest_digest(existing) + " vs " +
                        manifest_digest(manifest) + "); use a clean output directory or matching flags");
    }
    manifest = existing;  // keep the original creation time
  } else {
    write_file_atomic(manifest_path, to_json(manifest).dump(2) + "\n");
  }

  PartialLog partial(partial_path, opts_.resume);
  if (opts_.resume) {
    // Finished runs count too: rerunning a complete job is a no-op.
    if (fs::exists(trees_path)) {
      for_each_jsonl_line(trees_path, [&](const json& j, std::size_t) {
        SampleTree t = tree_from_json(j);
        partial.append(t.prompt.id, j.dump());
      });
    }
    if (auto warning = partial.load([](const json& j) { return tree_from_json(j).prompt.id; })) {
      state_->run_warnings.push_back(*warning);  // torn tail after a hard kill; that prompt reruns
    }
  }

  std::counting_semaphore<> gate(opts_.parallelism);
  SamplerEnv env;
  env.templates = &state_->templates;
  env.generation = state_->generation;
  env.reward = state_->reward;
  env.parallelism = opts_.parallelism;
  env.call_gate = &gate;

  std::vector<int> todo;
  for (int i = 0; i < static_cast<int>(prompts.size()); ++i) {
    if (!partial.has(prompts[static_cast<std::size_t>(i)].id)) todo.push_back(i);
  }

  std::mutex failure_mu;
  std::vector<Failure> failures;
  for_each_slot(static_cast<int>(todo.size()), opts_.parallelism, [&](int slot) {
    const PromptRecord& record = prompts[static_cast<std::size_t>(todo[static_cast<std::size_t>(slot)])];
    try {
      SampleTree tree = run_method(record, opts_.sampling, env);
      partial.append(record.id, to_json(tree).dump());
    } catch (const Error& e) {
      std::lock_guard<std::mutex> lock(failure_mu);
      failures.push_back(Failure{record.id, e.what()});
    }
  });

  // Failures are keyed by prompt order so reruns produce identical files.
  std::unordered_map<std::string, std::size_t> rank;
  for (std::size_t i = 0; i < prompts.size(); ++i) rank[prompts[i].id] = i;
  std::sort(failures.begin(), failures.end(),
            [&](const Failure& a, const Failure& b) { return rank[a.prompt_id] < rank[b.prompt_id]; });
  write_failures(failures_path, failures);

  if (failures.empty()) {
    std::string out;
    for (const PromptRecord& record : prompts) {
      out += partial.line(record.id);
      out += '\n';
    }
    write_file_atomic(trees_path, out);
    partial.remove_file();
  } else {
    throw backend_error(std::to_string(failures.size()) + " of " + std::to_string(prompts.size()) +
                        " prompts failed; completed trees are in '" + partial_path + "', details in '" +
                        failures_path + "'; rerun with --resume after fixing the backend");
  }
}

void Runner::run_compare() {
  require_out_dir(opts_);
  if (opts_.compare_methods.size() < 2) throw usage_error("compare needs at least two methods");
  std::set<Method> seen;
  for (const auto& cm : opts_.compare_methods) {
    if (!seen.insert(cm.method).second) {
      throw usage_error("method '" + to_string(cm.method) + "' listed twice");
    }
    if (cm.budget && *cm.budget != opts_.sampling.total_n) {
      throw usage_error("unequal budgets: method '" + to_string(cm.method) + "' requests " +
                        std::to_string(*cm.budget) + " but the run budget is " + std::to_string(opts_.sampling.total_n));
    }
  }

  std::vector<PromptRecord> prompts = load_prompts(opts_);
  for (const auto& cm : opts_.compare_methods) check_method_inputs(cm.method, prompts);
  check_reward_inputs(opts_.reward_kind, prompts);

  std::counting_semaphore<> gate(opts_.parallelism);
  SamplerEnv env;
  env.templates = &state_->templates;
  env.generation = state_->generation;
  env.reward = state_->reward;
  env.parallelism = opts_.parallelism;
  env.call_gate = &gate;

  struct MethodResult {
    std::string name;
    std::vector<double> best;           // per prompt
    std::vector<double> top3;           // per prompt
    std::vector<double> all_rewards;    // every candidate
    double mean_best = 0.0;
    double mean_top3 = 0.0;
  };
  std::vector<MethodResult> results;

  for (const auto& cm : opts_.compare_methods) {
    SamplingConfig cfg = opts_.sampling;
    cfg.method = cm.method;
    MethodResult res;
    res.name = to_string(cm.method);
    res.best.resize(prompts.size());
    res.top3.resize(prompts.size());
    std::vector<std::vector<double>> rewards(prompts.size());
    for_each_slot(static_cast<int>(prompts.size()), opts_.parallelism, [&](int i) {
      auto u = static_cast<std::size_t>(i);
      SampleTree tree = run_method(prompts[u], cfg, env);
      res.best[u] = *bon_select(tree).reward;
      res.top3[u] = top_k_mean(flatten(tree), std::min(3, cfg.total_n));
      for (const Candidate* c : flatten(tree)) rewards[u].push_back(*c->reward);
    });
    for (auto& r : rewards) res.all_rewards.insert(res.all_rewards.end(), r.begin(), r.end());
    res.mean_best = std::accumulate(res.best.begin(), res.best.end(), 0.0) / static_cast<double>(prompts.size());
    res.mean_top3 = std::accumulate(res.top3.begin(), res.top3.end(), 0.0) / static_cast<double>(prompts.size());
    results.push_back(std::move(res));
  }

  // Shared histogram range so per-method distributions are comparable.
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (const auto& res : results) {
    for (double r : res.all_rewards) {
      lo = std::min(lo, r);
      hi = std::max(hi, r);
    }
  }
  constexpr int kBins = 20;

  json report;
  report["artifact_version"] = kArtifactVersion;
  report["seed"] = opts_.sampling.seed;
  report["total_n"] = opts_.sampling.total_n;
  report["prompt_count"] = prompts.size();
  report["histogram_lo"] = lo;
  report["histogram_hi"] = hi;
  report["histogram_bins"] = kBins;
  json methods = json::object();
  std::string csv = "method,mean_best,mean_top3\n";
  for (const auto& res : results) {
    json m;
    m["mean_best"] = res.mean_best;
    m["mean_top3"] = res.mean_top3;
    json per_prompt = json::array();
    for (std::size_t i = 0; i < prompts.size(); ++i) {
      per_prompt.push_back({{"prompt_id", prompts[i].id}, {"best", res.best[i]}, {"top3_mean", res.top3[i]}});
    }
    m["per_prompt"] = std::move(per_prompt);
    std::vector<long long> bins(kBins, 0);
    for (double r : res.all_rewards) {
      int b = 0;
      if (hi > lo) {
        b = static_cast<int>((r - lo) / (hi - lo) * kBins);
        b = std::clamp(b, 0, kBins - 1);
      }
      ++bins[static_cast<std::size_t>(b)];
    }
    m["histogram"] = bins;
    methods[res.name] = std::move(m);
    csv += res.name + "," + format_double(res.mean_best) + "," + format_double(res.mean_top3) + "\n";
  }
  report["methods"] = std::move(methods);

  fs::create_directories(opts_.out_dir);
  write_file_atomic((fs::path(opts_.out_dir) / "report.json").string(), report.dump(2) + "\n");
  write_file_atomic((fs::path(opts_.out_dir) / "report.csv").string(), csv);
}

void Runner::run_sweep() {
  require_out_dir(opts_);
  if (opts_.sweep_depths.empty()) throw usage_error("sweep needs at least one depth");
  std::vector<PromptRecord> prompts = load_prompts(opts_);
  check_reward_inputs(opts_.reward_kind, prompts);

  std::counting_semaphore<> gate(opts_.parallelism);
  SamplerEnv env;
  env.templates = &state_->templates;
  env.generation = state_->generation;
  env.reward = state_->reward;
  env.parallelism = opts_.parallelism;
  env.call_gate = &gate;

  std::vector<SweepRow> rows = sweep_depth(prompts, opts_.sampling, opts_.sweep_depths, env);
  fs::create_directories(opts_.out_dir);
  write_file_atomic((fs::path(opts_.out_dir) / "sweep.csv").string(), sweep_csv(rows));
}

void Runner::run_build_dataset() {
  require_out_dir(opts_);
  if (opts_.dataset_tree_files.empty()) throw usage_error("build-dataset needs at least one tree file");

  // Source compatibility: rewards are only mergeable when they were produced
  // against the same scoring world (backend identities + templates).
  std::vector<json> source_digests;
  std::optional<json> reference_identity;
  for (const std::string& file : opts_.dataset_tree_files) {
    fs::path manifest_path = fs::path(file).parent_path() / "manifest.json";
    if (!fs::exists(manifest_path)) {
      source_digests.emplace_back(nullptr);
      continue;
    }
    RunManifest m = manifest_from_json(json::parse(read_file(manifest_path.string())));
    source_digests.emplace_back(manifest_digest(m));
    json identity = {{"generation", m.generation_backend},
                     {"reward", m.reward_backend},
                     {"templates_digest", m.templates_digest}};
    if (!reference_identity) {
      reference_identity = identity;
    } else if (*reference_identity != identity && !opts_.dataset_force) {
      throw data_error("mixed manifests: '" + file +
                       "' was sampled against a different backend or template set than earlier inputs; pass --force "
                       "to merge anyway");
    }
  }

  std::vector<std::vector<TrainingRecord>> iterations;
  for (std::size_t i = 0; i < opts_.dataset_tree_files.size(); ++i) {
    const std::string& file = opts_.dataset_tree_files[i];
    std::vector<SampleTree> trees = load_tree_file(file);
    if (trees.empty()) throw data_error("tree file '" + file + "' is empty");
    if (opts_.dataset_pairs) {
      for (const SampleTree& t : trees) {
        if (t.layers.size() < 2) {
          throw data_error("tree '" + t.prompt.id + "' in '" + file +
                           "' has no refinement layer, but --pairs was requested");
        }
      }
    }
    iterations.push_back(build_iteration_dataset(trees, static_cast<int>(i) + 1));
  }

  std::optional<std::vector<TrainingRecord>> sft;
  if (opts_.sft_path) sft = load_sft_file(*opts_.sft_path);
  std::vector<TrainingRecord> merged = merge_iterations(iterations, sft ? &*sft : nullptr);

  json header;
  header["kind"] = "dataset_header";
  header["artifact_version"] = kArtifactVersion;
  header["iterations"] = iterations.size();
  header["pair_strategy"] = "per-refinement-step";  // one pair per layer transition, not only layer 0 -> 1
  header["source_manifest_digests"] = source_digests;
  std::string lines = header.dump();
  lines += '\n';
  for (const TrainingRecord& r : merged) {
    lines += to_json(r).dump();
    lines += '\n';
  }
  fs::create_directories(opts_.out_dir);
  write_file_atomic((fs::path(opts_.out_dir) / "merged.jsonl").string(), lines);
  emit_trainer_views(merged, opts_.out_dir);
}

void Runner::run_annotate() {
  require_out_dir(opts_);
  std::vector<PromptRecord> prompts = load_prompts(opts_);
  if (opts_.annotate_revise && !state_->templates.has_revision()) {
    throw usage_error("--revise requested but the template set has no revise_preference template");
  }
  std::vector<std::string> loaded_catalog;
  if (opts_.professions_path) loaded_catalog = load_catalog(*opts_.professions_path);
  const std::vector<std::string>& professions = opts_.professions_path ? loaded_catalog : builtin_professions();

  fs::create_directories(opts_.out_dir);
  std::string out_path = (fs::path(opts_.out_dir) / "annotated.jsonl").string();
  std::string partial_path = (fs::path(opts_.out_dir) / "annotated.partial.jsonl").string();
  std::string failures_path = (fs::path(opts_.out_dir) / "failures.jsonl").string();

  PartialLog partial(partial_path, opts_.resume);
  if (opts_.resume) {
    if (fs::exists(out_path)) {
      for_each_jsonl_line(out_path, [&](const json& j, std::size_t) {
        PromptRecord r = prompt_record_from_json(j);
        partial.append(r.id, j.dump());
      });
    }
    if (auto warning = partial.load([](const json& j) { return prompt_record_from_json(j).id; })) {
      state_->run_warnings.push_back(*warning);
    }
  }

  std::mutex failure_mu;
  std::vector<Failure> failures;
  std::vector<int> todo;
  for (int i = 0; i < static_cast<int>(prompts.size()); ++i) {
    if (!partial.has(prompts[static_cast<std::size_t>(i)].id)) todo.push_back(i);
  }

  for_each_slot(static_cast<int>(todo.size()), opts_.parallelism, [&](int slot) {
    PromptRecord record = prompts[static_cast<std::size_t>(todo[static_cast<std::size_t>(slot)])];
    try {
      if (blank(record.preference)) {
        const std::string& profession =
            professions[uniform_index(opts_.sampling.seed, "profession", record.id, professions.size())];
        AssembledPrompt prompt = state_->templates.assemble(ContextKind::annotate_preference, record, nullptr,
                                                            nullptr, /*use_preference=*/false, &profession);
        DecodeParams decode = opts_.sampling.decode;
        decode.seed = derive_call_seed("annotate", opts_.sampling.seed, record.id);
        std::string preference = state_->generation->generate(prompt, decode).text;
        if (opts_.annotate_revise) {
          AssembledPrompt revision = state_->templates.assemble_revision(preference);
          decode.seed = derive_call_seed("revise", opts_.sampling.seed, record.id);
          preference = state_->generation->generate(revision, decode).text;
        }
        record.preference = preference;
        record.meta["profession"] = profession;
      }
      partial.append(record.id, to_json(record).dump());
    } catch (const Error& e) {
      std::lock_guard<std::mutex> lock(failure_mu);
      failures.push_back(Failure{record.id, e.what()});
    }
  });

  std::sort(failures.begin(), failures.end(),
            [](const Failure& a, const Failure& b) { return a.prompt_id < b.prompt_id; });
  write_failures(failures_path, failures);

  if (failures.empty()) {
    std::string out;
    for (const PromptRecord& record : prompts) {
      out += partial.line(record.id);
      out += '\n';
    }
    write_file_atomic(out_path, out);
    partial.remove_file();
  } else {
    throw backend_error(std::to_string(failures.size()) + " of " + std::to_string(prompts.size()) +
                        " prompts failed to annotate; completed records are in '" + partial_path +
                        "', details in '" + failures_path + "'; rerun with --resume");
  }
}

json Runner::run_stats(const std::string& trees_path) const {
  std::vector<SampleTree> trees = load_tree_file(trees_path);
  if (trees.empty()) throw data_error("tree file '" + trees_path + "' is empty");

  long long gen_calls = 0, fb_calls = 0, reward_calls = 0;
  std::map<int, std::vector<double>> per_layer;
  long long with_refinements = 0;
  long long improved = 0;

  for (const SampleTree& t : trees) {
    gen_calls += t.ledger.generation_calls();
    fb_calls += t.ledger.feedback_calls();
    reward_calls += t.ledger.reward_calls();
    double layer0_best = -std::numeric_limits<double>::infinity();
    double refine_best = -std::numeric_limits<double>::infinity();
    for (const Layer& layer : t.layers) {
      for (const Candidate& c : layer.candidates) {
        if (!c.reward) throw data_error("unscored candidate '" + c.id + "' in '" + trees_path + "'");
        per_layer[layer.index].push_back(*c.reward);
        if (layer.index == 0) layer0_best = std::max(layer0_best, *c.reward);
        else refine_best = std::max(refine_best, *c.reward);
      }
    }
    if (t.layers.size() > 1) {
      ++with_refinements;
      if (refine_best > layer0_best) ++improved;
    }
  }

  json layers = json::array();
  for (const auto& [index, rewards] : per_layer) {
    double mean = std::accumulate(rewards.begin(), rewards.end(), 0.0) / static_cast<double>(rewards.size());
    double var = 0.0;
    for (double r : rewards) var += (r - mean) * (r - mean);
    var /= static_cast<double>(rewards.size());  // population variance
    json l;
    l["layer"] = index;
    l["candidates"] = rewards.size();
    l["mean"] = mean;
    l["std"] = std::sqrt(var);
    l["max"] = *std::max_element(rewards.begin(), rewards.end());
    layers.push_back(std::move(l));
  }

  json out;
  out["trees"] = trees.size();
  out["calls"] = {{"generation", gen_calls}, {"feedback", fb_calls}, {"reward", reward_calls}};
  out["layers"] = std::move(layers);
  json improvement;
  improvement["trees_with_refinements"] = with_refinements;
  improvement["improved"] = improved;
  improvement["rate"] =
      with_refinements > 0 ? static_cast<double>(improved) / static_cast<double>(with_refinements) : 0.0;
  out["improvement"] = std::move(improvement);
  json notes = json::array();
  if (with_refinements == 0) notes.push_back("no refinements");
  out["notes"] = std::move(notes);
  return out;
}

}  // namespace prs

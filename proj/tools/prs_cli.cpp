// Operator CLI. Builds a resolved-config JSON document from flags (and an
// optional --config file, flags winning) and drives the C API with it; this
// binary deliberately links only the public shared library.
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "prs.h"

namespace {

using json = nlohmann::ordered_json;

constexpr int kExitUsage = 1;

struct CommonFlags {
  // sampling
  std::string method;
  int n = 0;
  int depth = 0;
  std::string schedule;
  bool no_feedback = false;
  bool no_preference = false;
  bool reward_sees_preference = false;
  long long seed = -1;
  double temperature = -1.0;
  double top_p = -1.0;
  int max_tokens = 0;
  // backends
  std::string backend;
  std::string reward;
  std::string endpoint;
  std::string reward_endpoint;
  std::string model;
  int timeout_ms = 0;
  int max_retries = -1;
  int retry_base_ms = 0;
  int max_concurrency = 0;
  // mock landscape
  int mock_dim = 0;
  double mock_sigma0 = 0.0;
  double mock_sigma1 = 0.0;
  double mock_feedback_gain = -1.0;
  long long mock_fail_after = -2;
  // io
  std::string config_file;
  std::string templates_dir;
  std::string prompts;
  std::string out;
  int parallelism = 0;
  bool resume = false;
};

void add_common_flags(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config_file, "JSON config file; flags override its values");
  cmd->add_option("--method", f.method, "Sampling method: rand, prand, greedy, or prs");
  cmd->add_option("--n", f.n, "Total sampling budget per prompt");
  cmd->add_option("--depth", f.depth, "Tree depth (layers)");
  cmd->add_option("--schedule", f.schedule, "Explicit per-layer widths, e.g. \"6,5,5\" (overrides --depth split)");
  cmd->add_flag("--no-feedback", f.no_feedback, "Refine without generated feedback");
  cmd->add_flag("--no-preference", f.no_preference, "Drop preferences from generation prompts");
  cmd->add_flag("--reward-sees-preference", f.reward_sees_preference,
                "Append the preference to the instruction when scoring");
  cmd->add_option("--seed", f.seed, "Run seed; pins mock-backend runs bit-exactly");
  cmd->add_option("--temperature", f.temperature, "Decode temperature");
  cmd->add_option("--top-p", f.top_p, "Decode nucleus mass");
  cmd->add_option("--max-tokens", f.max_tokens, "Decode token cap");
  cmd->add_option("--backend", f.backend, "Generation backend: http or mock");
  cmd->add_option("--reward", f.reward, "Reward backend: http, mock, or rouge");
  cmd->add_option("--endpoint", f.endpoint, "Generation endpoint, e.g. http://host:8000");
  cmd->add_option("--reward-endpoint", f.reward_endpoint, "Scoring endpoint (defaults to --endpoint)");
  cmd->add_option("--model", f.model, "Model name sent in chat-completion requests");
  cmd->add_option("--timeout-ms", f.timeout_ms, "Per-request timeout");
  cmd->add_option("--max-retries", f.max_retries, "Retries after the first attempt (transient failures)");
  cmd->add_option("--retry-base-ms", f.retry_base_ms, "Exponential backoff base delay");
  cmd->add_option("--max-concurrency", f.max_concurrency, "Max in-flight requests per endpoint");
  cmd->add_option("--mock-dim", f.mock_dim, "Mock landscape dimension");
  cmd->add_option("--mock-sigma0", f.mock_sigma0, "Mock initial-draw spread");
  cmd->add_option("--mock-sigma1", f.mock_sigma1, "Mock refinement spread");
  cmd->add_option("--mock-feedback-gain", f.mock_feedback_gain, "Mock hint step size");
  cmd->add_option("--mock-fail-after", f.mock_fail_after,
                  "Testing aid: fail generation calls after this many (negative disables)");
  cmd->add_option("--templates", f.templates_dir, "Template directory (default: compiled-in set)");
  cmd->add_option("--prompts", f.prompts, "Prompt file (JSONL)");
  cmd->add_option("--out", f.out, "Output directory");
  cmd->add_option("--parallelism", f.parallelism, "Worker threads / max concurrent backend calls");
  cmd->add_flag("--resume", f.resume, "Skip prompts already completed in --out");
}

std::vector<int> parse_int_list(const std::string& s, const char* what) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      size_t used = 0;
      int v = std::stoi(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
      out.push_back(v);
    } catch (const std::exception&) {
      std::cerr << "error: " << what << " entry '" << item << "' is not an integer\n";
      std::exit(kExitUsage);
    }
  }
  if (out.empty()) {
    std::cerr << "error: " << what << " list is empty\n";
    std::exit(kExitUsage);
  }
  return out;
}

json load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    std::cerr << "error: cannot open config file '" << path << "'\n";
    std::exit(kExitUsage);
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    json j = json::parse(buf.str());
    if (!j.is_object()) throw std::runtime_error("top level must be an object");
    return j;
  } catch (const std::exception& e) {
    std::cerr << "error: config file '" << path << "' is not valid JSON: " << e.what() << "\n";
    std::exit(kExitUsage);
  }
}

// Folds flags over the config-file document. Only flags the user passed (or
// that the command requires) are written, so file values survive otherwise.
json build_config(const CLI::App* cmd, const CommonFlags& f) {
  json cfg = f.config_file.empty() ? json::object() : load_config_file(f.config_file);
  auto passed = [&](const std::string& name) { return cmd->count(name) > 0; };

  if (passed("--method")) cfg["sampling"]["method"] = f.method;
  if (passed("--n")) cfg["sampling"]["total_n"] = f.n;
  if (passed("--depth")) cfg["sampling"]["depth"] = f.depth;
  if (passed("--schedule")) {
    std::vector<int> widths = parse_int_list(f.schedule, "--schedule");
    cfg["sampling"]["width_schedule"] = widths;
    if (!passed("--depth")) cfg["sampling"]["depth"] = static_cast<int>(widths.size());
  }
  if (passed("--no-feedback")) cfg["sampling"]["use_feedback"] = false;
  if (passed("--no-preference")) cfg["sampling"]["use_preference"] = false;
  if (passed("--reward-sees-preference")) cfg["sampling"]["reward_sees_preference"] = true;
  if (passed("--seed")) cfg["sampling"]["seed"] = f.seed;
  if (passed("--temperature")) cfg["sampling"]["decode"]["temperature"] = f.temperature;
  if (passed("--top-p")) cfg["sampling"]["decode"]["top_p"] = f.top_p;
  if (passed("--max-tokens")) cfg["sampling"]["decode"]["max_tokens"] = f.max_tokens;

  if (passed("--backend")) cfg["generation"]["kind"] = f.backend;
  if (!cfg.contains("generation") || !cfg["generation"].contains("kind")) cfg["generation"]["kind"] = "mock";
  if (passed("--endpoint")) cfg["generation"]["endpoint"] = f.endpoint;
  if (passed("--model")) cfg["generation"]["model"] = f.model;
  if (passed("--timeout-ms")) cfg["generation"]["timeout_ms"] = f.timeout_ms;
  if (passed("--max-retries")) cfg["generation"]["max_retries"] = f.max_retries;
  if (passed("--retry-base-ms")) cfg["generation"]["base_delay_ms"] = f.retry_base_ms;
  if (passed("--max-concurrency")) cfg["generation"]["max_concurrency"] = f.max_concurrency;

  if (passed("--reward")) cfg["reward"]["kind"] = f.reward;
  if (!cfg.contains("reward") || !cfg["reward"].contains("kind")) cfg["reward"]["kind"] = "mock";
  if (passed("--reward-endpoint")) cfg["reward"]["endpoint"] = f.reward_endpoint;
  else if (passed("--endpoint") && cfg["reward"]["kind"] == "http" && !cfg["reward"].contains("endpoint"))
    cfg["reward"]["endpoint"] = f.endpoint;
  if (passed("--timeout-ms")) cfg["reward"]["timeout_ms"] = f.timeout_ms;
  if (passed("--max-retries")) cfg["reward"]["max_retries"] = f.max_retries;
  if (passed("--retry-base-ms")) cfg["reward"]["base_delay_ms"] = f.retry_base_ms;
  if (passed("--max-concurrency")) cfg["reward"]["max_concurrency"] = f.max_concurrency;

  // Auth comes from the environment so tokens stay out of config files.
  if (const char* token = std::getenv("PRS_API_TOKEN"); token != nullptr && token[0] != '\0') {
    if (cfg["generation"]["kind"] == "http") cfg["generation"]["api_token"] = token;
    if (cfg["reward"]["kind"] == "http") cfg["reward"]["api_token"] = token;
  }

  if (passed("--mock-dim")) cfg["mock"]["dim"] = f.mock_dim;
  if (passed("--mock-sigma0")) cfg["mock"]["sigma0"] = f.mock_sigma0;
  if (passed("--mock-sigma1")) cfg["mock"]["sigma1"] = f.mock_sigma1;
  if (passed("--mock-feedback-gain")) cfg["mock"]["feedback_gain"] = f.mock_feedback_gain;
  if (passed("--mock-fail-after")) cfg["mock"]["fail_after"] = f.mock_fail_after;

  if (passed("--templates")) cfg["templates_dir"] = f.templates_dir;
  if (passed("--prompts")) cfg["prompts"] = f.prompts;
  if (passed("--out")) cfg["out"] = f.out;
  if (passed("--parallelism")) cfg["parallelism"] = f.parallelism;
  if (passed("--resume")) cfg["resume"] = true;

  return cfg;
}

// Parses "prs" or "prs:32" compare-method entries.
json parse_compare_methods(const std::string& csv) {
  json methods = json::array();
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    auto colon = item.find(':');
    if (colon == std::string::npos) {
      methods.push_back(item);
    } else {
      std::string name = item.substr(0, colon);
      std::string budget = item.substr(colon + 1);
      try {
        size_t used = 0;
        int b = std::stoi(budget, &used);
        if (used != budget.size()) throw std::invalid_argument(budget);
        methods.push_back(json{{"method", name}, {"budget", b}});
      } catch (const std::exception&) {
        std::cerr << "error: method budget '" << budget << "' is not an integer\n";
        std::exit(kExitUsage);
      }
    }
  }
  if (methods.empty()) {
    std::cerr << "error: --methods list is empty\n";
    std::exit(kExitUsage);
  }
  return methods;
}

void print_warnings(prs_run* run) {
  char* warnings_json = nullptr;
  if (prs_run_warnings(run, &warnings_json) == PRS_OK && warnings_json != nullptr) {
    try {
      json arr = json::parse(warnings_json);
      for (const auto& w : arr) std::cerr << "warning: " << w.get<std::string>() << "\n";
    } catch (const std::exception&) {
      // warnings are best-effort; never fail a command over them
    }
  }
  prs_string_free(warnings_json);
}

int finish(prs_run* run, prs_status status, const char* command) {
  print_warnings(run);
  if (status != PRS_OK) {
    std::cerr << "error (" << prs_status_name(status) << "): " << prs_run_last_error(run) << "\n";
  } else {
    std::cerr << command << ": done\n";
  }
  prs_run_close(run);
  return static_cast<int>(status);
}

prs_run* open_or_die(const json& cfg) {
  char errbuf[4096];
  prs_status status = PRS_OK;
  prs_run* run = prs_run_open(cfg.dump().c_str(), &status, errbuf, sizeof(errbuf));
  if (run == nullptr) {
    std::cerr << "error (" << prs_status_name(status) << "): " << errbuf << "\n";
    std::exit(static_cast<int>(status));
  }
  return run;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{std::string("prs ") + prs_version() +
               " — reward-guided tree sampling over prompts, with baselines, dataset distillation, and a "
               "deterministic mock backend for verification"};
  app.require_subcommand(1);
  CommonFlags f;

  CLI::App* sample = app.add_subcommand("sample", "Sample one tree per prompt; writes trees.jsonl + manifest.json");
  add_common_flags(sample, f);

  CLI::App* compare = app.add_subcommand("compare", "Run several methods over one prompt set; writes report.json/csv");
  add_common_flags(compare, f);
  std::string methods_csv;
  compare->add_option("--methods", methods_csv, "Comma-separated methods, optional :budget each, e.g. rand,prs:32")
      ->required();

  CLI::App* sweep = app.add_subcommand("sweep", "Depth/width sweep at fixed budget; writes sweep.csv");
  add_common_flags(sweep, f);
  std::string depths_csv;
  sweep->add_option("--depths", depths_csv, "Comma-separated depths, e.g. 1,2,4")->required();

  CLI::App* build = app.add_subcommand("build-dataset", "Distill tree files into trainer-view JSONL files");
  add_common_flags(build, f);
  std::vector<std::string> tree_files;
  build->add_option("--trees", tree_files, "Tree files, one per iteration, in order")->required()->expected(-1);
  std::string sft_file;
  build->add_option("--sft", sft_file, "Seed supervised JSONL ({\"instruction\",\"response\"}) merged as iteration 0");
  bool pairs = false;
  build->add_flag("--pairs", pairs, "Require refinement layers in every input tree");
  bool force = false;
  build->add_flag("--force", force, "Merge inputs even when their source manifests differ");

  CLI::App* annotate = app.add_subcommand("annotate-preferences",
                                          "Generate a preference per prompt (profession drawn by seed)");
  add_common_flags(annotate, f);
  std::string professions_file;
  annotate->add_option("--professions", professions_file, "Profession catalog (default: compiled-in, 222 entries)");
  bool revise = false;
  annotate->add_flag("--revise", revise, "Second pass: rewrite each preference to be question-agnostic");

  CLI::App* stats = app.add_subcommand("stats", "Aggregate a tree file into metrics JSON on stdout");
  add_common_flags(stats, f);
  std::string trees_file;
  stats->add_option("--trees", trees_file, "Tree file to aggregate")->required();

  CLI11_PARSE(app, argc, argv);

  if (sample->parsed()) {
    prs_run* run = open_or_die(build_config(sample, f));
    return finish(run, prs_run_sample(run), "sample");
  }
  if (compare->parsed()) {
    json cfg = build_config(compare, f);
    cfg["compare"]["methods"] = parse_compare_methods(methods_csv);
    prs_run* run = open_or_die(cfg);
    return finish(run, prs_run_compare(run), "compare");
  }
  if (sweep->parsed()) {
    json cfg = build_config(sweep, f);
    cfg["sweep"]["depths"] = parse_int_list(depths_csv, "--depths");
    prs_run* run = open_or_die(cfg);
    return finish(run, prs_run_sweep(run), "sweep");
  }
  if (build->parsed()) {
    json cfg = build_config(build, f);
    cfg["dataset"]["trees"] = tree_files;
    if (!sft_file.empty()) cfg["dataset"]["sft"] = sft_file;
    if (pairs) cfg["dataset"]["pairs"] = true;
    if (force) cfg["dataset"]["force"] = true;
    prs_run* run = open_or_die(cfg);
    return finish(run, prs_run_build_dataset(run), "build-dataset");
  }
  if (annotate->parsed()) {
    json cfg = build_config(annotate, f);
    if (!professions_file.empty()) cfg["annotate"]["professions"] = professions_file;
    if (revise) cfg["annotate"]["revise"] = true;
    prs_run* run = open_or_die(cfg);
    return finish(run, prs_run_annotate_preferences(run), "annotate-preferences");
  }
  if (stats->parsed()) {
    prs_run* run = open_or_die(build_config(stats, f));
    char* metrics = nullptr;
    prs_status status = prs_run_stats(run, trees_file.c_str(), &metrics);
    if (status == PRS_OK && metrics != nullptr) {
      std::cout << metrics << "\n";
      if (stats->count("--out") > 0) {
        std::filesystem::create_directories(f.out);
        std::ofstream out(std::filesystem::path(f.out) / "metrics.json", std::ios::binary | std::ios::trunc);
        out << metrics << "\n";
      }
    }
    prs_string_free(metrics);
    return finish(run, status, "stats");
  }
  return kExitUsage;
}

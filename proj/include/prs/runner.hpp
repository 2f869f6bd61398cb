#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "prs/http_backend.hpp"
#include "prs/json_io.hpp"
#include "prs/manifest.hpp"
#include "prs/mock_backend.hpp"
#include "prs/samplers.hpp"
#include "prs/types.hpp"

namespace prs {

enum class GenerationKind { http, mock };
enum class RewardKind { http, mock, rouge };

// Fully resolved job description: what the CLI builds from flags and what
// the C API accepts as JSON. One options object drives one command.
struct JobOptions {
  SamplingConfig sampling;
  GenerationKind generation_kind = GenerationKind::mock;
  RewardKind reward_kind = RewardKind::mock;
  HttpEndpointConfig http;         // generation endpoint
  HttpEndpointConfig reward_http;  // scoring endpoint (may be a different host)
  MockLandscapeConfig mock;
  std::optional<std::string> templates_dir;  // absent -> compiled-in defaults
  std::string prompts_path;
  std::string out_dir;
  int parallelism = 1;
  bool resume = false;

  // compare: methods with the budget each was given on the command line;
  // budgets must all match sampling.total_n.
  struct CompareMethod {
    Method method;
    std::optional<int> budget;
  };
  std::vector<CompareMethod> compare_methods;

  std::vector<int> sweep_depths;

  std::vector<std::string> dataset_tree_files;  // iteration 1..k in order
  std::optional<std::string> sft_path;
  bool dataset_pairs = false;  // require refinement layers in every tree
  bool dataset_force = false;  // accept mixed source manifests

  std::optional<std::string> professions_path;  // absent -> compiled-in catalog
  bool annotate_revise = false;
};

// Parses the resolved-config JSON (the C-API wire format; see README).
JobOptions job_options_from_json(const json& j);

// Owns templates and backends for one job and executes commands against
// them. All outputs land under opts.out_dir and are written atomically;
// trees stream to trees.partial.jsonl during the run so an interrupted job
// resumes by prompt id.
class Runner {
 public:
  explicit Runner(JobOptions opts);
  ~Runner();

  Runner(const Runner&) = delete;
  Runner& operator=(const Runner&) = delete;

  // One tree per prompt -> trees.jsonl (prompt-file order) + manifest.json;
  // failed prompts land in failures.jsonl and the run reports a backend
  // error after persisting everything it completed.
  void run_sample();

  // Runs every configured method over the shared prompt set and budget ->
  // report.json + report.csv (per-method mean best, mean top-3, histogram).
  void run_compare();

  // Depth sweep at fixed budget -> sweep.csv.
  void run_sweep();

  // Distills tree files (one per iteration) into merged.jsonl plus the
  // sft/preference/refinement trainer views.
  void run_build_dataset();

  // Generates a preference per prompt (profession drawn uniformly by seed)
  // -> annotated.jsonl; resumable, failures listed alongside.
  void run_annotate();

  // Aggregates a persisted tree file into a metrics report. Pure read.
  json run_stats(const std::string& trees_path) const;

  const JobOptions& options() const noexcept { return opts_; }
  // Non-fatal condition reports collected by backends at construction.
  std::vector<std::string> warnings() const;

 private:
  struct State;
  JobOptions opts_;
  std::unique_ptr<State> state_;
};

}  // namespace prs

#pragma once

#include <functional>
#include <semaphore>
#include <string>
#include <vector>

#include "prs/backends.hpp"
#include "prs/templates.hpp"
#include "prs/types.hpp"

namespace prs {

struct WidthSchedule {
  std::vector<int> sizes;  // one entry per layer, each >= 1, summing to total_n
};

// Runs fn(0..count-1) across up to `parallelism` threads. Callers write
// results into pre-sized slots so scheduling never affects output. The first
// exception wins and is rethrown after all workers stop.
void for_each_slot(int count, int parallelism, const std::function<void(int)>& fn);

// Every layer gets floor(total_n / depth); the remainder goes to layer 0.
// total_n < depth cannot produce non-empty layers and is an error.
WidthSchedule default_schedule(int total_n, int depth);

// Shared sampler wiring. call_gate, when set, caps concurrent backend calls
// across all prompts; parallelism caps concurrent slots within one layer.
struct SamplerEnv {
  const TemplateSet* templates = nullptr;
  GenerationBackend* generation = nullptr;
  RewardBackend* reward = nullptr;
  int parallelism = 1;
  std::counting_semaphore<>* call_gate = nullptr;
};

// Baseline: total_n independent initial-context samples; the preference is
// omitted from generation regardless of flags.
SampleTree run_rand(const PromptRecord& record, const SamplingConfig& cfg, const SamplerEnv& env);

// Baseline: like run_rand but with the preference in the initial context.
// A record without a non-blank preference is an error.
SampleTree run_prand(const PromptRecord& record, const SamplingConfig& cfg, const SamplerEnv& env);

// Baseline: one initial sample, then total_n - 1 sequential refinements of
// the best candidate so far, no feedback. Equivalent to run_prs with
// depth = total_n, width 1 per layer, feedback off.
SampleTree run_greedy(const PromptRecord& record, const SamplingConfig& cfg, const SamplerEnv& env);

// Tree-based sampling: layer 0 draws from the initial context; every later
// layer refines the argmax over all candidates generated so far, optionally
// conditioning on generated feedback. Feedback calls do not count against
// total_n. Within a layer, generation and scoring run concurrently up to
// env.parallelism; results land in deterministic slot order.
SampleTree run_prs(const PromptRecord& record, const SamplingConfig& cfg, const SamplerEnv& env);

// Dispatch on cfg.method.
SampleTree run_method(const PromptRecord& record, const SamplingConfig& cfg, const SamplerEnv& env);

// Best-of-N: the winner over the whole tree under select_best.
const Candidate& bon_select(const SampleTree& tree);

struct SweepRow {
  int depth = 0;
  int width = 0;  // floor(total_n / depth)
  double mean_best = 0.0;
  double mean_top3 = 0.0;
  bool failed = false;  // run error propagated into this cell
};

// Runs run_prs at each depth over the prompt set (default schedule, shared
// budget) and aggregates mean best and mean top-3 rewards per depth.
std::vector<SweepRow> sweep_depth(const std::vector<PromptRecord>& prompts, const SamplingConfig& base,
                                  const std::vector<int>& depths, const SamplerEnv& env);

// Header "depth,width,mean_best,mean_top3"; failed cells carry nan values.
std::string sweep_csv(const std::vector<SweepRow>& rows);

// Shortest round-trip decimal form; "nan" for NaN.
std::string format_double(double v);

}  // namespace prs

#include "prs/samplers.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <exception>
#include <functional>
#include <limits>
#include <mutex>
#include <thread>

#include "prs/hash.hpp"
#include "prs/selection.hpp"

namespace prs {
namespace {

bool blank(const std::optional<std::string>& s) {
  if (!s) return true;
  return std::all_of(s->begin(), s->end(), [](unsigned char c) { return std::isspace(c) != 0; });
}

void check_env(const SamplerEnv& env) {
  if (env.templates == nullptr || env.generation == nullptr || env.reward == nullptr) {
    throw internal_error("sampler environment is missing templates or backends");
  }
}

std::uint64_t derive_seed(const char* domain, std::uint64_t run_seed, const std::string& prompt_id, int layer,
                          int index) {
  Fnv1a64 h;
  h.update(domain);
  h.update_u64(run_seed);
  h.update_u64(prompt_id.size());
  h.update(prompt_id);
  h.update_u64(static_cast<std::uint64_t>(layer));
  h.update_u64(static_cast<std::uint64_t>(index));
  return h.digest();
}

std::string candidate_id(std::uint64_t run_seed, const std::string& prompt_id, int layer, int index) {
  char idx[16];
  std::snprintf(idx, sizeof(idx), "%04d", index);
  return prompt_id + "-s" + std::to_string(run_seed) + "-l" + std::to_string(layer) + "-c" + idx;
}

std::string feedback_id(std::uint64_t run_seed, const std::string& prompt_id, int layer) {
  return prompt_id + "-s" + std::to_string(run_seed) + "-l" + std::to_string(layer) + "-f";
}

// RAII slot in the optional cross-prompt gate.
struct GatePass {
  std::counting_semaphore<>* gate;
  explicit GatePass(std::counting_semaphore<>* g) : gate(g) {
    if (gate != nullptr) gate->acquire();
  }
  ~GatePass() {
    if (gate != nullptr) gate->release();
  }
  GatePass(const GatePass&) = delete;
  GatePass& operator=(const GatePass&) = delete;
};

}  // namespace

void for_each_slot(int count, int parallelism, const std::function<void(int)>& fn) {
  if (count <= 0) return;
  if (parallelism <= 1 || count == 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::atomic<bool> failed{false};
  std::mutex mu;
  std::exception_ptr first_error;
  int workers = std::min(parallelism, count);
  std::vector<std::thread> threads;
  threads.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    threads.emplace_back([&] {
      while (!failed.load(std::memory_order_relaxed)) {
        int i = next.fetch_add(1, std::memory_order_relaxed);
        if (i >= count) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(mu);
          if (!first_error) first_error = std::current_exception();
          failed.store(true, std::memory_order_relaxed);
          return;
        }
      }
    });
  }
  for (auto& t : threads) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

namespace {

double score_candidate(const SamplerEnv& env, const PromptRecord& record, const SamplingConfig& cfg,
                       const std::string& text) {
  ScoreInputs in = reward_context(record.instruction, record.preference, text, cfg.reward_sees_preference);
  double r;
  {
    GatePass pass(env.call_gate);
    r = env.reward->score(in.instruction, std::nullopt, in.response, record.reference);
  }
  if (!std::isfinite(r)) throw backend_error("reward backend returned a non-finite score");
  return r;
}

Candidate make_candidate(const SamplerEnv& env, const PromptRecord& record, const SamplingConfig& cfg,
                         const AssembledPrompt& prompt, int layer, int index, const Candidate* parent,
                         const Feedback* feedback, BudgetLedger& ledger) {
  Candidate c;
  c.id = candidate_id(cfg.seed, record.id, layer, index);
  c.prompt_id = record.id;
  c.layer = layer;
  c.index = index;
  if (parent != nullptr) c.parent_id = parent->id;
  if (feedback != nullptr) c.feedback_id = feedback->id;
  DecodeParams decode = cfg.decode;
  decode.seed = derive_seed("decode", cfg.seed, record.id, layer, index);
  {
    GatePass pass(env.call_gate);
    c.text = env.generation->generate(prompt, decode).text;
  }
  ledger.count_generation();
  c.reward = score_candidate(env, record, cfg, c.text);
  ledger.count_reward();
  return c;
}

// Generates one layer: `count` draws from the same context, concurrently up
// to env.parallelism, landing in slot order.
Layer make_layer(const SamplerEnv& env, const PromptRecord& record, const SamplingConfig& cfg, int layer_index,
                 int count, const AssembledPrompt& prompt, const Candidate* parent,
                 std::optional<Feedback> feedback, BudgetLedger& ledger) {
  Layer layer;
  layer.index = layer_index;
  layer.feedback = std::move(feedback);
  const Feedback* fb = layer.feedback ? &*layer.feedback : nullptr;
  layer.candidates.resize(static_cast<std::size_t>(count));
  for_each_slot(count, env.parallelism, [&](int i) {
    layer.candidates[static_cast<std::size_t>(i)] =
        make_candidate(env, record, cfg, prompt, layer_index, i, parent, fb, ledger);
  });
  return layer;
}

void check_budget(const SamplingConfig& cfg) {
  if (cfg.total_n < 1) throw usage_error("sampling budget must be >= 1 (got " + std::to_string(cfg.total_n) + ")");
}

// One-layer run shared by the rand and prand baselines.
SampleTree run_single_layer(const PromptRecord& record, const SamplingConfig& cfg, const SamplerEnv& env,
                            bool with_preference) {
  check_env(env);
  check_budget(cfg);
  SampleTree tree;
  tree.prompt = record;
  AssembledPrompt prompt = env.templates->assemble(ContextKind::initial, record, nullptr, nullptr, with_preference);
  tree.layers.push_back(make_layer(env, record, cfg, 0, cfg.total_n, prompt, nullptr, std::nullopt, tree.ledger));
  return tree;
}

}  // namespace

WidthSchedule default_schedule(int total_n, int depth) {
  if (depth < 1) throw usage_error("depth must be >= 1 (got " + std::to_string(depth) + ")");
  if (total_n < depth) {
    throw usage_error("budget smaller than depth: cannot spread " + std::to_string(total_n) + " samples over " +
                      std::to_string(depth) + " layers");
  }
  WidthSchedule s;
  int base = total_n / depth;
  s.sizes.assign(static_cast<std::size_t>(depth), base);
  s.sizes[0] += total_n - base * depth;
  return s;
}

SampleTree run_rand(const PromptRecord& record, const SamplingConfig& cfg, const SamplerEnv& env) {
  return run_single_layer(record, cfg, env, /*with_preference=*/false);
}

SampleTree run_prand(const PromptRecord& record, const SamplingConfig& cfg, const SamplerEnv& env) {
  if (blank(record.preference)) {
    throw usage_error("prand requires a preference on every prompt; prompt '" + record.id + "' has none");
  }
  return run_single_layer(record, cfg, env, /*with_preference=*/true);
}

SampleTree run_greedy(const PromptRecord& record, const SamplingConfig& cfg, const SamplerEnv& env) {
  check_env(env);
  check_budget(cfg);
  bool with_pref = cfg.use_preference && !blank(record.preference);

  SampleTree tree;
  tree.prompt = record;
  AssembledPrompt initial = env.templates->assemble(ContextKind::initial, record, nullptr, nullptr, with_pref);
  tree.layers.push_back(make_layer(env, record, cfg, 0, 1, initial, nullptr, std::nullopt, tree.ledger));

  const Candidate* best = &tree.layers[0].candidates[0];
  for (int step = 1; step < cfg.total_n; ++step) {
    AssembledPrompt prompt =
        env.templates->assemble(ContextKind::refine_without_feedback, record, best, nullptr, with_pref);
    tree.layers.push_back(make_layer(env, record, cfg, step, 1, prompt, best, std::nullopt, tree.ledger));
    const Candidate& fresh = tree.layers.back().candidates[0];
    // Strict improvement only; ties keep the earlier candidate, matching
    // select_best's preference for lower layers.
    if (*fresh.reward > *best->reward) best = &fresh;
  }
  return tree;
}

SampleTree run_prs(const PromptRecord& record, const SamplingConfig& cfg, const SamplerEnv& env) {
  check_env(env);
  check_budget(cfg);

  WidthSchedule schedule;
  if (cfg.width_schedule) {
    schedule.sizes = *cfg.width_schedule;
    if (static_cast<int>(schedule.sizes.size()) != cfg.depth) {
      throw usage_error("width schedule has " + std::to_string(schedule.sizes.size()) + " layers but depth is " +
                        std::to_string(cfg.depth));
    }
    int sum = 0;
    for (int w : schedule.sizes) {
      if (w < 1) throw usage_error("width schedule entries must be >= 1");
      sum += w;
    }
    if (sum != cfg.total_n) {
      throw usage_error("width schedule sums to " + std::to_string(sum) + " but the budget is " +
                        std::to_string(cfg.total_n));
    }
  } else {
    schedule = default_schedule(cfg.total_n, cfg.depth);
  }

  bool with_pref = cfg.use_preference && !blank(record.preference);

  SampleTree tree;
  tree.prompt = record;
  AssembledPrompt initial = env.templates->assemble(ContextKind::initial, record, nullptr, nullptr, with_pref);
  tree.layers.push_back(
      make_layer(env, record, cfg, 0, schedule.sizes[0], initial, nullptr, std::nullopt, tree.ledger));

  for (int l = 1; l < static_cast<int>(schedule.sizes.size()); ++l) {
    // Refine the argmax over everything sampled so far, not just last layer.
    std::vector<const Candidate*> pool;
    for (const Layer& layer : tree.layers) {
      for (const Candidate& c : layer.candidates) pool.push_back(&c);
    }
    const Candidate* best = &select_best(pool);

    std::optional<Feedback> feedback;
    if (cfg.use_feedback) {
      AssembledPrompt fprompt = env.templates->assemble(ContextKind::feedback, record, best, nullptr, with_pref);
      DecodeParams decode = cfg.decode;
      decode.seed = derive_seed("fbdecode", cfg.seed, record.id, l, 0);
      Feedback fb;
      fb.id = feedback_id(cfg.seed, record.id, l);
      fb.prompt_id = record.id;
      fb.target_candidate_id = best->id;
      {
        GatePass pass(env.call_gate);
        fb.text = env.generation->generate(fprompt, decode).text;
      }
      tree.ledger.count_feedback();
      feedback = std::move(fb);
    }

    AssembledPrompt prompt =
        feedback ? env.templates->assemble(ContextKind::refine_with_feedback, record, best, &*feedback, with_pref)
                 : env.templates->assemble(ContextKind::refine_without_feedback, record, best, nullptr, with_pref);
    tree.layers.push_back(
        make_layer(env, record, cfg, l, schedule.sizes[static_cast<std::size_t>(l)], prompt, best,
                   std::move(feedback), tree.ledger));
  }
  return tree;
}

SampleTree run_method(const PromptRecord& record, const SamplingConfig& cfg, const SamplerEnv& env) {
  switch (cfg.method) {
    case Method::rand: return run_rand(record, cfg, env);
    case Method::prand: return run_prand(record, cfg, env);
    case Method::greedy: return run_greedy(record, cfg, env);
    case Method::prs: return run_prs(record, cfg, env);
  }
  throw internal_error("unhandled sampling method");
}

const Candidate& bon_select(const SampleTree& tree) {
  std::vector<const Candidate*> pool;
  for (const Layer& layer : tree.layers) {
    for (const Candidate& c : layer.candidates) pool.push_back(&c);
  }
  return select_best(pool);
}

std::vector<SweepRow> sweep_depth(const std::vector<PromptRecord>& prompts, const SamplingConfig& base,
                                  const std::vector<int>& depths, const SamplerEnv& env) {
  check_env(env);
  check_budget(base);
  if (prompts.empty()) throw usage_error("depth sweep needs at least one prompt");
  if (depths.empty()) throw usage_error("depth sweep needs at least one depth");
  for (int d : depths) {
    if (d < 1 || d > base.total_n) {
      throw usage_error("sweep depth " + std::to_string(d) + " is outside 1.." + std::to_string(base.total_n) +
                        " (budget " + std::to_string(base.total_n) + ")");
    }
  }

  std::vector<SweepRow> rows;
  rows.reserve(depths.size());
  for (int d : depths) {
    SweepRow row;
    row.depth = d;
    row.width = base.total_n / d;
    SamplingConfig cfg = base;
    cfg.method = Method::prs;
    cfg.depth = d;
    cfg.width_schedule.reset();
    double best_sum = 0.0;
    double top3_sum = 0.0;
    try {
      for (const PromptRecord& record : prompts) {
        SampleTree tree = run_prs(record, cfg, env);
        best_sum += *bon_select(tree).reward;
        top3_sum += top_k_mean(flatten(tree), std::min(3, cfg.total_n));
      }
      row.mean_best = best_sum / static_cast<double>(prompts.size());
      row.mean_top3 = top3_sum / static_cast<double>(prompts.size());
    } catch (const Error&) {
      row.failed = true;
      row.mean_best = std::numeric_limits<double>::quiet_NaN();
      row.mean_top3 = std::numeric_limits<double>::quiet_NaN();
    }
    rows.push_back(row);
  }
  return rows;
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) throw internal_error("failed to format a double");
  return std::string(buf, ptr);
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::string out = "depth,width,mean_best,mean_top3\n";
  for (const SweepRow& row : rows) {
    out += std::to_string(row.depth);
    out += ',';
    out += std::to_string(row.width);
    out += ',';
    out += format_double(row.mean_best);
    out += ',';
    out += format_double(row.mean_top3);
    out += '\n';
  }
  return out;
}

}  // namespace prs

#include "prs/dataset.hpp"

#include <filesystem>

#include "prs/selection.hpp"

namespace prs {
namespace {

TrainingRecord make_triple(const SampleTree& tree, const Candidate& c, int iteration) {
  TrainingRecord r;
  r.kind = RecordKind::response_triple;
  r.instruction = tree.prompt.instruction;
  r.preference = tree.prompt.preference;
  r.response = c.text;
  r.reward = *c.reward;
  r.iteration = iteration;
  return r;
}

TrainingRecord make_pair(const SampleTree& tree, const Candidate& parent, const Layer& layer, const Candidate& c,
                         int iteration) {
  TrainingRecord r;
  r.kind = RecordKind::improving_pair;
  r.instruction = tree.prompt.instruction;
  r.preference = tree.prompt.preference;
  r.response = c.text;
  r.parent_response = parent.text;
  if (layer.feedback) r.feedback = layer.feedback->text;
  r.reward = *c.reward;
  r.iteration = iteration;
  return r;
}

const Candidate& resolve_parent(const SampleTree& tree, const Layer& layer) {
  if (layer.candidates.empty()) throw data_error("tree '" + tree.prompt.id + "': empty layer");
  const std::optional<std::string>& parent_id = layer.candidates.front().parent_id;
  if (!parent_id) {
    throw data_error("tree '" + tree.prompt.id + "': refinement layer " + std::to_string(layer.index) +
                     " has no parent link");
  }
  for (const Candidate& c : layer.candidates) {
    if (!c.parent_id || *c.parent_id != *parent_id) {
      throw data_error("tree '" + tree.prompt.id + "': refinement layer " + std::to_string(layer.index) +
                       " mixes parents, cannot form pairs");
    }
  }
  for (const Layer& earlier : tree.layers) {
    if (earlier.index >= layer.index) break;
    for (const Candidate& c : earlier.candidates) {
      if (c.id == *parent_id) return c;
    }
  }
  throw data_error("tree '" + tree.prompt.id + "': parent '" + *parent_id + "' not found in earlier layers");
}

}  // namespace

std::string to_string(RecordKind k) {
  switch (k) {
    case RecordKind::response_triple: return "response_triple";
    case RecordKind::improving_pair: return "improving_pair";
    case RecordKind::sft_passthrough: return "sft_passthrough";
  }
  throw internal_error("unhandled record kind");
}

RecordKind record_kind_from_string(const std::string& s) {
  if (s == "response_triple") return RecordKind::response_triple;
  if (s == "improving_pair") return RecordKind::improving_pair;
  if (s == "sft_passthrough") return RecordKind::sft_passthrough;
  throw data_error("unknown record kind '" + s + "' (expected response_triple, improving_pair, or sft_passthrough)");
}

json to_json(const TrainingRecord& r) {
  json j;
  j["kind"] = to_string(r.kind);
  j["instruction"] = r.instruction;
  if (r.preference) j["preference"] = *r.preference;
  j["response"] = r.response;
  if (r.parent_response) j["parent_response"] = *r.parent_response;
  if (r.feedback) j["feedback"] = *r.feedback;
  j["reward"] = r.reward;
  j["iteration"] = r.iteration;
  return j;
}

TrainingRecord training_record_from_json(const json& j) {
  reject_unknown(j, {"kind", "instruction", "preference", "response", "parent_response", "feedback", "reward",
                     "iteration"},
                 "training record");
  TrainingRecord r;
  r.kind = record_kind_from_string(require_string(j, "kind", "training record"));
  r.instruction = require_string(j, "instruction", "training record");
  r.preference = optional_string(j, "preference", "training record");
  r.response = require_string(j, "response", "training record");
  r.parent_response = optional_string(j, "parent_response", "training record");
  r.feedback = optional_string(j, "feedback", "training record");
  r.reward = require_number(j, "reward", "training record");
  r.iteration = static_cast<int>(require_int(j, "iteration", "training record"));
  if (r.iteration < 0) throw data_error("training record: iteration must be >= 0");
  return r;
}

std::vector<const Candidate*> improving_pairs(const SampleTree& tree) {
  if (tree.layers.size() < 2) {
    throw data_error("tree '" + tree.prompt.id + "' has no refinement layer, cannot extract improving pairs");
  }
  const Candidate& y0 = select_best(tree.layers[0].candidates);
  std::vector<const Candidate*> out;
  for (const Candidate& c : tree.layers[1].candidates) {
    if (!c.reward) throw data_error("unscored candidate '" + c.id + "'");
    if (c.parent_id && *c.parent_id == y0.id && *c.reward > *y0.reward) out.push_back(&c);
  }
  return out;
}

std::vector<TrainingRecord> build_iteration_dataset(const std::vector<SampleTree>& trees, int iteration) {
  if (iteration < 1) throw usage_error("iteration index must be >= 1 (got " + std::to_string(iteration) + ")");
  std::vector<TrainingRecord> out;
  for (const SampleTree& tree : trees) {
    std::vector<const Candidate*> pool;
    for (const Layer& layer : tree.layers) {
      for (const Candidate& c : layer.candidates) pool.push_back(&c);
    }
    const Candidate& best = select_best(pool);
    out.push_back(make_triple(tree, best, iteration));
    for (std::size_t l = 1; l < tree.layers.size(); ++l) {
      const Layer& layer = tree.layers[l];
      const Candidate& parent = resolve_parent(tree, layer);
      const Candidate& winner = select_best(layer.candidates);
      if (!parent.reward) throw data_error("unscored candidate '" + parent.id + "'");
      if (*winner.reward > *parent.reward) {
        out.push_back(make_pair(tree, parent, layer, winner, iteration));
      }
    }
  }
  return out;
}

std::vector<TrainingRecord> merge_iterations(const std::vector<std::vector<TrainingRecord>>& iterations,
                                             const std::vector<TrainingRecord>* sft) {
  std::vector<TrainingRecord> out;
  if (sft != nullptr) {
    for (const TrainingRecord& r : *sft) {
      if (r.kind != RecordKind::sft_passthrough || r.iteration != 0) {
        throw data_error("seed records must be sft_passthrough with iteration 0");
      }
      out.push_back(r);
    }
  }
  for (std::size_t i = 0; i < iterations.size(); ++i) {
    int expected = static_cast<int>(i) + 1;
    for (const TrainingRecord& r : iterations[i]) {
      if (r.iteration != expected) {
        throw data_error("duplicate iteration index or gap: dataset " + std::to_string(expected) +
                         " carries iteration " + std::to_string(r.iteration) +
                         " (iterations must be distinct and consecutive from 1)");
      }
      if (r.kind == RecordKind::sft_passthrough) {
        throw data_error("sft_passthrough records belong to the seed set, not iteration " + std::to_string(expected));
      }
      out.push_back(r);
    }
  }
  return out;
}

std::vector<TrainingRecord> load_sft_file(const std::string& path) {
  std::vector<TrainingRecord> out;
  for_each_jsonl_line(path, [&](const json& j, std::size_t line_no) {
    try {
      expect_object(j, "seed record");
      reject_unknown(j, {"instruction", "response"}, "seed record");
      TrainingRecord r;
      r.kind = RecordKind::sft_passthrough;
      r.instruction = require_string(j, "instruction", "seed record");
      r.response = require_string(j, "response", "seed record");
      r.reward = 0.0;
      r.iteration = 0;
      out.push_back(std::move(r));
    } catch (const Error& e) {
      throw data_error(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  });
  return out;
}

void emit_trainer_views(const std::vector<TrainingRecord>& merged, const std::string& out_dir) {
  if (merged.empty()) throw data_error("refusing to emit trainer views from an empty dataset");
  std::string sft_lines, pref_lines, refine_lines;
  for (const TrainingRecord& r : merged) {
    json j;
    switch (r.kind) {
      case RecordKind::sft_passthrough:
        j["instruction"] = r.instruction;
        j["response"] = r.response;
        sft_lines += j.dump();
        sft_lines += '\n';
        break;
      case RecordKind::response_triple:
        j["instruction"] = r.instruction;
        j["preference"] = r.preference ? json(*r.preference) : json(nullptr);
        j["response"] = r.response;
        pref_lines += j.dump();
        pref_lines += '\n';
        break;
      case RecordKind::improving_pair:
        j["instruction"] = r.instruction;
        j["preference"] = r.preference ? json(*r.preference) : json(nullptr);
        j["parent_response"] = r.parent_response ? json(*r.parent_response) : json(nullptr);
        j["feedback"] = r.feedback ? json(*r.feedback) : json(nullptr);
        j["response"] = r.response;
        refine_lines += j.dump();
        refine_lines += '\n';
        break;
    }
  }
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  write_file_atomic((fs::path(out_dir) / "sft.jsonl").string(), sft_lines);
  write_file_atomic((fs::path(out_dir) / "preference.jsonl").string(), pref_lines);
  write_file_atomic((fs::path(out_dir) / "refinement.jsonl").string(), refine_lines);
}

}  // namespace prs

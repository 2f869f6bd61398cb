#pragma once

#include <optional>
#include <string>
#include <vector>

#include "prs/json_io.hpp"
#include "prs/types.hpp"

namespace prs {

enum class RecordKind { response_triple, improving_pair, sft_passthrough };

std::string to_string(RecordKind k);
RecordKind record_kind_from_string(const std::string& s);

// One training example distilled from sampled trees (or passed through from
// a seed supervised set). Optionals are omitted from JSON when absent.
struct TrainingRecord {
  RecordKind kind = RecordKind::response_triple;
  std::string instruction;
  std::optional<std::string> preference;
  std::string response;
  std::optional<std::string> parent_response;  // improving_pair only
  std::optional<std::string> feedback;         // improving_pair, when feedback was used
  double reward = 0.0;
  int iteration = 0;  // 0 for sft_passthrough, >= 1 for sampled data
};

json to_json(const TrainingRecord& r);
TrainingRecord training_record_from_json(const json& j);

// Layer-1 candidates that refine the layer-0 argmax and strictly beat its
// reward. Trees without a refinement layer are an error.
std::vector<const Candidate*> improving_pairs(const SampleTree& tree);

// Distills one tree into records tagged with `iteration` (>= 1): always the
// best-of-tree response triple, plus one improving pair per refinement layer
// whose selected candidate strictly beats the candidate it refined. Depth-2
// trees therefore yield one triple and at most one pair per prompt.
std::vector<TrainingRecord> build_iteration_dataset(const std::vector<SampleTree>& trees, int iteration);

// Concatenates per-iteration datasets (indexes must run 1..k in order) after
// an optional seed set (all iteration 0, kind sft_passthrough).
std::vector<TrainingRecord> merge_iterations(const std::vector<std::vector<TrainingRecord>>& iterations,
                                             const std::vector<TrainingRecord>* sft);

// Loads a {"instruction","response"} JSONL seed set as passthrough records.
std::vector<TrainingRecord> load_sft_file(const std::string& path);

// Splits a merged dataset into the three trainer views:
//   sft.jsonl        {"instruction","response"}
//   preference.jsonl {"instruction","preference","response"}
//   refinement.jsonl {"instruction","preference","parent_response","feedback","response"}
// Keys are fixed; absent values are JSON null. All three files are written
// even when a view is empty.
void emit_trainer_views(const std::vector<TrainingRecord>& merged, const std::string& out_dir);

}  // namespace prs

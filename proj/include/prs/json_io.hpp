#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "prs/types.hpp"

namespace prs {

using json = nlohmann::ordered_json;  // insertion-ordered keys keep output byte-stable

// --- strict parse helpers, shared by every file schema ---
// All errors are data_errors naming the offending field and record kind.

void expect_object(const json& j, const char* what);
const json& require(const json& j, const char* key, const char* what);
std::string require_string(const json& j, const char* key, const char* what);
long long require_int(const json& j, const char* key, const char* what);
double require_number(const json& j, const char* key, const char* what);
std::optional<std::string> optional_string(const json& j, const char* key, const char* what);
void reject_unknown(const json& j, std::initializer_list<const char*> known, const char* what);

json to_json(const PromptRecord& r);
json to_json(const Candidate& c);
json to_json(const Feedback& f);
json to_json(const Layer& l);
json to_json(const BudgetLedger& ledger);
json to_json(const SampleTree& t);
json to_json(const DecodeParams& d);
json to_json(const SamplingConfig& c);

// Parsers reject unknown fields and type mismatches so schema drift is caught
// at the file boundary, not deep in a run.
PromptRecord prompt_record_from_json(const json& j);
Candidate candidate_from_json(const json& j);
Feedback feedback_from_json(const json& j);
Layer layer_from_json(const json& j);
BudgetLedger ledger_from_json(const json& j);
SampleTree tree_from_json(const json& j);
DecodeParams decode_params_from_json(const json& j);
SamplingConfig sampling_config_from_json(const json& j);

// --- file helpers ---

std::string read_file(const std::string& path);

// Writes via a temp file in the same directory plus rename, so readers never
// observe a half-written file.
void write_file_atomic(const std::string& path, const std::string& content);

// Applies fn(parsed line, 1-based line number) to each non-empty line.
// Parse errors carry "<path>:<line>"; schema errors thrown by fn do not, so
// callers add their own context.
void for_each_jsonl_line(const std::string& path, const std::function<void(const json&, std::size_t)>& fn);

// JSONL loaders. Parse or schema errors carry "<path>:<line>".
std::vector<PromptRecord> load_prompt_file(const std::string& path);
std::vector<SampleTree> load_tree_file(const std::string& path);

std::string to_jsonl(const std::vector<SampleTree>& trees);

}  // namespace prs

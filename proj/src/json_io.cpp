#include "prs/json_io.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unordered_map>

namespace prs {

void expect_object(const json& j, const char* what) {
  if (!j.is_object()) throw data_error(std::string(what) + " must be a JSON object");
}

// Field access with typed errors naming the offending key.
const json& require(const json& j, const char* key, const char* what) {
  auto it = j.find(key);
  if (it == j.end()) throw data_error(std::string(what) + " is missing field '" + key + "'");
  return *it;
}

std::string require_string(const json& j, const char* key, const char* what) {
  const json& v = require(j, key, what);
  if (!v.is_string()) throw data_error(std::string(what) + " field '" + key + "' must be a string");
  return v.get<std::string>();
}

long long require_int(const json& j, const char* key, const char* what) {
  const json& v = require(j, key, what);
  if (!v.is_number_integer()) throw data_error(std::string(what) + " field '" + key + "' must be an integer");
  return v.get<long long>();
}

double require_number(const json& j, const char* key, const char* what) {
  const json& v = require(j, key, what);
  if (!v.is_number()) throw data_error(std::string(what) + " field '" + key + "' must be a number");
  return v.get<double>();
}

std::optional<std::string> optional_string(const json& j, const char* key, const char* what) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) throw data_error(std::string(what) + " field '" + key + "' must be a string");
  return it->get<std::string>();
}

void reject_unknown(const json& j, std::initializer_list<const char*> known, const char* what) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : known)
      if (it.key() == k) {
        ok = true;
        break;
      }
    if (!ok) throw data_error(std::string(what) + " has unknown field '" + it.key() + "'");
  }
}

json to_json(const PromptRecord& r) {
  json j;
  j["id"] = r.id;
  j["instruction"] = r.instruction;
  if (r.preference) j["preference"] = *r.preference;
  if (r.reference) j["reference"] = *r.reference;
  if (!r.meta.empty()) j["meta"] = r.meta;
  return j;
}

PromptRecord prompt_record_from_json(const json& j) {
  expect_object(j, "prompt record");
  reject_unknown(j, {"id", "instruction", "preference", "reference", "meta"}, "prompt record");
  PromptRecord r;
  r.id = require_string(j, "id", "prompt record");
  r.instruction = require_string(j, "instruction", "prompt record");
  if (r.id.empty()) throw data_error("prompt record has an empty id");
  if (r.instruction.empty()) throw data_error("prompt record '" + r.id + "' has an empty instruction");
  r.preference = optional_string(j, "preference", "prompt record");
  r.reference = optional_string(j, "reference", "prompt record");
  if (auto it = j.find("meta"); it != j.end() && !it->is_null()) {
    if (!it->is_object()) throw data_error("prompt record field 'meta' must be an object");
    for (auto m = it->begin(); m != it->end(); ++m) {
      if (!m.value().is_string())
        throw data_error("prompt record meta value for '" + m.key() + "' must be a string");
      r.meta[m.key()] = m.value().get<std::string>();
    }
  }
  return r;
}

json to_json(const Candidate& c) {
  json j;
  j["id"] = c.id;
  j["prompt_id"] = c.prompt_id;
  j["layer"] = c.layer;
  if (c.parent_id) j["parent_id"] = *c.parent_id;
  if (c.feedback_id) j["feedback_id"] = *c.feedback_id;
  j["text"] = c.text;
  if (c.reward) j["reward"] = *c.reward;
  j["gen_calls_used"] = c.gen_calls_used;
  return j;
}

Candidate candidate_from_json(const json& j) {
  expect_object(j, "candidate");
  reject_unknown(j, {"id", "prompt_id", "layer", "parent_id", "feedback_id", "text", "reward", "gen_calls_used"},
                 "candidate");
  Candidate c;
  c.id = require_string(j, "id", "candidate");
  c.prompt_id = require_string(j, "prompt_id", "candidate");
  c.layer = static_cast<int>(require_int(j, "layer", "candidate"));
  c.parent_id = optional_string(j, "parent_id", "candidate");
  c.feedback_id = optional_string(j, "feedback_id", "candidate");
  c.text = require_string(j, "text", "candidate");
  if (auto it = j.find("reward"); it != j.end() && !it->is_null()) {
    if (!it->is_number()) throw data_error("candidate field 'reward' must be a number");
    c.reward = it->get<double>();
  }
  c.gen_calls_used = static_cast<int>(require_int(j, "gen_calls_used", "candidate"));
  return c;
}

json to_json(const Feedback& f) {
  json j;
  j["id"] = f.id;
  j["prompt_id"] = f.prompt_id;
  j["target_candidate_id"] = f.target_candidate_id;
  j["text"] = f.text;
  return j;
}

Feedback feedback_from_json(const json& j) {
  expect_object(j, "feedback");
  reject_unknown(j, {"id", "prompt_id", "target_candidate_id", "text"}, "feedback");
  Feedback f;
  f.id = require_string(j, "id", "feedback");
  f.prompt_id = require_string(j, "prompt_id", "feedback");
  f.target_candidate_id = require_string(j, "target_candidate_id", "feedback");
  f.text = require_string(j, "text", "feedback");
  return f;
}

json to_json(const Layer& l) {
  json j;
  j["index"] = l.index;
  if (l.feedback) j["feedback"] = to_json(*l.feedback);
  json cands = json::array();
  for (const Candidate& c : l.candidates) cands.push_back(to_json(c));
  j["candidates"] = std::move(cands);
  return j;
}

Layer layer_from_json(const json& j) {
  expect_object(j, "layer");
  reject_unknown(j, {"index", "feedback", "candidates"}, "layer");
  Layer l;
  l.index = static_cast<int>(require_int(j, "index", "layer"));
  if (auto it = j.find("feedback"); it != j.end() && !it->is_null()) l.feedback = feedback_from_json(*it);
  const json& cands = require(j, "candidates", "layer");
  if (!cands.is_array()) throw data_error("layer field 'candidates' must be an array");
  int index = 0;
  for (const json& cj : cands) {
    Candidate c = candidate_from_json(cj);
    c.index = index++;  // within-layer ordinal comes from array order
    l.candidates.push_back(std::move(c));
  }
  return l;
}

json to_json(const BudgetLedger& ledger) {
  json j;
  j["generation_calls"] = ledger.generation_calls();
  j["feedback_calls"] = ledger.feedback_calls();
  j["reward_calls"] = ledger.reward_calls();
  return j;
}

BudgetLedger ledger_from_json(const json& j) {
  expect_object(j, "ledger");
  reject_unknown(j, {"generation_calls", "feedback_calls", "reward_calls"}, "ledger");
  BudgetLedger ledger;
  ledger.count_generation(require_int(j, "generation_calls", "ledger"));
  ledger.count_feedback(require_int(j, "feedback_calls", "ledger"));
  ledger.count_reward(require_int(j, "reward_calls", "ledger"));
  return ledger;
}

json to_json(const SampleTree& t) {
  json j;
  j["prompt"] = to_json(t.prompt);
  json layers = json::array();
  for (const Layer& l : t.layers) layers.push_back(to_json(l));
  j["layers"] = std::move(layers);
  j["ledger"] = to_json(t.ledger);
  return j;
}

SampleTree tree_from_json(const json& j) {
  expect_object(j, "tree");
  reject_unknown(j, {"prompt", "layers", "ledger"}, "tree");
  SampleTree t;
  t.prompt = prompt_record_from_json(require(j, "prompt", "tree"));
  const json& layers = require(j, "layers", "tree");
  if (!layers.is_array()) throw data_error("tree field 'layers' must be an array");
  for (const json& lj : layers) t.layers.push_back(layer_from_json(lj));
  t.ledger = ledger_from_json(require(j, "ledger", "tree"));
  validate_tree(t);
  return t;
}

json to_json(const DecodeParams& d) {
  json j;
  j["temperature"] = d.temperature;
  j["top_p"] = d.top_p;
  j["max_tokens"] = d.max_tokens;
  if (d.seed) j["seed"] = *d.seed;
  return j;
}

DecodeParams decode_params_from_json(const json& j) {
  expect_object(j, "decode params");
  reject_unknown(j, {"temperature", "top_p", "max_tokens", "seed"}, "decode params");
  DecodeParams d;
  if (j.contains("temperature")) d.temperature = require_number(j, "temperature", "decode params");
  if (j.contains("top_p")) d.top_p = require_number(j, "top_p", "decode params");
  if (j.contains("max_tokens")) d.max_tokens = static_cast<int>(require_int(j, "max_tokens", "decode params"));
  if (auto it = j.find("seed"); it != j.end() && !it->is_null())
    d.seed = static_cast<std::uint64_t>(require_int(j, "seed", "decode params"));
  return d;
}

json to_json(const SamplingConfig& c) {
  json j;
  j["method"] = to_string(c.method);
  j["total_n"] = c.total_n;
  j["depth"] = c.depth;
  if (c.width_schedule) j["width_schedule"] = *c.width_schedule;
  j["use_feedback"] = c.use_feedback;
  j["use_preference"] = c.use_preference;
  j["reward_sees_preference"] = c.reward_sees_preference;
  j["decode"] = to_json(c.decode);
  j["seed"] = c.seed;
  return j;
}

SamplingConfig sampling_config_from_json(const json& j) {
  expect_object(j, "sampling config");
  reject_unknown(j,
                 {"method", "total_n", "depth", "width_schedule", "use_feedback", "use_preference",
                  "reward_sees_preference", "decode", "seed"},
                 "sampling config");
  SamplingConfig c;
  if (j.contains("method")) c.method = method_from_string(require_string(j, "method", "sampling config"));
  if (j.contains("total_n")) c.total_n = static_cast<int>(require_int(j, "total_n", "sampling config"));
  if (j.contains("depth")) c.depth = static_cast<int>(require_int(j, "depth", "sampling config"));
  if (auto it = j.find("width_schedule"); it != j.end() && !it->is_null()) {
    if (!it->is_array()) throw data_error("sampling config field 'width_schedule' must be an array");
    std::vector<int> sched;
    for (const json& v : *it) {
      if (!v.is_number_integer()) throw data_error("width_schedule entries must be integers");
      sched.push_back(v.get<int>());
    }
    c.width_schedule = std::move(sched);
  }
  auto flag = [&](const char* key, bool dflt) {
    auto it = j.find(key);
    if (it == j.end()) return dflt;
    if (!it->is_boolean()) throw data_error(std::string("sampling config field '") + key + "' must be a boolean");
    return it->get<bool>();
  };
  c.use_feedback = flag("use_feedback", c.use_feedback);
  c.use_preference = flag("use_preference", c.use_preference);
  c.reward_sees_preference = flag("reward_sees_preference", c.reward_sees_preference);
  if (j.contains("decode")) c.decode = decode_params_from_json(j.at("decode"));
  if (j.contains("seed")) c.seed = static_cast<std::uint64_t>(require_int(j, "seed", "sampling config"));
  return c;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error("cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file_atomic(const std::string& path, const std::string& content) {
  namespace fs = std::filesystem;
  fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw data_error("cannot write '" + tmp.string() + "'");
    out << content;
    out.flush();
    if (!out) throw data_error("short write to '" + tmp.string() + "'");
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) throw data_error("cannot rename '" + tmp.string() + "' to '" + path + "': " + ec.message());
}

void for_each_jsonl_line(const std::string& path, const std::function<void(const json&, std::size_t)>& fn) {
  std::string content = read_file(path);
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos <= content.size()) {
    std::size_t end = content.find('\n', pos);
    if (end == std::string::npos) end = content.size();
    ++line_no;
    std::string_view line(content.data() + pos, end - pos);
    if (!line.empty() && line != "\r") {
      try {
        json j = json::parse(line);
        fn(j, line_no);
      } catch (const Error&) {
        throw;
      } catch (const std::exception& e) {
        throw data_error(path + ":" + std::to_string(line_no) + ": " + e.what());
      }
    }
    if (end == content.size()) break;
    pos = end + 1;
  }
}

std::vector<PromptRecord> load_prompt_file(const std::string& path) {
  std::vector<PromptRecord> records;
  std::unordered_map<std::string, std::size_t> seen;
  for_each_jsonl_line(path, [&](const json& j, std::size_t line_no) {
    PromptRecord r;
    try {
      r = prompt_record_from_json(j);
    } catch (const Error& e) {
      throw data_error(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
    auto [it, fresh] = seen.emplace(r.id, line_no);
    if (!fresh)
      throw data_error(path + ":" + std::to_string(line_no) + ": duplicate prompt id '" + r.id +
                       "' (first seen on line " + std::to_string(it->second) + ")");
    records.push_back(std::move(r));
  });
  if (records.empty()) throw data_error("prompt file '" + path + "' has no records");
  return records;
}

std::vector<SampleTree> load_tree_file(const std::string& path) {
  std::vector<SampleTree> trees;
  for_each_jsonl_line(path, [&](const json& j, std::size_t line_no) {
    try {
      trees.push_back(tree_from_json(j));
    } catch (const Error& e) {
      throw data_error(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  });
  return trees;
}

std::string to_jsonl(const std::vector<SampleTree>& trees) {
  std::string out;
  for (const SampleTree& t : trees) {
    out += to_json(t).dump();
    out += '\n';
  }
  return out;
}

}  // namespace prs

#include "prs/types.hpp"

#include <unordered_map>
#include <unordered_set>

#include "prs/selection.hpp"

namespace prs {

Method method_from_string(const std::string& s) {
  if (s == "rand") return Method::rand;
  if (s == "prand") return Method::prand;
  if (s == "greedy") return Method::greedy;
  if (s == "prs") return Method::prs;
  throw usage_error("unknown method '" + s + "' (expected rand, prand, greedy, or prs)");
}

std::string to_string(Method m) {
  switch (m) {
    case Method::rand: return "rand";
    case Method::prand: return "prand";
    case Method::greedy: return "greedy";
    case Method::prs: return "prs";
  }
  throw internal_error("unhandled method value");
}

std::vector<const Candidate*> flatten(const SampleTree& tree) {
  std::vector<const Candidate*> out;
  for (const Layer& layer : tree.layers)
    for (const Candidate& c : layer.candidates) out.push_back(&c);
  return out;
}

void validate_tree(const SampleTree& tree) {
  const std::string where = "tree for prompt '" + tree.prompt.id + "': ";
  if (tree.prompt.id.empty()) throw data_error("tree has a prompt with an empty id");
  std::unordered_map<std::string, int> candidate_layer;  // id -> layer
  std::unordered_map<std::string, int> feedback_layer;   // id -> layer it generated
  for (std::size_t l = 0; l < tree.layers.size(); ++l) {
    const Layer& layer = tree.layers[l];
    if (layer.index != static_cast<int>(l))
      throw data_error(where + "layer at position " + std::to_string(l) + " has index " +
                       std::to_string(layer.index));
    if (layer.candidates.empty()) throw data_error(where + "layer " + std::to_string(l) + " is empty");
    if (layer.feedback) {
      if (l == 0) throw data_error(where + "layer 0 carries feedback");
      if (!feedback_layer.emplace(layer.feedback->id, static_cast<int>(l)).second)
        throw data_error(where + "duplicate feedback id '" + layer.feedback->id + "'");
      auto it = candidate_layer.find(layer.feedback->target_candidate_id);
      if (it == candidate_layer.end() || it->second >= static_cast<int>(l))
        throw data_error(where + "feedback '" + layer.feedback->id +
                         "' does not target a candidate in an earlier layer");
    }
    for (std::size_t i = 0; i < layer.candidates.size(); ++i) {
      const Candidate& c = layer.candidates[i];
      if (c.layer != static_cast<int>(l) || c.index != static_cast<int>(i))
        throw data_error(where + "candidate '" + c.id + "' carries layer/index " + std::to_string(c.layer) +
                         "/" + std::to_string(c.index) + " but sits at " + std::to_string(l) + "/" +
                         std::to_string(i));
      if (c.prompt_id != tree.prompt.id)
        throw data_error(where + "candidate '" + c.id + "' belongs to prompt '" + c.prompt_id + "'");
      if (c.gen_calls_used != 1)
        throw data_error(where + "candidate '" + c.id + "' reports gen_calls_used != 1");
      if (c.parent_id) {
        auto it = candidate_layer.find(*c.parent_id);
        if (it == candidate_layer.end() || it->second >= static_cast<int>(l))
          throw data_error(where + "candidate '" + c.id + "' has parent '" + *c.parent_id +
                           "' not found in an earlier layer");
      } else if (l > 0) {
        throw data_error(where + "candidate '" + c.id + "' in layer " + std::to_string(l) + " has no parent");
      }
      if (c.feedback_id) {
        auto it = feedback_layer.find(*c.feedback_id);
        if (it == feedback_layer.end() || it->second != static_cast<int>(l))
          throw data_error(where + "candidate '" + c.id + "' references feedback '" + *c.feedback_id +
                           "' that did not generate its layer");
      }
    }
    // Ids registered after the pass so same-layer parent links fail above.
    for (const Candidate& c : layer.candidates) {
      if (!candidate_layer.emplace(c.id, static_cast<int>(l)).second)
        throw data_error(where + "duplicate candidate id '" + c.id + "'");
    }
  }
}

void verify_parent_monotonicity(const SampleTree& tree) {
  std::vector<const Candidate*> pool;
  for (std::size_t l = 0; l < tree.layers.size(); ++l) {
    const Layer& layer = tree.layers[l];
    if (l > 0) {
      const Candidate& expected = select_best(pool);
      for (const Candidate& c : layer.candidates) {
        if (!c.parent_id || *c.parent_id != expected.id)
          throw data_error("tree for prompt '" + tree.prompt.id + "': layer " + std::to_string(l) +
                           " is not conditioned on the argmax over earlier layers ('" +
                           c.parent_id.value_or("<none>") + "' vs '" + expected.id + "')");
      }
    }
    for (const Candidate& c : layer.candidates) pool.push_back(&c);
  }
}

}  // namespace prs

#include "prs/backends.hpp"

namespace prs {

std::string to_string(ContextKind k) {
  switch (k) {
    case ContextKind::initial: return "initial";
    case ContextKind::feedback: return "feedback";
    case ContextKind::refine_with_feedback: return "refine_with_feedback";
    case ContextKind::refine_without_feedback: return "refine_without_feedback";
    case ContextKind::annotate_preference: return "annotate_preference";
  }
  throw internal_error("unhandled context kind");
}

ScoreInputs reward_context(const std::string& instruction, const std::optional<std::string>& preference,
                           const std::string& response, bool reward_sees_preference) {
  ScoreInputs in;
  in.instruction = instruction;
  if (reward_sees_preference && preference && !preference->empty()) {
    in.instruction += "\n\n";
    in.instruction += *preference;
  }
  in.response = response;
  return in;
}

}  // namespace prs

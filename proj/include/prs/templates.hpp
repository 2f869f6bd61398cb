#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "prs/backends.hpp"
#include "prs/types.hpp"

namespace prs {

// Prompt templates with {placeholder} substitution. Each context kind has a
// fixed required placeholder set; loading rejects templates that deviate, so
// a typo fails fast instead of leaking braces into prompts.
class TemplateSet {
 public:
  // Loads <dir>/{initial,feedback,refine_with_feedback,refine_without_feedback,
  // annotate_preference}.txt plus the optional revise_preference.txt
  // (experimental second annotation pass).
  static TemplateSet load_dir(const std::string& dir);

  // The shipped defaults, compiled in so the toolkit works without a data dir.
  static TemplateSet builtin_defaults();

  // Renders the template for `kind`. The preference slot is filled when
  // use_preference is set and the record carries a non-blank preference;
  // otherwise the line holding the placeholder (and a following blank line)
  // is elided. parent supplies {response}, feedback supplies {feedback},
  // profession supplies {profession}; a missing required input is an error
  // naming the placeholder. Values are inserted verbatim, never re-scanned.
  AssembledPrompt assemble(ContextKind kind, const PromptRecord& record, const Candidate* parent,
                           const Feedback* feedback, bool use_preference,
                           const std::string* profession = nullptr) const;

  bool has_revision() const noexcept { return revision_.has_value(); }

  // Experimental: second annotation pass rewriting a generated preference.
  AssembledPrompt assemble_revision(const std::string& preference) const;

  // Content digest over all template texts; changes when any template does.
  std::string digest() const;

  const std::string& text(ContextKind kind) const;

 private:
  struct Segment {
    bool is_placeholder = false;
    std::string literal;  // when !is_placeholder
    int placeholder = 0;  // when is_placeholder
  };
  struct Line {
    std::vector<Segment> segments;
  };
  struct Template {
    std::string text;
    std::vector<Line> lines;
  };

  static Template parse(const std::string& text, const std::vector<int>& required, const std::string& origin);
  static TemplateSet from_texts(const std::map<std::string, std::string>& texts, const std::string& origin);
  static std::string render(const Template& t, const std::array<const std::string*, 5>& values);

  std::array<Template, 5> templates_;   // indexed by ContextKind
  std::optional<Template> revision_;
};

// Line-oriented catalog: trimmed, non-empty lines. Empty catalog is an error.
std::vector<std::string> load_catalog(const std::string& path);
inline std::vector<std::string> load_preference_catalog(const std::string& path) { return load_catalog(path); }

// The shipped profession catalog (222 entries), compiled in.
const std::vector<std::string>& builtin_professions();

}  // namespace prs

#include "prs/templates.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <filesystem>

#include "prs/hash.hpp"
#include "prs/json_io.hpp"

#include "builtin_data.inc"

namespace prs {
namespace {

// Placeholder slots, in the order values are passed to render().
enum Slot : int { kInstruction = 0, kPreference = 1, kResponse = 2, kFeedbackSlot = 3, kProfession = 4 };

constexpr std::array<const char*, 5> kSlotNames = {"instruction", "preference", "response", "feedback",
                                                   "profession"};

const std::vector<int>& required_slots(ContextKind kind) {
  static const std::array<std::vector<int>, 5> sets = {{
      {kInstruction, kPreference},                            // initial
      {kInstruction, kPreference, kResponse},                 // feedback
      {kInstruction, kPreference, kResponse, kFeedbackSlot},  // refine_with_feedback
      {kInstruction, kPreference, kResponse},                 // refine_without_feedback
      {kInstruction, kProfession},                            // annotate_preference
  }};
  return sets[static_cast<int>(kind)];
}

const std::vector<int>& revision_slots() {
  static const std::vector<int> slots = {kPreference};
  return slots;
}

int slot_from_name(const std::string& name) {
  for (int i = 0; i < static_cast<int>(kSlotNames.size()); ++i) {
    if (name == kSlotNames[i]) return i;
  }
  return -1;
}

bool is_blank(const std::string& s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c) != 0; });
}

bool blank_preference(const std::optional<std::string>& pref) { return !pref || is_blank(*pref); }

const std::array<std::pair<const char*, const char*>, 6>& builtin_texts() {
  static const std::array<std::pair<const char*, const char*>, 6> texts = {{
      {"initial", kBuiltinInitial},
      {"feedback", kBuiltinFeedback},
      {"refine_with_feedback", kBuiltinRefineWithFeedback},
      {"refine_without_feedback", kBuiltinRefineWithoutFeedback},
      {"annotate_preference", kBuiltinAnnotatePreference},
      {"revise_preference", kBuiltinRevisePreference},
  }};
  return texts;
}

}  // namespace

TemplateSet::Template TemplateSet::parse(const std::string& text, const std::vector<int>& required,
                                         const std::string& origin) {
  Template t;
  t.text = text;
  std::array<int, 5> counts{};

  std::size_t line_start = 0;
  while (line_start <= text.size()) {
    std::size_t line_end = text.find('\n', line_start);
    if (line_end == std::string::npos) line_end = text.size();
    Line line;
    std::string literal;
    for (std::size_t i = line_start; i < line_end; ++i) {
      char c = text[i];
      if (c == '{') {
        std::size_t close = text.find('}', i + 1);
        if (close == std::string::npos || close >= line_end) {
          throw data_error("template " + origin + ": unterminated '{' (escape literal braces are not supported)");
        }
        std::string name = text.substr(i + 1, close - i - 1);
        int slot = slot_from_name(name);
        if (slot < 0) throw data_error("template " + origin + ": unknown placeholder '{" + name + "}'");
        if (!literal.empty()) {
          line.segments.push_back(Segment{false, literal, 0});
          literal.clear();
        }
        line.segments.push_back(Segment{true, "", slot});
        ++counts[slot];
        i = close;
      } else if (c == '}') {
        throw data_error("template " + origin + ": stray '}'");
      } else {
        literal.push_back(c);
      }
    }
    if (!literal.empty()) line.segments.push_back(Segment{false, literal, 0});
    t.lines.push_back(std::move(line));
    if (line_end == text.size()) break;
    line_start = line_end + 1;
  }
  // A trailing newline leaves a final empty line; keep it so render() restores
  // the newline, but a file of only blank content is rejected below.
  if (text.empty()) throw data_error("template " + origin + ": empty template");

  for (int slot = 0; slot < 5; ++slot) {
    bool req = std::find(required.begin(), required.end(), slot) != required.end();
    if (req && counts[slot] != 1) {
      throw data_error("template " + origin + ": placeholder '{" + kSlotNames[slot] + "}' must appear exactly once (found " +
                       std::to_string(counts[slot]) + ")");
    }
    if (!req && counts[slot] != 0) {
      throw data_error("template " + origin + ": placeholder '{" + std::string(kSlotNames[slot]) + "}' is not accepted here");
    }
  }
  return t;
}

std::string TemplateSet::render(const Template& t, const std::array<const std::string*, 5>& values) {
  std::string out;
  bool first = true;
  const std::size_t n = t.lines.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Line& line = t.lines[i];
    bool has_pref = false;
    bool has_other = false;
    for (const Segment& seg : line.segments) {
      if (!seg.is_placeholder) continue;
      if (seg.placeholder == kPreference) has_pref = true;
      else has_other = true;
    }
    bool pref_empty = values[kPreference] == nullptr || values[kPreference]->empty();
    if (has_pref && pref_empty && !has_other) {
      // Drop the preference line and the blank separator after it, unless that
      // blank is the trailing-newline sentinel.
      if (i + 2 < n && t.lines[i + 1].segments.empty()) ++i;
      continue;
    }
    if (!first) out.push_back('\n');
    first = false;
    for (const Segment& seg : line.segments) {
      if (!seg.is_placeholder) {
        out += seg.literal;
      } else {
        const std::string* v = values[seg.placeholder];
        if (v == nullptr) throw internal_error("template render: unresolved placeholder '{" +
                                               std::string(kSlotNames[seg.placeholder]) + "}'");
        out += *v;
      }
    }
  }
  return out;
}

TemplateSet TemplateSet::from_texts(const std::map<std::string, std::string>& texts, const std::string& origin) {
  TemplateSet set;
  for (int k = 0; k < 5; ++k) {
    auto kind = static_cast<ContextKind>(k);
    auto it = texts.find(to_string(kind));
    if (it == texts.end()) throw data_error("template set " + origin + ": missing template '" + to_string(kind) + "'");
    set.templates_[k] = parse(it->second, required_slots(kind), origin + "/" + to_string(kind));
  }
  auto rev = texts.find("revise_preference");
  if (rev != texts.end()) set.revision_ = parse(rev->second, revision_slots(), origin + "/revise_preference");
  return set;
}

TemplateSet TemplateSet::load_dir(const std::string& dir) {
  namespace fs = std::filesystem;
  std::map<std::string, std::string> texts;
  for (int k = 0; k < 5; ++k) {
    std::string name = to_string(static_cast<ContextKind>(k));
    fs::path p = fs::path(dir) / (name + ".txt");
    if (!fs::exists(p)) throw data_error("template directory '" + dir + "' is missing " + name + ".txt");
    texts[name] = read_file(p.string());
  }
  fs::path rev = fs::path(dir) / "revise_preference.txt";
  if (fs::exists(rev)) texts["revise_preference"] = read_file(rev.string());
  return from_texts(texts, dir);
}

TemplateSet TemplateSet::builtin_defaults() {
  std::map<std::string, std::string> texts;
  for (const auto& [name, text] : builtin_texts()) texts[name] = text;
  return from_texts(texts, "builtin");
}

AssembledPrompt TemplateSet::assemble(ContextKind kind, const PromptRecord& record, const Candidate* parent,
                                      const Feedback* feedback, bool use_preference,
                                      const std::string* profession) const {
  const std::vector<int>& required = required_slots(kind);
  auto needs = [&](int slot) { return std::find(required.begin(), required.end(), slot) != required.end(); };

  std::array<const std::string*, 5> values{};
  values[kInstruction] = &record.instruction;
  static const std::string kEmpty;
  bool include_pref = use_preference && !blank_preference(record.preference);
  values[kPreference] = include_pref ? &*record.preference : &kEmpty;
  if (needs(kResponse)) {
    if (parent == nullptr) {
      throw data_error("assemble " + to_string(kind) + ": no candidate supplied for '{response}'");
    }
    values[kResponse] = &parent->text;
  }
  if (needs(kFeedbackSlot)) {
    if (feedback == nullptr) {
      throw data_error("assemble " + to_string(kind) + ": no feedback supplied for '{feedback}'");
    }
    values[kFeedbackSlot] = &feedback->text;
  }
  if (needs(kProfession)) {
    if (profession == nullptr) {
      throw data_error("assemble " + to_string(kind) + ": no profession supplied for '{profession}'");
    }
    values[kProfession] = profession;
  }

  AssembledPrompt out;
  out.context_kind = kind;
  out.user = render(templates_[static_cast<int>(kind)], values);
  return out;
}

AssembledPrompt TemplateSet::assemble_revision(const std::string& preference) const {
  if (!revision_) throw data_error("assemble revise_preference: template set has no revise_preference template");
  std::array<const std::string*, 5> values{};
  values[kPreference] = &preference;
  AssembledPrompt out;
  out.context_kind = ContextKind::annotate_preference;
  out.user = render(*revision_, values);
  return out;
}

std::string TemplateSet::digest() const {
  Fnv1a64 h;
  for (int k = 0; k < 5; ++k) {
    h.update(to_string(static_cast<ContextKind>(k)));
    h.update_u64(templates_[k].text.size());
    h.update(templates_[k].text);
  }
  if (revision_) {
    h.update("revise_preference");
    h.update_u64(revision_->text.size());
    h.update(revision_->text);
  }
  return hex64(h.digest());
}

const std::string& TemplateSet::text(ContextKind kind) const { return templates_[static_cast<int>(kind)].text; }

std::vector<std::string> load_catalog(const std::string& path) {
  std::string raw = read_file(path);
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= raw.size()) {
    std::size_t end = raw.find('\n', start);
    if (end == std::string::npos) end = raw.size();
    std::string line = raw.substr(start, end - start);
    std::size_t b = line.find_first_not_of(" \t\r");
    if (b != std::string::npos) {
      std::size_t e = line.find_last_not_of(" \t\r");
      out.push_back(line.substr(b, e - b + 1));
    }
    if (end == raw.size()) break;
    start = end + 1;
  }
  if (out.empty()) throw data_error("catalog '" + path + "' has no entries");
  return out;
}

const std::vector<std::string>& builtin_professions() {
  static const std::vector<std::string> professions(std::begin(kBuiltinProfessions), std::end(kBuiltinProfessions));
  return professions;
}

}  // namespace prs

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "slab/augment/augment.hpp"
#include "slab/common/error.hpp"

namespace slab::augment {

namespace {

std::vector<NegationRule> make_table(Language lang, std::initializer_list<std::pair<const char*, const char*>> rows) {
  std::vector<NegationRule> rules;
  int rank = 0;
  for (const auto& [trigger, replacement] : rows) rules.push_back({lang, trigger, replacement, ++rank});
  return rules;
}

bool is_word_byte(char c) {
  const auto u = static_cast<unsigned char>(c);
  return std::isalnum(u) || c == '\'' || c == '_' || u >= 0x80;
}

// First whole-word occurrence of needle in text.
std::size_t find_word(const std::string& text, const std::string& needle) {
  std::size_t pos = text.find(needle);
  while (pos != std::string::npos) {
    const bool left = pos == 0 || !is_word_byte(text[pos - 1]);
    const std::size_t end = pos + needle.size();
    const bool right = end >= text.size() || !is_word_byte(text[end]);
    if (left && right) return pos;
    pos = text.find(needle, pos + 1);
  }
  return std::string::npos;
}

std::string apply_at(const std::string& text, std::size_t pos, const NegationRule& rule) {
  std::size_t begin = pos;
  std::size_t end = pos + rule.trigger.size();
  if (rule.replacement.empty()) {
    // Removing a word also removes one neighbouring space.
    if (end < text.size() && text[end] == ' ') ++end;
    else if (begin > 0 && text[begin - 1] == ' ') --begin;
  }
  return text.substr(0, begin) + rule.replacement + text.substr(end);
}

}  // namespace

Language parse_language(std::string_view code) {
  if (code == "en") return Language::kEnglish;
  if (code == "ja" || code == "jp") return Language::kJapanese;
  throw ValidationError("unknown language \"" + std::string(code) + "\" (expected en or ja)");
}

std::string_view language_code(Language lang) { return lang == Language::kEnglish ? "en" : "ja"; }

const std::vector<NegationRule>& default_rules(Language lang) {
  static const std::vector<NegationRule> english = make_table(Language::kEnglish, {
      {"not", ""},
      {"shall", "shall not"},
      {"should", "should not"},
      {"may", "may not"},
      {"must", "must not"},
      {"is", "is not"},
      {"are", "are not"},
      {"will be", "will not be"},
      {"can", "cannot"},
      {"cannot", "can"},
      {"with", "without"},
      {"without", "with"},
      {"A", "No"},
      {"An", "No"},
  });
  static const std::vector<NegationRule> japanese = make_table(Language::kJapanese, {
      {"ません", "ます"},
      {"できる", "できない"},
      {"できない", "できる"},
      {"した", "しなかった"},
      {"でない", "である"},
      {"できた", "できなかった"},
      {"させる", "させない"},
      {"ている", "ていない"},
      {"がない", "がある"},
      {"ではない", "ではある"},
      {"ことがある", "ことがない"},
      {"しなければならない", "してはいけません"},
      {"ならない", "なる"},
  });
  return lang == Language::kEnglish ? english : japanese;
}

std::vector<NegationRule> load_rules(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open rule file " + path.string());
  std::vector<NegationRule> rules;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string col;
    while (std::getline(ss, col, '\t')) cols.push_back(col);
    if (line.back() == '\t') cols.emplace_back();
    const std::string where = path.string() + ":" + std::to_string(line_no);
    if (cols.size() != 4) throw ValidationError(where + ": expected 4 tab-separated columns");
    NegationRule r;
    r.language = parse_language(cols[0]);
    r.trigger = cols[1];
    r.replacement = cols[2];
    try {
      r.rank = std::stoi(cols[3]);
    } catch (const std::exception&) {
      throw ValidationError(where + ": bad rank \"" + cols[3] + "\"");
    }
    if (r.trigger.empty() || r.trigger == r.replacement) throw ValidationError(where + ": trigger must be non-empty and differ from replacement");
    for (const auto& other : rules) {
      if (other.language == r.language && other.rank == r.rank) throw ValidationError(where + ": duplicate rank " + cols[3]);
    }
    rules.push_back(std::move(r));
  }
  std::stable_sort(rules.begin(), rules.end(), [](const NegationRule& a, const NegationRule& b) { return a.rank < b.rank; });
  return rules;
}

std::string rules_to_tsv(const std::vector<NegationRule>& rules) {
  std::ostringstream os;
  os << "# language\ttrigger\treplacement\trank\n";
  for (const auto& r : rules) os << language_code(r.language) << '\t' << r.trigger << '\t' << r.replacement << '\t' << r.rank << '\n';
  return os.str();
}

std::optional<Negation> negate(const std::string& text, const std::vector<NegationRule>& rules) {
  for (const auto& rule : rules) {
    std::size_t pos;
    if (rule.language == Language::kJapanese) {
      pos = text.rfind(rule.trigger);
    } else {
      pos = find_word(text, rule.trigger);
    }
    if (pos != std::string::npos) return Negation{apply_at(text, pos, rule), rule.rank};
  }
  return std::nullopt;
}

std::optional<Negation> negate(const std::string& text, Language lang) { return negate(text, default_rules(lang)); }

}  // namespace slab::augment

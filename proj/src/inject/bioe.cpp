#include <sstream>

#include "slab/common/error.hpp"
#include "slab/common/jsonl.hpp"
#include "slab/inject/inject.hpp"

namespace slab::inject {

namespace {

constexpr std::array<std::string_view, kTagCount> kTagNames{"O",   "B-R", "I-R", "E-R", "B-E",
                                                            "I-E", "E-E", "B-U", "I-U", "E-U"};

enum class Part { kBegin, kInside, kEnd, kOther };

Part part_of(Tag t) {
  if (t == Tag::O) return Part::kOther;
  switch ((static_cast<int>(t) - 1) % 3) {
    case 0: return Part::kBegin;
    case 1: return Part::kInside;
    default: return Part::kEnd;
  }
}

char kind_of(Tag t) {
  if (t == Tag::O) return 'O';
  return "REU"[(static_cast<int>(t) - 1) / 3];
}

std::vector<std::string> split_columns(const std::string& line) {
  std::vector<std::string> cols;
  if (line.find('\t') != std::string::npos) {
    std::string cell;
    std::istringstream in(line);
    while (std::getline(in, cell, '\t')) cols.push_back(cell);
  } else {
    std::istringstream in(line);
    std::string cell;
    while (in >> cell) cols.push_back(cell);
  }
  return cols;
}

}  // namespace

std::string_view tag_name(Tag t) { return kTagNames[static_cast<std::size_t>(t)]; }

Tag parse_tag(std::string_view s) {
  if (s == "-") return Tag::O;
  for (std::size_t i = 0; i < kTagCount; ++i) {
    if (kTagNames[i] == s) return static_cast<Tag>(i);
  }
  throw ValidationError("unknown BIOE tag \"" + std::string(s) + "\"");
}

void BioeSample::validate() const {
  if (tokens.empty()) throw ValidationError("BIOE sample has no tokens");
  for (std::size_t l = 0; l < kLevels; ++l) {
    if (levels[l].size() != tokens.size()) {
      throw ValidationError("level L" + std::to_string(l + 1) + " has " + std::to_string(levels[l].size()) +
                            " tags for " + std::to_string(tokens.size()) + " tokens");
    }
    char open = 0;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      const Tag t = levels[l][i];
      const auto where = [&] {
        return "L" + std::to_string(l + 1) + " token " + std::to_string(i + 1) + " (\"" + tokens[i] + "\")";
      };
      switch (part_of(t)) {
        case Part::kBegin:
          if (open) throw ValidationError(where() + ": " + std::string(tag_name(t)) + " inside an open segment");
          open = kind_of(t);
          break;
        case Part::kInside:
        case Part::kEnd:
          if (open != kind_of(t)) {
            throw ValidationError(where() + ": " + std::string(tag_name(t)) + " without an open " + kind_of(t) +
                                  " segment");
          }
          if (part_of(t) == Part::kEnd) open = 0;
          break;
        case Part::kOther:  // segments may be discontinuous
          break;
      }
    }
    if (open) throw ValidationError("L" + std::to_string(l + 1) + ": segment " + open + " is never closed");
  }
}

std::vector<BioeSample> parse_bioe(const std::string& text) {
  std::vector<BioeSample> out;
  BioeSample cur;
  std::size_t first_line = 1;
  auto flush = [&] {
    if (cur.tokens.empty()) return;
    try {
      cur.validate();
    } catch (const ValidationError& e) {
      throw ValidationError("sample starting at line " + std::to_string(first_line) + ": " + e.what());
    }
    out.push_back(std::move(cur));
    cur = BioeSample{};
  };
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) {
      flush();
      continue;
    }
    if (cur.tokens.empty()) first_line = line_no;
    const auto cols = split_columns(line);
    if (cols.size() != 1 + kLevels) {
      throw ValidationError("line " + std::to_string(line_no) + ": expected 4 columns, got " +
                            std::to_string(cols.size()));
    }
    cur.tokens.push_back(cols[0]);
    for (std::size_t l = 0; l < kLevels; ++l) {
      try {
        cur.levels[l].push_back(parse_tag(cols[l + 1]));
      } catch (const ValidationError& e) {
        throw ValidationError("line " + std::to_string(line_no) + ": " + e.what());
      }
    }
  }
  flush();
  return out;
}

std::vector<BioeSample> load_bioe(const std::filesystem::path& path) {
  try {
    return parse_bioe(read_text_file(path));
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

std::string format_bioe(const std::vector<BioeSample>& samples) {
  std::string out;
  for (std::size_t s = 0; s < samples.size(); ++s) {
    if (s) out += '\n';
    const auto& x = samples[s];
    for (std::size_t i = 0; i < x.tokens.size(); ++i) {
      out += x.tokens[i];
      for (std::size_t l = 0; l < kLevels; ++l) {
        out += '\t';
        out += x.levels[l][i] == Tag::O ? "-" : std::string(tag_name(x.levels[l][i]));
      }
      out += '\n';
    }
  }
  return out;
}

std::vector<Segment> segments(const std::vector<Tag>& level) {
  std::vector<Segment> out;
  for (std::size_t i = 0; i < level.size(); ++i) {
    if (part_of(level[i]) != Part::kBegin) continue;
    const char k = kind_of(level[i]);
    std::size_t j = i + 1;
    while (j < level.size() &&
           (level[j] == Tag::O || (part_of(level[j]) == Part::kInside && kind_of(level[j]) == k))) {
      ++j;
    }
    if (j < level.size() && part_of(level[j]) == Part::kEnd && kind_of(level[j]) == k) {
      out.push_back({k, i, j});
      i = j;
    }
  }
  return out;
}

std::map<std::string, std::size_t> tag_stats(const std::vector<BioeSample>& data) {
  std::map<std::string, std::size_t> counts;
  for (auto name : kTagNames) counts[std::string(name)] = 0;
  for (const auto& s : data) {
    for (const auto& level : s.levels) {
      for (Tag t : level) ++counts[std::string(tag_name(t))];
    }
  }
  return counts;
}

}  // namespace slab::inject

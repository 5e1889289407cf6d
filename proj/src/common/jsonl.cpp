#include "slab/common/jsonl.hpp"

#include <fstream>
#include <sstream>

#include "slab/common/error.hpp"

namespace slab {

void for_each_jsonl(const std::filesystem::path& path,
                    const std::function<void(const nlohmann::json&, std::size_t)>& fn) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": malformed JSON: " + e.what());
    }
    if (!obj.is_object()) {
      throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": expected a JSON object");
    }
    try {
      fn(obj, line_no);
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

void write_jsonl(const std::filesystem::path& path, const std::vector<nlohmann::json>& rows) {
  std::ostringstream os;
  for (const auto& r : rows) os << r.dump() << '\n';
  write_text_file(path, os.str());
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeError("cannot write " + path.string());
  out << text;
  if (!out) throw RuntimeError("write failed for " + path.string());
}

}  // namespace slab

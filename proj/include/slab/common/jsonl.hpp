#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "json.hpp"

namespace slab {

// Calls fn(object, line_number) for every non-blank line. Parse failures are
// reported as ValidationError naming the 1-based line.
void for_each_jsonl(const std::filesystem::path& path,
                    const std::function<void(const nlohmann::json&, std::size_t)>& fn);

void write_jsonl(const std::filesystem::path& path, const std::vector<nlohmann::json>& rows);

std::string read_text_file(const std::filesystem::path& path);

void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace slab

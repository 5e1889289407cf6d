#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"

namespace slab::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitRuntime = 2;

// args excludes the program name. Returns the process exit code.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Reads a JSON object and rejects keys outside `allowed`, naming the key.
nlohmann::json load_config(const std::filesystem::path& path, const nlohmann::json& allowed);

// Lowercase hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);

}  // namespace slab::cli

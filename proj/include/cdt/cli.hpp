#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

namespace cdt::cli {

inline constexpr const char* kVersion = "0.1.0";

// Runs one subcommand. Exit codes: 0 ok, 1 runtime failure, 2 usage error.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int dispatch(int argc, char** argv);

std::string sha256_hex(const std::string& bytes);
std::string file_sha256(const std::filesystem::path& path);

// Flags generated from a JSON config object, in "--key value" form. Keys map
// to flags with underscores turned into dashes; arrays become comma lists.
std::vector<std::string> config_to_args(const nlohmann::json& config);

std::vector<double> parse_list(const std::string& text);

}  // namespace cdt::cli

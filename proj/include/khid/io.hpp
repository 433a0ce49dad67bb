#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace khid::io {

using json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;

std::string read_file(const std::filesystem::path& path);
// Writes through a temporary sibling and renames, so readers never see a
// half-written artifact.
void write_file(const std::filesystem::path& path, std::string_view content);

// Calls `fn(record, line_number)` for every non-blank line. Malformed JSON
// raises ParseError carrying the 1-based line number.
void for_each_jsonl(const std::filesystem::path& path,
                    const std::function<void(const json&, std::size_t)>& fn);

std::string dump_jsonl(const std::vector<json>& records);

// First record of a JSONL artifact: {"kind":"header","schema":..,"version":..}.
json header(std::string_view schema);
// Root object of a single-document JSON artifact: {"schema":..,"version":..}.
json document(std::string_view schema);
// Checks that `doc` carries the expected schema tag and version.
void check_schema(const json& doc, std::string_view schema, const std::filesystem::path& origin);

std::string sha256_hex(std::string_view data);
std::string file_digest(const std::filesystem::path& path);

// Throws StageDependencyError naming the file when it is absent.
void require_artifact(const std::filesystem::path& path);

}  // namespace khid::io

#include "khid/io.hpp"

#include <openssl/evp.h>

#include <array>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "khid/error.hpp"

namespace khid::io {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw Error("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void for_each_jsonl(const std::filesystem::path& path,
                    const std::function<void(const json&, std::size_t)>& fn) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json record;
    try {
      record = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(std::string("malformed JSON: ") + e.what(), lineno);
    }
    if (!record.is_object()) throw ParseError("record is not a JSON object", lineno);
    fn(record, lineno);
  }
}

std::string dump_jsonl(const std::vector<json>& records) {
  std::string out;
  for (const auto& r : records) {
    out += r.dump();
    out += '\n';
  }
  return out;
}

json header(std::string_view schema) {
  return json{{"kind", "header"}, {"schema", std::string(schema)}, {"version", kSchemaVersion}};
}

json document(std::string_view schema) { return json{{"schema", std::string(schema)}, {"version", kSchemaVersion}}; }

void check_schema(const json& doc, std::string_view schema, const std::filesystem::path& origin) {
  if (!doc.is_object() || !doc.contains("schema") || !doc.contains("version")) {
    throw FormatError(origin.string() + ": missing schema header");
  }
  if (doc.at("schema") != schema) {
    throw FormatError(origin.string() + ": expected schema " + std::string(schema) + ", found " +
                      doc.at("schema").dump());
  }
  if (doc.at("version") != kSchemaVersion) {
    throw FormatError(origin.string() + ": unsupported schema version " + doc.at("version").dump());
  }
}

std::string sha256_hex(std::string_view data) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md.data(), &len, EVP_sha256(), nullptr) != 1) {
    throw Error("sha256 failed");
  }
  std::ostringstream ss;
  for (unsigned int i = 0; i < len; ++i) {
    ss << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  }
  return ss.str();
}

std::string file_digest(const std::filesystem::path& path) { return sha256_hex(read_file(path)); }

void require_artifact(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw StageDependencyError("missing upstream artifact: " + path.string());
  }
}

}  // namespace khid::io

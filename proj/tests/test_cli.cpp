#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>

#include "khid/annotate.hpp"
#include "khid/io.hpp"

namespace fs = std::filesystem;
using khid::io::json;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

int cli(const std::string& args) {
  const std::string cmd = std::string(KHID_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("usage errors exit with 1") {
  CHECK(cli("") == 1);
  CHECK(cli("frobnicate") == 1);
  CHECK(cli("synth --users notanumber") == 1);
  CHECK(cli("evaluate") == 1);
  CHECK(cli("--help") == 0);
}

TEST_CASE("data errors exit with 2") {
  TempDir dir("khid_test_cli_errors");
  const auto w = dir.path.string();
  CHECK(cli("-w " + w + " ingest " + w + "/missing.jsonl") == 2);
  khid::io::write_file(dir.path / "bad.jsonl", "{not json\n");
  CHECK(cli("-w " + w + " ingest " + w + "/bad.jsonl") == 2);
  CHECK(cli("-w " + w + " embed") == 2);
}

TEST_CASE("synth is deterministic") {
  TempDir dir("khid_test_cli_synth");
  const auto d = dir.path.string();
  REQUIRE(cli("synth --users 80 -o " + d + "/a.jsonl --truth " + d + "/ta.jsonl") == 0);
  REQUIRE(cli("synth --users 80 -o " + d + "/b.jsonl --truth " + d + "/tb.jsonl") == 0);
  CHECK(khid::io::read_file(dir.path / "a.jsonl") == khid::io::read_file(dir.path / "b.jsonl"));
  CHECK(khid::io::read_file(dir.path / "ta.jsonl") == khid::io::read_file(dir.path / "tb.jsonl"));
  REQUIRE(cli("--seed 8 synth --users 80 -o " + d + "/c.jsonl --truth " + d + "/tc.jsonl") == 0);
}

TEST_CASE("evaluate scores perfect predictions as 1.0") {
  TempDir dir("khid_test_cli_eval");
  const auto d = dir.path.string();
  const auto w = d + "/work";
  REQUIRE(cli("synth --users 60 -o " + d + "/s.jsonl --truth " + d + "/t.jsonl") == 0);
  REQUIRE(cli("-w " + w + " ingest " + d + "/s.jsonl") == 0);
  REQUIRE(cli("-w " + w + " preprocess") == 0);
  REQUIRE(cli("-w " + w + " --overrides " + d + "/t.jsonl annotate") == 0);

  std::vector<json> lines{khid::io::header("khid.predictions")};
  for (const auto& l : khid::annotate::read_labels(fs::path(w) / "labels.jsonl")) {
    lines.push_back({{"user_id", l.user_id}, {"prediction", l.label ? "key" : "non-key"}, {"split", "test"}});
  }
  khid::io::write_file(dir.path / "perfect.jsonl", khid::io::dump_jsonl(lines));
  REQUIRE(cli("-w " + w + " evaluate " + d + "/perfect.jsonl -o " + d + "/eval.json") == 0);
  auto doc = json::parse(khid::io::read_file(dir.path / "eval.json"));
  CHECK(doc.at("metrics").at("accuracy") == 1.0);
  CHECK(doc.at("metrics").at("f1") == 1.0);
  CHECK(doc.at("count") == 60);
  CHECK(cli("-w " + w + " evaluate " + d + "/perfect.jsonl --split bogus") == 1);
}

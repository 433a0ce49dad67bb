#include <doctest.h>

#include <filesystem>

#include "khid/error.hpp"
#include "khid/io.hpp"
#include "khid/pipeline.hpp"

using namespace khid;
using namespace khid::pipeline;
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

RunConfig small_run(const fs::path& workdir) {
  RunConfig cfg;
  cfg.workdir = workdir;
  cfg.gnn.hidden = 16;
  cfg.gnn.epochs = 20;
  cfg.gnn.learning_rate = 1e-2;
  cfg.head.epochs = 5;
  cfg.head.hidden = {16};
  cfg.topics.min_cluster_size = 5;
  return cfg;
}

json first_line(const fs::path& p) {
  auto text = io::read_file(p);
  return json::parse(text.substr(0, text.find('\n')));
}

}  // namespace

TEST_CASE("stages refuse to run without their inputs") {
  TempDir dir("khid_test_pipeline_empty");
  auto cfg = small_run(dir.path);
  CHECK_THROWS_AS(run_preprocess(cfg), StageDependencyError);
  CHECK_THROWS_AS(run_topics(cfg), StageDependencyError);
  CHECK_THROWS_AS(run_embed(cfg), StageDependencyError);
  CHECK_THROWS_AS(run_train(cfg, "rgcn"), StageDependencyError);
  CHECK_THROWS_AS(run_report(cfg), StageDependencyError);
}

TEST_CASE("configuration validation") {
  RunConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.provider = "telepathy";
  CHECK_THROWS_AS(cfg.validate(), ContractError);
  cfg = {};
  cfg.split = {0.9, 0.2};
  CHECK_THROWS_AS(cfg.validate(), ContractError);
  CHECK(RunConfig{}.to_json().at("seed") == 7);
}

TEST_CASE("small end-to-end run") {
  TempDir dir("khid_test_pipeline_run");
  synth::SyntheticSpec spec;
  spec.users = 120;
  spec.seed = 3;
  const auto corpus = dir.path / "synthetic.jsonl", truth = dir.path / "truth.jsonl";
  run_synth(spec, corpus, truth);
  auto cfg = small_run(dir.path / "work");
  cfg.overrides = truth;
  auto table = run_all(cfg, corpus, {"mlp", "rgcn", "untrained"});
  CHECK(table.find("rgcn") != std::string::npos);

  const auto w = cfg.workdir;
  CHECK(first_line(w / artifact::kCorpus).at("schema") == "khid.corpus");
  CHECK(first_line(w / artifact::kLabels).at("schema") == "khid.labels");
  CHECK(first_line(w / artifact::sequences(cfg.format)).at("schema") == "khid.sequences");
  CHECK(first_line(w / artifact::embeddings(cfg.format, cfg.handling)).at("schema") == "khid.embeddings");
  CHECK(first_line(w / artifact::predictions("rgcn", cfg.format, cfg.handling)).at("schema") == "khid.predictions");
  CHECK(json::parse(io::read_file(w / artifact::kGraph)).at("schema") == "khid.graph");
  CHECK(json::parse(io::read_file(w / artifact::kThreadTopics)).at("schema") == "khid.topics");
  CHECK(json::parse(io::read_file(w / artifact::kUserTopics)).at("schema") == "khid.user_topics");

  auto report = json::parse(io::read_file(w / artifact::kReport));
  CHECK(report.at("schema") == "khid.report");
  CHECK(report.at("rows").size() == 3);
  for (const auto& row : report.at("rows")) {
    CHECK(row.at("format") == "R3");
    CHECK(row.at("provider") == "hash");
    CHECK(row.at("test").at("accuracy").get<double>() >= 0.0);
  }

  auto emb = read_embeddings(w / artifact::embeddings(cfg.format, cfg.handling));
  CHECK(emb.user_ids.size() == 120);
  CHECK(emb.features.cols() == 768);

  SUBCASE("evaluate a predictions file against the labels") {
    auto m = run_evaluate(w / artifact::predictions("rgcn", cfg.format, cfg.handling), w / artifact::kLabels,
                          std::string("test"), dir.path / "eval.json");
    CHECK(m.tp + m.fp + m.fn + m.tn > 0);
    CHECK(json::parse(io::read_file(dir.path / "eval.json")).at("schema") == "khid.evaluation");
    CHECK_THROWS_AS(run_evaluate(w / "missing.jsonl", w / artifact::kLabels, std::nullopt, dir.path / "e.json"),
                    StageDependencyError);
  }
  SUBCASE("a downstream stage re-runs from cached artifacts") {
    const auto before = io::read_file(w / artifact::kReport);
    run_train(cfg, "rgcn");
    run_report(cfg);
    CHECK(io::read_file(w / artifact::kReport) == before);
  }
  SUBCASE("unknown model") { CHECK_THROWS_AS(run_train(cfg, "svm"), ContractError); }
  SUBCASE("tampered artifact schema") {
    auto graph = json::parse(io::read_file(w / artifact::kGraph));
    graph["schema"] = "khid.other";
    io::write_file(w / artifact::kGraph, graph.dump());
    CHECK_THROWS_AS(run_train(cfg, "rgcn"), FormatError);
  }
}

// Command-line front end: one subcommand per pipeline stage.
#include <CLI11.hpp>

#include <iostream>

#include "khid/error.hpp"
#include "khid/graph.hpp"
#include "khid/pipeline.hpp"

namespace {

using namespace khid;
namespace fs = std::filesystem;

int run(int argc, char** argv) {
  CLI::App app{"Key-hacker identification pipeline"};
  app.set_config("--config", "", "INI or TOML file with option values (flags take precedence)");
  app.require_subcommand(1);
  app.fallthrough();

  pipeline::RunConfig cfg;
  std::string format = "R3", handling = "truncation";
  std::string overrides;
  app.add_option("-w,--workdir", cfg.workdir, "Directory holding the stage artifacts")->capture_default_str();
  app.add_option("--seed", cfg.seed, "Seed for splits, initialization and dropout")->capture_default_str();
  app.add_option("--provider", cfg.provider, "Embedding provider")
      ->check(CLI::IsMember({"hash", "remote"}))
      ->capture_default_str();
  app.add_option("--remote-url", cfg.remote.base_url, "Embedding service base URL")->capture_default_str();
  app.add_option("--remote-model", cfg.remote.model, "Embedding service model id")->capture_default_str();
  app.add_option("--format", format, "User sequence format")
      ->check(CLI::IsMember({"R1", "R2", "R3", "R4"}))
      ->capture_default_str();
  app.add_option("--handling", handling, "Long-sequence handling")
      ->check(CLI::IsMember({"truncation", "hier_mean", "hier_max", "hier_self_attention"}))
      ->capture_default_str();
  app.add_option("--target-dim", cfg.topics.target_dim, "Topic reducer output dimension")->capture_default_str();
  app.add_option("--min-cluster-size", cfg.topics.min_cluster_size, "Density clustering minimum cluster size")
      ->capture_default_str();
  app.add_option("--top-k", cfg.topics.top_k, "Terms per topic")->capture_default_str();
  app.add_option("--overrides", overrides, "Manual label overrides (JSONL)");
  app.add_option("--keyword-min", cfg.rules.keyword_min, "Keyword hits needed for a candidate")->capture_default_str();
  app.add_flag("--require-market", cfg.rules.require_market, "Candidates must have opened a market thread");
  app.add_option("--gnn-epochs", cfg.gnn.epochs)->capture_default_str();
  app.add_option("--gnn-layers", cfg.gnn.layers)->capture_default_str();
  app.add_option("--gnn-hidden", cfg.gnn.hidden)->capture_default_str();
  app.add_option("--gnn-dropout", cfg.gnn.dropout)->capture_default_str();
  app.add_option("--gnn-lr", cfg.gnn.learning_rate)->capture_default_str();
  app.add_option("--gnn-heads", cfg.gnn.heads)->capture_default_str();
  app.add_option("--head-epochs", cfg.head.epochs)->capture_default_str();
  app.add_option("--head-lr", cfg.head.learning_rate)->capture_default_str();
  app.add_option("--head-batch", cfg.head.batch_size)->capture_default_str();

  synth::SyntheticSpec spec;
  fs::path synth_out = "corpus_synth.jsonl", truth_out = "truth.jsonl";
  auto* synth_cmd = app.add_subcommand("synth", "Generate a planted-signal synthetic corpus");
  synth_cmd->add_option("--users", spec.users)->capture_default_str();
  synth_cmd->add_option("--key-fraction", spec.key_fraction)->capture_default_str();
  synth_cmd->add_option("--signal", spec.signal, "Signal strength in [0, 1]")->capture_default_str();
  synth_cmd->add_option("--mimic-fraction", spec.mimic_fraction)->capture_default_str();
  synth_cmd->add_option("--quiet-fraction", spec.quiet_fraction)->capture_default_str();
  synth_cmd->add_option("-o,--out", synth_out, "Corpus output path")->capture_default_str();
  synth_cmd->add_option("--truth", truth_out, "Planted labels output path (override format)")->capture_default_str();

  fs::path input;
  auto* ingest_cmd = app.add_subcommand("ingest", "Validate a JSONL dump into corpus.jsonl");
  ingest_cmd->add_option("input", input, "Corpus dump")->required();

  auto* preprocess_cmd = app.add_subcommand("preprocess", "Normalize thread and post text");
  auto* topics_cmd = app.add_subcommand("topics", "Thread and reply topic models");
  auto* sequence_cmd = app.add_subcommand("sequence", "Render user sequences");
  auto* annotate_cmd = app.add_subcommand("annotate", "Automatic candidates merged with overrides");
  auto* graph_cmd = app.add_subcommand("build-graph", "Typed interaction graph with labels and splits");
  auto* embed_cmd = app.add_subcommand("embed", "User embeddings from the rendered sequences");

  std::vector<std::string> models{"rgcn"};
  bool grid = false;
  int grid_runs = 5;
  auto* train_cmd = app.add_subcommand("train", "Train classifiers on the embeddings and graph");
  train_cmd->add_option("-m,--model", models, "gcn, rgcn, gat, gatv2, mlp or untrained")
      ->check(CLI::IsMember(pipeline::kModels))
      ->capture_default_str();
  train_cmd->add_flag("--grid", grid, "Grid search over the head hyperparameters instead");
  train_cmd->add_option("--grid-runs", grid_runs, "Shuffled runs per grid point")->capture_default_str();

  fs::path predictions, labels, eval_out;
  std::string split;
  auto* eval_cmd = app.add_subcommand("evaluate", "Score a predictions file against labels");
  eval_cmd->add_option("predictions", predictions)->required();
  eval_cmd->add_option("--labels", labels, "Labels file (default: <workdir>/labels.jsonl)");
  eval_cmd->add_option("--split", split, "Restrict to one split")->check(CLI::IsMember({"train", "val", "test"}));
  eval_cmd->add_option("-o,--out", eval_out, "Output path (default: <workdir>/evaluation.json)");

  auto* report_cmd = app.add_subcommand("report", "Summarize every training report");

  std::vector<std::string> run_models{"mlp", "untrained", "rgcn", "gatv2"};
  auto* run_cmd = app.add_subcommand("run", "Every stage from ingest to report");
  run_cmd->add_option("input", input, "Corpus dump")->required();
  run_cmd->add_option("-m,--model", run_models)->check(CLI::IsMember(pipeline::kModels))->capture_default_str();

  std::vector<std::string> format_models{"mlp"};
  auto* formats_cmd = app.add_subcommand("formats", "Compare sequence formats R1-R4");
  formats_cmd->add_option("-m,--model", format_models)->check(CLI::IsMember(pipeline::kModels))->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  cfg.format = sequence::format_from_string(format);
  cfg.handling = sequence::handling_from_string(handling);
  if (!overrides.empty()) cfg.overrides = overrides;
  cfg.topics.seed = cfg.seed;
  cfg.validate();

  if (*synth_cmd) {
    spec.seed = cfg.seed;
    pipeline::run_synth(spec, synth_out, truth_out);
  } else if (*ingest_cmd) {
    pipeline::run_ingest(cfg, input);
  } else if (*preprocess_cmd) {
    pipeline::run_preprocess(cfg);
  } else if (*topics_cmd) {
    pipeline::run_topics(cfg);
  } else if (*sequence_cmd) {
    pipeline::run_sequence(cfg);
  } else if (*annotate_cmd) {
    pipeline::run_annotate(cfg);
  } else if (*graph_cmd) {
    pipeline::run_build_graph(cfg);
  } else if (*embed_cmd) {
    pipeline::run_embed(cfg);
  } else if (*train_cmd) {
    if (grid) {
      const auto g_path = cfg.workdir / pipeline::artifact::kGraph;
      const auto e_path = cfg.workdir / pipeline::artifact::embeddings(cfg.format, cfg.handling);
      io::require_artifact(g_path);
      io::require_artifact(e_path);
      auto g = graph::graph_from_json(io::json::parse(io::read_file(g_path)));
      auto table = pipeline::read_embeddings(e_path);
      std::vector<int> keep;
      for (std::size_t i = 0; i < table.user_ids.size(); ++i) {
        if (g.labels[static_cast<std::size_t>(g.node_index(table.user_ids[i]))] >= 0) keep.push_back(static_cast<int>(i));
      }
      nn::Mat x(static_cast<Eigen::Index>(keep.size()), table.features.cols());
      std::vector<int> y;
      for (std::size_t k = 0; k < keep.size(); ++k) {
        x.row(static_cast<Eigen::Index>(k)) = table.features.row(keep[k]);
        y.push_back(g.labels[static_cast<std::size_t>(g.node_index(table.user_ids[static_cast<std::size_t>(keep[k])]))]);
      }
      auto result = embed::grid_search(x, y, embed::default_grid(), grid_runs, cfg.seed);
      io::write_file(cfg.workdir / "grid.json", result.to_json().dump(2) + "\n");
      const auto& best = result.entries[result.best];
      std::cout << "best: " << best.config.to_json().dump() << " val_f1=" << best.mean_val_f1
                << " test_f1=" << best.mean_f1 << '\n';
    } else {
      for (const auto& m : models) {
        auto t = pipeline::run_train(cfg, m);
        std::cout << m << ": test accuracy " << t.accuracy << ", F1 " << t.f1 << '\n';
      }
    }
  } else if (*eval_cmd) {
    if (labels.empty()) labels = cfg.workdir / pipeline::artifact::kLabels;
    if (eval_out.empty()) eval_out = cfg.workdir / "evaluation.json";
    auto m = pipeline::run_evaluate(predictions, labels,
                                    split.empty() ? std::nullopt : std::optional<std::string>(split), eval_out);
    std::cout << "accuracy " << m.accuracy << ", F1 " << m.f1 << '\n';
  } else if (*report_cmd) {
    std::cout << pipeline::run_report(cfg);
  } else if (*run_cmd) {
    std::cout << pipeline::run_all(cfg, input, run_models);
  } else if (*formats_cmd) {
    std::cout << pipeline::run_formats(cfg, format_models);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}

#pragma once

#include <array>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "khid/annotate.hpp"
#include "khid/embed.hpp"
#include "khid/gnn.hpp"
#include "khid/io.hpp"
#include "khid/metrics.hpp"
#include "khid/sequence.hpp"
#include "khid/synth.hpp"
#include "khid/topics.hpp"

// File-based pipeline. Every stage reads its inputs from the work directory,
// validates their schema and writes its own artifact there, so any stage
// can be re-run from cached upstream outputs.
namespace khid::pipeline {

namespace fs = std::filesystem;

struct RunConfig {
  fs::path workdir = "work";
  sequence::Format format = sequence::Format::R3;
  sequence::Handling handling = sequence::Handling::Truncation;
  sequence::TokenBudget budget;
  std::string provider = "hash";  // hash | remote
  std::uint64_t hash_seed = embed::kDefaultHashSeed;
  embed::RemoteOptions remote;
  topics::TopicParams topics;
  embed::FinetuneConfig head = default_head();
  gnn::GnnConfig gnn;
  annotate::AnnotationRules rules;
  std::optional<fs::path> overrides;
  std::array<double, 2> split{0.6, 0.2};
  std::uint64_t seed = 7;

  // Head-only training: larger step and more epochs than full fine-tuning.
  static embed::FinetuneConfig default_head();
  void validate() const;
  io::json to_json() const;
};

std::unique_ptr<embed::EmbeddingProvider> make_provider(const RunConfig& cfg);

// Model names accepted by run_train.
inline const std::vector<std::string> kModels{"gcn", "rgcn", "gat", "gatv2", "mlp", "untrained"};

namespace artifact {
inline constexpr const char* kCorpus = "corpus.jsonl";
inline constexpr const char* kPreprocessed = "preprocessed.jsonl";
inline constexpr const char* kThreadTopics = "topics_thread.json";
inline constexpr const char* kReplyTopics = "topics_reply.json";
inline constexpr const char* kUserTopics = "user_topics.json";
inline constexpr const char* kLabels = "labels.jsonl";
inline constexpr const char* kGraph = "graph.json";
inline constexpr const char* kReport = "report.json";
std::string sequences(sequence::Format f);
std::string embeddings(sequence::Format f, sequence::Handling h);
std::string train(const std::string& model, sequence::Format f, sequence::Handling h);
std::string predictions(const std::string& model, sequence::Format f, sequence::Handling h);
}  // namespace artifact

void run_synth(const synth::SyntheticSpec& spec, const fs::path& corpus_out, const fs::path& truth_out);
void run_ingest(const RunConfig& cfg, const fs::path& source);
void run_preprocess(const RunConfig& cfg);
void run_topics(const RunConfig& cfg);
void run_sequence(const RunConfig& cfg);
void run_annotate(const RunConfig& cfg);
void run_build_graph(const RunConfig& cfg);
void run_embed(const RunConfig& cfg);
// `model` is one of kModels. Returns the test metrics.
Metrics run_train(const RunConfig& cfg, const std::string& model);
// Scores a predictions file against a labels file, optionally restricted to
// one split, and writes the metrics to `out`.
Metrics run_evaluate(const fs::path& predictions, const fs::path& labels, const std::optional<std::string>& split,
                     const fs::path& out);
// Collects every training report in the work directory into report.json and
// returns the rendered summary table.
std::string run_report(const RunConfig& cfg);

// Every stage from ingest through report for the configured format. Returns
// the summary table.
std::string run_all(const RunConfig& cfg, const fs::path& source, const std::vector<std::string>& models);
// Sequence, embed and train for each of R1-R4, then report.
std::string run_formats(const RunConfig& cfg, const std::vector<std::string>& models);

// Embeddings artifact: rows in graph-node order.
struct EmbeddingTable {
  std::vector<std::string> user_ids;
  nn::Mat features;
  std::string provider;
  std::string format;
};
EmbeddingTable read_embeddings(const fs::path& path);

}  // namespace khid::pipeline

#include "khid/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "khid/corpus.hpp"
#include "khid/error.hpp"
#include "khid/graph.hpp"
#include "khid/text.hpp"

namespace khid::pipeline {
namespace {

// Prints one line per stage: input and output digests plus elapsed time.
// Timing goes to the log only, so artifacts stay reproducible.
class StageLog {
 public:
  explicit StageLog(std::string stage) : stage_(std::move(stage)), start_(std::chrono::steady_clock::now()) {}

  void input(const fs::path& p) { inputs_.push_back(p); }
  void output(const fs::path& p) { outputs_.push_back(p); }

  ~StageLog() {
    if (std::uncaught_exceptions() > 0) return;
    std::ostringstream line;
    line << "[" << stage_ << "]";
    for (const auto& p : inputs_) line << " in " << p.filename().string() << "=" << io::file_digest(p).substr(0, 12);
    for (const auto& p : outputs_) line << " out " << p.filename().string() << "=" << io::file_digest(p).substr(0, 12);
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    char buf[32];
    std::snprintf(buf, sizeof buf, " (%.2fs)", secs);
    std::clog << line.str() << buf << '\n';
  }

 private:
  std::string stage_;
  std::chrono::steady_clock::time_point start_;
  std::vector<fs::path> inputs_, outputs_;
};

fs::path at(const RunConfig& cfg, const std::string& name) { return cfg.workdir / name; }

fs::path need(const RunConfig& cfg, const std::string& name, StageLog& log) {
  auto p = at(cfg, name);
  io::require_artifact(p);
  log.input(p);
  return p;
}

io::json read_json(const fs::path& p, std::string_view schema) {
  io::json doc;
  try {
    doc = io::json::parse(io::read_file(p));
  } catch (const io::json::parse_error& e) {
    throw FormatError(p.string() + ": " + e.what());
  }
  io::check_schema(doc, schema, p);
  return doc;
}

void write_json(const fs::path& p, const io::json& doc, StageLog& log) {
  io::write_file(p, doc.dump(2) + "\n");
  log.output(p);
}

void write_text(const fs::path& p, const std::string& content, StageLog& log) {
  io::write_file(p, content);
  log.output(p);
}

// Reads a JSONL artifact whose first line is a header with `schema`.
std::vector<io::json> read_records(const fs::path& p, std::string_view schema, io::json* header = nullptr) {
  std::vector<io::json> out;
  bool seen = false;
  io::for_each_jsonl(p, [&](const io::json& r, std::size_t) {
    if (!seen) {
      io::check_schema(r, schema, p);
      if (header) *header = r;
      seen = true;
      return;
    }
    out.push_back(r);
  });
  if (!seen) io::check_schema(io::json::object(), schema, p);
  return out;
}

corpus::ForumCorpus load_corpus(const fs::path& p) {
  return corpus::parse_corpus(io::read_file(p), p.string());
}

std::string variant(sequence::Format f, sequence::Handling h) {
  return sequence::to_string(f) + "_" + sequence::to_string(h);
}

nn::Mat features_for(const graph::ForumGraph& g, const EmbeddingTable& table) {
  std::map<std::string, Eigen::Index> row;
  for (std::size_t i = 0; i < table.user_ids.size(); ++i) row[table.user_ids[i]] = static_cast<Eigen::Index>(i);
  nn::Mat out(static_cast<Eigen::Index>(g.node_count()), table.features.cols());
  for (std::size_t i = 0; i < g.node_count(); ++i) {
    auto it = row.find(g.nodes[i]);
    if (it == row.end()) throw IntegrityError("no embedding for user " + g.nodes[i]);
    out.row(static_cast<Eigen::Index>(i)) = table.features.row(it->second);
  }
  return out;
}

std::string predictions_jsonl(const graph::ForumGraph& g, const std::vector<int>& pred, const std::string& model) {
  auto h = io::header("khid.predictions");
  h["model"] = model;
  std::vector<io::json> lines{h};
  for (std::size_t i = 0; i < g.node_count(); ++i) {
    lines.push_back({{"user_id", g.nodes[i]},
                     {"prediction", pred[i] == 1 ? "key" : "non-key"},
                     {"split", graph::to_string(g.splits[i])}});
  }
  return io::dump_jsonl(lines);
}

}  // namespace

embed::FinetuneConfig RunConfig::default_head() {
  embed::FinetuneConfig c;
  c.batch_size = 16;
  c.learning_rate = 1e-3;
  c.epochs = 30;
  return c;
}

void RunConfig::validate() const {
  budget.validate();
  head.validate();
  gnn.validate();
  rules.validate();
  if (provider != "hash" && provider != "remote") throw ContractError("provider must be hash or remote");
  if (split[0] <= 0 || split[1] < 0 || split[0] + split[1] > 1) throw ContractError("invalid split fractions");
}

io::json RunConfig::to_json() const {
  return {{"format", sequence::to_string(format)},
          {"handling", sequence::to_string(handling)},
          {"budget", {budget.metadata, budget.thread, budget.reply}},
          {"provider", provider},
          {"topics",
           {{"reducer", topics.reducer},
            {"target_dim", topics.target_dim},
            {"min_cluster_size", topics.min_cluster_size},
            {"top_k", topics.top_k}}},
          {"head", head.to_json()},
          {"gnn", gnn.to_json()},
          {"split", {split[0], split[1], 1.0 - split[0] - split[1]}},
          {"seed", seed}};
}

std::unique_ptr<embed::EmbeddingProvider> make_provider(const RunConfig& cfg) {
  if (cfg.provider == "remote") return std::make_unique<embed::RemoteProvider>(cfg.remote);
  return std::make_unique<embed::HashProvider>(cfg.hash_seed);
}

namespace artifact {
std::string sequences(sequence::Format f) { return "sequences_" + sequence::to_string(f) + ".jsonl"; }
std::string embeddings(sequence::Format f, sequence::Handling h) { return "embeddings_" + variant(f, h) + ".jsonl"; }
std::string train(const std::string& model, sequence::Format f, sequence::Handling h) {
  return "train_" + model + "_" + variant(f, h) + ".json";
}
std::string predictions(const std::string& model, sequence::Format f, sequence::Handling h) {
  return "predictions_" + model + "_" + variant(f, h) + ".jsonl";
}
}  // namespace artifact

void run_synth(const synth::SyntheticSpec& spec, const fs::path& corpus_out, const fs::path& truth_out) {
  StageLog log("synth");
  auto s = synth::generate(spec);
  if (corpus_out.has_parent_path()) fs::create_directories(corpus_out.parent_path());
  write_text(corpus_out, synth::corpus_jsonl(s, spec), log);
  if (!truth_out.empty()) write_text(truth_out, annotate::overrides_to_jsonl(s.truth), log);
}

void run_ingest(const RunConfig& cfg, const fs::path& source) {
  StageLog log("ingest");
  io::require_artifact(source);
  log.input(source);
  auto c = corpus::ingest_corpus(source);
  fs::create_directories(cfg.workdir);
  write_text(at(cfg, artifact::kCorpus), corpus::serialize_corpus(c), log);
}

void run_preprocess(const RunConfig& cfg) {
  StageLog log("preprocess");
  auto c = load_corpus(need(cfg, artifact::kCorpus, log));
  write_text(at(cfg, artifact::kPreprocessed), corpus::serialize_corpus(corpus::preprocess_corpus(c)), log);
}

void run_topics(const RunConfig& cfg) {
  StageLog log("topics");
  auto c = load_corpus(need(cfg, artifact::kPreprocessed, log));
  auto provider = make_provider(cfg);
  io::json users = io::document("khid.user_topics");
  for (auto kind : {topics::DocKind::Thread, topics::DocKind::Reply}) {
    auto ut = topics::user_topics(c, *provider, kind, cfg.topics);
    io::json model = ut.has_model ? topics::topic_model_to_json(ut.model, cfg.topics.top_k) : io::document("khid.topics");
    if (!ut.has_model) {
      model["parameters"] = {{"reducer", cfg.topics.reducer},
                             {"target_dim", cfg.topics.target_dim},
                             {"min_cluster_size", cfg.topics.min_cluster_size},
                             {"seed", cfg.topics.seed}};
      model["clusters"] = io::json::array();
    }
    model["documents"] = ut.documents.size();
    model["noise"] = std::count(ut.assignment.labels.begin(), ut.assignment.labels.end(), -1);
    write_json(at(cfg, kind == topics::DocKind::Thread ? artifact::kThreadTopics : artifact::kReplyTopics), model, log);
    users[topics::to_string(kind)] = ut.per_user;
  }
  write_json(at(cfg, artifact::kUserTopics), users, log);
}

void run_sequence(const RunConfig& cfg) {
  StageLog log("sequence");
  auto c = load_corpus(need(cfg, artifact::kPreprocessed, log));
  std::optional<io::json> topics_doc;
  if (sequence::uses_thread_topics(cfg.format) || sequence::uses_reply_topics(cfg.format)) {
    topics_doc = read_json(need(cfg, artifact::kUserTopics, log), "khid.user_topics");
  }
  auto topic_text = [&](const char* kind, const std::string& user) -> std::optional<std::string> {
    if (!topics_doc) return std::nullopt;
    const auto& per_user = topics_doc->at(kind);
    if (!per_user.contains(user)) return std::string();
    return text::join(per_user.at(user).get<std::vector<std::string>>());
  };
  corpus::CorpusIndex idx(c);
  auto h = io::header("khid.sequences");
  h["format"] = sequence::to_string(cfg.format);
  std::vector<io::json> lines{h};
  for (const auto& u : c.users) {
    auto seq = sequence::build_sequence(u, text::join(idx.thread_texts(u.user_id)), topic_text("thread", u.user_id),
                                        text::join(idx.reply_texts(u.user_id)), topic_text("reply", u.user_id),
                                        cfg.format);
    lines.push_back({{"user_id", u.user_id}, {"format", sequence::to_string(cfg.format)}, {"text", seq.text()}});
  }
  write_text(at(cfg, artifact::sequences(cfg.format)), io::dump_jsonl(lines), log);
}

void run_annotate(const RunConfig& cfg) {
  StageLog log("annotate");
  auto c = load_corpus(need(cfg, artifact::kPreprocessed, log));
  std::vector<annotate::LabelOverride> overrides;
  if (cfg.overrides) {
    io::require_artifact(*cfg.overrides);
    log.input(*cfg.overrides);
    overrides = annotate::read_overrides(*cfg.overrides);
  }
  auto labels = annotate::merge_labels(annotate::auto_candidates(c, cfg.rules), overrides);
  write_text(at(cfg, artifact::kLabels), annotate::labels_to_jsonl(labels), log);
}

void run_build_graph(const RunConfig& cfg) {
  StageLog log("build-graph");
  auto c = load_corpus(need(cfg, artifact::kPreprocessed, log));
  auto labels = annotate::read_labels(need(cfg, artifact::kLabels, log));
  auto g = graph::build_graph(c);
  std::map<std::string, int> by_user;
  for (const auto& l : labels) by_user[l.user_id] = l.label;
  graph::assign_labels(g, by_user);
  graph::assign_splits(g, cfg.split, cfg.seed);
  write_json(at(cfg, artifact::kGraph), graph::graph_to_json(g), log);
}

void run_embed(const RunConfig& cfg) {
  StageLog log("embed");
  io::json header;
  auto records = read_records(need(cfg, artifact::sequences(cfg.format), log), "khid.sequences", &header);
  if (header.value("format", "") != sequence::to_string(cfg.format)) {
    throw FormatError("sequences artifact holds format " + header.value("format", std::string("?")));
  }
  auto provider = make_provider(cfg);
  std::vector<sequence::UserSequence> seqs;
  for (const auto& r : records) {
    sequence::UserSequence s;
    s.user_id = r.at("user_id").get<std::string>();
    s.format = cfg.format;
    s.rendered = text::split_whitespace(r.at("text").get<std::string>());
    seqs.push_back(std::move(s));
  }

  std::optional<sequence::AttentionPool> pool;
  if (cfg.handling == sequence::Handling::HierSelfAttention) {
    // The query is learned on the training split only.
    auto g = graph::graph_from_json(read_json(need(cfg, artifact::kGraph, log), "khid.graph"));
    std::vector<nn::Mat> segments;
    std::vector<int> labels, train;
    for (const auto& s : seqs) {
      const int node = g.node_index(s.user_id);
      segments.push_back(embed::segment_vectors(s, *provider));
      labels.push_back(g.labels[static_cast<std::size_t>(node)]);
      if (g.splits[static_cast<std::size_t>(node)] == graph::SplitTag::Train) {
        train.push_back(static_cast<int>(segments.size() - 1));
      }
    }
    pool = sequence::fit_attention_pool(segments, labels, train, {30, 1e-2, cfg.seed});
  }

  auto h = io::header("khid.embeddings");
  h["provider"] = provider->name();
  h["format"] = sequence::to_string(cfg.format);
  h["handling"] = sequence::to_string(cfg.handling);
  h["dimension"] = provider->dimension();
  std::vector<io::json> lines{h};
  for (const auto& s : seqs) {
    auto z = embed::embed_sequence(s, *provider, cfg.handling, cfg.budget, pool ? &*pool : nullptr);
    lines.push_back({{"user_id", s.user_id},
                     {"z", std::vector<double>(z.data(), z.data() + z.size())},
                     {"provider", provider->name()},
                     {"format", sequence::to_string(cfg.format)}});
  }
  write_text(at(cfg, artifact::embeddings(cfg.format, cfg.handling)), io::dump_jsonl(lines), log);
}

EmbeddingTable read_embeddings(const fs::path& path) {
  io::json header;
  auto records = read_records(path, "khid.embeddings", &header);
  EmbeddingTable t;
  t.provider = header.value("provider", "");
  t.format = header.value("format", "");
  const auto dim = header.at("dimension").get<Eigen::Index>();
  t.features.resize(static_cast<Eigen::Index>(records.size()), dim);
  for (std::size_t i = 0; i < records.size(); ++i) {
    t.user_ids.push_back(records[i].at("user_id").get<std::string>());
    const auto z = records[i].at("z").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(z.size()) != dim) throw FormatError("embedding of wrong dimension for " + t.user_ids.back());
    for (Eigen::Index k = 0; k < dim; ++k) t.features(static_cast<Eigen::Index>(i), k) = z[static_cast<std::size_t>(k)];
  }
  return t;
}

Metrics run_train(const RunConfig& cfg, const std::string& model) {
  if (std::find(kModels.begin(), kModels.end(), model) == kModels.end()) {
    throw ContractError("unknown model: " + model);
  }
  StageLog log("train");
  auto g = graph::graph_from_json(read_json(need(cfg, artifact::kGraph, log), "khid.graph"));
  auto table = read_embeddings(need(cfg, artifact::embeddings(cfg.format, cfg.handling), log));
  const nn::Mat x = features_for(g, table);

  io::json report;
  std::vector<int> predictions;
  Metrics test;
  if (model == "mlp" || model == "untrained") {
    Split split{g.mask(graph::SplitTag::Train), g.mask(graph::SplitTag::Val), g.mask(graph::SplitTag::Test)};
    auto config = cfg.head;
    if (model == "untrained") config.epochs = 0;
    auto fit = embed::finetune_head(x, g.labels, split, config, cfg.seed);
    nn::Mat logits = fit.head.logits(nn::Tensor::constant(x), false).value();
    for (Eigen::Index i = 0; i < logits.rows(); ++i) predictions.push_back(logits(i, 1) > logits(i, 0));
    report = io::document("khid.train");
    report["model"] = model;
    report["config"] = config.to_json();
    report["seed"] = cfg.seed;
    report["best_epoch"] = fit.best_epoch;
    report["epochs"] = io::json::array();
    for (std::size_t e = 0; e < fit.epoch_train_loss.size(); ++e) {
      report["epochs"].push_back({{"epoch", e + 1}, {"train_loss", fit.epoch_train_loss[e]}});
    }
    report["metrics"] = {{"train", metrics_to_json(fit.train)},
                         {"val", metrics_to_json(fit.val)},
                         {"test", metrics_to_json(fit.test)}};
    test = fit.test;
  } else {
    auto config = cfg.gnn;
    config.arch = gnn::arch_from_string(model);
    auto result = gnn::train_gnn(g, x, config, cfg.seed);
    report = gnn::train_report(result, config, cfg.seed);
    predictions = result.predictions;
    test = result.test;
  }
  report["format"] = sequence::to_string(cfg.format);
  report["handling"] = sequence::to_string(cfg.handling);
  report["provider"] = table.provider;
  write_json(at(cfg, artifact::train(model, cfg.format, cfg.handling)), report, log);
  write_text(at(cfg, artifact::predictions(model, cfg.format, cfg.handling)), predictions_jsonl(g, predictions, model),
             log);
  return test;
}

Metrics run_evaluate(const fs::path& predictions, const fs::path& labels, const std::optional<std::string>& split,
                     const fs::path& out) {
  StageLog log("evaluate");
  io::require_artifact(predictions);
  io::require_artifact(labels);
  log.input(predictions);
  log.input(labels);
  std::map<std::string, int> truth;
  for (const auto& l : annotate::read_labels(labels)) truth[l.user_id] = l.label;
  std::vector<int> p, y;
  for (const auto& r : read_records(predictions, "khid.predictions")) {
    if (split && r.value("split", "") != *split) continue;
    const auto id = r.at("user_id").get<std::string>();
    auto it = truth.find(id);
    if (it == truth.end()) throw LookupError("prediction for unlabelled user " + id);
    p.push_back(r.at("prediction").get<std::string>() == "key" ? 1 : 0);
    y.push_back(it->second);
  }
  auto m = evaluate(p, y);
  io::json doc = io::document("khid.evaluation");
  doc["predictions"] = predictions.filename().string();
  doc["split"] = split ? *split : "all";
  doc["count"] = p.size();
  doc["metrics"] = metrics_to_json(m);
  write_json(out, doc, log);
  return m;
}

std::string run_report(const RunConfig& cfg) {
  StageLog log("report");
  std::vector<fs::path> files;
  if (fs::exists(cfg.workdir)) {
    for (const auto& e : fs::directory_iterator(cfg.workdir)) {
      const auto name = e.path().filename().string();
      if (name.rfind("train_", 0) == 0 && e.path().extension() == ".json") files.push_back(e.path());
    }
  }
  if (files.empty()) throw StageDependencyError("missing upstream artifact: no train_*.json in " + cfg.workdir.string());
  std::sort(files.begin(), files.end());

  io::json doc = io::document("khid.report");
  doc["rows"] = io::json::array();
  std::map<std::string, std::vector<std::pair<double, std::string>>> by_model;
  std::ostringstream table;
  table << "model      format  handling            accuracy  precision  recall  f1\n";
  for (const auto& f : files) {
    log.input(f);
    auto r = read_json(f, "khid.train");
    const auto& t = r.at("metrics").at("test");
    io::json row{{"model", r.at("model")},
                 {"format", r.at("format")},
                 {"handling", r.at("handling")},
                 {"provider", r.at("provider")},
                 {"best_epoch", r.at("best_epoch")},
                 {"test", t},
                 {"val_f1", r.at("metrics").at("val").at("f1")}};
    doc["rows"].push_back(row);
    by_model[r.at("model").get<std::string>() + "/" + r.at("handling").get<std::string>()].emplace_back(
        t.at("f1").get<double>(), r.at("format").get<std::string>());
    char line[160];
    std::snprintf(line, sizeof line, "%-10s %-7s %-19s %8.4f  %9.4f  %6.4f  %.4f\n",
                  r.at("model").get<std::string>().c_str(), r.at("format").get<std::string>().c_str(),
                  r.at("handling").get<std::string>().c_str(), t.at("accuracy").get<double>(),
                  t.at("precision").get<double>(), t.at("recall").get<double>(), t.at("f1").get<double>());
    table << line;
  }
  // Formats ranked by test F1 for every model that ran on more than one.
  doc["format_ranking"] = io::json::object();
  for (auto& [key, entries] : by_model) {
    if (entries.size() < 2) continue;
    std::stable_sort(entries.begin(), entries.end(),
                     [](const auto& a, const auto& b) { return a.first != b.first ? a.first > b.first : a.second < b.second; });
    auto& ranking = doc["format_ranking"][key];
    for (const auto& [f1, fmt] : entries) ranking.push_back({{"format", fmt}, {"f1", f1}});
  }
  write_json(at(cfg, artifact::kReport), doc, log);
  return table.str();
}

std::string run_all(const RunConfig& cfg, const fs::path& source, const std::vector<std::string>& models) {
  cfg.validate();
  run_ingest(cfg, source);
  run_preprocess(cfg);
  run_topics(cfg);
  run_sequence(cfg);
  run_annotate(cfg);
  run_build_graph(cfg);
  run_embed(cfg);
  for (const auto& m : models) run_train(cfg, m);
  return run_report(cfg);
}

std::string run_formats(const RunConfig& cfg, const std::vector<std::string>& models) {
  cfg.validate();
  for (auto f : {sequence::Format::R1, sequence::Format::R2, sequence::Format::R3, sequence::Format::R4}) {
    RunConfig c = cfg;
    c.format = f;
    run_sequence(c);
    run_embed(c);
    for (const auto& m : models) run_train(c, m);
  }
  return run_report(cfg);
}

}  // namespace khid::pipeline

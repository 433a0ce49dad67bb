#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "khid/embed.hpp"
#include "khid/error.hpp"
#include "khid/rng.hpp"

namespace khid::embed {
namespace {

nn::Tensor rows_of(const Mat& features, std::span<const int> rows) {
  Mat out(static_cast<Eigen::Index>(rows.size()), features.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = features.row(rows[i]);
  return nn::Tensor::constant(std::move(out));
}

std::vector<int> targets_of(std::span<const int> labels, std::span<const int> rows) {
  std::vector<int> out;
  out.reserve(rows.size());
  for (int r : rows) out.push_back(labels[static_cast<std::size_t>(r)]);
  return out;
}

std::vector<int> predict(const MlpHead& head, const Mat& features, std::span<const int> rows) {
  if (rows.empty()) return {};
  const Mat logits = head.logits(rows_of(features, rows), false).value();
  std::vector<int> out(rows.size());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) out[static_cast<std::size_t>(i)] = logits(i, 1) > logits(i, 0);
  return out;
}

Metrics score(const MlpHead& head, const Mat& features, std::span<const int> labels, std::span<const int> rows) {
  if (rows.empty()) return {};
  return evaluate(predict(head, features, rows), targets_of(labels, rows));
}

double eval_loss(const MlpHead& head, const Mat& features, std::span<const int> labels, std::span<const int> rows,
                 std::span<const double> weights) {
  std::vector<int> local(rows.size());
  std::iota(local.begin(), local.end(), 0);
  auto logits = head.logits(rows_of(features, rows), false);
  return nn::cross_entropy(logits, local, targets_of(labels, rows), weights).item();
}

std::pair<double, double> mean_std(const std::vector<double>& xs) {
  if (xs.empty()) return {0.0, 0.0};
  const double m = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  return {m, std::sqrt(ss / static_cast<double>(xs.size()))};
}

}  // namespace

MlpHead MlpHead::create(std::size_t input_dim, const std::vector<int>& hidden, std::uint64_t seed, double dropout,
                        double slope) {
  MlpHead head;
  head.dropout = dropout;
  head.slope = slope;
  std::vector<Eigen::Index> dims{static_cast<Eigen::Index>(input_dim)};
  for (int h : hidden) dims.push_back(h);
  dims.push_back(2);
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    head.weights.push_back(nn::Tensor::parameter(nn::glorot_uniform(dims[l], dims[l + 1], seed, l)));
    head.biases.push_back(nn::Tensor::parameter(Mat::Zero(1, dims[l + 1])));
  }
  return head;
}

std::size_t MlpHead::input_dim() const {
  return weights.empty() ? 0 : static_cast<std::size_t>(weights.front().rows());
}

std::vector<nn::Tensor> MlpHead::parameters() const {
  std::vector<nn::Tensor> out;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    out.push_back(weights[l]);
    out.push_back(biases[l]);
  }
  return out;
}

MlpHead MlpHead::clone() const {
  MlpHead copy;
  copy.dropout = dropout;
  copy.slope = slope;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    copy.weights.push_back(nn::Tensor::parameter(weights[l].value()));
    copy.biases.push_back(nn::Tensor::parameter(biases[l].value()));
  }
  return copy;
}

nn::Tensor MlpHead::logits(const nn::Tensor& inputs, bool training, std::uint64_t seed, std::uint64_t stream) const {
  if (static_cast<std::size_t>(inputs.cols()) != input_dim()) {
    throw ShapeError("head input has " + std::to_string(inputs.cols()) + " columns, expected " +
                     std::to_string(input_dim()));
  }
  nn::Tensor h = inputs;
  const std::size_t last = weights.size() - 1;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    if (l < last) h = nn::dropout(h, dropout, seed, hash_combine(stream, l), training);
    h = nn::add(nn::matmul(h, weights[l]), biases[l]);
    if (l < last) h = nn::leaky_relu(h, slope);
  }
  return h;
}

VectorXd head_forward(const VectorXd& z, const MlpHead& head) {
  if (static_cast<std::size_t>(z.size()) != head.input_dim()) {
    throw ShapeError("embedding has dimension " + std::to_string(z.size()) + ", head expects " +
                     std::to_string(head.input_dim()));
  }
  Mat row = z.transpose();
  return nn::softmax(head.logits(nn::Tensor::constant(row), false), 1).value().row(0).transpose();
}

void FinetuneConfig::validate() const {
  if (batch_size <= 0) throw ContractError("batch_size must be positive");
  if (!(learning_rate > 0)) throw ContractError("learning_rate must be positive");
  if (epochs < 0) throw ContractError("epochs must be non-negative");
  if (warmup_fraction < 0 || warmup_fraction > 1) throw ContractError("warmup_fraction must lie in [0, 1]");
  if (final_lr_factor < 0 || final_lr_factor > 1) throw ContractError("final_lr_factor must lie in [0, 1]");
  if (split[0] <= 0 || split[1] < 0 || split[0] + split[1] > 1 + 1e-12) {
    throw ContractError("split fractions must be positive and sum to at most 1");
  }
  for (int h : hidden) {
    if (h <= 0) throw ContractError("hidden sizes must be positive");
  }
  if (dropout < 0 || dropout >= 1) throw ContractError("dropout must lie in [0, 1)");
}

io::json FinetuneConfig::to_json() const {
  return {{"batch_size", batch_size},
          {"learning_rate", learning_rate},
          {"epochs", epochs},
          {"weight_decay", weight_decay},
          {"warmup_fraction", warmup_fraction},
          {"final_lr_factor", final_lr_factor},
          {"split", {split[0], split[1], 1.0 - split[0] - split[1]}},
          {"hidden", hidden},
          {"dropout", dropout},
          {"class_weighted", class_weighted}};
}

FinetuneResult finetune_head(const Mat& features, std::span<const int> labels, const Split& split,
                             const FinetuneConfig& config, std::uint64_t seed, bool record_steps) {
  config.validate();
  if (static_cast<std::size_t>(features.rows()) != labels.size()) {
    throw ShapeError("features have " + std::to_string(features.rows()) + " rows but there are " +
                     std::to_string(labels.size()) + " labels");
  }
  std::set<int> seen;
  for (const auto* part : {&split.train, &split.val, &split.test}) {
    for (int i : *part) {
      if (i < 0 || static_cast<std::size_t>(i) >= labels.size()) throw ContractError("split index out of range");
      if (labels[static_cast<std::size_t>(i)] != 0 && labels[static_cast<std::size_t>(i)] != 1) {
        throw ContractError("labels must be binary");
      }
      if (!seen.insert(i).second) throw ContractError("split indices overlap");
    }
  }
  std::array<double, 2> counts{0, 0};
  for (int i : split.train) counts[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])] += 1;
  if (counts[0] == 0 || counts[1] == 0) throw DegenerateLabelError("training labels hold a single class");
  std::vector<double> weights;
  if (config.class_weighted) {
    const double n = counts[0] + counts[1];
    weights = {n / (2 * counts[0]), n / (2 * counts[1])};
  }

  FinetuneResult result;
  MlpHead head = MlpHead::create(static_cast<std::size_t>(features.cols()), config.hidden, seed, config.dropout);
  MlpHead best = head.clone();
  double best_f1 = score(head, features, labels, split.val).f1;

  nn::AdamW opt(head.parameters(), {0.9, 0.999, 1e-8, config.weight_decay});
  const auto batches = static_cast<std::int64_t>((split.train.size() + static_cast<std::size_t>(config.batch_size) - 1) /
                                                  static_cast<std::size_t>(config.batch_size));
  nn::WarmupLinearSchedule schedule{config.learning_rate, std::max<std::int64_t>(1, batches * config.epochs),
                                    config.warmup_fraction, config.final_lr_factor};
  if (record_steps) result.step_train_loss.push_back(eval_loss(head, features, labels, split.train, weights));

  std::int64_t step = 0;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::vector<int> order = split.train;
    Rng(seed, 0x5348554646ULL + static_cast<std::uint64_t>(epoch)).shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const auto end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      std::span<const int> batch(order.data() + start, end - start);
      std::vector<int> local(batch.size());
      std::iota(local.begin(), local.end(), 0);
      auto logits = head.logits(rows_of(features, batch), true, seed, static_cast<std::uint64_t>(step));
      auto loss = nn::cross_entropy(logits, local, targets_of(labels, batch), weights);
      opt.zero_grad();
      nn::backward(loss);
      opt.step(schedule.at(step));
      ++step;
      if (record_steps) result.step_train_loss.push_back(eval_loss(head, features, labels, split.train, weights));
    }
    result.epoch_train_loss.push_back(eval_loss(head, features, labels, split.train, weights));
    const double f1 = score(head, features, labels, split.val).f1;
    if (f1 > best_f1) {
      best_f1 = f1;
      best = head.clone();
      result.best_epoch = epoch;
    }
  }

  result.train = score(best, features, labels, split.train);
  result.val = score(best, features, labels, split.val);
  result.test = score(best, features, labels, split.test);
  result.test_predictions = predict(best, features, split.test);
  result.head = std::move(best);
  return result;
}

std::vector<FinetuneConfig> default_grid() {
  std::vector<FinetuneConfig> grid;
  for (int batch : {16, 24}) {
    for (double lr : {1e-5, 5e-5}) {
      for (int epochs : {1, 5}) {
        FinetuneConfig c;
        c.batch_size = batch;
        c.learning_rate = lr;
        c.epochs = epochs;
        grid.push_back(c);
      }
    }
  }
  return grid;
}

GridResult grid_search(const Mat& features, std::span<const int> labels, const std::vector<FinetuneConfig>& grid,
                       int runs, std::uint64_t seed) {
  if (grid.empty()) throw ContractError("grid_search: empty grid");
  if (runs <= 0) throw ContractError("grid_search: runs must be positive");
  GridResult result;
  result.runs = runs;
  for (const auto& config : grid) {
    std::vector<double> val_f1, acc, f1;
    for (int r = 0; r < runs; ++r) {
      const auto run_seed = hash_combine(seed, static_cast<std::uint64_t>(r));
      auto split = stratified_split(labels, config.split, run_seed);
      auto fit = finetune_head(features, labels, split, config, run_seed);
      val_f1.push_back(fit.val.f1);
      acc.push_back(fit.test.accuracy);
      f1.push_back(fit.test.f1);
    }
    GridEntry e{config, 0, 0, 0, 0, 0, 0};
    std::tie(e.mean_val_f1, e.std_val_f1) = mean_std(val_f1);
    std::tie(e.mean_accuracy, e.std_accuracy) = mean_std(acc);
    std::tie(e.mean_f1, e.std_f1) = mean_std(f1);
    result.entries.push_back(e);
  }
  for (std::size_t i = 1; i < result.entries.size(); ++i) {
    const auto& a = result.entries[i];
    const auto& b = result.entries[result.best];
    if (std::tie(a.mean_val_f1, a.mean_accuracy) > std::tie(b.mean_val_f1, b.mean_accuracy) ||
        (a.mean_val_f1 == b.mean_val_f1 && a.mean_accuracy == b.mean_accuracy &&
         a.config.learning_rate < b.config.learning_rate)) {
      result.best = i;
    }
  }
  return result;
}

io::json GridResult::to_json() const {
  io::json doc = io::document("khid.grid");
  doc["runs"] = runs;
  doc["best"] = best;
  doc["entries"] = io::json::array();
  for (const auto& e : entries) {
    doc["entries"].push_back({{"config", e.config.to_json()},
                              {"val_f1", {{"mean", e.mean_val_f1}, {"std", e.std_val_f1}}},
                              {"accuracy", {{"mean", e.mean_accuracy}, {"std", e.std_accuracy}}},
                              {"f1", {{"mean", e.mean_f1}, {"std", e.std_f1}}}});
  }
  return doc;
}

}  // namespace khid::embed

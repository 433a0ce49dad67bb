#include "khid/gnn.hpp"

#include <algorithm>
#include <numeric>

#include "khid/error.hpp"
#include "khid/rng.hpp"

namespace khid::gnn {

std::string to_string(Arch a) {
  switch (a) {
    case Arch::GCN: return "gcn";
    case Arch::RGCN: return "rgcn";
    case Arch::GAT: return "gat";
    case Arch::GATv2: return "gatv2";
  }
  return "?";
}

Arch arch_from_string(std::string_view s) {
  for (auto a : {Arch::GCN, Arch::RGCN, Arch::GAT, Arch::GATv2}) {
    if (to_string(a) == s) return a;
  }
  throw FormatError("unknown architecture: " + std::string(s));
}

void GnnConfig::validate() const {
  if (layers < 1) throw ContractError("layers must be at least 1");
  if (hidden <= 0) throw ContractError("hidden size must be positive");
  if (dropout < 0 || dropout >= 1) throw ContractError("dropout must lie in [0, 1)");
  if (!(learning_rate > 0)) throw ContractError("learning rate must be positive");
  if (epochs < 0) throw ContractError("epochs must be non-negative");
  if (arch == Arch::GAT || arch == Arch::GATv2) {
    if (heads < 1) throw ContractError("heads must be at least 1");
    if (layers > 1 && hidden % heads != 0) throw ContractError("hidden size must be divisible by heads");
  }
}

io::json GnnConfig::to_json() const {
  return {{"arch", to_string(arch)},
          {"layers", layers},
          {"hidden", hidden},
          {"dropout", dropout},
          {"learning_rate", learning_rate},
          {"epochs", epochs},
          {"heads", heads},
          {"attention_slope", attention_slope},
          {"activation_slope", activation_slope},
          {"weight_decay", weight_decay},
          {"class_weighted", class_weighted},
          {"self_loops", self_loops}};
}

// ---- layers --------------------------------------------------------------------

Tensor gcn_layer(const Tensor& h, const std::shared_ptr<const nn::SparseOperand>& a_hat, const Tensor& w,
                 double slope) {
  return nn::leaky_relu(nn::spmm(a_hat, nn::matmul(h, w)), slope);
}

Tensor rgcn_layer(const Tensor& h, const std::vector<std::shared_ptr<const nn::SparseOperand>>& a_rel,
                  const std::vector<Tensor>& w_rel, const Tensor& w_self, double slope) {
  if (a_rel.size() != w_rel.size()) {
    throw ContractError("rgcn_layer: " + std::to_string(a_rel.size()) + " adjacencies for " +
                        std::to_string(w_rel.size()) + " relation weights");
  }
  Tensor acc = nn::matmul(h, w_self);
  for (std::size_t r = 0; r < a_rel.size(); ++r) {
    if (!a_rel[r]) throw ContractError("rgcn_layer: missing adjacency for relation " + std::to_string(r));
    acc = nn::add(acc, nn::spmm(a_rel[r], nn::matmul(h, w_rel[r])));
  }
  return nn::leaky_relu(acc, slope);
}

EdgeIndex attention_edges(const graph::ForumGraph& g, bool self_loops) {
  EdgeIndex e;
  e.nodes = static_cast<int>(g.node_count());
  auto pairs = g.message_pairs();
  if (self_loops) {
    for (int i = 0; i < e.nodes; ++i) pairs.emplace_back(i, i);
    std::sort(pairs.begin(), pairs.end(), [](const auto& a, const auto& b) {
      return std::tie(a.second, a.first) < std::tie(b.second, b.first);
    });
  }
  for (const auto& [src, dst] : pairs) {
    e.src.push_back(src);
    e.dst.push_back(dst);
  }
  check_neighbourhoods(e);
  return e;
}

void check_neighbourhoods(const EdgeIndex& e) {
  std::vector<char> has(static_cast<std::size_t>(e.nodes), 0);
  for (int d : e.dst) has[static_cast<std::size_t>(d)] = 1;
  for (int i = 0; i < e.nodes; ++i) {
    if (!has[static_cast<std::size_t>(i)]) {
      throw ContractError("attention layer: node " + std::to_string(i) + " has an empty neighbourhood");
    }
  }
}

namespace {

Tensor combine_heads(std::vector<Tensor> outs, bool concat_heads) {
  if (concat_heads) return nn::concat(outs, 1);
  Tensor acc = outs[0];
  for (std::size_t k = 1; k < outs.size(); ++k) acc = nn::add(acc, outs[k]);
  return nn::scale(acc, 1.0 / static_cast<double>(outs.size()));
}

Tensor aggregate(const Tensor& states, const Tensor& alpha, const EdgeIndex& edges) {
  return nn::edge_aggregate(states, alpha, edges.src, edges.dst, edges.nodes);
}

}  // namespace

Tensor gat_layer(const Tensor& h, const EdgeIndex& edges, const std::vector<GatHead>& heads, bool concat_heads,
                 double attention_slope, double slope, std::vector<Tensor>* alpha_out) {
  if (heads.empty()) throw ContractError("gat_layer: no heads");
  check_neighbourhoods(edges);
  std::vector<Tensor> outs;
  for (const auto& head : heads) {
    const auto out = head.w.cols();
    if (head.a.rows() != 2 * out || head.a.cols() != 1) {
      throw ShapeError("gat_layer: attention vector must be " + std::to_string(2 * out) + " x 1");
    }
    Tensor wh = nn::matmul(h, head.w);
    Tensor a_row = nn::transpose(head.a);
    Tensor a_dst = nn::transpose(nn::slice_cols(a_row, 0, out));
    Tensor a_src = nn::transpose(nn::slice_cols(a_row, out, out));
    Tensor score = nn::add(nn::gather_rows(nn::matmul(wh, a_dst), edges.dst),
                           nn::gather_rows(nn::matmul(wh, a_src), edges.src));
    Tensor alpha = nn::segment_softmax(nn::leaky_relu(score, attention_slope), edges.dst, edges.nodes);
    if (alpha_out) alpha_out->push_back(alpha);
    outs.push_back(nn::leaky_relu(aggregate(wh, alpha, edges), slope));
  }
  return combine_heads(std::move(outs), concat_heads);
}

Tensor gatv2_layer(const Tensor& h, const EdgeIndex& edges, const std::vector<Gatv2Head>& heads, bool concat_heads,
                   double attention_slope, double slope, std::vector<Tensor>* alpha_out) {
  if (heads.empty()) throw ContractError("gatv2_layer: no heads");
  check_neighbourhoods(edges);
  std::vector<Tensor> outs;
  for (const auto& head : heads) {
    const auto out = head.w_src.cols();
    if (head.w_dst.cols() != out || head.a.rows() != out || head.a.cols() != 1) {
      throw ShapeError("gatv2_layer: inconsistent head shapes");
    }
    Tensor p = nn::matmul(h, head.w_dst);
    Tensor q = nn::matmul(h, head.w_src);
    Tensor score = nn::edge_pair_score(p, q, head.a, edges.src, edges.dst, attention_slope);
    Tensor alpha = nn::segment_softmax(score, edges.dst, edges.nodes);
    if (alpha_out) alpha_out->push_back(alpha);
    outs.push_back(nn::leaky_relu(aggregate(q, alpha, edges), slope));
  }
  return combine_heads(std::move(outs), concat_heads);
}

Tensor output_projection(const Tensor& h, const Tensor& w_o, const Tensor& b_o, double slope) {
  if (w_o.rows() != h.cols() || w_o.cols() != 2 || b_o.rows() != 1 || b_o.cols() != 2) {
    throw ShapeError("output_projection: states " + nn::shape_str(h.value()) + ", W_o " + nn::shape_str(w_o.value()) +
                     ", b_o " + nn::shape_str(b_o.value()));
  }
  return nn::add(nn::matmul(nn::leaky_relu(h, slope), w_o), b_o);
}

// ---- model -----------------------------------------------------------------

GraphContext prepare_context(const graph::ForumGraph& g, const GnnConfig& config) {
  GraphContext ctx;
  switch (config.arch) {
    case Arch::GCN:
      ctx.symmetric = std::make_shared<const nn::SparseOperand>(
          graph::normalize_adjacency(g, graph::NormMode::Symmetric).matrix);
      break;
    case Arch::RGCN:
      for (auto r : graph::kRelations) {
        ctx.relations.push_back(std::make_shared<const nn::SparseOperand>(
            graph::normalize_adjacency(g, graph::NormMode::Row, r).matrix));
      }
      break;
    case Arch::GAT:
    case Arch::GATv2:
      ctx.edges = attention_edges(g, config.self_loops);
      break;
  }
  return ctx;
}

GnnModel GnnModel::create(const GnnConfig& config, std::size_t input_dim, std::uint64_t seed) {
  config.validate();
  GnnModel m;
  m.config = config;
  m.input_dim = input_dim;
  auto in = static_cast<Eigen::Index>(input_dim);
  const Eigen::Index hidden = config.hidden;
  std::uint64_t stream = 0;
  auto glorot = [&](Eigen::Index r, Eigen::Index c) {
    return Tensor::parameter(nn::glorot_uniform(r, c, seed, stream++));
  };
  for (int l = 0; l < config.layers; ++l) {
    const bool last = l + 1 == config.layers;
    std::vector<Tensor> params;
    switch (config.arch) {
      case Arch::GCN:
        params.push_back(glorot(in, hidden));
        break;
      case Arch::RGCN:
        params.push_back(glorot(in, hidden));
        for (std::size_t r = 0; r < graph::kRelations.size(); ++r) params.push_back(glorot(in, hidden));
        break;
      case Arch::GAT:
      case Arch::GATv2: {
        const Eigen::Index per_head = last ? hidden : hidden / config.heads;
        for (int k = 0; k < config.heads; ++k) {
          if (config.arch == Arch::GAT) {
            params.push_back(glorot(in, per_head));
            params.push_back(glorot(2 * per_head, 1));
          } else {
            params.push_back(glorot(in, per_head));
            params.push_back(glorot(in, per_head));
            params.push_back(glorot(per_head, 1));
          }
        }
        break;
      }
    }
    m.layer_params.push_back(std::move(params));
    in = hidden;
  }
  m.w_o = glorot(hidden, 2);
  m.b_o = Tensor::parameter(Mat::Zero(1, 2));
  return m;
}

std::vector<Tensor> GnnModel::parameters() const {
  std::vector<Tensor> out;
  for (const auto& layer : layer_params) out.insert(out.end(), layer.begin(), layer.end());
  out.push_back(w_o);
  out.push_back(b_o);
  return out;
}

std::vector<nn::NamedTensor> GnnModel::named_parameters() const {
  std::vector<nn::NamedTensor> out;
  for (std::size_t l = 0; l < layer_params.size(); ++l) {
    for (std::size_t k = 0; k < layer_params[l].size(); ++k) {
      out.push_back({"layer" + std::to_string(l) + ".p" + std::to_string(k), layer_params[l][k].value()});
    }
  }
  out.push_back({"output.w", w_o.value()});
  out.push_back({"output.b", b_o.value()});
  return out;
}

GnnModel GnnModel::clone() const {
  GnnModel m;
  m.config = config;
  m.input_dim = input_dim;
  for (const auto& layer : layer_params) {
    std::vector<Tensor> params;
    for (const auto& p : layer) params.push_back(Tensor::parameter(p.value()));
    m.layer_params.push_back(std::move(params));
  }
  m.w_o = Tensor::parameter(w_o.value());
  m.b_o = Tensor::parameter(b_o.value());
  return m;
}

Tensor GnnModel::forward(const GraphContext& ctx, const Tensor& features, bool training, std::uint64_t seed,
                         std::uint64_t stream, std::vector<std::vector<Tensor>>* attention) const {
  if (static_cast<std::size_t>(features.cols()) != input_dim) {
    throw ShapeError("gnn: features have " + std::to_string(features.cols()) + " columns, model expects " +
                     std::to_string(input_dim));
  }
  const double slope = config.activation_slope;
  Tensor h = features;
  for (std::size_t l = 0; l < layer_params.size(); ++l) {
    const auto& p = layer_params[l];
    const bool last = l + 1 == layer_params.size();
    h = nn::dropout(h, config.dropout, seed, hash_combine(stream, l), training);
    std::vector<Tensor>* alpha = nullptr;
    if (attention) alpha = &attention->emplace_back();
    switch (config.arch) {
      case Arch::GCN:
        h = gcn_layer(h, ctx.symmetric, p[0], slope);
        break;
      case Arch::RGCN:
        h = rgcn_layer(h, ctx.relations, {p.begin() + 1, p.end()}, p[0], slope);
        break;
      case Arch::GAT: {
        std::vector<GatHead> heads;
        for (std::size_t k = 0; k + 1 < p.size(); k += 2) heads.push_back({p[k], p[k + 1]});
        h = gat_layer(h, ctx.edges, heads, !last, config.attention_slope, slope, alpha);
        break;
      }
      case Arch::GATv2: {
        std::vector<Gatv2Head> heads;
        for (std::size_t k = 0; k + 2 < p.size(); k += 3) heads.push_back({p[k], p[k + 1], p[k + 2]});
        h = gatv2_layer(h, ctx.edges, heads, !last, config.attention_slope, slope, alpha);
        break;
      }
    }
  }
  return output_projection(h, w_o, b_o, slope);
}

// ---- training --------------------------------------------------------------

namespace {

std::vector<int> argmax_rows(const Mat& logits) {
  std::vector<int> out(static_cast<std::size_t>(logits.rows()));
  for (Eigen::Index i = 0; i < logits.rows(); ++i) out[static_cast<std::size_t>(i)] = logits(i, 1) > logits(i, 0);
  return out;
}

Metrics score(const std::vector<int>& predictions, const std::vector<int>& labels, const std::vector<int>& rows) {
  if (rows.empty()) return {};
  std::vector<int> p, y;
  for (int r : rows) {
    p.push_back(predictions[static_cast<std::size_t>(r)]);
    y.push_back(labels[static_cast<std::size_t>(r)]);
  }
  return evaluate(p, y);
}

}  // namespace

TrainResult train_gnn(const graph::ForumGraph& g, const Mat& features, const GnnConfig& config, std::uint64_t seed) {
  config.validate();
  if (static_cast<std::size_t>(features.rows()) != g.node_count()) {
    throw ContractError("train_gnn: " + std::to_string(features.rows()) + " feature rows for " +
                        std::to_string(g.node_count()) + " nodes");
  }
  const auto train = g.mask(graph::SplitTag::Train);
  const auto val = g.mask(graph::SplitTag::Val);
  const auto test = g.mask(graph::SplitTag::Test);
  if (train.empty()) throw ContractError("train_gnn: empty train mask");
  std::vector<int> targets;
  std::array<double, 2> counts{0, 0};
  for (int i : train) {
    const int y = g.labels[static_cast<std::size_t>(i)];
    if (y != 0 && y != 1) throw ContractError("train_gnn: unlabelled node in the train mask");
    targets.push_back(y);
    counts[static_cast<std::size_t>(y)] += 1;
  }
  std::vector<double> weights;
  if (config.class_weighted) {
    if (counts[0] == 0 || counts[1] == 0) throw DegenerateLabelError("train_gnn: training labels hold a single class");
    const double n = counts[0] + counts[1];
    weights = {n / (2 * counts[0]), n / (2 * counts[1])};
  }

  const GraphContext ctx = prepare_context(g, config);
  const Tensor x = Tensor::constant(features);
  TrainResult result;
  GnnModel model = GnnModel::create(config, static_cast<std::size_t>(features.cols()), seed);
  // Without a validation mask, selection falls back to the training split.
  const auto& select = val.empty() ? train : val;

  auto predictions = argmax_rows(model.forward(ctx, x, false).value());
  double best_f1 = score(predictions, g.labels, select).f1;
  GnnModel best = model.clone();
  std::vector<int> best_predictions = predictions;

  nn::AdamW opt(model.parameters(), {0.9, 0.999, 1e-8, config.weight_decay});
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    Tensor logits = model.forward(ctx, x, true, seed, static_cast<std::uint64_t>(epoch));
    Tensor loss = nn::cross_entropy(logits, train, targets, weights);
    opt.zero_grad();
    nn::backward(loss);
    opt.step(config.learning_rate);
    result.epoch_loss.push_back(loss.item());

    predictions = argmax_rows(model.forward(ctx, x, false).value());
    const Metrics v = score(predictions, g.labels, val);
    result.val_accuracy.push_back(v.accuracy);
    result.val_f1.push_back(v.f1);
    const double f1 = val.empty() ? score(predictions, g.labels, train).f1 : v.f1;
    if (f1 > best_f1) {
      best_f1 = f1;
      best = model.clone();
      best_predictions = predictions;
      result.best_epoch = epoch;
    }
  }

  result.train = score(best_predictions, g.labels, train);
  result.val = score(best_predictions, g.labels, val);
  result.test = score(best_predictions, g.labels, test);
  result.predictions = std::move(best_predictions);
  result.model = std::move(best);
  return result;
}

io::json train_report(const TrainResult& r, const GnnConfig& config, std::uint64_t seed) {
  io::json doc = io::document("khid.train");
  doc["model"] = to_string(config.arch);
  doc["config"] = config.to_json();
  doc["seed"] = seed;
  doc["best_epoch"] = r.best_epoch;
  doc["epochs"] = io::json::array();
  for (std::size_t e = 0; e < r.epoch_loss.size(); ++e) {
    doc["epochs"].push_back({{"epoch", e + 1},
                             {"train_loss", r.epoch_loss[e]},
                             {"val_accuracy", r.val_accuracy[e]},
                             {"val_f1", r.val_f1[e]}});
  }
  doc["metrics"] = {{"train", metrics_to_json(r.train)},
                    {"val", metrics_to_json(r.val)},
                    {"test", metrics_to_json(r.test)}};
  return doc;
}

}  // namespace khid::gnn

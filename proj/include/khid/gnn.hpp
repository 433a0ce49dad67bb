#pragma once

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "khid/graph.hpp"
#include "khid/io.hpp"
#include "khid/metrics.hpp"
#include "khid/tensor.hpp"

namespace khid::gnn {

using nn::Mat;
using nn::Tensor;

enum class Arch { GCN, RGCN, GAT, GATv2 };
std::string to_string(Arch a);
Arch arch_from_string(std::string_view s);

struct GnnConfig {
  Arch arch = Arch::RGCN;
  int layers = 2;
  int hidden = 128;
  double dropout = 0.4;
  double learning_rate = 5e-4;
  int epochs = 200;
  int heads = 4;
  double attention_slope = 0.2;
  double activation_slope = 0.01;
  double weight_decay = 0.01;
  bool class_weighted = true;
  bool self_loops = true;  // attention neighbourhoods include the node itself

  void validate() const;
  io::json to_json() const;
};

// ---- layers (row-vector convention: node states are the rows of H) --------

// leaky_relu(Â H W) with Â the symmetric-normalized merged adjacency.
Tensor gcn_layer(const Tensor& h, const std::shared_ptr<const nn::SparseOperand>& a_hat, const Tensor& w,
                 double slope);

// leaky_relu(H W_0 + sum_r A_r H W_r) with row-normalized A_r.
Tensor rgcn_layer(const Tensor& h, const std::vector<std::shared_ptr<const nn::SparseOperand>>& a_rel,
                  const std::vector<Tensor>& w_rel, const Tensor& w_self, double slope);

// Message edges: the state of src flows into dst.
struct EdgeIndex {
  std::vector<int> src;
  std::vector<int> dst;
  int nodes = 0;
};

// Merged mirrored edges plus optional self-loops. Throws ContractError when
// a node ends up with an empty neighbourhood.
EdgeIndex attention_edges(const graph::ForumGraph& g, bool self_loops);
void check_neighbourhoods(const EdgeIndex& e);

// GAT head: W (in x out), a (2*out x 1) with the destination half first.
struct GatHead {
  Tensor w;
  Tensor a;
};

// GATv2 head: W = [W_dst; W_src] split in two (in x out each), a (out x 1).
struct Gatv2Head {
  Tensor w_dst;
  Tensor w_src;
  Tensor a;
};

// Per head: alpha = softmax over each destination's incoming edges and
// h'_u = leaky_relu(sum_v alpha_uv W h_v). Heads are concatenated when
// `concat_heads`, averaged otherwise. `alpha_out` receives one E x 1
// coefficient column per head.
Tensor gat_layer(const Tensor& h, const EdgeIndex& edges, const std::vector<GatHead>& heads, bool concat_heads,
                 double attention_slope, double slope, std::vector<Tensor>* alpha_out = nullptr);
Tensor gatv2_layer(const Tensor& h, const EdgeIndex& edges, const std::vector<Gatv2Head>& heads, bool concat_heads,
                   double attention_slope, double slope, std::vector<Tensor>* alpha_out = nullptr);

// logits = leaky_relu(H) W_o + b_o with W_o (hidden x 2), b_o (1 x 2).
Tensor output_projection(const Tensor& h, const Tensor& w_o, const Tensor& b_o, double slope);

// ---- model -------------------------------------------------------------------

// Static structures derived from the graph for one architecture.
struct GraphContext {
  std::shared_ptr<const nn::SparseOperand> symmetric;
  std::vector<std::shared_ptr<const nn::SparseOperand>> relations;
  EdgeIndex edges;
};

GraphContext prepare_context(const graph::ForumGraph& g, const GnnConfig& config);

struct GnnModel {
  GnnConfig config;
  std::size_t input_dim = 0;
  // Per layer, the layer's tensors in a fixed architecture-specific order.
  std::vector<std::vector<Tensor>> layer_params;
  Tensor w_o;
  Tensor b_o;

  static GnnModel create(const GnnConfig& config, std::size_t input_dim, std::uint64_t seed);
  std::vector<Tensor> parameters() const;
  std::vector<nn::NamedTensor> named_parameters() const;
  GnnModel clone() const;

  // Node logits (n x 2). Dropout is applied to each layer's input when
  // training. `attention` collects per-layer, per-head coefficients.
  Tensor forward(const GraphContext& ctx, const Tensor& features, bool training, std::uint64_t seed = 0,
                 std::uint64_t stream = 0, std::vector<std::vector<Tensor>>* attention = nullptr) const;
};

struct TrainResult {
  GnnModel model;
  int best_epoch = 0;
  Metrics train, val, test;
  std::vector<double> epoch_loss;  // training loss of each epoch's update
  std::vector<double> val_accuracy;
  std::vector<double> val_f1;
  std::vector<int> predictions;  // every node, from the selected epoch
};

// Full-batch training on the train mask with class-weighted cross-entropy;
// keeps the epoch with the best validation F1 (epoch 0 is the initialization).
// Throws ContractError on an empty train mask or a feature/node mismatch.
TrainResult train_gnn(const graph::ForumGraph& g, const Mat& features, const GnnConfig& config, std::uint64_t seed);

io::json train_report(const TrainResult& r, const GnnConfig& config, std::uint64_t seed);

}  // namespace khid::gnn
